//! Multi-objective optimization of SKILL.md documents.
//!
//! Skills are scored on task correctness and two length-compliance
//! objectives. The engine keeps a pool of validated candidates and grows it
//! with a hypervolume-contribution gate whose threshold anneals towards a
//! Chebyshev improvement test.

pub mod baselines;
pub mod engine;
pub mod error;
pub mod hypervolume;
pub mod metrics;
pub mod report;
pub mod scalarize;
pub mod schedule;
pub mod skill_doc;
pub mod tasks;

pub use baselines::SelectionStrategy;
pub use engine::{run, Candidate, CandidateId, EngineConfig, FrontSummary, RunReport, TraceRow};
pub use error::{Error, Result};
pub use metrics::{ComplianceLimits, MetricVector};
pub use schedule::{AnnealSchedule, Mode};
pub use skill_doc::SkillDoc;
