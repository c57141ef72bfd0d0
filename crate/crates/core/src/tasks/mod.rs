//! Task adapters: how a skill is scored on examples and how offspring are
//! produced from the mutation prompt.
//!
//! The engine only sees [`TaskAdapter`], which is any [`Evaluator`] that is
//! also a [`Mutator`]. Scripted landscapes make whole runs replayable at desk
//! scale; [`llm::LlmMutator`] talks to a chat-completion endpoint.

pub mod landscapes;
pub mod llm;
pub mod scripted;

use rand::RngCore;

use crate::error::Result;
use crate::skill_doc::SkillDoc;

pub use landscapes::{
    concave_front_landscape, conflict_landscape, fever_seed, ConcaveConfig, ConflictConfig, TradeoffConfig,
    TradeoffLandscape,
};
pub use llm::{LlmConfig, LlmMutator};
pub use scripted::{ScoreSpec, ScriptFile, ScriptStep, ScriptedLandscape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

/// Scores skills on dataset examples. Must be safe to call concurrently;
/// `score` is a pure function of `(doc, split, index)`.
pub trait Evaluator: Sync {
    fn train_len(&self) -> usize;
    fn validation_len(&self) -> usize;

    /// Task score in `[0, 1]` for one example. An `Err` is recorded by the
    /// engine as a flagged zero.
    fn score(&self, doc: &SkillDoc, split: Split, index: usize) -> Result<f64>;

    /// Per-example feedback line shown to the mutator.
    fn feedback(&self, doc: &SkillDoc, split: Split, index: usize, score: f64) -> String;
}

/// Produces an offspring skill from the rendered mutation prompt.
pub trait Mutator {
    fn mutate(&mut self, prompt: &str, rng: &mut dyn RngCore) -> Result<SkillDoc>;
}

pub trait TaskAdapter: Evaluator + Mutator {}

impl<T: Evaluator + Mutator + ?Sized> TaskAdapter for T {}

/// Pairs an evaluator with a separately supplied mutator.
pub struct WithMutator<E, M> {
    pub evaluator: E,
    pub mutator: M,
}

impl<E: Evaluator, M: Sync> Evaluator for WithMutator<E, M> {
    fn train_len(&self) -> usize {
        self.evaluator.train_len()
    }

    fn validation_len(&self) -> usize {
        self.evaluator.validation_len()
    }

    fn score(&self, doc: &SkillDoc, split: Split, index: usize) -> Result<f64> {
        self.evaluator.score(doc, split, index)
    }

    fn feedback(&self, doc: &SkillDoc, split: Split, index: usize, score: f64) -> String {
        self.evaluator.feedback(doc, split, index, score)
    }
}

impl<E, M: Mutator> Mutator for WithMutator<E, M> {
    fn mutate(&mut self, prompt: &str, rng: &mut dyn RngCore) -> Result<SkillDoc> {
        self.mutator.mutate(prompt, rng)
    }
}

const VERDICTS: [&str; 3] = ["SUPPORTS", "REFUTES", "NOT ENOUGH INFO"];

/// Fact-verification style feedback for synthetic examples: the expected
/// label cycles through the three verdicts by example index.
pub(crate) fn verdict_feedback(index: usize, score: f64) -> String {
    let expected = VERDICTS[index % VERDICTS.len()];
    if score >= 0.5 {
        format!("Correct! Verdict is {expected}.")
    } else {
        let predicted = VERDICTS[(index + 1) % VERDICTS.len()];
        format!("Incorrect. Expected '{expected}', got '{predicted}'.")
    }
}

/// Benchmark-backed adapters (FEVER, HotpotQA, ...) need user-provided
/// datasets and an execution endpoint; none ship with this crate. Implement
/// [`Evaluator`] over your own data and pair it with [`LlmMutator`] through
/// [`WithMutator`].
pub fn benchmark_unavailable(name: &str) -> crate::error::Error {
    crate::error::Error::Task(format!(
        "benchmark task `{name}` requires a user-provided dataset and executor; \
         implement `Evaluator` for it and pair it with `LlmMutator`"
    ))
}
