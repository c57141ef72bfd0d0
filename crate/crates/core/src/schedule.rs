//! Threshold annealing, the two-mode acceptance gate and the speculative
//! buffer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypervolume::hvc_refs;
use crate::metrics::MetricVector;
use crate::scalarize::{chebyshev, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub tau0: f64,
    pub tau_end: f64,
    pub lambda: f64,
    /// Thresholds at or below this value switch the gate to exploitation.
    pub mode_epsilon: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            tau0: 0.1,
            tau_end: 0.0,
            lambda: 10.0,
            mode_epsilon: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exploration,
    Exploitation,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Exploration => "exploration",
            Mode::Exploitation => "exploitation",
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.tau0, self.tau_end, self.lambda, self.mode_epsilon]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("anneal", "all parameters must be finite"));
        }
        if self.tau_end < 0.0 {
            return Err(Error::invalid("anneal.tau_end", "must be >= 0"));
        }
        if self.tau0 < self.tau_end {
            return Err(Error::invalid("anneal.tau0", "must be >= tau_end"));
        }
        if self.lambda <= 0.0 {
            return Err(Error::invalid("anneal.lambda", "must be > 0"));
        }
        if self.mode_epsilon < 0.0 {
            return Err(Error::invalid("anneal.mode_epsilon", "must be >= 0"));
        }
        Ok(())
    }

    /// `tau_end + (tau0 - tau_end) * exp(-lambda * consumed / total)`.
    pub fn tau(&self, consumed: u64, total: u64) -> Result<f64> {
        if total == 0 {
            return Err(Error::invalid("budget", "total budget must be positive"));
        }
        let frac = consumed as f64 / total as f64;
        Ok(self.tau_end + (self.tau0 - self.tau_end) * (-self.lambda * frac).exp())
    }

    pub fn mode(&self, tau: f64) -> Mode {
        if tau > self.mode_epsilon {
            Mode::Exploration
        } else {
            Mode::Exploitation
        }
    }
}

/// Capacity-bounded queue of candidates ranked by their hypervolume
/// contribution at insertion time, best first.
#[derive(Debug, Clone)]
pub struct SpeculativeBuffer<T> {
    capacity: usize,
    entries: Vec<(T, f64)>,
}

impl<T> SpeculativeBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("buffer_capacity", "must be positive"));
        }
        Ok(SpeculativeBuffer {
            capacity,
            entries: Vec::with_capacity(capacity + 1),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries with their stored contribution, best first.
    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.entries.iter().map(|(t, h)| (t, *h))
    }

    /// Inserts in rank order (after existing entries with equal score). When
    /// the buffer overflows, the lowest-ranked entry is evicted and returned;
    /// that may be the new item itself.
    pub fn insert(&mut self, item: T, hvc: f64) -> Result<Option<T>> {
        if hvc.is_nan() || hvc <= 0.0 {
            return Err(Error::invalid(
                "hvc",
                format!("buffered contribution must be positive, got {hvc}"),
            ));
        }
        let pos = self.entries.partition_point(|(_, h)| *h >= hvc);
        self.entries.insert(pos, (item, hvc));
        if self.entries.len() > self.capacity {
            Ok(self.entries.pop().map(|(t, _)| t))
        } else {
            Ok(None)
        }
    }

    pub fn pop_best(&mut self) -> Option<(T, f64)> {
        if self.entries.is_empty() {
            None
        } else {
            Some(self.entries.remove(0))
        }
    }

    /// Drops every entry, returning how many were discarded.
    pub fn clear(&mut self) -> usize {
        let n = self.entries.len();
        self.entries.clear();
        n
    }
}

/// Anything the gate can rank: it only needs the minibatch metric vector.
pub trait Scored {
    fn scores(&self) -> &MetricVector;
}

impl Scored for MetricVector {
    fn scores(&self) -> &MetricVector {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision<T> {
    /// Exploration commit: the best buffered entry, which may be the
    /// triggering candidate itself.
    CommitFromBuffer(T),
    /// Exploitation commit of the triggering candidate.
    CommitCandidate,
    Buffered,
    Reject,
}

impl<T> Decision<T> {
    pub fn label(&self) -> &'static str {
        match self {
            Decision::CommitFromBuffer(_) => "commit_from_buffer",
            Decision::CommitCandidate => "commit_candidate",
            Decision::Buffered => "buffered",
            Decision::Reject => "reject",
        }
    }
}

/// Values the gate looked at, kept for the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateDetail {
    Hvc {
        vs_pool_and_buffer: f64,
        vs_pool: f64,
        stored: bool,
    },
    Chebyshev {
        candidate: f64,
        parent: f64,
    },
}

/// Applies the acceptance rule for threshold `tau`.
///
/// Exploration buffers the candidate when it adds volume to pool ∪ buffer and
/// pops the best buffered entry once the candidate's contribution against
/// the pool alone exceeds `tau`. Exploitation commits the candidate only on
/// a strict Chebyshev improvement over the parent; it never reads the buffer.
pub fn decide<T: Scored>(
    schedule: &AnnealSchedule,
    tau: f64,
    candidate: T,
    pool: &[&MetricVector],
    buffer: &mut SpeculativeBuffer<T>,
    w: &WeightVector,
    parent_score: f64,
) -> Result<(Decision<T>, GateDetail)> {
    match schedule.mode(tau) {
        Mode::Exploitation => {
            let score = chebyshev(candidate.scores(), w)?;
            let detail = GateDetail::Chebyshev {
                candidate: score,
                parent: parent_score,
            };
            let decision = if score < parent_score {
                Decision::CommitCandidate
            } else {
                Decision::Reject
            };
            Ok((decision, detail))
        }
        Mode::Exploration => {
            let c = candidate.scores();
            let vs_pool = hvc_refs(c, pool)?;
            let mut with_buffer: Vec<&MetricVector> = pool.to_vec();
            with_buffer.extend(buffer.iter().map(|(t, _)| t.scores()));
            let vs_both = hvc_refs(c, &with_buffer)?;
            drop(with_buffer);

            let mut stored = false;
            if vs_both > 0.0 {
                stored = buffer.insert(candidate, vs_both)?.is_none();
            }
            let detail = GateDetail::Hvc {
                vs_pool_and_buffer: vs_both,
                vs_pool,
                stored,
            };
            if vs_pool > tau {
                if let Some((best, _)) = buffer.pop_best() {
                    return Ok((Decision::CommitFromBuffer(best), detail));
                }
            }
            let decision = if stored {
                Decision::Buffered
            } else {
                Decision::Reject
            };
            Ok((decision, detail))
        }
    }
}
