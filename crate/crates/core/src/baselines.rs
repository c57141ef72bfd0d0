//! Selection strategies: MOCHA, its two ablations, and the scalar baselines
//! (greedy hill climbing, UCB beam search, stochastic Pareto sampling).
//!
//! The baselines all judge offspring on the minibatch composite, the
//! unweighted mean of the metric vector.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::engine::{
    Candidate, CandidateId, JudgeContext, Judgement, Pool, RngStreams, Selection, Selector, Verdict,
};
use crate::error::{Error, Result};
use crate::metrics::MetricVector;
use crate::scalarize::{chebyshev, sample_weight, select_parent};
use crate::schedule::{decide, AnnealSchedule, Decision, GateDetail, Mode, SpeculativeBuffer};

fn default_beam_width() -> usize {
    3
}

fn default_exploration() -> f64 {
    std::f64::consts::SQRT_2
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionStrategy {
    #[default]
    Mocha,
    /// Exploitation gate only (threshold forced to zero).
    MochaNoHvc,
    /// Threshold pinned at `tau0`, so the gate never leaves exploration.
    MochaNoAnneal,
    Greedy,
    UcbBeam {
        #[serde(default = "default_beam_width")]
        beam_width: usize,
        #[serde(default = "default_exploration")]
        c: f64,
    },
    StochasticPareto,
}

impl SelectionStrategy {
    pub fn ucb_beam() -> Self {
        SelectionStrategy::UcbBeam {
            beam_width: default_beam_width(),
            c: default_exploration(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SelectionStrategy::Mocha => "mocha",
            SelectionStrategy::MochaNoHvc => "mocha_no_hvc",
            SelectionStrategy::MochaNoAnneal => "mocha_no_anneal",
            SelectionStrategy::Greedy => "greedy",
            SelectionStrategy::UcbBeam { .. } => "ucb_beam",
            SelectionStrategy::StochasticPareto => "stochastic_pareto",
        }
    }

    /// Parses a strategy name, using defaults for any parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "mocha" => SelectionStrategy::Mocha,
            "mocha_no_hvc" => SelectionStrategy::MochaNoHvc,
            "mocha_no_anneal" => SelectionStrategy::MochaNoAnneal,
            "greedy" => SelectionStrategy::Greedy,
            "ucb_beam" => SelectionStrategy::ucb_beam(),
            "stochastic_pareto" => SelectionStrategy::StochasticPareto,
            other => return Err(Error::invalid("strategy", format!("unknown strategy `{other}`"))),
        })
    }

    pub fn all() -> Vec<SelectionStrategy> {
        vec![
            SelectionStrategy::Mocha,
            SelectionStrategy::MochaNoHvc,
            SelectionStrategy::MochaNoAnneal,
            SelectionStrategy::Greedy,
            SelectionStrategy::ucb_beam(),
            SelectionStrategy::StochasticPareto,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if let SelectionStrategy::UcbBeam { beam_width, c } = self {
            if *beam_width == 0 {
                return Err(Error::invalid("strategy.beam_width", "must be positive"));
            }
            if !c.is_finite() || *c < 0.0 {
                return Err(Error::invalid("strategy.c", "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn build(
        &self,
        anneal: AnnealSchedule,
        buffer_capacity: usize,
        objectives: usize,
    ) -> Result<Box<dyn Selector>> {
        self.validate()?;
        let mocha = |policy| -> Result<Box<dyn Selector>> {
            Ok(Box::new(MochaSelector::new(
                anneal,
                policy,
                buffer_capacity,
                objectives,
            )?))
        };
        match self {
            SelectionStrategy::Mocha => mocha(ThresholdPolicy::Annealed),
            SelectionStrategy::MochaNoHvc => mocha(ThresholdPolicy::ForceExploitation),
            SelectionStrategy::MochaNoAnneal => mocha(ThresholdPolicy::Pinned),
            SelectionStrategy::Greedy => Ok(Box::new(GreedySelector::default())),
            SelectionStrategy::UcbBeam { beam_width, c } => {
                Ok(Box::new(UcbBeamSelector::new(*beam_width, *c)))
            }
            SelectionStrategy::StochasticPareto => Ok(Box::new(StochasticParetoSelector)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdPolicy {
    Annealed,
    ForceExploitation,
    Pinned,
}

impl ThresholdPolicy {
    pub fn tau(self, anneal: &AnnealSchedule, consumed: u64, total: u64) -> Result<f64> {
        match self {
            ThresholdPolicy::Annealed => anneal.tau(consumed, total),
            ThresholdPolicy::ForceExploitation => Ok(0.0),
            ThresholdPolicy::Pinned => Ok(anneal.tau0),
        }
    }
}

fn gate_text(detail: &GateDetail) -> String {
    match detail {
        GateDetail::Hvc {
            vs_pool_and_buffer,
            vs_pool,
            stored,
        } => format!("hvc_pool_buffer={vs_pool_and_buffer};hvc_pool={vs_pool};stored={stored}"),
        GateDetail::Chebyshev { candidate, parent } => {
            format!("cheb_candidate={candidate};cheb_parent={parent}")
        }
    }
}

pub struct MochaSelector {
    anneal: AnnealSchedule,
    policy: ThresholdPolicy,
    buffer: SpeculativeBuffer<Candidate>,
    objectives: usize,
    last_mode: Option<Mode>,
}

impl MochaSelector {
    pub fn new(
        anneal: AnnealSchedule,
        policy: ThresholdPolicy,
        buffer_capacity: usize,
        objectives: usize,
    ) -> Result<Self> {
        anneal.validate()?;
        Ok(MochaSelector {
            anneal,
            policy,
            buffer: SpeculativeBuffer::new(buffer_capacity)?,
            objectives,
            last_mode: None,
        })
    }

    pub fn buffer(&self) -> &SpeculativeBuffer<Candidate> {
        &self.buffer
    }
}

impl Selector for MochaSelector {
    fn select_parent(&mut self, pool: &Pool, streams: &mut RngStreams) -> Result<Selection> {
        let w = sample_weight(&mut streams.weights, self.objectives);
        let entries: Vec<(CandidateId, &MetricVector)> =
            pool.members().iter().map(|c| (c.id, c.validation())).collect();
        let parent = select_parent(&entries, &w, &mut streams.ties)?;
        Ok(Selection {
            parent,
            weight: Some(w),
        })
    }

    fn judge(&mut self, ctx: JudgeContext<'_>, candidate: Candidate) -> Result<Judgement> {
        let w = ctx
            .weight
            .ok_or_else(|| Error::invalid("strategy", "MOCHA selection needs a weight vector"))?;
        let tau = self
            .policy
            .tau(&self.anneal, ctx.ledger.consumed, ctx.ledger.total)?;
        let mode = self.anneal.mode(tau);
        if self.last_mode == Some(Mode::Exploration) && mode == Mode::Exploitation && !self.buffer.is_empty()
        {
            let dropped = self.buffer.clear();
            log::info!("switched to exploitation, discarding {dropped} buffered candidates");
        }
        self.last_mode = Some(mode);

        let parent_score = chebyshev(ctx.parent_minibatch, w)?;
        let pool = ctx.pool.points();
        let kept = (mode == Mode::Exploitation).then(|| candidate.clone());
        let (decision, detail) = decide(
            &self.anneal,
            tau,
            candidate,
            &pool,
            &mut self.buffer,
            w,
            parent_score,
        )?;
        let label = decision.label();
        let verdict = match decision {
            Decision::CommitFromBuffer(c) => Verdict::Commit(Box::new(c)),
            Decision::CommitCandidate => Verdict::Commit(Box::new(kept.expect("kept in exploitation"))),
            Decision::Buffered => Verdict::Buffered,
            Decision::Reject => Verdict::Reject,
        };
        Ok(Judgement {
            verdict,
            label,
            tau: Some(tau),
            mode: Some(mode),
            gate: gate_text(&detail),
        })
    }
}

/// Greedy hill climbing acceptance: strictly higher minibatch composite.
pub fn greedy_accepts(parent: &MetricVector, candidate: &MetricVector) -> bool {
    candidate.composite() > parent.composite()
}

fn accept_or_reject(accept: bool, candidate: Candidate, parent: &MetricVector) -> Judgement {
    let gate = format!(
        "composite_candidate={};composite_parent={}",
        candidate
            .minibatch_scores
            .as_ref()
            .map_or(0.0, MetricVector::composite),
        parent.composite()
    );
    if accept {
        Judgement {
            verdict: Verdict::Commit(Box::new(candidate)),
            label: "accept",
            tau: None,
            mode: None,
            gate,
        }
    } else {
        Judgement {
            verdict: Verdict::Reject,
            label: "reject",
            tau: None,
            mode: None,
            gate,
        }
    }
}

#[derive(Debug, Default)]
pub struct GreedySelector {
    current: CandidateId,
}

impl Selector for GreedySelector {
    fn select_parent(&mut self, _pool: &Pool, _streams: &mut RngStreams) -> Result<Selection> {
        Ok(Selection {
            parent: self.current,
            weight: None,
        })
    }

    fn judge(&mut self, ctx: JudgeContext<'_>, candidate: Candidate) -> Result<Judgement> {
        let accept = greedy_accepts(
            ctx.parent_minibatch,
            candidate.minibatch_scores.as_ref().expect("scored"),
        );
        Ok(accept_or_reject(accept, candidate, ctx.parent_minibatch))
    }

    fn on_commit(&mut self, committed: &Candidate) {
        self.current = committed.id;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamEntry {
    pub id: CandidateId,
    pub visits: u64,
    pub total_reward: f64,
}

impl BeamEntry {
    pub fn mean(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.total_reward / self.visits as f64
        }
    }
}

/// UCB1 priority of each beam entry, with `t` the total visit count.
/// Unvisited entries get infinite priority.
pub fn ucb_scores(beam: &[BeamEntry], c: f64) -> Vec<f64> {
    let t: u64 = beam.iter().map(|e| e.visits).sum();
    beam.iter()
        .map(|e| {
            if e.visits == 0 {
                f64::INFINITY
            } else {
                e.mean() + c * ((t as f64).ln() / e.visits as f64).sqrt()
            }
        })
        .collect()
}

pub struct UcbBeamSelector {
    beam_width: usize,
    c: f64,
    beam: Vec<BeamEntry>,
}

impl UcbBeamSelector {
    pub fn new(beam_width: usize, c: f64) -> Self {
        UcbBeamSelector {
            beam_width,
            c,
            beam: Vec::new(),
        }
    }

    pub fn beam(&self) -> &[BeamEntry] {
        &self.beam
    }
}

impl Selector for UcbBeamSelector {
    fn select_parent(&mut self, _pool: &Pool, streams: &mut RngStreams) -> Result<Selection> {
        if self.beam.is_empty() {
            return Err(Error::EmptyPool);
        }
        let scores = ucb_scores(&self.beam, self.c);
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= best).collect();
        let pick = *ties.choose(&mut streams.ties).expect("beam is non-empty");
        Ok(Selection {
            parent: self.beam[pick].id,
            weight: None,
        })
    }

    fn observe_parent(&mut self, parent: CandidateId, minibatch: &MetricVector) {
        if let Some(e) = self.beam.iter_mut().find(|e| e.id == parent) {
            e.visits += 1;
            e.total_reward += minibatch.composite();
        }
    }

    fn judge(&mut self, ctx: JudgeContext<'_>, candidate: Candidate) -> Result<Judgement> {
        let reward = candidate.minibatch_scores.as_ref().expect("scored").composite();
        let floor = self
            .beam
            .iter()
            .map(BeamEntry::mean)
            .fold(f64::INFINITY, f64::min);
        let accept = reward > floor;
        Ok(accept_or_reject(accept, candidate, ctx.parent_minibatch))
    }

    fn on_commit(&mut self, committed: &Candidate) {
        let (visits, total_reward) = match &committed.minibatch_scores {
            Some(m) => (1, m.composite()),
            None => (0, 0.0),
        };
        if self.beam.len() >= self.beam_width {
            let worst = (0..self.beam.len())
                .min_by(|&a, &b| self.beam[a].mean().total_cmp(&self.beam[b].mean()))
                .expect("beam is non-empty");
            self.beam.remove(worst);
        }
        self.beam.push(BeamEntry {
            id: committed.id,
            visits,
            total_reward,
        });
    }
}

/// For each pool member, the number of validation examples on which it
/// attains the best score (ties all count). Members with zero count are
/// never sampled.
pub fn pareto_counts(pool: &[Candidate]) -> Vec<(CandidateId, usize)> {
    let len = pool
        .iter()
        .map(|c| c.validation_per_example.len())
        .max()
        .unwrap_or(0);
    let mut counts = vec![0usize; pool.len()];
    for i in 0..len {
        let score = |c: &Candidate| c.validation_per_example.get(i).copied().unwrap_or(0.0);
        let best = pool.iter().map(score).fold(f64::NEG_INFINITY, f64::max);
        for (k, c) in pool.iter().enumerate() {
            if score(c) >= best {
                counts[k] += 1;
            }
        }
    }
    pool.iter().map(|c| c.id).zip(counts).collect()
}

pub struct StochasticParetoSelector;

impl Selector for StochasticParetoSelector {
    fn select_parent(&mut self, pool: &Pool, streams: &mut RngStreams) -> Result<Selection> {
        let counts = pareto_counts(pool.members());
        let parent = if counts.iter().all(|(_, n)| *n == 0) {
            pool.members().first().ok_or(Error::EmptyPool)?.id
        } else {
            let dist = WeightedIndex::new(counts.iter().map(|(_, n)| *n))
                .map_err(|e| Error::invalid("pareto counts", e.to_string()))?;
            counts[dist.sample(&mut streams.weights)].0
        };
        Ok(Selection { parent, weight: None })
    }

    fn judge(&mut self, ctx: JudgeContext<'_>, candidate: Candidate) -> Result<Judgement> {
        let accept = greedy_accepts(
            ctx.parent_minibatch,
            candidate.minibatch_scores.as_ref().expect("scored"),
        );
        Ok(accept_or_reject(accept, candidate, ctx.parent_minibatch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skill_doc::SkillDoc;

    fn cand(id: CandidateId, per_example: Vec<f64>) -> Candidate {
        Candidate {
            id,
            doc: SkillDoc::default(),
            parent_id: None,
            minibatch_scores: None,
            validation_scores: Some(MetricVector::from([0.5, 0.5, 0.5])),
            validation_per_example: per_example,
            created_at_budget: 0,
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in SelectionStrategy::all() {
            assert_eq!(SelectionStrategy::from_name(s.name()).unwrap(), s);
        }
        assert!(SelectionStrategy::from_name("beam").is_err());
        let json = serde_json::to_string(&SelectionStrategy::ucb_beam()).unwrap();
        assert_eq!(
            serde_json::from_str::<SelectionStrategy>(&json).unwrap(),
            SelectionStrategy::ucb_beam()
        );
        let partial: SelectionStrategy =
            serde_json::from_str(r#"{"kind":"ucb_beam","beam_width":5}"#).unwrap();
        assert_eq!(
            partial,
            SelectionStrategy::UcbBeam {
                beam_width: 5,
                c: std::f64::consts::SQRT_2
            }
        );
    }

    #[test]
    fn threshold_policies() {
        let a = AnnealSchedule::default();
        assert_eq!(ThresholdPolicy::Pinned.tau(&a, 900, 1000).unwrap(), 0.1);
        assert_eq!(ThresholdPolicy::ForceExploitation.tau(&a, 0, 1000).unwrap(), 0.0);
        assert_eq!(a.mode(0.0), Mode::Exploitation);
        assert_eq!(a.mode(0.1), Mode::Exploration);
    }

    #[test]
    fn greedy_is_strict() {
        let p = MetricVector::from([0.5, 0.5, 0.5]);
        assert!(!greedy_accepts(&p, &MetricVector::from([0.5, 0.5, 0.5])));
        assert!(greedy_accepts(&p, &MetricVector::from([0.5, 0.5, 0.51])));
        assert!(!greedy_accepts(&p, &MetricVector::from([0.9, 0.1, 0.49])));
    }

    #[test]
    fn ucb_priorities() {
        let beam = vec![
            BeamEntry {
                id: 0,
                visits: 2,
                total_reward: 1.0,
            },
            BeamEntry {
                id: 1,
                visits: 1,
                total_reward: 0.4,
            },
            BeamEntry {
                id: 2,
                visits: 0,
                total_reward: 0.0,
            },
        ];
        let s = ucb_scores(&beam, std::f64::consts::SQRT_2);
        let t = 3.0f64;
        assert!((s[0] - (0.5 + (2.0 * t.ln() / 2.0).sqrt())).abs() < 1e-12);
        assert!((s[1] - (0.4 + (2.0 * t.ln()).sqrt())).abs() < 1e-12);
        assert!(s[2].is_infinite());
    }

    #[test]
    fn beam_eviction_drops_lowest_mean() {
        let mut sel = UcbBeamSelector::new(2, 1.0);
        let mut c = cand(0, vec![]);
        sel.on_commit(&c);
        sel.observe_parent(0, &MetricVector::from([0.3, 0.3, 0.3]));
        c.id = 1;
        c.minibatch_scores = Some(MetricVector::from([0.6, 0.6, 0.6]));
        sel.on_commit(&c);
        c.id = 2;
        c.minibatch_scores = Some(MetricVector::from([0.5, 0.5, 0.5]));
        sel.on_commit(&c);
        let ids: Vec<_> = sel.beam().iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![1, 2]);
    }

    #[test]
    fn pareto_counts_include_ties() {
        let pool = vec![
            cand(0, vec![1.0, 0.0, 0.0]),
            cand(1, vec![1.0, 1.0, 0.0]),
            cand(2, vec![0.0, 0.0, 0.0]),
        ];
        assert_eq!(pareto_counts(&pool), vec![(0, 2), (1, 3), (2, 1)]);
    }
}
