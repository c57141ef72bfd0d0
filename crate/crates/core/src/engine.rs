//! The optimization loop: two-stage evaluation, budget accounting and pool
//! management shared by every selection strategy.
//!
//! Each iteration selects a parent, evaluates it and one mutated offspring on
//! a fresh training minibatch (charging `2n` rollouts), asks the strategy to
//! judge the offspring, and validates whatever gets committed (charging
//! `|D_val|`). A failed mutation charges only the parent's `n`.

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::SelectionStrategy;
use crate::error::{Error, Result};
use crate::hypervolume::hv_exact;
use crate::metrics::{pareto_indices, ComplianceLimits, MetricVector, DEFAULT_OBJECTIVES};
use crate::scalarize::WeightVector;
use crate::schedule::{AnnealSchedule, Mode, Scored};
use crate::skill_doc::{render_mutation_prompt, SkillDoc};
use crate::tasks::{Evaluator, Split, TaskAdapter};

pub type CandidateId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: CandidateId,
    pub doc: SkillDoc,
    pub parent_id: Option<CandidateId>,
    pub minibatch_scores: Option<MetricVector>,
    pub validation_scores: Option<MetricVector>,
    /// Correctness on each validation example, in dataset order.
    #[serde(default)]
    pub validation_per_example: Vec<f64>,
    pub created_at_budget: u64,
}

impl Scored for Candidate {
    fn scores(&self) -> &MetricVector {
        self.minibatch_scores
            .as_ref()
            .expect("gated candidates carry minibatch scores")
    }
}

impl Candidate {
    pub fn validation(&self) -> &MetricVector {
        self.validation_scores
            .as_ref()
            .expect("pool members carry validation scores")
    }
}

/// Committed candidates. Grows monotonically and always starts with the seed.
#[derive(Debug, Clone, Default)]
pub struct Pool {
    members: Vec<Candidate>,
}

impl Pool {
    pub fn new(seed: Candidate) -> Result<Self> {
        let mut pool = Pool::default();
        pool.push(seed)?;
        Ok(pool)
    }

    pub fn push(&mut self, candidate: Candidate) -> Result<()> {
        if candidate.validation_scores.is_none() {
            return Err(Error::invalid("pool", "members need validation scores"));
        }
        if self.members.iter().any(|m| m.id == candidate.id) {
            return Err(Error::invalid(
                "pool",
                format!("duplicate candidate id {}", candidate.id),
            ));
        }
        self.members.push(candidate);
        Ok(())
    }

    pub fn members(&self) -> &[Candidate] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn get(&self, id: CandidateId) -> Option<&Candidate> {
        self.members.iter().find(|m| m.id == id)
    }

    pub fn points(&self) -> Vec<&MetricVector> {
        self.members.iter().map(Candidate::validation).collect()
    }

    pub fn into_members(self) -> Vec<Candidate> {
        self.members
    }
}

/// Rollout accounting. `consumed` may pass `total` by at most one iteration's
/// charge because iterations are charged atomically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub consumed: u64,
    pub total: u64,
    pub minibatch_size: u64,
    pub validation_size: u64,
}

impl BudgetLedger {
    pub fn new(total: u64, minibatch_size: u64, validation_size: u64) -> Self {
        BudgetLedger {
            consumed: 0,
            total,
            minibatch_size,
            validation_size,
        }
    }

    pub fn exhausted(&self) -> bool {
        self.consumed >= self.total
    }

    fn charge(&mut self, amount: u64) -> u64 {
        self.consumed += amount;
        amount
    }
}

/// Independent random streams derived from one run seed.
pub struct RngStreams {
    pub weights: ChaCha8Rng,
    pub minibatch: ChaCha8Rng,
    pub ties: ChaCha8Rng,
    pub task: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        RngStreams {
            weights: stream(1),
            minibatch: stream(2),
            ties: stream(3),
            task: stream(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub budget: u64,
    pub minibatch_size: usize,
    pub validation_size: usize,
    pub objectives: usize,
    pub limits: ComplianceLimits,
    pub anneal: AnnealSchedule,
    pub buffer_capacity: usize,
    pub seed: u64,
    pub strategy: SelectionStrategy,
    /// Abort with an incomplete report after this many mutator failures in
    /// a row. `None` never aborts.
    #[serde(default)]
    pub max_consecutive_failures: Option<u32>,
}

impl EngineConfig {
    pub fn new(
        budget: u64,
        minibatch_size: usize,
        validation_size: usize,
        strategy: SelectionStrategy,
    ) -> Self {
        EngineConfig {
            budget,
            minibatch_size,
            validation_size,
            objectives: DEFAULT_OBJECTIVES,
            limits: ComplianceLimits::default(),
            anneal: AnnealSchedule::default(),
            buffer_capacity: 5,
            seed: 0,
            strategy,
            max_consecutive_failures: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::invalid("budget", "must be positive"));
        }
        if self.minibatch_size == 0 {
            return Err(Error::invalid("minibatch_size", "must be positive"));
        }
        if self.validation_size == 0 {
            return Err(Error::invalid("validation_size", "must be positive"));
        }
        if self.objectives != DEFAULT_OBJECTIVES {
            return Err(Error::invalid(
                "objectives",
                "skills are scored on correctness, description and body compliance",
            ));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::invalid("buffer_capacity", "must be positive"));
        }
        ComplianceLimits::new(self.limits.description, self.limits.body)?;
        self.anneal.validate()?;
        self.strategy.validate()
    }
}

/// One evaluation pass over a slice of a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: MetricVector,
    pub per_example: Vec<f64>,
    /// Positions (within the slice) whose evaluator call failed and scored 0.
    pub flagged: Vec<usize>,
    pub feedback: Vec<String>,
}

impl Evaluation {
    /// Feedback lines in the shape the mutation prompt expects.
    pub fn feedback_text(&self) -> String {
        self.feedback
            .iter()
            .enumerate()
            .map(|(i, f)| format!("Example {}: {f}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Scores `doc` on the given examples: correctness is the mean task score,
/// compliance comes from the document itself. Examples may be scored in
/// parallel; results are reduced in index order.
pub fn evaluate<E: Evaluator + ?Sized>(
    doc: &SkillDoc,
    split: Split,
    indices: &[usize],
    task: &E,
    limits: &ComplianceLimits,
) -> Result<Evaluation> {
    if indices.is_empty() {
        return Err(Error::invalid("dataset slice", "must be non-empty"));
    }
    let results: Vec<(f64, bool, String)> = indices
        .par_iter()
        .map(|&i| match task.score(doc, split, i) {
            Ok(s) if s.is_finite() => {
                let s = s.clamp(0.0, 1.0);
                (s, false, task.feedback(doc, split, i, s))
            }
            Ok(s) => {
                log::warn!("non-finite score {s} on example {i}, scoring 0");
                (0.0, true, task.feedback(doc, split, i, 0.0))
            }
            Err(e) => {
                log::warn!("evaluation failed on example {i}: {e}");
                (0.0, true, format!("Evaluation failed: {e}"))
            }
        })
        .collect();
    let per_example: Vec<f64> = results.iter().map(|r| r.0).collect();
    let flagged = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.1)
        .map(|(i, _)| i)
        .collect();
    let feedback = results.into_iter().map(|r| r.2).collect();
    let correctness = per_example.iter().sum::<f64>() / per_example.len() as f64;
    let (desc, body) = doc.measure(limits);
    Ok(Evaluation {
        metrics: MetricVector::new(vec![correctness, desc, body]),
        per_example,
        flagged,
        feedback,
    })
}

/// What a strategy chose at the start of an iteration.
#[derive(Debug, Clone)]
pub struct Selection {
    pub parent: CandidateId,
    pub weight: Option<WeightVector>,
}

pub enum Verdict {
    Commit(Box<Candidate>),
    Buffered,
    Reject,
}

pub struct Judgement {
    pub verdict: Verdict,
    /// Trace label for the decision.
    pub label: &'static str,
    pub tau: Option<f64>,
    pub mode: Option<Mode>,
    pub gate: String,
}

pub struct JudgeContext<'a> {
    pub pool: &'a Pool,
    pub ledger: &'a BudgetLedger,
    pub parent: &'a Candidate,
    pub parent_minibatch: &'a MetricVector,
    pub weight: Option<&'a WeightVector>,
}

/// Candidate selection policy. Strategies never touch the budget; the engine
/// charges every rollout.
pub trait Selector {
    fn select_parent(&mut self, pool: &Pool, streams: &mut RngStreams) -> Result<Selection>;

    /// Called after the parent's minibatch evaluation, whether or not the
    /// mutation succeeds.
    fn observe_parent(&mut self, _parent: CandidateId, _minibatch: &MetricVector) {}

    fn judge(&mut self, ctx: JudgeContext<'_>, candidate: Candidate) -> Result<Judgement>;

    fn on_commit(&mut self, _committed: &Candidate) {}
}

fn join_values(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// One row of `trace.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: u64,
    /// Rollouts charged during this iteration, validation included.
    pub charged: u64,
    /// Budget consumed at the end of this iteration.
    pub consumed: u64,
    pub weight: String,
    pub parent_id: CandidateId,
    pub candidate_id: Option<CandidateId>,
    pub parent_minibatch: String,
    pub candidate_minibatch: String,
    pub tau: Option<f64>,
    pub mode: String,
    pub decision: String,
    pub committed_id: Option<CandidateId>,
    pub gate: String,
    pub feedback_source: String,
    pub note: String,
}

pub const MUTATOR_FAILURE: &str = "mutator_failure";

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: EngineConfig,
    pub pool: Vec<Candidate>,
    pub trace: Vec<TraceRow>,
    pub ledger: BudgetLedger,
    pub complete: bool,
    pub error: Option<String>,
}

impl RunReport {
    pub fn commits(&self) -> usize {
        self.trace.iter().filter(|r| r.committed_id.is_some()).count()
    }

    pub fn mutator_failures(&self) -> usize {
        self.trace
            .iter()
            .filter(|r| r.decision == MUTATOR_FAILURE)
            .count()
    }

    pub fn front(&self) -> Result<FrontSummary> {
        final_front(&self.pool)
    }
}

/// Non-dominated pool members by validation scores, with their hypervolume.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontSummary {
    pub ids: Vec<CandidateId>,
    pub points: Vec<MetricVector>,
    pub hypervolume: f64,
}

impl FrontSummary {
    pub fn size(&self) -> usize {
        self.ids.len()
    }

    pub fn best_correctness(&self) -> f64 {
        self.points.iter().map(|p| p.get(0)).fold(0.0, f64::max)
    }
}

pub fn final_front(pool: &[Candidate]) -> Result<FrontSummary> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let points: Vec<MetricVector> = pool.iter().map(|c| c.validation().clone()).collect();
    let idx = pareto_indices(&points)?;
    let front: Vec<MetricVector> = idx.iter().map(|&i| points[i].clone()).collect();
    Ok(FrontSummary {
        ids: idx.iter().map(|&i| pool[i].id).collect(),
        hypervolume: hv_exact(&front)?,
        points: front,
    })
}

struct Run<'t, T: ?Sized> {
    config: EngineConfig,
    task: &'t mut T,
    streams: RngStreams,
    ledger: BudgetLedger,
    validation_indices: Vec<usize>,
    next_id: CandidateId,
}

impl<T: TaskAdapter + ?Sized> Run<'_, T> {
    fn validate_candidate(&mut self, mut c: Candidate) -> Result<Candidate> {
        let eval = evaluate(
            &c.doc,
            Split::Validation,
            &self.validation_indices,
            &*self.task,
            &self.config.limits,
        )?;
        self.ledger.charge(self.config.validation_size as u64);
        c.validation_scores = Some(eval.metrics);
        c.validation_per_example = eval.per_example;
        Ok(c)
    }

    fn iterate(&mut self, iteration: u64, pool: &mut Pool, selector: &mut dyn Selector) -> Result<TraceRow> {
        let start = self.ledger.consumed;
        let n = self.config.minibatch_size;
        let selection = selector.select_parent(pool, &mut self.streams)?;
        let parent = pool
            .get(selection.parent)
            .ok_or_else(|| Error::invalid("strategy", "selected a parent outside the pool"))?
            .clone();
        let minibatch = index::sample(&mut self.streams.minibatch, self.task.train_len(), n).into_vec();

        let parent_eval = evaluate(
            &parent.doc,
            Split::Train,
            &minibatch,
            &*self.task,
            &self.config.limits,
        )?;
        self.ledger.charge(n as u64);
        selector.observe_parent(parent.id, &parent_eval.metrics);

        let limits = self.config.limits;
        let prompt = render_mutation_prompt(
            &parent.doc,
            &parent.doc.compliance_report(&limits),
            &limits,
            &parent_eval.feedback_text(),
            &parent.doc.section_names(),
        );
        let mut row = TraceRow {
            iteration,
            charged: 0,
            consumed: 0,
            weight: selection
                .weight
                .as_ref()
                .map(|w| join_values(w.values()))
                .unwrap_or_default(),
            parent_id: parent.id,
            candidate_id: None,
            parent_minibatch: join_values(parent_eval.metrics.values()),
            candidate_minibatch: String::new(),
            tau: None,
            mode: String::new(),
            decision: String::new(),
            committed_id: None,
            gate: String::new(),
            feedback_source: "minibatch".into(),
            note: String::new(),
        };

        let task_rng: &mut dyn RngCore = &mut self.streams.task;
        let doc = match self.task.mutate(&prompt, task_rng) {
            Ok(doc) => doc,
            Err(e) => {
                log::warn!("iteration {iteration}: mutation failed: {e}");
                row.decision = MUTATOR_FAILURE.into();
                row.note = e.to_string();
                row.consumed = self.ledger.consumed;
                row.charged = self.ledger.consumed - start;
                return Ok(row);
            }
        };
        let cand_eval = evaluate(&doc, Split::Train, &minibatch, &*self.task, &self.config.limits)?;
        self.ledger.charge(n as u64);
        if !cand_eval.flagged.is_empty() {
            row.note = format!("{} flagged examples", cand_eval.flagged.len());
        }

        let id = self.next_id;
        self.next_id += 1;
        row.candidate_id = Some(id);
        row.candidate_minibatch = join_values(cand_eval.metrics.values());
        let candidate = Candidate {
            id,
            doc,
            parent_id: Some(parent.id),
            minibatch_scores: Some(cand_eval.metrics),
            validation_scores: None,
            validation_per_example: Vec::new(),
            created_at_budget: self.ledger.consumed,
        };
        let judgement = selector.judge(
            JudgeContext {
                pool,
                ledger: &self.ledger,
                parent: &parent,
                parent_minibatch: &parent_eval.metrics,
                weight: selection.weight.as_ref(),
            },
            candidate,
        )?;
        row.tau = judgement.tau;
        row.mode = judgement.mode.map(|m| m.as_str().to_string()).unwrap_or_default();
        row.decision = judgement.label.into();
        row.gate = judgement.gate;
        if let Verdict::Commit(c) = judgement.verdict {
            let committed = self.validate_candidate(*c)?;
            row.committed_id = Some(committed.id);
            selector.on_commit(&committed);
            pool.push(committed)?;
        }
        row.consumed = self.ledger.consumed;
        row.charged = self.ledger.consumed - start;
        Ok(row)
    }
}

/// Runs the optimizer from `seed_doc` until the budget is spent.
///
/// Errors before the seed is validated are returned; errors afterwards end
/// the run early with `complete == false` and the partial pool and trace.
pub fn run<T: TaskAdapter + ?Sized>(
    seed_doc: SkillDoc,
    config: &EngineConfig,
    task: &mut T,
) -> Result<RunReport> {
    config.validate()?;
    if config.validation_size > task.validation_len() {
        return Err(Error::invalid(
            "validation_size",
            format!("task has only {} validation examples", task.validation_len()),
        ));
    }
    if config.minibatch_size > task.train_len() {
        return Err(Error::invalid(
            "minibatch_size",
            format!("task has only {} training examples", task.train_len()),
        ));
    }
    let mut selector = config
        .strategy
        .build(config.anneal, config.buffer_capacity, config.objectives)?;
    let mut state = Run {
        config: config.clone(),
        task,
        streams: RngStreams::new(config.seed),
        ledger: BudgetLedger::new(
            config.budget,
            config.minibatch_size as u64,
            config.validation_size as u64,
        ),
        validation_indices: (0..config.validation_size).collect(),
        next_id: 1,
    };

    let seed = state.validate_candidate(Candidate {
        id: 0,
        doc: seed_doc,
        parent_id: None,
        minibatch_scores: None,
        validation_scores: None,
        validation_per_example: Vec::new(),
        created_at_budget: 0,
    })?;
    selector.on_commit(&seed);
    let mut pool = Pool::new(seed)?;

    let mut trace = Vec::new();
    let mut error = None;
    let mut consecutive_failures = 0u32;
    let mut iteration = 0u64;
    while !state.ledger.exhausted() {
        iteration += 1;
        match state.iterate(iteration, &mut pool, selector.as_mut()) {
            Ok(row) => {
                if row.decision == MUTATOR_FAILURE {
                    consecutive_failures += 1;
                } else {
                    consecutive_failures = 0;
                }
                trace.push(row);
                if config
                    .max_consecutive_failures
                    .is_some_and(|max| consecutive_failures >= max)
                {
                    error = Some(format!("{consecutive_failures} consecutive mutator failures"));
                    break;
                }
            }
            Err(e) => {
                log::error!("iteration {iteration} aborted the run: {e}");
                error = Some(e.to_string());
                break;
            }
        }
    }

    Ok(RunReport {
        config: config.clone(),
        pool: pool.into_members(),
        trace,
        ledger: state.ledger,
        complete: error.is_none(),
        error,
    })
}
