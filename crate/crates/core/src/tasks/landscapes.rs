//! Synthetic objective landscapes for desk-scale experiments.
//!
//! * [`conflict_landscape`]: every offspring gains correctness but loses more
//!   compliance than it gains, so its composite drops while it stays
//!   Pareto-incomparable with the seed.
//! * [`concave_front_landscape`]: offspring sit on a concave 2D front with a
//!   constant third objective.
//! * [`TradeoffLandscape`]: content-scored and parent-dependent; offspring
//!   add long high-gain rules, refine wording at no length cost, clarify the
//!   description, or prune rules.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::scripted::{arranged_scores, ScriptedLandscape};
use super::{verdict_feedback, Evaluator, Mutator, Split};
use crate::error::{Error, Result};
use crate::metrics::{ComplianceLimits, MetricVector};
use crate::skill_doc::{parse_fenced_skill, SkillDoc};

/// The one-line fact-verification seed skill.
pub const FEVER_SEED: &str = include_str!("../../fixtures/fever_seed.md");

pub fn fever_seed() -> SkillDoc {
    SkillDoc::parse(FEVER_SEED).expect("bundled seed parses")
}

const FILLER: &str = "Check every assertion in the claim against the evidence passages; \
    prefer NOT ENOUGH INFO when the evidence is partial or about a related entity. ";

/// `prefix` followed by filler text, cut to exactly `len` characters (or
/// just `prefix` cut to `len` when it is longer).
fn text_of_len(prefix: &str, len: usize) -> String {
    let mut s: String = prefix.chars().take(len).collect();
    let mut filler = FILLER.chars().cycle();
    while s.chars().count() < len {
        s.push(filler.next().expect("cycle never ends"));
    }
    // trailing whitespace would not survive a serialize/parse round trip
    if s.ends_with(char::is_whitespace) {
        s.pop();
        s.push('.');
    }
    s
}

/// Field length whose linear compliance is closest to `target`.
fn len_for_compliance(target: f64, limit: usize) -> usize {
    ((1.0 - target.clamp(0.0, 1.0)) * limit as f64).round() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConflictConfig {
    pub seed_correctness: f64,
    /// Target (correctness, description compliance, body compliance) of the
    /// first offspring.
    pub first_step: [f64; 3],
    /// Correctness added by each later offspring.
    pub correctness_step: f64,
    /// How far each later offspring's composite sits below the seed's.
    pub composite_margin: f64,
    pub steps: usize,
    pub cycle: bool,
    pub train_size: usize,
    pub validation_size: usize,
}

impl Default for ConflictConfig {
    fn default() -> Self {
        ConflictConfig {
            seed_correctness: 0.632,
            first_step: [0.70, 0.77, 0.38],
            correctness_step: 0.03,
            composite_margin: 0.01,
            steps: 11,
            cycle: true,
            train_size: 20,
            validation_size: 10,
        }
    }
}

fn conflict_doc(seed: &SkillDoc, k: usize, desc_len: usize, body_len: usize) -> SkillDoc {
    let mut doc = seed.clone();
    doc.description = text_of_len(
        &format!(
            "FEVER-style 3-class claim verification (variant {k}): classify as SUPPORTS, \
             REFUTES, or NOT ENOUGH INFO based on evidence passages. "
        ),
        desc_len,
    );
    let lead = format!(
        "Given `claim` and `evidence`, produce `verdict`. Must be: SUPPORTS, REFUTES, or \
         NOT ENOUGH INFO.\nRule {k}: "
    );
    doc.sections[0].text = text_of_len(&lead, body_len);
    doc
}

/// Builds the conflict landscape over the bundled seed. Train scores are
/// constant per document so minibatch gating sees the scripted correctness
/// exactly; validation scores are 0/1 arrangements with the same mean.
pub fn conflict_landscape(config: &ConflictConfig, limits: &ComplianceLimits) -> Result<ScriptedLandscape> {
    if config.train_size == 0 || config.validation_size == 0 {
        return Err(Error::invalid(
            "task.train_size",
            "dataset sizes must be positive",
        ));
    }
    let seed = fever_seed();
    let mut land = ScriptedLandscape::new(
        seed.clone(),
        vec![config.seed_correctness; config.train_size],
        arranged_scores(config.seed_correctness, config.validation_size, 0),
        config.cycle,
    )?;
    let (seed_desc, seed_body) = seed.measure(limits);
    let seed_composite = (config.seed_correctness + seed_desc + seed_body) / 3.0;

    for k in 1..=config.steps {
        let (corr, desc, body) = if k == 1 {
            (config.first_step[0], config.first_step[1], config.first_step[2])
        } else {
            let corr = (config.first_step[0] + (k - 1) as f64 * config.correctness_step).min(1.0);
            let spare = 3.0 * (seed_composite - config.composite_margin) - corr;
            let half = (spare / 2.0).max(0.0);
            (
                corr,
                half.min(seed_desc),
                (spare - half.min(seed_desc)).clamp(0.0, seed_body),
            )
        };
        let doc = conflict_doc(
            &seed,
            k,
            len_for_compliance(desc, limits.description),
            len_for_compliance(body, limits.body),
        );
        land.push_step(
            doc,
            vec![corr; config.train_size],
            arranged_scores(corr, config.validation_size, k),
        )?;
    }
    Ok(land)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcaveConfig {
    /// Offspring as (correctness, description compliance); body compliance
    /// is pinned at 1 by giving every document an empty body.
    pub front: Vec<[f64; 2]>,
    pub seed_point: [f64; 2],
    pub train_size: usize,
    pub validation_size: usize,
}

impl Default for ConcaveConfig {
    fn default() -> Self {
        ConcaveConfig {
            front: vec![[1.0, 0.0], [0.6, 0.6], [0.0, 1.0]],
            seed_point: [0.2, 0.2],
            train_size: 10,
            validation_size: 10,
        }
    }
}

impl ConcaveConfig {
    /// Description limit under which every configured compliance value is
    /// hit exactly by an integer length.
    pub fn limits() -> ComplianceLimits {
        ComplianceLimits {
            description: 1000,
            body: 5000,
        }
    }

    /// The scripted front embedded in three objectives.
    pub fn front_points(&self) -> Vec<MetricVector> {
        self.front
            .iter()
            .map(|[c, d]| MetricVector::new(vec![*c, *d, 1.0]))
            .collect()
    }
}

fn concave_doc(tag: &str, desc_len: usize) -> SkillDoc {
    SkillDoc {
        name: format!("concave_{tag}"),
        description: text_of_len("Trade-off probe. ", desc_len),
        ..Default::default()
    }
}

pub fn concave_front_landscape(config: &ConcaveConfig) -> Result<ScriptedLandscape> {
    let limits = ConcaveConfig::limits();
    let [sc, sd] = config.seed_point;
    let mut land = ScriptedLandscape::new(
        concave_doc("seed", len_for_compliance(sd, limits.description)),
        vec![sc; config.train_size],
        vec![sc; config.validation_size],
        false,
    )?;
    for (i, [c, d]) in config.front.iter().enumerate() {
        land.push_step(
            concave_doc(&i.to_string(), len_for_compliance(*d, limits.description)),
            vec![*c; config.train_size],
            vec![*c; config.validation_size],
        )?;
    }
    Ok(land)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TradeoffConfig {
    pub base_correctness: f64,
    /// Fraction of the remaining error removed by one detailed rule.
    pub detailed_gain: f64,
    pub detailed_len: usize,
    /// Fraction of the remaining error removed by one refinement. Refinements
    /// reword existing instructions and cost no length.
    pub refine_gain: f64,
    pub clarify_gain: f64,
    pub clarify_len: usize,
    /// Mutation mix; whatever probability is left prunes the last rule.
    pub p_detailed: f64,
    pub p_refine: f64,
    pub p_clarify: f64,
    /// Half-width of the per-example offset added to training scores. The
    /// offset depends only on the example, like a difficulty.
    pub train_noise: f64,
    pub train_size: usize,
    pub validation_size: usize,
}

impl Default for TradeoffConfig {
    fn default() -> Self {
        TradeoffConfig {
            base_correctness: 0.4,
            detailed_gain: 0.25,
            detailed_len: 600,
            refine_gain: 0.02,
            clarify_gain: 0.05,
            clarify_len: 160,
            p_detailed: 0.2,
            p_refine: 0.1,
            p_clarify: 0.05,
            train_noise: 0.1,
            train_size: 40,
            validation_size: 20,
        }
    }
}

const DETAILED: &str = "(detailed)";
const CLARIFY: &str = " Clarification:";
const REFINEMENT: &str = "refinement";

/// Content-scored landscape with two kinds of useful offspring: long
/// detailed rules (high correctness, low body compliance) and in-place
/// refinements (small correctness gain at no compliance cost). Offspring are
/// derived from the parent found in the prompt.
///
/// Training examples score the document's correctness plus a fixed
/// per-example offset, so a parent and its offspring compared on the same
/// minibatch differ exactly by their correctness gap. Validation examples
/// are 0/1 arrangements with mean equal to the correctness.
#[derive(Debug, Clone)]
pub struct TradeoffLandscape {
    config: TradeoffConfig,
}

impl TradeoffLandscape {
    pub fn new(config: TradeoffConfig) -> Result<Self> {
        if config.train_size == 0 || config.validation_size == 0 {
            return Err(Error::invalid(
                "task.train_size",
                "dataset sizes must be positive",
            ));
        }
        let p = config.p_detailed + config.p_refine + config.p_clarify;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(
                "task.p_detailed",
                "mutation probabilities must sum to <= 1",
            ));
        }
        Ok(TradeoffLandscape { config })
    }

    pub fn config(&self) -> &TradeoffConfig {
        &self.config
    }

    pub fn seed(&self) -> SkillDoc {
        fever_seed()
    }

    fn refinements(doc: &SkillDoc) -> i32 {
        doc.metadata
            .get(REFINEMENT)
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    }

    fn detailed_rules(doc: &SkillDoc) -> i32 {
        doc.sections
            .iter()
            .flat_map(|s| s.text.lines())
            .filter(|l| l.contains(DETAILED))
            .count() as i32
    }

    /// Underlying correctness of a document.
    pub fn correctness(&self, doc: &SkillDoc) -> f64 {
        let clarify = doc.description.matches(CLARIFY).count() as i32;
        let c = &self.config;
        let residual = (1.0 - c.base_correctness)
            * (1.0 - c.detailed_gain).powi(Self::detailed_rules(doc))
            * (1.0 - c.refine_gain).powi(Self::refinements(doc))
            * (1.0 - c.clarify_gain).powi(clarify);
        1.0 - residual
    }

    fn offspring(&self, parent: &SkillDoc, rng: &mut dyn RngCore) -> SkillDoc {
        let c = &self.config;
        let mut doc = parent.clone();
        let draw: f64 = rng.random();
        if doc.sections.is_empty() {
            doc.sections
                .push(crate::skill_doc::Section::new("execute.predict", ""));
        }
        let rules = Self::detailed_rules(&doc);
        let section = doc.sections.last_mut().expect("at least one section");
        if draw < c.p_detailed {
            let line = text_of_len(&format!("Rule {} {DETAILED}: ", rules + 1), c.detailed_len);
            if !section.text.is_empty() {
                section.text.push('\n');
            }
            section.text.push_str(&line);
        } else if draw < c.p_detailed + c.p_refine {
            let level = Self::refinements(&doc) + 1;
            doc.metadata.insert(REFINEMENT.into(), level.to_string());
        } else if draw < c.p_detailed + c.p_refine + c.p_clarify {
            doc.description.push_str(&text_of_len(CLARIFY, c.clarify_len));
        } else {
            let mut lines: Vec<&str> = section.text.lines().collect();
            if let Some(pos) = lines.iter().rposition(|l| l.contains(DETAILED)) {
                lines.remove(pos);
                section.text = lines.join("\n");
            } else {
                let level = (Self::refinements(&doc) - 1).max(0);
                doc.metadata.insert(REFINEMENT.into(), level.to_string());
            }
        }
        doc
    }
}

/// Deterministic value in `[0, 1)` for an example index (FNV-1a).
fn unit_hash(index: usize) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in index.to_le_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

impl Evaluator for TradeoffLandscape {
    fn train_len(&self) -> usize {
        self.config.train_size
    }

    fn validation_len(&self) -> usize {
        self.config.validation_size
    }

    fn score(&self, doc: &SkillDoc, split: Split, index: usize) -> Result<f64> {
        let len = match split {
            Split::Train => self.config.train_size,
            Split::Validation => self.config.validation_size,
        };
        if index >= len {
            return Err(Error::Task(format!("example {index} out of range")));
        }
        let corr = self.correctness(doc);
        Ok(match split {
            Split::Train if self.config.train_noise > 0.0 => {
                let u = unit_hash(index) * 2.0 - 1.0;
                (corr + self.config.train_noise * u).clamp(0.0, 1.0)
            }
            Split::Train => corr,
            Split::Validation => arranged_scores(corr, len, 0)[index],
        })
    }

    fn feedback(&self, _doc: &SkillDoc, _split: Split, index: usize, score: f64) -> String {
        verdict_feedback(index, score)
    }
}

impl Mutator for TradeoffLandscape {
    fn mutate(&mut self, prompt: &str, rng: &mut dyn RngCore) -> Result<SkillDoc> {
        let parent = parse_fenced_skill(prompt)?;
        Ok(self.offspring(&parent, rng))
    }
}
