//! Deterministic scripted landscapes.
//!
//! Every document the script knows about carries fixed per-example scores;
//! the k-th mutation call returns the k-th scripted offspring regardless of
//! the prompt. Unknown documents fail to score.

use std::collections::HashMap;
use std::path::Path;

use indexmap::IndexMap;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{verdict_feedback, Evaluator, Mutator, Split};
use crate::error::{Error, Result};
use crate::skill_doc::{Section, SkillDoc};

/// Either one score for every example or an explicit per-example list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreSpec {
    Constant(f64),
    PerExample(Vec<f64>),
}

impl ScoreSpec {
    fn materialize(&self, len: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            ScoreSpec::Constant(c) => Ok(vec![*c; len]),
            ScoreSpec::PerExample(v) if v.len() >= len => Ok(v[..len].to_vec()),
            ScoreSpec::PerExample(v) => Err(Error::Task(format!(
                "{what}: {} per-example scores for {len} examples",
                v.len()
            ))),
        }
    }
}

/// 0/1 scores whose mean over `len` examples is exactly `mean`: `floor(mean
/// * len)` ones, one fractional remainder, zeros after. Placement is rotated
/// by `offset` so different documents win on different examples.
pub fn arranged_scores(mean: f64, len: usize, offset: usize) -> Vec<f64> {
    let total = mean.clamp(0.0, 1.0) * len as f64;
    let ones = total.floor() as usize;
    let rest = total - ones as f64;
    let mut base = vec![0.0; len];
    for slot in base.iter_mut().take(ones) {
        *slot = 1.0;
    }
    if ones < len {
        base[ones] = rest;
    }
    if len > 0 {
        base.rotate_right(offset % len);
    }
    base
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocPatch {
    pub name: Option<String>,
    pub description: Option<String>,
    pub compatibility: Option<String>,
    pub allowed_tools: Option<Vec<String>>,
    pub metadata: Option<IndexMap<String, String>>,
    /// Section name → replacement text; unknown names are appended.
    pub sections: Option<IndexMap<String, String>>,
}

impl DocPatch {
    pub fn apply(&self, base: &SkillDoc) -> SkillDoc {
        let mut doc = base.clone();
        if let Some(v) = &self.name {
            doc.name = v.clone();
        }
        if let Some(v) = &self.description {
            doc.description = v.clone();
        }
        if let Some(v) = &self.compatibility {
            doc.compatibility = v.clone();
        }
        if let Some(v) = &self.allowed_tools {
            doc.allowed_tools = v.clone();
        }
        if let Some(meta) = &self.metadata {
            for (k, v) in meta {
                doc.metadata.insert(k.clone(), v.clone());
            }
        }
        if let Some(sections) = &self.sections {
            for (name, text) in sections {
                match doc.section_mut(name) {
                    Some(s) => s.text = text.clone(),
                    None => doc.sections.push(Section::new(name.clone(), text.clone())),
                }
            }
        }
        doc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitScores {
    pub train: ScoreSpec,
    pub validation: ScoreSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    #[serde(default)]
    pub doc_patch: DocPatch,
    pub per_example_scores: SplitScores,
}

/// On-disk script format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptFile {
    pub train_size: usize,
    pub validation_size: usize,
    #[serde(default)]
    pub cycle: bool,
    pub seed: SplitScores,
    #[serde(default)]
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Clone)]
struct Entry {
    doc: SkillDoc,
    train: Vec<f64>,
    validation: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScriptedLandscape {
    entries: Vec<Entry>,
    lookup: HashMap<String, usize>,
    steps: Vec<usize>,
    cursor: usize,
    cycle: bool,
    train_len: usize,
    validation_len: usize,
}

impl ScriptedLandscape {
    pub fn new(seed: SkillDoc, seed_train: Vec<f64>, seed_validation: Vec<f64>, cycle: bool) -> Result<Self> {
        let mut land = ScriptedLandscape {
            entries: Vec::new(),
            lookup: HashMap::new(),
            steps: Vec::new(),
            cursor: 0,
            cycle,
            train_len: seed_train.len(),
            validation_len: seed_validation.len(),
        };
        land.register(seed, seed_train, seed_validation)?;
        Ok(land)
    }

    fn register(&mut self, doc: SkillDoc, train: Vec<f64>, validation: Vec<f64>) -> Result<usize> {
        if train.len() != self.train_len || validation.len() != self.validation_len {
            return Err(Error::Task("scripted scores must cover every example".into()));
        }
        let key = doc.serialize();
        if let Some(&idx) = self.lookup.get(&key) {
            let e = &self.entries[idx];
            if e.train != train || e.validation != validation {
                return Err(Error::Task(format!(
                    "document `{}` scripted twice with different scores",
                    doc.name
                )));
            }
            return Ok(idx);
        }
        self.entries.push(Entry {
            doc,
            train,
            validation,
        });
        let idx = self.entries.len() - 1;
        self.lookup.insert(key, idx);
        Ok(idx)
    }

    /// Appends a mutation step.
    pub fn push_step(&mut self, doc: SkillDoc, train: Vec<f64>, validation: Vec<f64>) -> Result<()> {
        let idx = self.register(doc, train, validation)?;
        self.steps.push(idx);
        Ok(())
    }

    pub fn from_script(seed: SkillDoc, script: &ScriptFile) -> Result<Self> {
        let mut land = ScriptedLandscape::new(
            seed.clone(),
            script.seed.train.materialize(script.train_size, "seed train")?,
            script
                .seed
                .validation
                .materialize(script.validation_size, "seed validation")?,
            script.cycle,
        )?;
        for (i, step) in script.steps.iter().enumerate() {
            let what = format!("step {i}");
            land.push_step(
                step.doc_patch.apply(&seed),
                step.per_example_scores
                    .train
                    .materialize(script.train_size, &what)?,
                step.per_example_scores
                    .validation
                    .materialize(script.validation_size, &what)?,
            )?;
        }
        Ok(land)
    }

    pub fn from_json_file(seed: SkillDoc, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let script: ScriptFile = serde_json::from_str(&text)?;
        Self::from_script(seed, &script)
    }

    pub fn seed(&self) -> &SkillDoc {
        &self.entries[0].doc
    }

    /// Scripted offspring in mutation order.
    pub fn step_docs(&self) -> impl Iterator<Item = &SkillDoc> {
        self.steps.iter().map(|&i| &self.entries[i].doc)
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// Mean scripted correctness of a known document on a split.
    pub fn scripted_mean(&self, doc: &SkillDoc, split: Split) -> Option<f64> {
        let e = &self.entries[*self.lookup.get(&doc.serialize())?];
        let v = match split {
            Split::Train => &e.train,
            Split::Validation => &e.validation,
        };
        Some(v.iter().sum::<f64>() / v.len().max(1) as f64)
    }
}

impl Evaluator for ScriptedLandscape {
    fn train_len(&self) -> usize {
        self.train_len
    }

    fn validation_len(&self) -> usize {
        self.validation_len
    }

    fn score(&self, doc: &SkillDoc, split: Split, index: usize) -> Result<f64> {
        let idx = self
            .lookup
            .get(&doc.serialize())
            .ok_or_else(|| Error::Task(format!("document `{}` is not in the script", doc.name)))?;
        let e = &self.entries[*idx];
        let scores = match split {
            Split::Train => &e.train,
            Split::Validation => &e.validation,
        };
        scores
            .get(index)
            .copied()
            .ok_or_else(|| Error::Task(format!("example {index} out of range")))
    }

    fn feedback(&self, _doc: &SkillDoc, _split: Split, index: usize, score: f64) -> String {
        verdict_feedback(index, score)
    }
}

impl Mutator for ScriptedLandscape {
    fn mutate(&mut self, _prompt: &str, _rng: &mut dyn RngCore) -> Result<SkillDoc> {
        if self.steps.is_empty() {
            return Err(Error::Task("mutation script is empty".into()));
        }
        if self.cursor >= self.steps.len() {
            if !self.cycle {
                return Err(Error::Task("mutation script exhausted".into()));
            }
            self.cursor = 0;
        }
        let doc = self.entries[self.steps[self.cursor]].doc.clone();
        self.cursor += 1;
        Ok(doc)
    }
}
