//! Run artifacts on disk and the budget audit.
//!
//! A run directory holds `pool.json` (everything needed to rebuild the
//! front), `trace.csv`, `front.csv`, `tree.dot` and one `skills/<id>.SKILL.md`
//! per pool member.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{
    final_front, BudgetLedger, Candidate, EngineConfig, FrontSummary, RunReport, TraceRow, MUTATOR_FAILURE,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolFile {
    pub config: EngineConfig,
    pub complete: bool,
    #[serde(default)]
    pub error: Option<String>,
    pub ledger: BudgetLedger,
    pub pool: Vec<Candidate>,
}

impl PoolFile {
    pub fn front(&self) -> Result<FrontSummary> {
        final_front(&self.pool)
    }
}

pub fn write_run(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("skills"))?;
    let pool = PoolFile {
        config: report.config.clone(),
        complete: report.complete,
        error: report.error.clone(),
        ledger: report.ledger,
        pool: report.pool.clone(),
    };
    fs::write(dir.join("pool.json"), serde_json::to_string_pretty(&pool)?)?;

    let mut trace = csv::Writer::from_path(dir.join("trace.csv"))?;
    for row in &report.trace {
        trace.serialize(row)?;
    }
    trace.flush()?;

    let front = report.front()?;
    write_front_csv(&report.pool, &front, &dir.join("front.csv"))?;
    fs::write(dir.join("tree.dot"), lineage_dot(&report.pool, &front))?;
    for c in &report.pool {
        fs::write(
            dir.join("skills").join(format!("{}.SKILL.md", c.id)),
            c.doc.serialize(),
        )?;
    }
    Ok(())
}

pub fn read_pool(path: &Path) -> Result<PoolFile> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<TraceRow>, _>>()?;
    Ok(rows)
}

pub fn write_front_csv(pool: &[Candidate], front: &FrontSummary, path: &Path) -> Result<()> {
    write_front(pool, front, fs::File::create(path)?)
}

pub fn write_front<W: io::Write>(pool: &[Candidate], front: &FrontSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "id",
        "name",
        "correctness",
        "description_compliance",
        "body_compliance",
    ])?;
    for (id, p) in front.ids.iter().zip(&front.points) {
        let name = pool
            .iter()
            .find(|c| c.id == *id)
            .map_or("", |c| c.doc.name.as_str());
        let mut rec = vec![id.to_string(), name.to_string()];
        rec.extend(p.values().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Graphviz lineage tree; front members are filled.
pub fn lineage_dot(pool: &[Candidate], front: &FrontSummary) -> String {
    let mut out = String::from("digraph lineage {\n  node [shape=box];\n");
    for c in pool {
        let v = c.validation().values();
        let label = v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
        let style = if front.ids.contains(&c.id) {
            ", style=filled, fillcolor=lightblue"
        } else {
            ""
        };
        let _ = writeln!(out, "  n{} [label=\"#{}\\n({label})\"{style}];", c.id, c.id);
    }
    for c in pool {
        if let Some(p) = c.parent_id {
            let _ = writeln!(out, "  n{p} -> n{};", c.id);
        }
    }
    out.push_str("}\n");
    out
}

/// Replays the per-iteration charges in a trace and checks them against the
/// accounting rules: `n` for a failed mutation, `2n` for a judged candidate,
/// plus `|D_val|` when it is committed. The seed's validation is charged
/// before the first row.
pub fn audit_trace(trace: &[TraceRow], ledger: &BudgetLedger) -> Result<()> {
    let n = ledger.minibatch_size;
    let v = ledger.validation_size;
    let mut consumed = v;
    for row in trace {
        let expected = if row.decision == MUTATOR_FAILURE {
            n
        } else if row.committed_id.is_some() {
            2 * n + v
        } else {
            2 * n
        };
        if row.charged != expected {
            return Err(Error::invalid(
                "trace",
                format!(
                    "iteration {} charged {} but should charge {expected}",
                    row.iteration, row.charged
                ),
            ));
        }
        if consumed >= ledger.total {
            return Err(Error::invalid(
                "trace",
                format!("iteration {} started after the budget was spent", row.iteration),
            ));
        }
        consumed += expected;
        if row.consumed != consumed {
            return Err(Error::invalid(
                "trace",
                format!(
                    "iteration {} reports {} consumed, replay gives {consumed}",
                    row.iteration, row.consumed
                ),
            ));
        }
    }
    if consumed != ledger.consumed {
        return Err(Error::invalid(
            "trace",
            format!(
                "ledger says {} consumed, replay gives {consumed}",
                ledger.consumed
            ),
        ));
    }
    Ok(())
}
