use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Experiment;
use crate::learners::ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSeed {
    pub seed_index: u64,
    pub mape_without_iw: f64,
    pub mape_with_iw: f64,
}

/// One (furnace, learner, window) entry; MAPE values are means over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub furnace: String,
    pub learner: ModelKind,
    pub window: usize,
    pub mape_without_iw: f64,
    pub mape_with_iw: f64,
    pub improvement: f64,
    pub per_seed: Vec<CellSeed>,
}

/// KMM outcome for one (seed, window, learner).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRun {
    pub seed_index: u64,
    pub window: usize,
    pub learner: ModelKind,
    pub sigma: f64,
    pub epsilon: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub experiment: Experiment,
    pub cells: Vec<ReportCell>,
    pub weight_runs: Vec<WeightRun>,
}

impl EvaluationReport {
    pub fn cell(&self, furnace: &str, learner: ModelKind, window: usize) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.furnace == furnace && c.learner == learner && c.window == window)
    }

    /// Cells of one table, in window order.
    pub fn table(&self, furnace: &str, learner: ModelKind) -> Vec<&ReportCell> {
        self.cells
            .iter()
            .filter(|c| c.furnace == furnace && c.learner == learner)
            .collect()
    }

    pub fn furnaces(&self) -> [&str; 2] {
        [
            &self.experiment.source.furnace_id,
            &self.experiment.target.furnace_id,
        ]
    }

    /// False if any KMM solve stopped at its iteration cap.
    pub fn all_converged(&self) -> bool {
        self.weight_runs.iter().all(|r| r.converged)
    }
}

const ROWS: [&str; 3] = ["Without IW", "With IW", "Improvement"];

fn row_values(cells: &[&ReportCell]) -> [Vec<String>; 3] {
    [
        cells
            .iter()
            .map(|c| format!("{:.3}", c.mape_without_iw))
            .collect(),
        cells
            .iter()
            .map(|c| format!("{:.3}", c.mape_with_iw))
            .collect(),
        cells
            .iter()
            .map(|c| format!("{:.3}%", c.improvement))
            .collect(),
    ]
}

/// CSV table: a header of window lengths, then the three MAPE rows.
pub fn render_table_csv(report: &EvaluationReport, furnace: &str, learner: ModelKind) -> String {
    let cells = report.table(furnace, learner);
    let mut out = String::from("row");
    for c in &cells {
        write!(out, ",{}", c.window).unwrap();
    }
    out.push('\n');
    for (name, vals) in ROWS.iter().zip(row_values(&cells)) {
        out.push_str(name);
        for v in vals {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Aligned plain-text table with a title line.
pub fn render_table_text(report: &EvaluationReport, furnace: &str, learner: ModelKind) -> String {
    let cells = report.table(furnace, learner);
    let rows = row_values(&cells);
    let label_w = ROWS
        .iter()
        .map(|r| r.len())
        .max()
        .unwrap_or(0)
        .max("Window (s)".len());
    let col_w: Vec<usize> = (0..cells.len())
        .map(|j| {
            rows.iter()
                .map(|r| r[j].len())
                .chain([cells[j].window.to_string().len()])
                .max()
                .unwrap_or(0)
        })
        .collect();

    let n_seeds = cells.first().map_or(0, |c| c.per_seed.len());
    let mut out = format!("MAPE (%) for furnace {furnace}, {learner}, mean of {n_seeds} seeds\n");
    write!(out, "{:<label_w$}", "Window (s)").unwrap();
    for (c, w) in cells.iter().zip(&col_w) {
        write!(out, "  {:>w$}", c.window).unwrap();
    }
    out.push('\n');
    for (name, vals) in ROWS.iter().zip(&rows) {
        write!(out, "{name:<label_w$}").unwrap();
        for (v, w) in vals.iter().zip(&col_w) {
            write!(out, "  {v:>w$}").unwrap();
        }
        out.push('\n');
    }
    out
}
