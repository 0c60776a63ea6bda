//! Estimate-report structures and their text rendering.
//!
//! The text table is a pure function of the JSON report, so re-reading a
//! written report and re-rendering it reproduces the table byte for byte.

use std::fmt::Write;

use pairfx_core::{ConfidenceInterval, EstimandSpec, ModelKind};
use serde::{Deserialize, Serialize};

/// Which confidence intervals `estimate` attaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiChoice {
    Wald,
    Bootstrap,
    Both,
}

impl CiChoice {
    pub fn wald(self) -> bool {
        matches!(self, CiChoice::Wald | CiChoice::Both)
    }

    pub fn bootstrap(self) -> bool {
        matches!(self, CiChoice::Bootstrap | CiChoice::Both)
    }

    fn label(self) -> &'static str {
        match self {
            CiChoice::Wald => "wald",
            CiChoice::Bootstrap => "bootstrap",
            CiChoice::Both => "both",
        }
    }
}

/// One estimate with its intervals.
///
/// The co-twin-control cell carries no Wald interval: its uncertainty is
/// reported by the bootstrap only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateCell {
    pub model: ModelKind,
    pub estimand: EstimandSpec,
    pub point: f64,
    pub wald: Option<ConfidenceInterval>,
    pub bootstrap: Option<ConfidenceInterval>,
    pub warnings: Vec<String>,
}

/// All estimates for one zygosity stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub label: String,
    pub n_pairs: usize,
    pub warnings: Vec<String>,
    pub cells: Vec<EstimateCell>,
}

/// The full output of `pairfx estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub models: Vec<ModelKind>,
    pub estimands: Vec<EstimandSpec>,
    pub ci: CiChoice,
    pub level: f64,
    pub boot_reps: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub strata: Vec<StratumReport>,
}

fn format_cell(cell: &EstimateCell) -> String {
    let mut s = format!("{:.3}", cell.point);
    if let Some(ci) = &cell.wald {
        let _ = write!(s, " ({:.3}, {:.3})", ci.lower, ci.upper);
    }
    if let Some(ci) = &cell.bootstrap {
        let _ = write!(s, " [{:.3}, {:.3}]", ci.lower, ci.upper);
    }
    s
}

/// Renders the aligned text table for a report.
pub fn render_text(report: &AnalysisReport) -> String {
    let mut columns: Vec<String> = ["stratum", "model", "pairs"]
        .map(String::from)
        .to_vec();
    columns.extend(report.estimands.iter().map(|e| e.to_string()));

    let mut rows: Vec<Vec<String>> = Vec::new();
    for stratum in &report.strata {
        for &model in &report.models {
            let mut row = vec![
                stratum.label.clone(),
                model.to_string(),
                stratum.n_pairs.to_string(),
            ];
            for &estimand in &report.estimands {
                let target = if estimand == EstimandSpec::Ctc {
                    ModelKind::Ctc
                } else {
                    model
                };
                let cell = stratum
                    .cells
                    .iter()
                    .find(|c| c.model == target && c.estimand == estimand);
                row.push(cell.map_or_else(|| "-".to_string(), format_cell));
            }
            rows.push(row);
        }
    }

    let mut widths: Vec<usize> = columns.iter().map(String::len).collect();
    for row in &rows {
        for (w, v) in widths.iter_mut().zip(row) {
            *w = (*w).max(v.len());
        }
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "level {}  ci {}  seed {}",
        report.level,
        report.ci.label(),
        report.seed
    );
    out.push('\n');
    for row in std::iter::once(&columns).chain(&rows) {
        let mut line = String::new();
        for (i, (value, width)) in row.iter().zip(&widths).enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            // The pairs column is numeric; everything else reads better
            // left-aligned.
            if i == 2 {
                let _ = write!(line, "{value:>width$}");
            } else {
                let _ = write!(line, "{value:<width$}");
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }

    let mut notes: Vec<String> = report.warnings.clone();
    for stratum in &report.strata {
        for w in &stratum.warnings {
            notes.push(format!("{}: {w}", stratum.label));
        }
        for cell in &stratum.cells {
            if let Some(b) = &cell.bootstrap {
                if b.n_failed > 0 {
                    notes.push(format!(
                        "{}/{}/{}: {} bootstrap replicate(s) failed",
                        stratum.label, cell.model, cell.estimand, b.n_failed
                    ));
                }
            }
            for w in &cell.warnings {
                notes.push(format!(
                    "{}/{}/{}: {w}",
                    stratum.label, cell.model, cell.estimand
                ));
            }
        }
    }
    if !notes.is_empty() {
        out.push('\n');
        for note in notes {
            let _ = writeln!(out, "note: {note}");
        }
    }
    out
}
