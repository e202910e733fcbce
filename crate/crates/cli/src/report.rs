//! Versioned JSON report schemas and their plain-text rendering.

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Shared report envelope: every table row is traceable to the config hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportMeta {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl ReportMeta {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config_hash,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// One fitted-parameter row of a `fit` report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRow {
    pub model: String,
    /// `pooled`, `cycle <id>` or `mean`.
    pub scope: String,
    pub params: Vec<(String, f64)>,
    pub rss: f64,
    pub converged: bool,
    pub n_starts: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(flatten)]
    pub meta: ReportMeta,
    pub input: String,
    pub rows: Vec<FitRow>,
}

/// One row of the replicate-study table: per setup, model and parameter the
/// replicate mean and the empirical 90% interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRow {
    pub setup: String,
    pub model: String,
    pub param: String,
    pub truth: Option<f64>,
    pub mean: f64,
    pub lo90: f64,
    pub hi90: f64,
    pub n_replicates: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    #[serde(flatten)]
    pub meta: ReportMeta,
    pub rows: Vec<StudyRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamRow {
    pub name: String,
    pub mean: f64,
    pub map: f64,
    pub modes: Vec<f64>,
    pub bimodal: bool,
    pub cri90: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrateReport {
    #[serde(flatten)]
    pub meta: ReportMeta,
    pub params: Vec<ParamRow>,
    pub rhat_r: f64,
    pub rhat_c: f64,
    pub acceptance: Vec<f64>,
    pub n_draws: usize,
    pub lambda_b_hat: f64,
    pub lambda_f_hat: f64,
    pub bias_lengthscales: [f64; 2],
    pub design_rows: usize,
    /// Files written next to the report.
    pub sample_file: String,
    pub band_files: Vec<String>,
}

/// Any report, for the `report` rendering command.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AnyReport {
    Calibrate(CalibrateReport),
    Study(StudyReport),
    Fit(FitReport),
}

impl AnyReport {
    pub fn meta(&self) -> &ReportMeta {
        match self {
            AnyReport::Fit(r) => &r.meta,
            AnyReport::Study(r) => &r.meta,
            AnyReport::Calibrate(r) => &r.meta,
        }
    }

    /// Render as aligned plain-text tables.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let meta = self.meta();
        out.push_str(&format!(
            "command: {}\nconfig_hash: {}\nseed: {}\ntool_version: {}\n\n",
            meta.command, meta.config_hash, meta.seed, meta.tool_version
        ));
        match self {
            AnyReport::Fit(r) => {
                out.push_str(&format!("input: {}\n", r.input));
                out.push_str(&format!(
                    "{:<6} {:<10} {:<30} {:>14} {:>10}\n",
                    "model", "scope", "params", "rss", "converged"
                ));
                for row in &r.rows {
                    let params = row
                        .params
                        .iter()
                        .map(|(n, v)| format!("{n}={v:.4}"))
                        .collect::<Vec<_>>()
                        .join(" ");
                    out.push_str(&format!(
                        "{:<6} {:<10} {:<30} {:>14.6} {:>10}\n",
                        row.model, row.scope, params, row.rss, row.converged
                    ));
                }
            }
            AnyReport::Study(r) => {
                out.push_str(&format!(
                    "{:<8} {:<6} {:<6} {:>8} {:>10} {:>20}\n",
                    "setup", "model", "param", "truth", "mean", "90% interval"
                ));
                for row in &r.rows {
                    let truth = row
                        .truth
                        .map(|t| format!("{t:.3}"))
                        .unwrap_or_else(|| "-".into());
                    out.push_str(&format!(
                        "{:<8} {:<6} {:<6} {:>8} {:>10.4} ({:>8.4}, {:>8.4})\n",
                        row.setup, row.model, row.param, truth, row.mean, row.lo90, row.hi90
                    ));
                }
            }
            AnyReport::Calibrate(r) => {
                out.push_str(&format!(
                    "{:<10} {:>10} {:>10} {:>22} {:<8}\n",
                    "param", "mean", "map", "90% CrI", "bimodal"
                ));
                for p in &r.params {
                    out.push_str(&format!(
                        "{:<10} {:>10.4} {:>10.4} ({:>9.4}, {:>9.4}) {:<8}\n",
                        p.name, p.mean, p.map, p.cri90.0, p.cri90.1, p.bimodal
                    ));
                }
                out.push_str(&format!(
                    "\nsplit-Rhat: R {:.4}, C {:.4}; pooled draws {}\n",
                    r.rhat_r, r.rhat_c, r.n_draws
                ));
                out.push_str(&format!(
                    "acceptance per chain: {}\n",
                    r.acceptance
                        .iter()
                        .map(|a| format!("{a:.2}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                ));
                out.push_str(&format!("samples: {}\n", r.sample_file));
                for f in &r.band_files {
                    out.push_str(&format!("band: {f}\n"));
                }
            }
        }
        out
    }
}
