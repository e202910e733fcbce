//! Point estimation of Windkessel parameters by residual-sum-of-squares
//! minimization, and replicate studies with empirical confidence intervals.
//!
//! The RSS objective simulates the chosen model in its periodic steady state
//! on the observation grid and sums squared pressure residuals. Because each
//! evaluation runs an ODE solve, fitting uses derivative-free multi-start
//! Nelder-Mead on the box of physiological parameter values.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inflow::InflowWaveform;
use crate::optim::{latin_hypercube, multi_start, Bounds, SimplexOptions};
use crate::stats::{mean, quantile};
use crate::synthetic::{replicate_datasets, FieldData, SetupSpec};
use crate::windkessel::{steady_wk2, steady_wk3, Wk2Params, Wk3Params};

/// Which Windkessel model to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Wk2,
    Wk3,
}

/// Fitted parameter vector of either model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WkParams {
    Wk2(Wk2Params),
    Wk3(Wk3Params),
}

impl WkParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            WkParams::Wk2(_) => ModelKind::Wk2,
            WkParams::Wk3(_) => ModelKind::Wk3,
        }
    }

    pub fn compliance(&self) -> f64 {
        match self {
            WkParams::Wk2(p) => p.compliance,
            WkParams::Wk3(p) => p.compliance,
        }
    }

    /// Total resistance: `R` for WK2, `R1 + R2` for WK3.
    pub fn total_resistance(&self) -> f64 {
        match self {
            WkParams::Wk2(p) => p.resistance,
            WkParams::Wk3(p) => p.total_resistance(),
        }
    }

    fn from_vec(kind: ModelKind, x: &[f64]) -> Result<Self> {
        match kind {
            ModelKind::Wk2 => Ok(WkParams::Wk2(Wk2Params::new(x[0], x[1])?)),
            ModelKind::Wk3 => Ok(WkParams::Wk3(Wk3Params::new(x[0], x[1], x[2])?)),
        }
    }

    fn to_vec(self) -> Vec<f64> {
        match self {
            WkParams::Wk2(p) => vec![p.resistance, p.compliance],
            WkParams::Wk3(p) => vec![p.impedance, p.resistance, p.compliance],
        }
    }
}

/// Parameter ordering used by the optimizer: WK2 is `[R, C]`,
/// WK3 is `[R1, R2, C]`.
pub fn param_names(kind: ModelKind) -> &'static [&'static str] {
    match kind {
        ModelKind::Wk2 => &["R", "C"],
        ModelKind::Wk3 => &["R1", "R2", "C"],
    }
}

/// Default fitting box: `[0.5, 3]` for `R`, `R2` and `C`; `[0, 0.5]` for the
/// small characteristic impedance `R1`.
pub fn default_bounds(kind: ModelKind) -> Bounds {
    match kind {
        ModelKind::Wk2 => Bounds::new(vec![0.5, 0.5], vec![3.0, 3.0]),
        ModelKind::Wk3 => Bounds::new(vec![0.0, 0.5, 0.5], vec![0.5, 3.0, 3.0]),
    }
    .expect("static bounds are valid")
}

/// Residual sum of squares of the model's steady-state pressure against the
/// observed pressures, in mmHg^2.
///
/// Observations are processed in a canonical sort order so the value is
/// invariant under permutation of the rows.
pub fn rss(params: &WkParams, data: &FieldData, inflow: &InflowWaveform) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty field data".into()));
    }
    // canonical order: by time, breaking duplicate times across overlaid
    // cycles deterministically
    let mut rows: Vec<(f64, f64)> = data
        .observations()
        .iter()
        .map(|o| (o.time, o.pressure))
        .collect();
    rows.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut grid: Vec<f64> = rows.iter().map(|r| r.0).collect();
    grid.dedup();

    let series = match params {
        WkParams::Wk2(p) => steady_wk2(inflow, p, &grid, 1e-3)?,
        WkParams::Wk3(p) => steady_wk3(inflow, p, &grid, 1e-3)?,
    };

    let mut acc = 0.0;
    let mut gi = 0usize;
    for (t, p_obs) in rows {
        while grid[gi] < t {
            gi += 1;
        }
        let r = series.values()[gi] - p_obs;
        acc += r * r;
    }
    Ok(acc)
}

/// Result of one multi-start fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: WkParams,
    pub rss: f64,
    pub n_starts: usize,
    pub converged: bool,
    pub best_start_index: usize,
}

/// Multi-start Nelder-Mead fit of `kind` to `data`.
///
/// Starts are a Latin hypercube over the bounds box (seeded by `seed`);
/// coordinates are clamped into the box throughout. The lowest-RSS terminal
/// point wins; `converged` reports whether its simplex collapsed below the
/// 1e-6 diameter threshold.
pub fn fit(
    kind: ModelKind,
    data: &FieldData,
    inflow: &InflowWaveform,
    bounds: Option<Bounds>,
    n_starts: usize,
    seed: u64,
) -> Result<FitResult> {
    if n_starts == 0 {
        return Err(Error::InvalidInput("n_starts must be >= 1".into()));
    }
    let bounds = match bounds {
        Some(b) => {
            if b.dim() != param_names(kind).len() {
                return Err(Error::InvalidInput(format!(
                    "bounds have {} dims, model needs {}",
                    b.dim(),
                    param_names(kind).len()
                )));
            }
            b
        }
        None => default_bounds(kind),
    };
    let starts = latin_hypercube(n_starts, &bounds, seed);
    let mut objective = |x: &[f64]| -> Result<f64> {
        let params = WkParams::from_vec(kind, x)?;
        rss(&params, data, inflow)
    };
    let opts = SimplexOptions::default();
    let (best, best_start_index, _) = multi_start(&mut objective, &starts, &bounds, &opts)?;
    Ok(FitResult {
        params: WkParams::from_vec(kind, &best.x)?,
        rss: best.f,
        n_starts,
        converged: best.converged,
        best_start_index,
    })
}

/// Per-parameter replicate statistics: mean and the empirical 5% and 95%
/// quantiles across replicate fits.
#[derive(Debug, Clone)]
pub struct ParamStat {
    pub name: String,
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
}

/// Summary of a replicate study for one model.
#[derive(Debug, Clone)]
pub struct ReplicateSummary {
    pub model: ModelKind,
    pub params: Vec<ParamStat>,
    pub n_replicates: usize,
    pub n_failed: usize,
    /// Per-replicate fitted parameter vectors (successful fits only), in the
    /// optimizer's parameter order.
    pub fits: Vec<Vec<f64>>,
}

impl ReplicateSummary {
    pub fn stat(&self, name: &str) -> Option<&ParamStat> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Fit `kind` to `n` replicate datasets of `setup` and summarize the fitted
/// parameters. Failed replicate fits are excluded; more than 10% failures
/// aborts the study.
pub fn replicate_study(
    setup: &SetupSpec,
    kind: ModelKind,
    n: usize,
    n_starts: usize,
) -> Result<ReplicateSummary> {
    if n < 10 {
        return Err(Error::InvalidInput(
            "replicate study needs at least 10 replicates".into(),
        ));
    }
    let datasets = replicate_datasets(setup, n)?;
    let results: Vec<Result<FitResult>> = datasets
        .par_iter()
        .enumerate()
        .map(|(r, data)| {
            fit(
                kind,
                data,
                &setup.inflow,
                None,
                n_starts,
                setup.seed ^ 0x5ca1_ab1e ^ r as u64,
            )
        })
        .collect();

    let mut fits: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut n_failed = 0usize;
    for r in results {
        match r {
            Ok(f) => fits.push(f.params.to_vec()),
            Err(_) => n_failed += 1,
        }
    }
    if n_failed * 10 > n {
        return Err(Error::Study(format!(
            "{n_failed} of {n} replicate fits failed"
        )));
    }

    // per-parameter columns; WK3 additionally reports the derived total
    // resistance R = R1 + R2, matching how results are tabulated
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    match kind {
        ModelKind::Wk2 => {
            columns.push(("C".into(), fits.iter().map(|f| f[1]).collect()));
            columns.push(("R".into(), fits.iter().map(|f| f[0]).collect()));
        }
        ModelKind::Wk3 => {
            columns.push(("C".into(), fits.iter().map(|f| f[2]).collect()));
            columns.push(("R".into(), fits.iter().map(|f| f[0] + f[1]).collect()));
            columns.push(("R1".into(), fits.iter().map(|f| f[0]).collect()));
            columns.push(("R2".into(), fits.iter().map(|f| f[1]).collect()));
        }
    }
    let params = columns
        .into_iter()
        .map(|(name, xs)| ParamStat {
            name,
            mean: mean(&xs),
            q05: quantile(&xs, 0.05),
            q95: quantile(&xs, 0.95),
        })
        .collect();

    Ok(ReplicateSummary {
        model: kind,
        params,
        n_replicates: fits.len(),
        n_failed,
        fits,
    })
}
