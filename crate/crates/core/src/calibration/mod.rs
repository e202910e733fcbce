//! Bayesian calibration of the WK2 model with an explicit model-discrepancy
//! term, in the modularized two-stage style of Kennedy-O'Hagan / Bayarri:
//! stage 1 trains a pressure emulator on model runs only and freezes its
//! hyperparameters; stage 2 fits a zero-mean discrepancy process on residuals
//! at an initial parameter guess, fixes its lengthscales, and samples
//! `(R, C, lambda_b, lambda_f)` by MCMC.

pub mod emulator;
pub mod influential;
pub mod mcmc;
pub mod predict;
pub mod stage2;
pub mod summary;

pub use emulator::{stage1_train_emulator, Emulator, EmulatorDesign, FieldProjector};
pub use influential::{select_influential_points, InfluentialPoints};
pub use mcmc::{run_mcmc, CalibrationPriors, Draw, McmcConfig, PosteriorSamples};
pub use predict::{predict_products, BandKind, PredictionBand};
pub use stage2::{stage2_init_bias, BiasModel, Stage2Fit};
pub use summary::{summarize, ParamSummary, PosteriorSummary};

use crate::error::Result;
use crate::inflow::InflowWaveform;
use crate::synthetic::{synchronize_cycles, FieldData};

/// End-to-end calibration options.
#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    /// Influential points selected on the first observed cycle.
    pub k_influential: usize,
    /// Latin-hypercube size over the `(R, C)` box.
    pub n_rc: usize,
    pub rc_lo: f64,
    pub rc_hi: f64,
    pub emulator_restarts: usize,
    pub stage2_restarts: usize,
    /// Initial guess `(R0, C0)` for the stage-2 residuals.
    pub initial_guess: (f64, f64),
    pub mcmc: McmcConfig,
    /// Number of evenly spaced band grid points; 0 uses the distinct
    /// observed cycle times.
    pub band_grid_points: usize,
    pub seed: u64,
}

impl CalibrationOptions {
    pub fn standard(seed: u64) -> Self {
        Self {
            k_influential: 12,
            n_rc: 200,
            rc_lo: 0.5,
            rc_hi: 3.0,
            emulator_restarts: 2,
            stage2_restarts: 3,
            initial_guess: (1.75, 1.75),
            mcmc: McmcConfig::standard(seed),
            band_grid_points: 0,
            seed,
        }
    }
}

/// Everything the calibration pipeline produces.
#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    /// The synchronized field data actually used.
    pub field: FieldData,
    pub design_rows: usize,
    pub emulator_lml: f64,
    pub lambda_b_hat: f64,
    pub lambda_f_hat: f64,
    pub bias_lengthscales: [f64; 2],
    pub samples: PosteriorSamples,
    pub summary: PosteriorSummary,
    pub bands: [PredictionBand; 3],
}

/// Run the full pipeline: synchronize cycles, train the stage-1 emulator,
/// initialize the stage-2 bias model, sample the posterior and compute the
/// three prediction products.
pub fn calibrate(
    field: &FieldData,
    inflow: &InflowWaveform,
    opts: &CalibrationOptions,
) -> Result<CalibrationOutcome> {
    let sync = synchronize_cycles(field).map_err(|e| e.in_stage("synchronize"))?;

    let design = EmulatorDesign::build(
        &sync,
        inflow,
        opts.k_influential,
        opts.n_rc,
        opts.rc_lo,
        opts.rc_hi,
        opts.seed,
    )
    .map_err(|e| e.in_stage("stage1-design"))?;
    let emulator = stage1_train_emulator(&design, opts.emulator_restarts, opts.seed ^ 0x51a9e1)
        .map_err(|e| e.in_stage("stage1-mle"))?;

    let (r0, c0) = opts.initial_guess;
    let stage2 = stage2_init_bias(
        &emulator,
        &sync,
        r0,
        c0,
        opts.stage2_restarts,
        opts.seed ^ 0x57a9e2,
    )
    .map_err(|e| e.in_stage("stage2"))?;

    let field_it: Vec<[f64; 2]> = sync
        .observations()
        .iter()
        .map(|o| [o.flow, o.time])
        .collect();
    let field_y = sync.pressures();
    let projector = emulator.projector(&field_it);
    let priors = CalibrationPriors::standard(stage2.lambda_b_hat, stage2.lambda_f_hat);
    let samples = run_mcmc(
        &emulator,
        &projector,
        &stage2.bias,
        &priors,
        &field_it,
        &field_y,
        &opts.mcmc,
    )
    .map_err(|e| e.in_stage("mcmc"))?;
    let summary = summarize(&samples).map_err(|e| e.in_stage("summary"))?;

    let (grid_times, grid_it) = band_grid(&sync, opts.band_grid_points);
    let bands = predict_products(
        &samples,
        &emulator,
        &stage2.bias,
        &field_it,
        &field_y,
        &grid_it,
        &grid_times,
        opts.seed ^ 0xba4d5,
    )
    .map_err(|e| e.in_stage("predict"))?;

    Ok(CalibrationOutcome {
        field: sync,
        design_rows: design.n_rows(),
        emulator_lml: emulator.log_marginal_likelihood(),
        lambda_b_hat: stage2.lambda_b_hat,
        lambda_f_hat: stage2.lambda_f_hat,
        bias_lengthscales: stage2.bias.lengthscales(),
        samples,
        summary,
        bands,
    })
}

/// Prediction grid: either the distinct observed times or an even grid over
/// the observed span, with flows interpolated from the first cycle.
fn band_grid(sync: &FieldData, n_points: usize) -> (Vec<f64>, Vec<[f64; 2]>) {
    let mut profile: Vec<(f64, f64)> = sync
        .cycle(sync.cycles()[0])
        .iter()
        .map(|o| (o.time, o.flow))
        .collect();
    profile.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let times: Vec<f64> = if n_points == 0 {
        let mut ts: Vec<f64> = sync.observations().iter().map(|o| o.time).collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // cycle rebasing leaves float residue on repeated sample times
        ts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        ts
    } else {
        let t_max = sync
            .observations()
            .iter()
            .map(|o| o.time)
            .fold(f64::MIN, f64::max);
        (0..n_points)
            .map(|i| i as f64 * t_max / (n_points - 1).max(1) as f64)
            .collect()
    };
    let it = times
        .iter()
        .map(|&t| [interp_profile(&profile, t), t])
        .collect();
    (times, it)
}

fn interp_profile(profile: &[(f64, f64)], t: f64) -> f64 {
    if t <= profile[0].0 {
        return profile[0].1;
    }
    if t >= profile[profile.len() - 1].0 {
        return profile[profile.len() - 1].1;
    }
    let mut lo = 0;
    let mut hi = profile.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if profile[mid].0 <= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (t0, f0) = profile[lo];
    let (t1, f1) = profile[hi];
    f0 + (f1 - f0) * (t - t0) / (t1 - t0)
}
