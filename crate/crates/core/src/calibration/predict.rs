//! Posterior prediction products: pure-model, functional-bias and
//! bias-corrected bands over a time grid.
//!
//! For every thinned draw `(R, C, lambda_b, lambda_f)`:
//! - the pure-model value is a draw from the emulator predictive at
//!   `(grid, R, C)`;
//! - the bias value is a draw from the discrepancy process conditioned on the
//!   field residuals `y - mu_em(R, C)`, with the emulator covariance and the
//!   observation noise acting as the conditioning nugget;
//! - the bias-corrected value is their sum. Its band quantiles additionally
//!   include observation noise (a posterior predictive for new data), while
//!   the reported band mean stays noise-free, so the three band means are
//!   exactly additive.
//!
//! Bands are the pointwise mean and (5%, 95%) quantiles across draws.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stats::quantile;

use super::emulator::Emulator;
use super::mcmc::PosteriorSamples;
use super::stage2::BiasModel;

/// Which posterior product a band describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandKind {
    BiasCorrected,
    PureModel,
    Bias,
}

impl BandKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BandKind::BiasCorrected => "bias_corrected",
            BandKind::PureModel => "pure_model",
            BandKind::Bias => "bias",
        }
    }
}

/// Pointwise mean and 90% band over a time grid.
#[derive(Debug, Clone)]
pub struct PredictionBand {
    pub kind: BandKind,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PredictionBand {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Average band width.
    pub fn mean_width(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .sum::<f64>()
            / self.len() as f64
    }
}

fn chol_with_jitter(mut m: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0_f64, f64::max).max(1e-12);
    let mut jitter = 1e-10 * scale;
    for _ in 0..8 {
        let mut try_m = m.clone();
        for i in 0..n {
            try_m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(try_m) {
            return Some(c);
        }
        jitter *= 10.0;
    }
    // last resort: heavily regularized
    for i in 0..n {
        m[(i, i)] += 1e-2 * scale;
    }
    Cholesky::new(m)
}

/// Compute the three prediction bands at the `(I, t)` grid points.
///
/// `field_it`/`field_y` are the observations the bias process conditions on.
/// Draws whose covariance assembly fails are skipped; more than 5% skipped is
/// an error.
pub fn predict_products(
    samples: &PosteriorSamples,
    emulator: &Emulator,
    bias: &BiasModel,
    field_it: &[[f64; 2]],
    field_y: &[f64],
    grid_it: &[[f64; 2]],
    grid_times: &[f64],
    seed: u64,
) -> Result<[PredictionBand; 3]> {
    if samples.draws.is_empty() {
        return Err(Error::InvalidInput("no posterior draws".into()));
    }
    if grid_it.len() != grid_times.len() || grid_it.is_empty() {
        return Err(Error::InvalidInput("empty prediction grid".into()));
    }
    let m = field_it.len();
    let g = grid_it.len();
    let field_proj = emulator.projector(field_it);
    let grid_proj = emulator.projector(grid_it);
    let y = DVector::from_column_slice(field_y);
    let b_ff = bias.correlation(field_it, field_it);
    let b_gf = bias.correlation(grid_it, field_it);
    let b_gg = bias.correlation(grid_it, grid_it);

    let n_draws = samples.draws.len();
    let mut pure_draws = vec![0.0_f64; n_draws * g];
    let mut bias_draws = vec![0.0_f64; n_draws * g];
    let mut noisy_draws = vec![0.0_f64; n_draws * g];
    let mut mean_pure = vec![0.0_f64; g];
    let mut mean_bias = vec![0.0_f64; g];
    let mut mean_bc = vec![0.0_f64; g];
    let mut skipped = 0usize;
    let mut kept = 0usize;

    for (s, draw) in samples.draws.iter().enumerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);

        let (mu_f, cov_f) = emulator.projected_mean_cov(&field_proj, draw.r, draw.c, false);
        let (mu_g, cov_g) = emulator.projected_mean_cov(&grid_proj, draw.r, draw.c, false);
        let cov_f = cov_f.expect("covariance requested");
        let cov_g = cov_g.expect("covariance requested");

        // field covariance: emulator + bias + noise
        let inv_b = 1.0 / draw.lambda_b;
        let inv_f = 1.0 / draw.lambda_f;
        let mut sigma_f = cov_f;
        for i in 0..m {
            for j in 0..m {
                sigma_f[(i, j)] += b_ff[(i, j)] * inv_b;
            }
            sigma_f[(i, i)] += inv_f;
        }
        let Some(chol_f) = chol_with_jitter(sigma_f) else {
            skipped += 1;
            continue;
        };
        let res = &y - &mu_f;
        let alpha = chol_f.solve(&res);

        // bias conditional moments on the grid
        let c_gf = b_gf.map(|v| v * inv_b);
        let b_mean = &c_gf * &alpha;
        let solved = chol_f.solve(&c_gf.transpose());
        let b_cov = b_gg.map(|v| v * inv_b) - &c_gf * solved;

        let Some(chol_b) = chol_with_jitter(b_cov) else {
            skipped += 1;
            continue;
        };
        let Some(chol_g) = chol_with_jitter(cov_g) else {
            skipped += 1;
            continue;
        };

        let z1 = DVector::from_fn(g, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z2 = DVector::from_fn(g, |_, _| rng.sample::<f64, _>(StandardNormal));
        let pure = &mu_g + chol_g.l() * z1;
        let bias_v = &b_mean + chol_b.l() * z2;
        let noise_sd = inv_f.sqrt();

        for i in 0..g {
            let p = pure[i];
            let b = bias_v[i];
            pure_draws[kept * g + i] = p;
            bias_draws[kept * g + i] = b;
            let eps: f64 = rng.sample(StandardNormal);
            noisy_draws[kept * g + i] = p + b + noise_sd * eps;
            mean_pure[i] += p;
            mean_bias[i] += b;
            mean_bc[i] += p + b;
        }
        kept += 1;
    }

    if skipped * 20 > n_draws {
        return Err(Error::Mcmc(format!(
            "{skipped} of {n_draws} prediction draws failed conditioning"
        )));
    }
    if kept == 0 {
        return Err(Error::Mcmc("no usable prediction draws".into()));
    }
    for v in mean_pure.iter_mut().chain(&mut mean_bias).chain(&mut mean_bc) {
        *v /= kept as f64;
    }

    let band = |kind: BandKind, mean: Vec<f64>, draws: &[f64]| -> PredictionBand {
        let mut lower = Vec::with_capacity(g);
        let mut upper = Vec::with_capacity(g);
        let mut column = vec![0.0_f64; kept];
        for i in 0..g {
            for s in 0..kept {
                column[s] = draws[s * g + i];
            }
            lower.push(quantile(&column, 0.05));
            upper.push(quantile(&column, 0.95));
        }
        PredictionBand {
            kind,
            times: grid_times.to_vec(),
            mean,
            lower,
            upper,
        }
    };

    Ok([
        band(BandKind::BiasCorrected, mean_bc, &noisy_draws[..kept * g]),
        band(BandKind::PureModel, mean_pure, &pure_draws[..kept * g]),
        band(BandKind::Bias, mean_bias, &bias_draws[..kept * g]),
    ])
}
