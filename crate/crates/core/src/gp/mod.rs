//! Gaussian-process regression: power-exponential kernels, marginal-likelihood
//! training and predictive distributions.
//!
//! Inputs are standardized per-dimension to `[0, 1]` over the training design
//! and outputs are centered by their sample mean, so lengthscale bounds are
//! scale-free. The observation noise enters through a precision `lambda`
//! (`sigma_n^2 = 1/lambda`), plus an escalating diagonal jitter that keeps the
//! factorization positive definite for rough kernels.

pub mod kernel;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::optim::{latin_hypercube, multi_start, Bounds, SimplexOptions};
use crate::stats::variance;
pub use kernel::PowerExpKernel;

/// Per-dimension affine map onto `[0, 1]` fitted on the training design.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mins: Vec<f64>,
    ranges: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let p = x.ncols();
        let mut mins = vec![f64::INFINITY; p];
        let mut maxs = vec![f64::NEG_INFINITY; p];
        for i in 0..x.nrows() {
            for j in 0..p {
                mins[j] = mins[j].min(x[(i, j)]);
                maxs[j] = maxs[j].max(x[(i, j)]);
            }
        }
        let ranges = mins
            .iter()
            .zip(&maxs)
            .map(|(lo, hi)| {
                let r = hi - lo;
                if r > 0.0 {
                    r
                } else {
                    1.0 // constant column: map to 0
                }
            })
            .collect();
        Self { mins, ranges }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for i in 0..out.nrows() {
            for j in 0..out.ncols() {
                out[(i, j)] = (out[(i, j)] - self.mins[j]) / self.ranges[j];
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }
}

/// Highest jitter multiplier tried before giving up, relative to the kernel
/// variance.
const JITTER_MAX: f64 = 1e-4;
const JITTER_START: f64 = 1e-8;

/// Trained Gaussian process.
#[derive(Debug, Clone)]
pub struct GpModel {
    x_std: DMatrix<f64>,
    standardizer: Standardizer,
    y_mean: f64,
    y_centered: DVector<f64>,
    kernel: PowerExpKernel,
    noise_precision: f64,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GpModel {
    /// Train on raw inputs `x` (one row per point) and outputs `y` with the
    /// given kernel (in standardized coordinates) and noise precision.
    pub fn train(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        kernel: PowerExpKernel,
        noise_precision: f64,
    ) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InvalidInput("GP needs at least 2 points".into()));
        }
        if y.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} outputs for {} design rows",
                y.len(),
                n
            )));
        }
        if kernel.dim() != x.ncols() {
            return Err(Error::InvalidInput(format!(
                "kernel dimension {} does not match design dimension {}",
                kernel.dim(),
                x.ncols()
            )));
        }
        if !(noise_precision.is_finite() && noise_precision > 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise precision must be > 0, got {noise_precision}"
            )));
        }
        let standardizer = Standardizer::fit(x);
        let x_std = standardizer.apply(x);
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let y_centered = y.map(|v| v - y_mean);

        let gram = kernel.gram(&x_std);
        let mut jitter = JITTER_START;
        let chol = loop {
            let mut m = gram.clone();
            let diag_add = 1.0 / noise_precision + jitter * kernel.variance;
            for i in 0..n {
                m[(i, i)] += diag_add;
            }
            match Cholesky::new(m) {
                Some(c) => break c,
                None if jitter < JITTER_MAX => jitter *= 10.0,
                None => {
                    return Err(Error::Conditioning(format!(
                        "covariance not positive definite at jitter {JITTER_MAX}"
                    )))
                }
            }
        };
        let alpha = chol.solve(&y_centered);
        Ok(Self {
            x_std,
            standardizer,
            y_mean,
            y_centered,
            kernel,
            noise_precision,
            jitter,
            chol,
            alpha,
        })
    }

    pub fn n(&self) -> usize {
        self.x_std.nrows()
    }

    pub fn kernel(&self) -> &PowerExpKernel {
        &self.kernel
    }

    pub fn noise_precision(&self) -> f64 {
        self.noise_precision
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Total diagonal added to the Gram matrix: `1/lambda + jitter * sigma^2`.
    pub fn effective_noise_variance(&self) -> f64 {
        1.0 / self.noise_precision + self.jitter * self.kernel.variance
    }

    /// `-1/2 y' (K + s I)^-1 y - 1/2 log det(K + s I) - n/2 log 2 pi`, reusing
    /// the stored factorization.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.n() as f64;
        let quad = self.y_centered.dot(&self.alpha);
        let log_det_half: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * quad - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    fn cross_to(&self, x_raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_raw.ncols() != self.standardizer.dim() {
            return Err(Error::InvalidInput(format!(
                "prediction points have {} columns, design has {}",
                x_raw.ncols(),
                self.standardizer.dim()
            )));
        }
        let x_std = self.standardizer.apply(x_raw);
        Ok(self.kernel.cross(&self.x_std, &x_std))
    }

    /// Predictive mean and (non-negative) latent variance at the given raw
    /// points.
    pub fn predict(&self, x_raw: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let kstar = self.cross_to(x_raw)?; // n x m
        let mean = kstar.transpose() * &self.alpha + DVector::from_element(x_raw.nrows(), self.y_mean);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .ok_or_else(|| Error::Conditioning("triangular solve failed".into()))?;
        let mut var = DVector::from_element(x_raw.nrows(), self.kernel.variance);
        for j in 0..v.ncols() {
            let reduction: f64 = v.column(j).iter().map(|a| a * a).sum();
            var[j] = (var[j] - reduction).max(0.0);
        }
        Ok((mean, var))
    }

    /// Predictive mean and full latent covariance at the given raw points.
    pub fn predict_full(&self, x_raw: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let kstar = self.cross_to(x_raw)?;
        let mean = kstar.transpose() * &self.alpha + DVector::from_element(x_raw.nrows(), self.y_mean);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .ok_or_else(|| Error::Conditioning("triangular solve failed".into()))?;
        let x_std = self.standardizer.apply(x_raw);
        let prior = self.kernel.gram(&x_std);
        let cov = prior - v.transpose() * v;
        Ok((mean, cov))
    }
}

/// Whether the MLE search keeps the exponents at 2 or fits them freely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentMode {
    Fixed2,
    Free,
}

/// Maximum-likelihood hyperparameter fit by multi-start Nelder-Mead in the
/// transformed space `(log sigma^2, log l_j, logit(d_j - 1), log lambda)`.
pub fn fit_mle(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    mode: ExponentMode,
    restarts: usize,
    seed: u64,
) -> Result<GpModel> {
    let n = x.nrows();
    let p = x.ncols();
    if n < 4 {
        return Err(Error::InvalidInput(
            "MLE fit needs at least 4 design rows".into(),
        ));
    }
    if restarts == 0 {
        return Err(Error::InvalidInput("restarts must be >= 1".into()));
    }
    let y_slice: Vec<f64> = y.iter().copied().collect();
    let var_y = variance(&y_slice).max(1e-12);

    // transformed coordinates: [ln s2, ln l_1..p, logit(d-1)_1..p?, ln lam]
    let free = mode == ExponentMode::Free;
    let n_d = if free { p } else { 0 };
    let dim = 1 + p + n_d + 1;

    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    lo.push((1e-6 * var_y).ln());
    hi.push((1e6 * var_y).ln());
    for _ in 0..p {
        lo.push((1e-3_f64).ln());
        hi.push((1e3_f64).ln());
    }
    for _ in 0..n_d {
        lo.push(-6.0);
        hi.push(6.0);
    }
    lo.push((1e-6_f64).ln());
    hi.push((1e8_f64).ln());
    let bounds = Bounds::new(lo, hi)?;

    let theta_to_kernel = |theta: &[f64]| -> Result<(PowerExpKernel, f64)> {
        let variance = theta[0].exp();
        let lengthscales: Vec<f64> = theta[1..1 + p].iter().map(|t| t.exp()).collect();
        let exponents: Vec<f64> = if free {
            theta[1 + p..1 + p + n_d]
                .iter()
                .map(|t| 1.0 + logistic(*t))
                .collect()
        } else {
            vec![2.0; p]
        };
        let lambda = theta[dim - 1].exp();
        Ok((PowerExpKernel::new(variance, lengthscales, exponents)?, lambda))
    };

    // conditioning failures poison a point, not the whole search
    const FAILED: f64 = 1e30;
    let mut objective = |theta: &[f64]| -> Result<f64> {
        let (kernel, lambda) = theta_to_kernel(theta)?;
        match GpModel::train(x, y, kernel, lambda) {
            Ok(model) => Ok(-model.log_marginal_likelihood()),
            Err(Error::Conditioning(_)) => Ok(FAILED),
            Err(e) => Err(e),
        }
    };

    // heuristic first start, then a Latin hypercube over a moderate region
    let mut starts = Vec::with_capacity(restarts);
    let mut primary = vec![var_y.ln()];
    primary.extend(std::iter::repeat_n((0.3_f64).ln(), p));
    primary.extend(std::iter::repeat_n(2.2, n_d)); // d near 1.9
    primary.push((100.0 / var_y).ln());
    starts.push(primary);
    if restarts > 1 {
        let mut slo = vec![(0.3 * var_y).ln()];
        let mut shi = vec![(3.0 * var_y).ln()];
        slo.extend(std::iter::repeat_n((0.05_f64).ln(), p));
        shi.extend(std::iter::repeat_n((2.0_f64).ln(), p));
        slo.extend(std::iter::repeat_n(-1.0, n_d));
        shi.extend(std::iter::repeat_n(2.5, n_d));
        slo.push((0.3 / var_y).ln());
        shi.push((300.0 / var_y).ln());
        let start_box = Bounds::new(slo, shi)?;
        starts.extend(latin_hypercube(restarts - 1, &start_box, seed));
    }

    let opts = SimplexOptions {
        diameter_tol: 1e-5,
        max_iters: 2500,
        init_step_frac: 0.03,
    };
    let (best, _, _) = multi_start(&mut objective, &starts, &bounds, &opts)?;
    if best.f >= FAILED {
        return Err(Error::Conditioning(
            "every restart failed covariance factorization".into(),
        ));
    }
    let (kernel, lambda) = theta_to_kernel(&best.x)?;
    GpModel::train(x, y, kernel, lambda)
}

#[inline]
fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}
