//! Stage-1 pressure emulator trained on a grid design.
//!
//! The design crosses a Latin-hypercube of calibration points `(R, C)` with
//! the influential `(I, t)` points of the observed cycle, and the model runs
//! are WK2 steady-state pressures at every combination. Because the
//! power-exponential kernel is a product over input dimensions and the design
//! is an exact grid, the Gram matrix is a Kronecker product
//! `sigma^2 K_ti (x) K_rc`. Eigendecomposing the two small factors once per
//! hyperparameter evaluation gives the exact marginal likelihood and exact
//! predictive moments at a fraction of the dense cost; predictions at the
//! field points reduce to one `N x N` matrix-vector product per proposal,
//! which is what makes the calibration MCMC affordable.
//!
//! The algebra is validated against the dense [`crate::gp::GpModel`] path on
//! small designs (see the module tests).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::{PowerExpKernel, Standardizer};
use crate::inflow::InflowWaveform;
use crate::optim::{latin_hypercube, multi_start, Bounds, SimplexOptions};
use crate::stats::variance;
use crate::synthetic::FieldData;
use crate::windkessel::{steady_wk2, Wk2Params};

use super::influential::{select_influential_points, InfluentialPoints};

/// Jitter multiplier applied to the kernel variance on the Gram diagonal.
const GRID_JITTER: f64 = 1e-8;

/// Grid design for the WK2 emulator: `(R, C)` calibration points crossed
/// with `(I, t)` cycle points, plus the model runs at every combination.
#[derive(Debug, Clone)]
pub struct EmulatorDesign {
    /// Calibration points, one `(R, C)` row each.
    pub rc_points: Vec<[f64; 2]>,
    /// Cycle input points, one `(I, t)` row each.
    pub ti_points: Vec<[f64; 2]>,
    /// `runs[(b, a)]` = WK2 pressure at `ti_points[a]` under `rc_points[b]`.
    pub runs: DMatrix<f64>,
    /// The influential-point selection the design was built on.
    pub influential: InfluentialPoints,
}

impl EmulatorDesign {
    /// Number of rows of the implied flat design.
    pub fn n_rows(&self) -> usize {
        self.rc_points.len() * self.ti_points.len()
    }

    /// Build the design from observed field data: select `k` influential
    /// points on the first cycle, draw `n_rc` Latin-hypercube calibration
    /// points over `[rc_lo, rc_hi]^2` and run the WK2 model at each.
    pub fn build(
        field: &FieldData,
        inflow: &InflowWaveform,
        k: usize,
        n_rc: usize,
        rc_lo: f64,
        rc_hi: f64,
        seed: u64,
    ) -> Result<Self> {
        let first_cycle = field.cycle(field.cycles()[0]);
        let times: Vec<f64> = first_cycle.iter().map(|o| o.time).collect();
        let flows: Vec<f64> = first_cycle.iter().map(|o| o.flow).collect();
        let pressures: Vec<f64> = first_cycle.iter().map(|o| o.pressure).collect();
        let influential = select_influential_points(&times, &flows, &pressures, k)?;

        let rc_box = Bounds::new(vec![rc_lo, rc_lo], vec![rc_hi, rc_hi])?;
        let rc_points: Vec<[f64; 2]> = latin_hypercube(n_rc, &rc_box, seed)
            .into_iter()
            .map(|p| [p[0], p[1]])
            .collect();
        let ti_points: Vec<[f64; 2]> = influential
            .times
            .iter()
            .zip(&influential.flows)
            .map(|(&t, &i)| [i, t])
            .collect();

        let mut runs = DMatrix::zeros(rc_points.len(), ti_points.len());
        for (b, rc) in rc_points.iter().enumerate() {
            let params = Wk2Params::new(rc[0], rc[1])?;
            let series = steady_wk2(inflow, &params, &influential.times, 1e-3)?;
            for (a, &p) in series.values().iter().enumerate() {
                runs[(b, a)] = p;
            }
        }
        Ok(Self {
            rc_points,
            ti_points,
            runs,
            influential,
        })
    }

    /// Expand to the flat 4-column design `(I, t, R, C)` with outputs, row
    /// order `(a, b) -> a * N + b`. Used to cross-check against the dense GP.
    pub fn as_flat(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (n_rc, n_ti) = (self.rc_points.len(), self.ti_points.len());
        let mut x = DMatrix::zeros(n_rc * n_ti, 4);
        let mut y = DVector::zeros(n_rc * n_ti);
        for a in 0..n_ti {
            for b in 0..n_rc {
                let row = a * n_rc + b;
                x[(row, 0)] = self.ti_points[a][0];
                x[(row, 1)] = self.ti_points[a][1];
                x[(row, 2)] = self.rc_points[b][0];
                x[(row, 3)] = self.rc_points[b][1];
                y[row] = self.runs[(b, a)];
            }
        }
        (x, y)
    }
}

/// Trained grid emulator with frozen hyperparameters.
#[derive(Debug, Clone)]
pub struct Emulator {
    kernel: PowerExpKernel,
    noise_precision: f64,
    standardizer: Standardizer,
    ti_std: DMatrix<f64>,
    rc_std: DMatrix<f64>,
    qt: DMatrix<f64>,
    qr: DMatrix<f64>,
    /// `d[(b, a)]` = eigenvalue of the noisy Gram for the `(a, b)` pair.
    d: DMatrix<f64>,
    /// `m_over_d[(b, a)]` = transformed centered outputs divided by `d`.
    m_over_d: DMatrix<f64>,
    y_mean: f64,
    lml: f64,
}

/// Precomputed field-point quantities: predictions at these `(I, t)` points
/// for any `(R, C)` only need one `N`-vector transform per proposal.
#[derive(Debug, Clone)]
pub struct FieldProjector {
    /// Row `i` holds `Qt' u_i` for field point `i`.
    u_tilde: DMatrix<f64>,
    /// Unit-variance `(I, t)` correlation between field points.
    corr_ti_ff: DMatrix<f64>,
}

impl Emulator {
    pub fn kernel(&self) -> &PowerExpKernel {
        &self.kernel
    }

    pub fn noise_precision(&self) -> f64 {
        self.noise_precision
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Correlation over the `(I, t)` block of the 4-D kernel, standardized
    /// coordinates.
    fn corr_ti(&self, a: &[f64], b: &[f64]) -> f64 {
        let k = &self.kernel;
        let s = crate::gp::kernel::powered_distance(a[0] - b[0], k.exponents[0]) / k.lengthscales[0]
            + crate::gp::kernel::powered_distance(a[1] - b[1], k.exponents[1]) / k.lengthscales[1];
        (-s).exp()
    }

    /// Correlation over the `(R, C)` block.
    fn corr_rc(&self, a: &[f64], b: &[f64]) -> f64 {
        let k = &self.kernel;
        let s = crate::gp::kernel::powered_distance(a[0] - b[0], k.exponents[2]) / k.lengthscales[2]
            + crate::gp::kernel::powered_distance(a[1] - b[1], k.exponents[3]) / k.lengthscales[3];
        (-s).exp()
    }

    fn standardize_it(&self, i: f64, t: f64) -> [f64; 2] {
        let m = DMatrix::from_row_slice(1, 4, &[i, t, 0.0, 0.0]);
        let s = self.standardizer.apply(&m);
        [s[(0, 0)], s[(0, 1)]]
    }

    fn standardize_rc(&self, r: f64, c: f64) -> [f64; 2] {
        let m = DMatrix::from_row_slice(1, 4, &[0.0, 0.0, r, c]);
        let s = self.standardizer.apply(&m);
        [s[(0, 2)], s[(0, 3)]]
    }

    /// Predictive mean and latent variance at raw `(I, t, R, C)` rows.
    pub fn predict(&self, points: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if points.ncols() != 4 {
            return Err(Error::InvalidInput(
                "emulator points need 4 columns (I, t, R, C)".into(),
            ));
        }
        let sigma2 = self.kernel.variance;
        let n_ti = self.ti_std.nrows();
        let n_rc = self.rc_std.nrows();
        let m = points.nrows();
        let mut mean = DVector::zeros(m);
        let mut var = DVector::zeros(m);
        let std_pts = self.standardizer.apply(points);
        for i in 0..m {
            let it = [std_pts[(i, 0)], std_pts[(i, 1)]];
            let rc = [std_pts[(i, 2)], std_pts[(i, 3)]];
            let u = DVector::from_fn(n_ti, |a, _| {
                self.corr_ti(&it, &[self.ti_std[(a, 0)], self.ti_std[(a, 1)]])
            });
            let w = DVector::from_fn(n_rc, |b, _| {
                self.corr_rc(&rc, &[self.rc_std[(b, 0)], self.rc_std[(b, 1)]])
            });
            let u_t = self.qt.transpose() * u;
            let w_t = self.qr.transpose() * w;
            let mut mu = 0.0;
            let mut red = 0.0;
            for a in 0..n_ti {
                for b in 0..n_rc {
                    let proj = u_t[a] * w_t[b];
                    mu += proj * self.m_over_d[(b, a)];
                    red += proj * proj / self.d[(b, a)];
                }
            }
            mean[i] = sigma2 * mu + self.y_mean;
            var[i] = (sigma2 - sigma2 * sigma2 * red).max(0.0);
        }
        Ok((mean, var))
    }

    /// Precompute the field-point transforms for [`Self::projected_mean_cov`].
    pub fn projector(&self, it_points: &[[f64; 2]]) -> FieldProjector {
        let m = it_points.len();
        let n_ti = self.ti_std.nrows();
        let std_it: Vec<[f64; 2]> = it_points
            .iter()
            .map(|p| self.standardize_it(p[0], p[1]))
            .collect();
        let mut u_tilde = DMatrix::zeros(m, n_ti);
        for (i, it) in std_it.iter().enumerate() {
            let u = DVector::from_fn(n_ti, |a, _| {
                self.corr_ti(it, &[self.ti_std[(a, 0)], self.ti_std[(a, 1)]])
            });
            let ut = self.qt.transpose() * u;
            for a in 0..n_ti {
                u_tilde[(i, a)] = ut[a];
            }
        }
        let mut corr_ti_ff = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = self.corr_ti(&std_it[i], &std_it[j]);
                corr_ti_ff[(i, j)] = v;
                corr_ti_ff[(j, i)] = v;
            }
        }
        FieldProjector {
            u_tilde,
            corr_ti_ff,
        }
    }

    /// Predictive mean (and latent covariance unless `mean_only`) at the
    /// projector's field points for calibration parameters `(r, c)`.
    pub fn projected_mean_cov(
        &self,
        proj: &FieldProjector,
        r: f64,
        c: f64,
        mean_only: bool,
    ) -> (DVector<f64>, Option<DMatrix<f64>>) {
        let sigma2 = self.kernel.variance;
        let n_ti = self.ti_std.nrows();
        let n_rc = self.rc_std.nrows();
        let m = proj.u_tilde.nrows();

        let rc = self.standardize_rc(r, c);
        let w = DVector::from_fn(n_rc, |b, _| {
            self.corr_rc(&rc, &[self.rc_std[(b, 0)], self.rc_std[(b, 1)]])
        });
        let w_t = self.qr.transpose() * w;

        // per-time-eigenvector contraction over the calibration eigenspace
        let mut t_vec = DVector::zeros(n_ti); // sum_b m_over_d[b,a] w_t[b]
        let mut g_vec = DVector::zeros(n_ti); // sum_b w_t[b]^2 / d[b,a]
        for a in 0..n_ti {
            let mut t_acc = 0.0;
            let mut g_acc = 0.0;
            for b in 0..n_rc {
                t_acc += self.m_over_d[(b, a)] * w_t[b];
                g_acc += w_t[b] * w_t[b] / self.d[(b, a)];
            }
            t_vec[a] = t_acc;
            g_vec[a] = g_acc;
        }

        let mean = DVector::from_fn(m, |i, _| {
            let mut acc = 0.0;
            for a in 0..n_ti {
                acc += proj.u_tilde[(i, a)] * t_vec[a];
            }
            sigma2 * acc + self.y_mean
        });
        if mean_only {
            return (mean, None);
        }

        let s4 = sigma2 * sigma2;
        let mut cov = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let mut red = 0.0;
                for a in 0..n_ti {
                    red += proj.u_tilde[(i, a)] * proj.u_tilde[(j, a)] * g_vec[a];
                }
                let v = sigma2 * proj.corr_ti_ff[(i, j)] - s4 * red;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        (mean, Some(cov))
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct GridFactors {
    qt: DMatrix<f64>,
    qr: DMatrix<f64>,
    d: DMatrix<f64>,
    w: DMatrix<f64>,
    lml: f64,
}

fn block_corr(
    pts: &DMatrix<f64>,
    lengthscales: &[f64],
    exponents: &[f64],
) -> DMatrix<f64> {
    let n = pts.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return 1.0;
        }
        let mut s = 0.0;
        for q in 0..pts.ncols() {
            s += crate::gp::kernel::powered_distance(pts[(i, q)] - pts[(j, q)], exponents[q])
                / lengthscales[q];
        }
        (-s).exp()
    })
}

/// Eigendecompose both blocks and assemble the Kronecker marginal likelihood.
fn grid_factorize(
    kernel: &PowerExpKernel,
    ti_std: &DMatrix<f64>,
    rc_std: &DMatrix<f64>,
    runs_centered: &DMatrix<f64>,
    noise_var: f64,
) -> GridFactors {
    let corr_ti = block_corr(ti_std, &kernel.lengthscales[0..2], &kernel.exponents[0..2]);
    let corr_rc = block_corr(rc_std, &kernel.lengthscales[2..4], &kernel.exponents[2..4]);
    let eig_t = corr_ti.symmetric_eigen();
    let eig_r = corr_rc.symmetric_eigen();
    let lam_t = eig_t.eigenvalues.map(|v| v.max(0.0));
    let lam_r = eig_r.eigenvalues.map(|v| v.max(0.0));
    let qt = eig_t.eigenvectors;
    let qr = eig_r.eigenvectors;

    let (n_rc, n_ti) = (rc_std.nrows(), ti_std.nrows());
    let w = qr.transpose() * runs_centered * &qt; // N x k

    let mut d = DMatrix::zeros(n_rc, n_ti);
    let mut lml = 0.0;
    for a in 0..n_ti {
        for b in 0..n_rc {
            let dv = kernel.variance * lam_t[a] * lam_r[b] + noise_var;
            d[(b, a)] = dv;
            lml += w[(b, a)] * w[(b, a)] / dv + dv.ln();
        }
    }
    let n = (n_rc * n_ti) as f64;
    lml = -0.5 * lml - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    GridFactors { qt, qr, d, w, lml }
}

fn build_emulator(design: &EmulatorDesign, kernel: PowerExpKernel, lambda: f64) -> Emulator {
    // standardize over the 4-column design the grid implies
    let (flat_x, _) = design.as_flat();
    let standardizer = Standardizer::fit(&flat_x);
    let n_ti = design.ti_points.len();
    let n_rc = design.rc_points.len();
    let std_flat = standardizer.apply(&flat_x);
    // ti rows are every n_rc-th flat row; rc rows are the first n_rc
    let ti_std = DMatrix::from_fn(n_ti, 2, |a, q| std_flat[(a * n_rc, q)]);
    let rc_std = DMatrix::from_fn(n_rc, 2, |b, q| std_flat[(b, 2 + q)]);

    let y_mean = design.runs.iter().sum::<f64>() / design.runs.len() as f64;
    let runs_centered = design.runs.map(|v| v - y_mean);
    let noise_var = 1.0 / lambda + GRID_JITTER * kernel.variance;
    let f = grid_factorize(&kernel, &ti_std, &rc_std, &runs_centered, noise_var);
    let m_over_d = DMatrix::from_fn(n_rc, n_ti, |b, a| f.w[(b, a)] / f.d[(b, a)]);
    Emulator {
        kernel,
        noise_precision: lambda,
        standardizer,
        ti_std,
        rc_std,
        qt: f.qt,
        qr: f.qr,
        d: f.d,
        m_over_d,
        y_mean,
        lml: f.lml,
    }
}

/// Train the emulator: maximize the exact marginal likelihood over
/// `(sigma^2, l_1..4, d_1..4, lambda)` by multi-start Nelder-Mead with free
/// exponents, then freeze the hyperparameters.
pub fn stage1_train_emulator(
    design: &EmulatorDesign,
    restarts: usize,
    seed: u64,
) -> Result<Emulator> {
    if design.n_rows() < 40 {
        return Err(Error::InvalidInput(format!(
            "emulator design has {} rows; need at least 40",
            design.n_rows()
        )));
    }
    let runs: Vec<f64> = design.runs.iter().copied().collect();
    let var_y = variance(&runs).max(1e-12);

    // theta = [ln s2, ln l1..4, logit(d-1)_1..4, ln lambda]
    let p = 4usize;
    let dim = 1 + p + p + 1;
    let mut lo = vec![(1e-6 * var_y).ln()];
    let mut hi = vec![(1e6 * var_y).ln()];
    lo.extend(std::iter::repeat_n((1e-3_f64).ln(), p));
    hi.extend(std::iter::repeat_n((1e3_f64).ln(), p));
    lo.extend(std::iter::repeat_n(-6.0, p));
    hi.extend(std::iter::repeat_n(6.0, p));
    lo.push((1e-6_f64).ln());
    hi.push((1e8_f64).ln());
    let bounds = Bounds::new(lo, hi)?;

    // factor the standardization once; objective rebuilds only the kernel
    let (flat_x, _) = design.as_flat();
    let standardizer = Standardizer::fit(&flat_x);
    let n_ti = design.ti_points.len();
    let n_rc = design.rc_points.len();
    let std_flat = standardizer.apply(&flat_x);
    let ti_std = DMatrix::from_fn(n_ti, 2, |a, q| std_flat[(a * n_rc, q)]);
    let rc_std = DMatrix::from_fn(n_rc, 2, |b, q| std_flat[(b, 2 + q)]);
    let y_mean = design.runs.iter().sum::<f64>() / design.runs.len() as f64;
    let runs_centered = design.runs.map(|v| v - y_mean);

    let theta_to_kernel = |theta: &[f64]| -> Result<(PowerExpKernel, f64)> {
        let variance = theta[0].exp();
        let lengthscales: Vec<f64> = theta[1..1 + p].iter().map(|t| t.exp()).collect();
        let exponents: Vec<f64> = theta[1 + p..1 + 2 * p]
            .iter()
            .map(|t| 1.0 + 1.0 / (1.0 + (-t).exp()))
            .collect();
        let lambda = theta[dim - 1].exp();
        Ok((PowerExpKernel::new(variance, lengthscales, exponents)?, lambda))
    };

    let mut objective = |theta: &[f64]| -> Result<f64> {
        let (kernel, lambda) = theta_to_kernel(theta)?;
        let noise_var = 1.0 / lambda + GRID_JITTER * kernel.variance;
        let f = grid_factorize(&kernel, &ti_std, &rc_std, &runs_centered, noise_var);
        if f.lml.is_finite() {
            Ok(-f.lml)
        } else {
            Ok(1e30)
        }
    };

    let mut starts = Vec::with_capacity(restarts);
    let mut primary = vec![var_y.ln()];
    primary.extend(std::iter::repeat_n((0.3_f64).ln(), p));
    primary.extend(std::iter::repeat_n(2.2, p));
    primary.push((1e4 / var_y).ln());
    starts.push(primary);
    if restarts > 1 {
        let mut slo = vec![(0.3 * var_y).ln()];
        let mut shi = vec![(3.0 * var_y).ln()];
        slo.extend(std::iter::repeat_n((0.05_f64).ln(), p));
        shi.extend(std::iter::repeat_n((2.0_f64).ln(), p));
        slo.extend(std::iter::repeat_n(-1.0, p));
        shi.extend(std::iter::repeat_n(2.5, p));
        slo.push((1.0 / var_y).ln());
        shi.push((1e6 / var_y).ln());
        let start_box = Bounds::new(slo, shi)?;
        starts.extend(latin_hypercube(restarts - 1, &start_box, seed));
    }

    let opts = SimplexOptions {
        diameter_tol: 1e-3,
        max_iters: 700,
        init_step_frac: 0.05,
    };
    let (best, _, _) = multi_start(&mut objective, &starts, &bounds, &opts)?;
    if best.f >= 1e30 {
        return Err(Error::Conditioning(
            "emulator likelihood non-finite at every restart".into(),
        ));
    }
    let (kernel, lambda) = theta_to_kernel(&best.x)?;
    Ok(build_emulator(design, kernel, lambda))
}
