//! Stage 2 initialization: discrepancy model from residuals at an initial
//! parameter guess.
//!
//! Residuals between the observed pressures and the stage-1 emulator mean at
//! `(R0, C0)` are fitted with a zero-mean squared-exponential GP over
//! `(I, t)`. The fitted correlation lengthscales are frozen; the two
//! precision MLEs (bias marginal precision `lambda_b = 1/sigma_b^2` and noise
//! precision `lambda_f`) seed the exponential priors used by the MCMC stage.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::gp::{fit_mle, ExponentMode, Standardizer};
use crate::synthetic::FieldData;

use super::emulator::Emulator;

/// Zero-mean unit-variance squared-exponential correlation over `(I, t)` with
/// lengthscales frozen at their stage-2 MLEs.
#[derive(Debug, Clone)]
pub struct BiasModel {
    standardizer: Standardizer,
    lengthscales: [f64; 2],
}

impl BiasModel {
    pub fn lengthscales(&self) -> [f64; 2] {
        self.lengthscales
    }

    /// Unit-variance correlation matrix between two raw `(I, t)` point sets.
    pub fn correlation(&self, a: &[[f64; 2]], b: &[[f64; 2]]) -> DMatrix<f64> {
        let sa = self.standardize(a);
        let sb = self.standardize(b);
        DMatrix::from_fn(a.len(), b.len(), |i, j| {
            let di = sa[i][0] - sb[j][0];
            let dt = sa[i][1] - sb[j][1];
            (-(di * di / self.lengthscales[0] + dt * dt / self.lengthscales[1])).exp()
        })
    }

    fn standardize(&self, pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let m = DMatrix::from_fn(pts.len(), 2, |i, j| pts[i][j]);
        let s = self.standardizer.apply(&m);
        (0..pts.len()).map(|i| [s[(i, 0)], s[(i, 1)]]).collect()
    }
}

/// Output of stage 2: the frozen bias correlation plus the precision MLEs.
#[derive(Debug, Clone)]
pub struct Stage2Fit {
    pub bias: BiasModel,
    pub lambda_b_hat: f64,
    pub lambda_f_hat: f64,
    /// Residuals at `(R0, C0)`, kept for diagnostics.
    pub residuals: DVector<f64>,
}

/// Fit the bias GP to the residuals `P_obs - emulator_mean(I, t, R0, C0)`.
pub fn stage2_init_bias(
    emulator: &Emulator,
    field: &FieldData,
    r0: f64,
    c0: f64,
    restarts: usize,
    seed: u64,
) -> Result<Stage2Fit> {
    let obs = field.observations();
    let m = obs.len();
    let pts = DMatrix::from_fn(m, 4, |i, j| match j {
        0 => obs[i].flow,
        1 => obs[i].time,
        2 => r0,
        _ => c0,
    });
    let (mean, _) = emulator.predict(&pts)?;
    let residuals = DVector::from_fn(m, |i, _| obs[i].pressure - mean[i]);

    let x2 = DMatrix::from_fn(m, 2, |i, j| if j == 0 { obs[i].flow } else { obs[i].time });
    let model = fit_mle(&x2, &residuals, ExponentMode::Fixed2, restarts, seed)
        .map_err(|e| e.in_stage("stage2-bias-mle"))?;

    let kernel = model.kernel();
    let bias = BiasModel {
        standardizer: model.standardizer().clone(),
        lengthscales: [kernel.lengthscales[0], kernel.lengthscales[1]],
    };
    Ok(Stage2Fit {
        bias,
        lambda_b_hat: 1.0 / kernel.variance,
        lambda_f_hat: model.noise_precision(),
        residuals,
    })
}
