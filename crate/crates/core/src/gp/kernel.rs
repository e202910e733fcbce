//! Anisotropic power-exponential covariance.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `K(x, x') = variance * exp(-sum_j |x_j - x'_j|^{d_j} / l_j)` with one
/// lengthscale `l_j > 0` and one smoothness exponent `d_j` in `[1, 2]` per
/// input dimension. The lengthscale divides the powered distance directly
/// (it is not raised to the exponent). With all `d_j = 2` this is the
/// anisotropic squared-exponential kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerExpKernel {
    pub variance: f64,
    pub lengthscales: Vec<f64>,
    pub exponents: Vec<f64>,
}

impl PowerExpKernel {
    pub fn new(variance: f64, lengthscales: Vec<f64>, exponents: Vec<f64>) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "kernel variance must be > 0, got {variance}"
            )));
        }
        if lengthscales.is_empty() || lengthscales.len() != exponents.len() {
            return Err(Error::InvalidInput(
                "kernel needs one lengthscale and one exponent per dimension".into(),
            ));
        }
        for &l in &lengthscales {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "lengthscales must be > 0, got {l}"
                )));
            }
        }
        for &d in &exponents {
            if !(1.0..=2.0).contains(&d) {
                return Err(Error::InvalidInput(format!(
                    "exponents must lie in [1, 2], got {d}"
                )));
            }
        }
        Ok(Self {
            variance,
            lengthscales,
            exponents,
        })
    }

    /// Squared-exponential kernel (`d_j = 2` everywhere).
    pub fn squared_exponential(variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let exps = vec![2.0; lengthscales.len()];
        Self::new(variance, lengthscales, exps)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Covariance between two points.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.dim() || y.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "kernel dimension mismatch: kernel {}, points {} and {}",
                self.dim(),
                x.len(),
                y.len()
            )));
        }
        Ok(self.variance * self.correlation(x, y))
    }

    /// The unit-variance correlation factor.
    pub fn correlation(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.dim() {
            s += powered_distance(x[j] - y[j], self.exponents[j]) / self.lengthscales[j];
        }
        (-s).exp()
    }

    /// Gram matrix of a design given row-major points.
    pub fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.variance;
            for j in 0..i {
                let v = self.variance
                    * self.correlation(x.row(i).transpose().as_slice(), x.row(j).transpose().as_slice());
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Cross-covariance between the rows of `a` (m) and `b` (n): m-by-n.
    pub fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(a.nrows(), b.nrows());
        for i in 0..a.nrows() {
            for j in 0..b.nrows() {
                k[(i, j)] = self.variance
                    * self.correlation(a.row(i).transpose().as_slice(), b.row(j).transpose().as_slice());
            }
        }
        k
    }
}

/// `|delta|^d` with fast paths for the exact endpoint exponents.
#[inline]
pub fn powered_distance(delta: f64, d: f64) -> f64 {
    let a = delta.abs();
    if d == 2.0 {
        a * a
    } else if d == 1.0 {
        a
    } else {
        a.powf(d)
    }
}
