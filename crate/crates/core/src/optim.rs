//! Derivative-free minimization: box-constrained Nelder-Mead simplex with
//! Latin-hypercube multi-start.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Inclusive per-coordinate box `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidInput("mismatched box bounds".into()));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::InvalidInput(format!("bad bound [{l}, {h}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }
}

/// Result of one Nelder-Mead run.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub n_evals: usize,
}

/// Options for [`nelder_mead`]. The defaults use the standard reflection,
/// expansion, contraction and shrink coefficients.
#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Convergence threshold on the simplex diameter in parameter space.
    pub diameter_tol: f64,
    pub max_iters: usize,
    /// Initial simplex edge, as a fraction of each box width.
    pub init_step_frac: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            diameter_tol: 1e-6,
            max_iters: 4000,
            init_step_frac: 0.05,
        }
    }
}

/// Box-constrained Nelder-Mead: every candidate vertex is clamped into the
/// box coordinate-wise. Converged when the simplex diameter falls below
/// `diameter_tol`.
pub fn nelder_mead<F>(
    objective: &mut F,
    start: &[f64],
    bounds: &Bounds,
    opts: &SimplexOptions,
) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = bounds.dim();
    if start.len() != n {
        return Err(Error::InvalidInput(format!(
            "start has {} coordinates, box has {n}",
            start.len()
        )));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut n_evals = 0usize;
    let mut eval = |x: &[f64], n_evals: &mut usize| -> Result<f64> {
        *n_evals += 1;
        let f = objective(x)?;
        if f.is_nan() {
            return Err(Error::Optimization("objective returned NaN".into()));
        }
        Ok(f)
    };

    // initial simplex: start plus one perturbed vertex per dimension,
    // stepping away from the nearer box face
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut x0 = start.to_vec();
    bounds.clamp(&mut x0);
    simplex.push(x0.clone());
    for i in 0..n {
        let mut v = x0.clone();
        let step = opts.init_step_frac * bounds.width(i);
        v[i] = if v[i] + step <= bounds.hi[i] {
            v[i] + step
        } else {
            v[i] - step
        };
        bounds.clamp(&mut v);
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex
        .iter()
        .map(|v| eval(v, &mut n_evals))
        .collect::<Result<_>>()?;

    let diameter = |s: &[Vec<f64>]| -> f64 {
        let mut d = 0.0_f64;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                let dist = s[i]
                    .iter()
                    .zip(&s[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                d = d.max(dist);
            }
        }
        d
    };

    let mut converged = false;
    for _ in 0..opts.max_iters {
        // order vertices by objective
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap());
        let reorder = |s: &[Vec<f64>], f: &[f64], idx: &[usize]| {
            (
                idx.iter().map(|&i| s[i].clone()).collect::<Vec<_>>(),
                idx.iter().map(|&i| f[i]).collect::<Vec<_>>(),
            )
        };
        let (s, f) = reorder(&simplex, &fvals, &idx);
        simplex = s;
        fvals = f;

        if diameter(&simplex) < opts.diameter_tol {
            converged = true;
            break;
        }

        // centroid of all but the worst vertex
        let mut centroid = vec![0.0; n];
        for v in simplex.iter().take(n) {
            for i in 0..n {
                centroid[i] += v[i] / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let f_best = fvals[0];
        let f_second_worst = fvals[n - 1];
        let f_worst = fvals[n];

        let blend = |from: &[f64], to: &[f64], coeff: f64| -> Vec<f64> {
            let mut v: Vec<f64> = from
                .iter()
                .zip(to)
                .map(|(c, w)| c + coeff * (c - w))
                .collect();
            bounds.clamp(&mut v);
            v
        };

        let reflected = blend(&centroid, &worst, alpha);
        let f_reflected = eval(&reflected, &mut n_evals)?;

        if f_reflected < f_best {
            let expanded = blend(&centroid, &worst, gamma);
            let f_expanded = eval(&expanded, &mut n_evals)?;
            if f_expanded < f_reflected {
                simplex[n] = expanded;
                fvals[n] = f_expanded;
            } else {
                simplex[n] = reflected;
                fvals[n] = f_reflected;
            }
        } else if f_reflected < f_second_worst {
            simplex[n] = reflected;
            fvals[n] = f_reflected;
        } else {
            // contraction: outside if the reflection improved on the worst
            let contracted = if f_reflected < f_worst {
                blend(&centroid, &worst, rho)
            } else {
                blend(&centroid, &worst, -rho)
            };
            let f_contracted = eval(&contracted, &mut n_evals)?;
            if f_contracted < f_worst.min(f_reflected) {
                simplex[n] = contracted;
                fvals[n] = f_contracted;
            } else {
                // shrink toward the best vertex
                let best = simplex[0].clone();
                for v in simplex.iter_mut().skip(1) {
                    for i in 0..n {
                        v[i] = best[i] + sigma * (v[i] - best[i]);
                    }
                    bounds.clamp(v);
                }
                for k in 1..=n {
                    fvals[k] = eval(&simplex[k], &mut n_evals)?;
                }
            }
        }
    }

    let best = fvals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    Ok(SimplexResult {
        x: simplex[best].clone(),
        f: fvals[best],
        converged,
        n_evals,
    })
}

/// Latin hypercube sample of `n` points in the box: each dimension is split
/// into `n` strata, visited in a random permutation with uniform jitter.
pub fn latin_hypercube(n: usize, bounds: &Bounds, seed: u64) -> Vec<Vec<f64>> {
    let dim = bounds.dim();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut strata: Vec<Vec<usize>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut order: Vec<usize> = (0..n).collect();
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        strata.push(order);
    }
    (0..n)
        .map(|i| {
            (0..dim)
                .map(|d| {
                    let u: f64 = rng.random();
                    let cell = strata[d][i] as f64;
                    bounds.lo[d] + (cell + u) / n as f64 * bounds.width(d)
                })
                .collect()
        })
        .collect()
}

/// Multi-start driver: runs Nelder-Mead from each start, returning the best
/// terminal point and per-start results. Starts that error are recorded but
/// skipped; if every start fails the combined diagnostics are returned as an
/// optimization error.
pub fn multi_start<F>(
    objective: &mut F,
    starts: &[Vec<f64>],
    bounds: &Bounds,
    opts: &SimplexOptions,
) -> Result<(SimplexResult, usize, Vec<SimplexResult>)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut results: Vec<SimplexResult> = Vec::with_capacity(starts.len());
    let mut failures: Vec<String> = Vec::new();
    for (k, start) in starts.iter().enumerate() {
        match nelder_mead(objective, start, bounds, opts) {
            Ok(r) => results.push(r),
            Err(e) => failures.push(format!("start {k}: {e}")),
        }
    }
    if results.is_empty() {
        return Err(Error::Optimization(format!(
            "all {} starts failed: {}",
            starts.len(),
            failures.join("; ")
        )));
    }
    let best_idx = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.f.partial_cmp(&b.1.f).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    Ok((results[best_idx].clone(), best_idx, results))
}
