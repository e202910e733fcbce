//! Random-walk Metropolis sampling of the calibration posterior.
//!
//! The sampled state is `(R, C, log lambda_b, log lambda_f)`. Marginalizing
//! the zero-mean discrepancy process gives the likelihood
//! `y ~ N(mu_em(R, C), Sigma_em(R, C) + B / lambda_b + I / lambda_f)`,
//! where `mu_em`/`Sigma_em` are the stage-1 emulator's predictive moments at
//! the field points and `B` is the frozen unit-variance bias correlation.
//! Priors: `R, C ~ Unif(box)`, both precisions exponential with means set to
//! a modest multiple of their stage-2 MLEs. Proposal scales adapt per
//! coordinate during burn-in and are frozen afterwards.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::emulator::{Emulator, FieldProjector};
use super::stage2::BiasModel;

/// Priors for the calibration stage.
#[derive(Debug, Clone)]
pub struct CalibrationPriors {
    /// Uniform box for both `R` and `C`.
    pub box_lo: f64,
    pub box_hi: f64,
    /// Mean of the exponential prior on the bias precision (`5 * MLE`).
    pub lambda_b_mean: f64,
    /// Mean of the exponential prior on the noise precision (`5 * MLE`).
    pub lambda_f_mean: f64,
}

impl CalibrationPriors {
    /// The standard priors: `Unif(0.5, 3)` for `R` and `C`, exponential
    /// priors with mean `5 * MLE` for both precisions.
    pub fn standard(lambda_b_hat: f64, lambda_f_hat: f64) -> Self {
        Self {
            box_lo: 0.5,
            box_hi: 3.0,
            lambda_b_mean: 5.0 * lambda_b_hat,
            lambda_f_mean: 5.0 * lambda_f_hat,
        }
    }
}

/// MCMC run configuration.
#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Replace the likelihood by a constant (prior recovery diagnostics).
    pub prior_only: bool,
    /// Drop the emulator predictive covariance from the likelihood.
    pub mean_only_emulator: bool,
}

impl McmcConfig {
    /// Default run: 4 chains of 30 000 iterations, 50% burn-in, thinned so
    /// the pooled draw count stays at or above `target_draws`.
    pub fn standard(seed: u64) -> Self {
        Self::with_size(4, 30_000, 7_000, seed)
    }

    pub fn with_size(chains: usize, iterations: usize, target_draws: usize, seed: u64) -> Self {
        let burn_in = iterations / 2;
        let kept = chains * (iterations - burn_in);
        let thin = (kept / target_draws.max(1)).max(1);
        Self {
            chains,
            iterations,
            burn_in,
            thin,
            seed,
            prior_only: false,
            mean_only_emulator: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.iterations == 0 {
            return Err(Error::InvalidInput("need chains >= 1, iterations >= 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidInput(format!(
                "burn_in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidInput("thin must be >= 1".into()));
        }
        Ok(())
    }
}

/// One retained draw.
#[derive(Debug, Clone, Copy)]
pub struct Draw {
    pub r: f64,
    pub c: f64,
    pub lambda_b: f64,
    pub lambda_f: f64,
    pub chain: u32,
    pub iter: u64,
}

/// Pooled, thinned posterior draws with chain metadata.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub draws: Vec<Draw>,
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Post-burn-in acceptance rate per chain.
    pub acceptance: Vec<f64>,
    /// Proposals rejected because the covariance failed to factorize.
    pub conditioning_rejections: usize,
}

impl PosteriorSamples {
    /// Thinned post-burn-in sequences per chain, for one parameter
    /// (0 = R, 1 = C).
    pub fn chain_sequences(&self, param: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.chains];
        for d in &self.draws {
            let v = match param {
                0 => d.r,
                1 => d.c,
                2 => d.lambda_b,
                _ => d.lambda_f,
            };
            out[d.chain as usize].push(v);
        }
        out
    }
}

struct Posterior<'a> {
    emulator: &'a Emulator,
    projector: &'a FieldProjector,
    bias_corr: DMatrix<f64>,
    y: DVector<f64>,
    priors: &'a CalibrationPriors,
    prior_only: bool,
    mean_only: bool,
}

enum Eval {
    Ok(f64),
    OutOfSupport,
    Conditioning,
}

impl Posterior<'_> {
    /// Log posterior density of `(r, c, u = ln lambda_b, v = ln lambda_f)`
    /// up to a constant.
    fn log_density(&self, theta: &[f64; 4]) -> Eval {
        let [r, c, u, v] = *theta;
        if r < self.priors.box_lo
            || r > self.priors.box_hi
            || c < self.priors.box_lo
            || c > self.priors.box_hi
        {
            return Eval::OutOfSupport;
        }
        let lambda_b = u.exp();
        let lambda_f = v.exp();
        if !(lambda_b.is_finite() && lambda_f.is_finite() && lambda_b > 0.0 && lambda_f > 0.0) {
            return Eval::OutOfSupport;
        }
        // exponential priors on the precisions, plus the log-scale Jacobians
        let mut lp = -lambda_b / self.priors.lambda_b_mean + u
            - lambda_f / self.priors.lambda_f_mean
            + v;

        if !self.prior_only {
            let m = self.y.len();
            let (mu, cov_em) = self
                .emulator
                .projected_mean_cov(self.projector, r, c, self.mean_only);
            let mut sigma = match cov_em {
                Some(cov) => cov,
                None => DMatrix::zeros(m, m),
            };
            let inv_b = 1.0 / lambda_b;
            let inv_f = 1.0 / lambda_f;
            for i in 0..m {
                for j in 0..m {
                    sigma[(i, j)] += self.bias_corr[(i, j)] * inv_b;
                }
                sigma[(i, i)] += inv_f;
            }
            let Some(chol) = Cholesky::new(sigma) else {
                return Eval::Conditioning;
            };
            let res = &self.y - mu;
            let alpha = chol.solve(&res);
            let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
            let ll = -0.5 * res.dot(&alpha)
                - log_det_half
                - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();
            if !ll.is_finite() {
                return Eval::Conditioning;
            }
            lp += ll;
        }
        Eval::Ok(lp)
    }
}

/// Run the calibration MCMC. `field_y` are the observed pressures at the
/// projector's field points; `field_it` the corresponding `(I, t)` pairs.
pub fn run_mcmc(
    emulator: &Emulator,
    projector: &FieldProjector,
    bias: &BiasModel,
    priors: &CalibrationPriors,
    field_it: &[[f64; 2]],
    field_y: &[f64],
    config: &McmcConfig,
) -> Result<PosteriorSamples> {
    config.validate()?;
    if field_it.len() != field_y.len() || field_y.is_empty() {
        return Err(Error::InvalidInput(
            "field inputs and outputs must be equal-length and non-empty".into(),
        ));
    }
    let posterior = Posterior {
        emulator,
        projector,
        bias_corr: bias.correlation(field_it, field_it),
        y: DVector::from_column_slice(field_y),
        priors,
        prior_only: config.prior_only,
        mean_only: config.mean_only_emulator,
    };

    // overdispersed chain starts across the calibration box
    let span = priors.box_hi - priors.box_lo;
    let corners = [
        (0.2, 0.2),
        (0.8, 0.8),
        (0.2, 0.8),
        (0.8, 0.2),
        (0.5, 0.5),
        (0.35, 0.65),
    ];
    let base_scales = [0.08 * span, 0.08 * span, 0.5, 0.5];

    let mut draws = Vec::new();
    let mut acceptance = Vec::with_capacity(config.chains);
    let mut conditioning_rejections = 0usize;

    for chain in 0..config.chains {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        rng.set_stream(chain as u64 + 1);
        let (fr, fc) = corners[chain % corners.len()];
        let mut theta = [
            priors.box_lo + fr * span,
            priors.box_lo + fc * span,
            (priors.lambda_b_mean / 5.0).ln(),
            (priors.lambda_f_mean / 5.0).ln(),
        ];
        let mut lp = match posterior.log_density(&theta) {
            Eval::Ok(v) => v,
            _ => {
                return Err(Error::Mcmc(format!(
                    "chain {chain} start has invalid posterior density"
                )))
            }
        };

        let mut scales = base_scales;
        let mut batch_accept = 0usize;
        let mut batch_count = 0usize;
        let mut post_accept = 0usize;
        let mut post_count = 0usize;

        for iter in 0..config.iterations {
            let mut proposal = theta;
            for (k, p) in proposal.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *p += scales[k] * z;
            }
            let accept = match posterior.log_density(&proposal) {
                Eval::Ok(lp_new) => {
                    let log_ratio = lp_new - lp;
                    if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                        theta = proposal;
                        lp = lp_new;
                        true
                    } else {
                        false
                    }
                }
                Eval::OutOfSupport => false,
                Eval::Conditioning => {
                    conditioning_rejections += 1;
                    false
                }
            };

            if iter < config.burn_in {
                batch_accept += accept as usize;
                batch_count += 1;
                if batch_count == 50 {
                    // nudge every coordinate scale toward ~30% acceptance;
                    // adaptation stops at burn-in so the kept chain is Markov
                    let rate = batch_accept as f64 / batch_count as f64;
                    let factor = ((rate - 0.3) * 1.0).exp().clamp(0.6, 1.6);
                    for s in scales.iter_mut() {
                        *s = (*s * factor).clamp(1e-5, 2.0 * span.max(1.0));
                    }
                    batch_accept = 0;
                    batch_count = 0;
                }
            } else {
                post_accept += accept as usize;
                post_count += 1;
                if (iter - config.burn_in).is_multiple_of(config.thin) {
                    draws.push(Draw {
                        r: theta[0],
                        c: theta[1],
                        lambda_b: theta[2].exp(),
                        lambda_f: theta[3].exp(),
                        chain: chain as u32,
                        iter: iter as u64,
                    });
                }
            }
        }
        acceptance.push(post_accept as f64 / post_count.max(1) as f64);
    }

    Ok(PosteriorSamples {
        draws,
        chains: config.chains,
        iterations: config.iterations,
        burn_in: config.burn_in,
        thin: config.thin,
        acceptance,
        conditioning_rejections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::emulator::{stage1_train_emulator, EmulatorDesign};
    use crate::calibration::stage2::stage2_init_bias;
    use crate::synthetic::{generate_dataset, synchronize_cycles, SetupSpec};

    #[test]
    fn prior_only_run_recovers_the_uniform_prior() {
        let setup = SetupSpec::standard(2, 7).unwrap();
        let field = synchronize_cycles(&generate_dataset(&setup).unwrap()).unwrap();
        let design = EmulatorDesign::build(&field, &setup.inflow, 8, 10, 0.5, 3.0, 5).unwrap();
        let emulator = stage1_train_emulator(&design, 1, 2).unwrap();
        let stage2 = stage2_init_bias(&emulator, &field, 1.75, 1.75, 1, 2).unwrap();
        let it: Vec<[f64; 2]> = field
            .observations()
            .iter()
            .map(|o| [o.flow, o.time])
            .collect();
        let y: Vec<f64> = field.pressures();
        let proj = emulator.projector(&it);
        let priors = CalibrationPriors::standard(stage2.lambda_b_hat, stage2.lambda_f_hat);
        let mut config = McmcConfig::with_size(4, 10_000, 7_000, 99);
        config.prior_only = true;
        let samples = run_mcmc(&emulator, &proj, &stage2.bias, &priors, &it, &y, &config).unwrap();
        assert!(samples.draws.len() >= 7000, "{} draws", samples.draws.len());

        // KS statistic against Unif(0.5, 3) for both R and C
        for param in 0..2 {
            let mut xs: Vec<f64> = samples
                .draws
                .iter()
                .map(|d| if param == 0 { d.r } else { d.c })
                .collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = xs.len() as f64;
            let mut ks = 0.0_f64;
            for (i, x) in xs.iter().enumerate() {
                let cdf = ((x - 0.5) / 2.5).clamp(0.0, 1.0);
                let hi = (i + 1) as f64 / n;
                let lo = i as f64 / n;
                ks = ks.max((cdf - hi).abs()).max((cdf - lo).abs());
            }
            assert!(ks < 0.05, "param {param}: KS statistic {ks}");
        }
        // draws never leave the support
        for d in &samples.draws {
            assert!(d.r >= 0.5 && d.r <= 3.0 && d.c >= 0.5 && d.c <= 3.0);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut config = McmcConfig::standard(1);
        config.burn_in = config.iterations;
        assert!(config.validate().is_err());
        let mut config = McmcConfig::standard(1);
        config.thin = 0;
        assert!(config.validate().is_err());
    }
}
