//! Posterior summaries: means, KDE-based MAP estimates with bimodality
//! detection, equal-tailed credible intervals and split-chain convergence
//! diagnostics.

use crate::error::{Error, Result};
use crate::stats::{mean, quantile_sorted, std_dev};

use super::mcmc::PosteriorSamples;

/// Summary of one scalar parameter's posterior.
#[derive(Debug, Clone)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    /// Global mode of a Gaussian-kernel density estimate.
    pub map: f64,
    /// All reported modes; more than one entry when `bimodal` is set.
    pub modes: Vec<f64>,
    pub bimodal: bool,
    /// Equal-tailed 90% credible interval.
    pub cri90: (f64, f64),
}

/// Posterior summary across the four sampled quantities.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
    pub rhat_r: f64,
    pub rhat_c: f64,
    pub n_draws: usize,
    pub acceptance: Vec<f64>,
}

impl PosteriorSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Summarize pooled draws; requires at least 1000 of them.
pub fn summarize(samples: &PosteriorSamples) -> Result<PosteriorSummary> {
    if samples.draws.len() < 1000 {
        return Err(Error::InvalidInput(format!(
            "need at least 1000 pooled draws, have {}",
            samples.draws.len()
        )));
    }
    let columns: [(&str, Vec<f64>); 4] = [
        ("R", samples.draws.iter().map(|d| d.r).collect()),
        ("C", samples.draws.iter().map(|d| d.c).collect()),
        ("lambda_b", samples.draws.iter().map(|d| d.lambda_b).collect()),
        ("lambda_f", samples.draws.iter().map(|d| d.lambda_f).collect()),
    ];
    let params = columns
        .into_iter()
        .map(|(name, xs)| summarize_scalar(name, &xs))
        .collect();
    Ok(PosteriorSummary {
        params,
        rhat_r: split_rhat(&samples.chain_sequences(0)),
        rhat_c: split_rhat(&samples.chain_sequences(1)),
        n_draws: samples.draws.len(),
        acceptance: samples.acceptance.clone(),
    })
}

/// Summarize one vector of draws (exposed for report assembly and tests).
pub fn summarize_scalar(name: &str, xs: &[f64]) -> ParamSummary {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        // degenerate: all draws equal
        return ParamSummary {
            name: name.into(),
            mean: lo,
            map: lo,
            modes: vec![lo],
            bimodal: false,
            cri90: (lo, lo),
        };
    }
    let (modes, map, bimodal) = kde_modes(&sorted);
    ParamSummary {
        name: name.into(),
        mean: mean(xs),
        map,
        modes,
        bimodal,
        cri90: (quantile_sorted(&sorted, 0.05), quantile_sorted(&sorted, 0.95)),
    }
}

/// Gaussian KDE with Silverman bandwidth on a 512-point grid. Returns the
/// reported modes, the global mode and the bimodality flag: two modes are
/// reported when the density trough between the top two local maxima drops
/// below 80% of the smaller maximum.
pub fn kde_modes(sorted: &[f64]) -> (Vec<f64>, f64, bool) {
    let n = sorted.len();
    let sd = std_dev(sorted);
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = (0.9 * spread * (n as f64).powf(-0.2)).max(1e-12);

    const GRID: usize = 512;
    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[n - 1] + 3.0 * h;
    let step = (hi - lo) / (GRID - 1) as f64;
    let mut density = vec![0.0_f64; GRID];
    for (g, d) in density.iter_mut().enumerate() {
        let x = lo + g as f64 * step;
        let mut acc = 0.0;
        for &xi in sorted {
            let z = (x - xi) / h;
            acc += (-0.5 * z * z).exp();
        }
        *d = acc; // common normalizing constant dropped
    }

    // local maxima of the gridded density; tail ripples below 5% of the
    // global maximum are not modes
    let peak_floor = 0.05 * density.iter().cloned().fold(f64::MIN, f64::max);
    let mut peaks: Vec<(usize, f64)> = Vec::new();
    for g in 0..GRID {
        let left = if g == 0 { f64::MIN } else { density[g - 1] };
        let right = if g == GRID - 1 { f64::MIN } else { density[g + 1] };
        if density[g] > left && density[g] >= right && density[g] >= peak_floor {
            peaks.push((g, density[g]));
        }
    }
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let global = lo + peaks[0].0 as f64 * step;

    if peaks.len() >= 2 {
        let (g1, d1) = peaks[0];
        let (g2, d2) = peaks[1];
        let (a, b) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
        let trough = density[a..=b].iter().cloned().fold(f64::MAX, f64::min);
        if trough < 0.8 * d2.min(d1) {
            let mut modes = vec![lo + g1 as f64 * step, lo + g2 as f64 * step];
            modes.sort_by(|x, y| x.partial_cmp(y).unwrap());
            return (modes, global, true);
        }
    }
    (vec![global], global, false)
}

/// Split potential-scale-reduction factor over per-chain sequences.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::new();
    for c in chains {
        if c.len() < 4 {
            continue;
        }
        let mid = c.len() / 2;
        halves.push(&c[..mid]);
        halves.push(&c[mid..]);
    }
    if halves.len() < 2 {
        return f64::NAN;
    }
    let len = halves.iter().map(|h| h.len()).min().unwrap();
    let halves: Vec<&[f64]> = halves.iter().map(|h| &h[..len]).collect();
    let m = halves.len() as f64;
    let n = len as f64;
    let seq_means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let grand = mean(&seq_means);
    let b = n / (m - 1.0)
        * seq_means
            .iter()
            .map(|x| (x - grand) * (x - grand))
            .sum::<f64>();
    let w = halves
        .iter()
        .map(|h| {
            let hm = mean(h);
            h.iter().map(|x| (x - hm) * (x - hm)).sum::<f64>() / (n - 1.0)
        })
        .sum::<f64>()
        / m;
    if w <= 0.0 {
        return 1.0;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn degenerate_draws_summarize_to_a_point() {
        let s = summarize_scalar("R", &vec![1.1; 2000]);
        assert_eq!(s.mean, 1.1);
        assert_eq!(s.map, 1.1);
        assert_eq!(s.cri90, (1.1, 1.1));
        assert!(!s.bimodal);
    }

    #[test]
    fn balanced_mixture_is_flagged_bimodal() {
        // two tight Gaussians at the modes reported for a bimodal compliance
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut xs = Vec::with_capacity(4000);
        for i in 0..4000 {
            let center = if i % 2 == 0 { 1.149 } else { 1.386 };
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let z = (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            xs.push(center + 0.04 * z);
        }
        let s = summarize_scalar("C", &xs);
        assert!(s.bimodal, "mixture not flagged");
        assert_eq!(s.modes.len(), 2);
        assert!((s.modes[0] - 1.149).abs() < 0.03, "mode {}", s.modes[0]);
        assert!((s.modes[1] - 1.386).abs() < 0.03, "mode {}", s.modes[1]);
    }

    #[test]
    fn uniform_draws_give_uniform_quantiles() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..20000).map(|_| 0.5 + 2.5 * rng.random::<f64>()).collect();
        let s = summarize_scalar("R", &xs);
        assert!((s.cri90.0 - 0.625).abs() < 0.03, "q05 {}", s.cri90.0);
        assert!((s.cri90.1 - 2.875).abs() < 0.03, "q95 {}", s.cri90.1);
        assert!(!s.bimodal);
    }

    #[test]
    fn unimodal_gaussian_is_not_bimodal_and_map_is_central() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..5000)
            .map(|_| {
                let u1: f64 = rng.random();
                let u2: f64 = rng.random();
                1.3 + 0.2 * (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let s = summarize_scalar("R", &xs);
        assert!(!s.bimodal);
        assert!((s.map - 1.3).abs() < 0.05, "map {}", s.map);
        assert!((s.mean - 1.3).abs() < 0.02);
    }

    #[test]
    fn summaries_invariant_under_draw_permutation() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..3000).map(|_| rng.random::<f64>() * 2.0).collect();
        let mut permuted = xs.clone();
        permuted.reverse();
        permuted.rotate_left(977);
        let a = summarize_scalar("C", &xs);
        let b = summarize_scalar("C", &permuted);
        assert_eq!(a.map.to_bits(), b.map.to_bits());
        assert_eq!(a.cri90.0.to_bits(), b.cri90.0.to_bits());
        assert_eq!(a.cri90.1.to_bits(), b.cri90.1.to_bits());
        // means differ only by float summation order
        assert!((a.mean - b.mean).abs() < 1e-12);
    }

    #[test]
    fn rhat_distinguishes_mixed_from_split_chains() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let well_mixed: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..500).map(|_| rng.random::<f64>()).collect())
            .collect();
        let r = split_rhat(&well_mixed);
        assert!(r < 1.05, "well-mixed rhat {r}");
        let stuck: Vec<Vec<f64>> = (0..4)
            .map(|c| (0..500).map(|_| rng.random::<f64>() + c as f64).collect())
            .collect();
        let r = split_rhat(&stuck);
        assert!(r > 1.5, "separated chains rhat {r}");
    }
}
