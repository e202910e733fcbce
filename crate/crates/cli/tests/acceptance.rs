//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them).
//!
//! Heavy artifacts (replicate studies, full calibrations) are computed once
//! and shared across criteria through `OnceLock` fixtures.

use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use wkcal_core::calibration::{calibrate, CalibrationOptions, CalibrationOutcome, McmcConfig};
use wkcal_core::gp::{GpModel, PowerExpKernel, Standardizer};
use wkcal_core::inflow::InflowWaveform;
use wkcal_core::nls::{fit, replicate_study, ModelKind, ReplicateSummary};
use wkcal_core::synthetic::{generate_dataset, synchronize_cycles, SetupSpec};
use wkcal_core::windkessel::{
    diastolic_decay, simulate_wk2, steady_wk2, steady_wk3, uniform_grid, SimulateOptions,
    Wk2Params, Wk3Params,
};

const BASE_SEED: u64 = 20260809;

fn check(criterion: u32, ok: bool, detail: String) {
    println!(
        "criterion {criterion:02} {}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion:02} failed: {detail}");
}

// ---------------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------------

struct StudyFixture {
    setup: SetupSpec,
    wk2: ReplicateSummary,
    wk3: ReplicateSummary,
}

fn studies() -> &'static (Vec<StudyFixture>, f64) {
    static CELL: OnceLock<(Vec<StudyFixture>, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let fixtures = (1..=3)
            .map(|i| {
                let setup = SetupSpec::standard(i, BASE_SEED + i as u64 * 1000).unwrap();
                let wk2 = replicate_study(&setup, ModelKind::Wk2, 100, 6).unwrap();
                let wk3 = replicate_study(&setup, ModelKind::Wk3, 100, 6).unwrap();
                StudyFixture { setup, wk2, wk3 }
            })
            .collect();
        (fixtures, t0.elapsed().as_secs_f64())
    })
}

fn setup2_data() -> &'static (SetupSpec, wkcal_core::synthetic::FieldData) {
    static CELL: OnceLock<(SetupSpec, wkcal_core::synthetic::FieldData)> = OnceLock::new();
    CELL.get_or_init(|| {
        let setup = SetupSpec::standard(2, BASE_SEED).unwrap();
        let data = generate_dataset(&setup).unwrap();
        (setup, data)
    })
}

fn setup2_calibration() -> &'static (CalibrationOutcome, f64) {
    static CELL: OnceLock<(CalibrationOutcome, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let (setup, data) = setup2_data();
        let t0 = Instant::now();
        let opts = CalibrationOptions::standard(BASE_SEED);
        let outcome = calibrate(data, &setup.inflow, &opts).unwrap();
        (outcome, t0.elapsed().as_secs_f64())
    })
}

/// Setups 1 and 4 calibrations for the uncertainty-ordering criterion; same
/// design size, halved chain length.
fn ordering_calibrations() -> &'static [CalibrationOutcome; 2] {
    static CELL: OnceLock<[CalibrationOutcome; 2]> = OnceLock::new();
    CELL.get_or_init(|| {
        let run = |setup_idx: usize| {
            let setup = SetupSpec::standard(setup_idx, BASE_SEED).unwrap();
            let data = generate_dataset(&setup).unwrap();
            let mut opts = CalibrationOptions::standard(BASE_SEED + setup_idx as u64);
            opts.mcmc = McmcConfig::with_size(4, 15_000, 7_000, BASE_SEED + setup_idx as u64);
            calibrate(&data, &setup.inflow, &opts).unwrap()
        };
        [run(1), run(4)]
    })
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_analytic_decay() {
    let t0 = Instant::now();
    let t_end = 1.0_f64;
    let inflow = InflowWaveform::half_sine(t_end, 0.35, 0.0).unwrap();
    let params = Wk2Params::new(1.1, 0.8).unwrap();
    let opts = SimulateOptions {
        n_warmup_cycles: 0,
        initial_pressure: 100.0,
        max_step: 1e-3,
    };
    let grid = uniform_grid(1001, 1e-3);
    let series = simulate_wk2(&inflow, &params, &grid, &opts).unwrap();
    let mut worst = 0.0_f64;
    for (&t, &p) in grid.iter().zip(series.values()) {
        let exact = diastolic_decay(100.0, 1.1, 0.8, t).unwrap();
        worst = worst.max(((p - exact) / exact).abs());
    }
    let elapsed = t0.elapsed().as_secs_f64();
    check(
        1,
        worst < 1e-6 && elapsed < 1.0,
        format!("zero-inflow decay max rel err {worst:.2e} in {elapsed:.2} s"),
    );
}

#[test]
fn criterion_02_mean_ratio_identities() {
    let t0 = Instant::now();
    let inflow = InflowWaveform::default_half_sine();
    let grid = uniform_grid(851, 1e-3);
    let flows: Vec<f64> = grid.iter().map(|&t| inflow.flow_at(t)).collect();
    let setups = [(0.1, 1.0, 0.8), (0.05, 0.9, 0.8), (0.1, 1.0, 0.9), (0.02, 1.4, 1.3)];
    let mut worst = 0.0_f64;
    for (r1, r2, c) in setups {
        let wk2 = steady_wk2(&inflow, &Wk2Params::new(r1 + r2, c).unwrap(), &grid, 1e-3).unwrap();
        let ratio2 = wkcal_core::windkessel::mean_ratio_resistance(&wk2, &flows).unwrap();
        worst = worst.max((ratio2 / (r1 + r2) - 1.0).abs());

        let wk3 = steady_wk3(&inflow, &Wk3Params::new(r1, r2, c).unwrap(), &grid, 1e-3).unwrap();
        let ratio3 = wkcal_core::windkessel::mean_ratio_resistance(&wk3, &flows).unwrap();
        worst = worst.max((ratio3 / (r1 + r2) - 1.0).abs());
    }
    let elapsed = t0.elapsed().as_secs_f64();
    check(
        2,
        worst < 0.01 && elapsed < 5.0,
        format!("mean-ratio worst rel dev {worst:.2e} across 4 setups in {elapsed:.2} s"),
    );
}

#[test]
fn criterion_03_limit_equivalence() {
    let inflow = InflowWaveform::default_half_sine();
    let grid = uniform_grid(171, 0.005);
    let wk2 = steady_wk2(&inflow, &Wk2Params::new(1.0, 0.8).unwrap(), &grid, 1e-3).unwrap();
    let sup_gap = |r1: f64| -> f64 {
        let wk3 = steady_wk3(&inflow, &Wk3Params::new(r1, 1.0, 0.8).unwrap(), &grid, 1e-3).unwrap();
        wk2.values()
            .iter()
            .zip(wk3.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max)
    };
    let tiny_gap = sup_gap(1e-3);
    let gaps: Vec<f64> = [0.0, 0.02, 0.05, 0.1, 0.2].iter().map(|&r| sup_gap(r)).collect();
    let monotone = gaps.windows(2).all(|w| w[1] >= w[0]);
    check(
        3,
        tiny_gap < 0.5 && monotone,
        format!("gap(R1=1e-3) = {tiny_gap:.3} mmHg; gaps over R1 grid {gaps:?}"),
    );
}

#[test]
fn criterion_04_fit_self_consistency() {
    let inflow = InflowWaveform::default_half_sine();
    let mut setup = SetupSpec::standard(1, 3).unwrap();
    setup.noise_sd = 0.0;
    setup.truth = wkcal_core::synthetic::TruthModel::Wk2(Wk2Params::new(1.1, 0.8).unwrap());
    let wk2_data = generate_dataset(&setup).unwrap();
    let wk2_fit = fit(ModelKind::Wk2, &wk2_data, &inflow, None, 16, 5).unwrap();
    let (r2, c2) = match wk2_fit.params {
        wkcal_core::nls::WkParams::Wk2(p) => (p.resistance, p.compliance),
        _ => unreachable!(),
    };

    let mut setup3 = SetupSpec::standard(1, 3).unwrap();
    setup3.noise_sd = 0.0;
    let wk3_data = generate_dataset(&setup3).unwrap();
    let wk3_fit = fit(ModelKind::Wk3, &wk3_data, &inflow, None, 16, 5).unwrap();
    let (r1_3, r2_3, c_3) = match wk3_fit.params {
        wkcal_core::nls::WkParams::Wk3(p) => (p.impedance, p.resistance, p.compliance),
        _ => unreachable!(),
    };

    let worst = [
        (r2 / 1.1 - 1.0).abs(),
        (c2 / 0.8 - 1.0).abs(),
        (r1_3 - 0.1).abs() / 0.1,
        (r2_3 / 1.0 - 1.0).abs(),
        (c_3 / 0.8 - 1.0).abs(),
    ]
    .into_iter()
    .fold(0.0_f64, f64::max);
    check(
        4,
        worst < 1e-3,
        format!("noiseless self-fit worst rel err {worst:.2e} (16 starts)"),
    );
}

#[test]
fn criterion_05_directional_bias_reproduction() {
    let (fixtures, elapsed) = studies();
    let mut detail = String::new();
    let mut ok = true;
    for f in fixtures {
        let truth_c = match f.setup.truth {
            wkcal_core::synthetic::TruthModel::Wk3(p) => p.compliance,
            _ => unreachable!(),
        };
        let wk2_c = f.wk2.stat("C").unwrap();
        let wk3_c = f.wk3.stat("C").unwrap();
        let wk2_biased_low = wk2_c.mean < truth_c && wk2_c.q95 < truth_c;
        let wk3_covers = wk3_c.q05 <= truth_c && truth_c <= wk3_c.q95;
        ok &= wk2_biased_low && wk3_covers;
        detail.push_str(&format!(
            "{}: WK2 C mean {:.3} CI ({:.3},{:.3}) vs truth {:.1}; WK3 CI ({:.3},{:.3}); ",
            f.setup.name, wk2_c.mean, wk2_c.q05, wk2_c.q95, truth_c, wk3_c.q05, wk3_c.q95
        ));
    }
    ok &= *elapsed < 600.0;
    detail.push_str(&format!("runtime {elapsed:.0} s"));
    check(5, ok, detail);
}

#[test]
fn criterion_06_gp_oracle_equivalence() {
    let mut worst_lml = 0.0_f64;
    let mut worst_pred = 0.0_f64;
    for (seed, n, p) in [(1u64, 10, 2), (2, 30, 3), (3, 50, 2), (4, 50, 4)] {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0);
        let y = DVector::from_fn(n, |i, _| (3.0 * x[(i, 0)]).sin() + 0.1 * rng.random::<f64>());
        let lengthscales: Vec<f64> = (0..p).map(|_| 0.2 + rng.random::<f64>()).collect();
        let exponents: Vec<f64> = (0..p).map(|_| 1.0 + rng.random::<f64>()).collect();
        let kernel = PowerExpKernel::new(1.0 + rng.random::<f64>(), lengthscales, exponents).unwrap();
        let lambda = 10.0_f64.powf(1.0 + rng.random::<f64>());
        let model = GpModel::train(&x, &y, kernel.clone(), lambda).unwrap();

        // naive dense route: explicit inverse and LU determinant
        let x_std = Standardizer::fit(&x).apply(&x);
        let mut m = kernel.gram(&x_std);
        for i in 0..n {
            m[(i, i)] += model.effective_noise_variance();
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let yc = y.map(|v| v - y_mean);
        let log_det = m.clone().lu().determinant().ln();
        let m_inv = m.try_inverse().unwrap();
        let quad = (yc.transpose() * &m_inv * &yc)[(0, 0)];
        let lml_naive =
            -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        let rel = ((model.log_marginal_likelihood() - lml_naive) / lml_naive.abs()).abs();
        worst_lml = worst_lml.max(rel);

        let xstar = DMatrix::from_fn(6, p, |_, _| rng.random::<f64>() * 2.0);
        let (mean, var) = model.predict(&xstar).unwrap();
        let kstar = kernel.cross(&x_std, &Standardizer::fit(&x).apply(&xstar));
        let mean_naive = kstar.transpose() * &m_inv * &yc;
        let reduction = kstar.transpose() * &m_inv * &kstar;
        for i in 0..6 {
            let m_n = mean_naive[i] + y_mean;
            let v_n = kernel.variance - reduction[(i, i)];
            worst_pred = worst_pred.max((mean[i] - m_n).abs() / m_n.abs().max(1.0));
            worst_pred = worst_pred.max((var[i] - v_n).abs() / v_n.abs().max(1e-10));
        }
    }

    // noise-free interpolation at training points
    let x = DMatrix::from_column_slice(5, 1, &[0.0, 0.2, 0.45, 0.7, 1.0]);
    let y = DVector::from_iterator(5, x.column(0).iter().map(|v: &f64| (2.0 * v).sin()));
    let kernel = PowerExpKernel::squared_exponential(2.0, vec![0.5]).unwrap();
    let model = GpModel::train(&x, &y, kernel, 1e12).unwrap();
    let (mean, var) = model.predict(&x).unwrap();
    let interp_ok = (0..5).all(|i| (mean[i] - y[i]).abs() < 1e-6 && var[i] < 1e-7);

    check(
        6,
        worst_lml < 1e-8 && worst_pred < 1e-8 && interp_ok,
        format!(
            "lml worst rel {worst_lml:.2e}, prediction worst rel {worst_pred:.2e}, interpolation {interp_ok}"
        ),
    );
}

#[test]
fn criterion_07_prior_recovery() {
    let (setup, data) = setup2_data();
    let mut opts = CalibrationOptions::standard(BASE_SEED + 7);
    opts.n_rc = 60; // emulator is irrelevant with the likelihood disabled
    opts.emulator_restarts = 1;
    opts.mcmc = McmcConfig::standard(BASE_SEED + 7);
    opts.mcmc.prior_only = true;
    let outcome = calibrate(data, &setup.inflow, &opts).unwrap();
    let n_draws = outcome.samples.draws.len();

    let mut worstoverall = 0.0_f64;
    for param in 0..2 {
        let mut xs: Vec<f64> = outcome
            .samples
            .draws
            .iter()
            .map(|d| if param == 0 { d.r } else { d.c })
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let mut ks = 0.0_f64;
        for (i, x) in xs.iter().enumerate() {
            let cdf = ((x - 0.5) / 2.5).clamp(0.0, 1.0);
            ks = ks
                .max((cdf - (i + 1) as f64 / n).abs())
                .max((cdf - i as f64 / n).abs());
        }
        worstoverall = worstoverall.max(ks);
    }
    check(
        7,
        n_draws >= 7000 && worstoverall < 0.05,
        format!("{n_draws} pooled draws, worst KS statistic vs Unif(0.5,3) = {worstoverall:.4}"),
    );
}

#[test]
fn criterion_08_calibration_truth_containment() {
    let (outcome, elapsed) = setup2_calibration();
    let (setup, data) = setup2_data();
    let r = outcome.summary.param("R").unwrap();
    let c = outcome.summary.param("C").unwrap();
    let contains =
        r.cri90.0 <= 0.95 && 0.95 <= r.cri90.1 && c.cri90.0 <= 0.8 && 0.8 <= c.cri90.1;

    // the posterior mean must beat the plain WK2 fit on compliance
    let sync = synchronize_cycles(data).unwrap();
    let wk2_fit = fit(ModelKind::Wk2, &sync, &setup.inflow, None, 16, BASE_SEED).unwrap();
    let wk2_c = wk2_fit.params.compliance();
    let bias_corrected = (c.mean - 0.8).abs() < (wk2_c - 0.8).abs();

    let mixed = outcome.summary.rhat_r < 1.05 && outcome.summary.rhat_c < 1.05;
    let fast = *elapsed < 900.0;
    check(
        8,
        contains && bias_corrected && mixed && fast,
        format!(
            "R CrI ({:.3},{:.3}) ni 0.95; C CrI ({:.3},{:.3}) ni 0.8; posterior-mean C {:.3} vs WK2 fit {:.3}; Rhat ({:.3},{:.3}); {:.0} s",
            r.cri90.0, r.cri90.1, c.cri90.0, c.cri90.1, c.mean, wk2_c,
            outcome.summary.rhat_r, outcome.summary.rhat_c, elapsed
        ),
    );
}

#[test]
fn criterion_09_uncertainty_ordering() {
    let [setup1, setup4] = ordering_calibrations();
    let r1 = setup1.summary.param("R").unwrap();
    let r4 = setup4.summary.param("R").unwrap();
    let width1 = r1.cri90.1 - r1.cri90.0;
    let width4 = r4.cri90.1 - r4.cri90.0;

    let pure1 = setup1.bands[1].mean_width();
    let pure4 = setup4.bands[1].mean_width();
    check(
        9,
        width4 < width1 && pure4 < pure1,
        format!(
            "R CrI width setup4 {width4:.3} < setup1 {width1:.3}; pure-model band width setup4 {pure4:.2} < setup1 {pure1:.2}"
        ),
    );
}

#[test]
fn criterion_10_predictive_coverage_and_additivity() {
    let (outcome, _) = setup2_calibration();
    let (setup, _) = setup2_data();
    let bc = &outcome.bands[0];

    let coverage_of = |seed_offset: u64| -> (usize, usize) {
        let mut fresh_setup = setup.clone();
        fresh_setup.seed = BASE_SEED + seed_offset;
        let fresh = synchronize_cycles(&generate_dataset(&fresh_setup).unwrap()).unwrap();
        let mut covered = 0usize;
        let mut total = 0usize;
        for obs in fresh.observations() {
            let Some(idx) = bc.times.iter().position(|&t| (t - obs.time).abs() < 1e-6) else {
                continue;
            };
            total += 1;
            if bc.lower[idx] <= obs.pressure && obs.pressure <= bc.upper[idx] {
                covered += 1;
            }
        }
        (covered, total)
    };

    // fresh noisy replicate from the same setup
    let (covered, total) = coverage_of(1002);
    let coverage = covered as f64 / total as f64;
    // supplementary: mean coverage across 20 fresh replicates
    let mut acc = 0.0;
    for offset in 1000..1020 {
        let (c, t) = coverage_of(offset);
        acc += c as f64 / t as f64;
    }
    let mean_coverage = acc / 20.0;

    let [bc_band, pure, bias] = &outcome.bands;
    let mut worst_gap = 0.0_f64;
    for i in 0..bc_band.len() {
        worst_gap = worst_gap.max((bc_band.mean[i] - pure.mean[i] - bias.mean[i]).abs());
    }
    check(
        10,
        coverage >= 0.85 && total == 51 && mean_coverage >= 0.85 && worst_gap < 1e-6,
        format!(
            "bias-corrected band covers {covered}/{total} = {coverage:.3} of a fresh replicate \
             (mean over 20 replicates {mean_coverage:.3}); additivity gap {worst_gap:.2e} mmHg"
        ),
    );
}

#[test]
fn criterion_11_reproducibility() {
    let base = std::env::temp_dir().join(format!("wkcal-acc-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    std::fs::create_dir_all(&base).unwrap();
    let config_path = base.join("simulate.json");
    std::fs::write(
        &config_path,
        r#"{"setup": {"name": "setup1", "model": "wk3", "r1": 0.1, "r": 1.0, "c": 0.8,
            "noise_sd": 4.0, "resolution": 0.05, "n_cycles": 3, "seed": 424242}}"#,
    )
    .unwrap();
    let cal_path = base.join("calibrate.json");
    std::fs::write(
        &cal_path,
        format!(
            r#"{{"input": "{}", "n_rc": 30, "k_influential": 12, "emulator_restarts": 1,
                "chains": 2, "iterations": 1500, "target_draws": 1200, "seed": 77}}"#,
            base.join("a/field.csv").display()
        ),
    )
    .unwrap();

    for sub in ["a", "b"] {
        let dir = base.join(sub);
        wkcal_cli::run_cli([
            "wkcal",
            "--out-dir",
            dir.to_str().unwrap(),
            "simulate",
            "--config",
            config_path.to_str().unwrap(),
        ])
        .unwrap();
    }
    let field_a = std::fs::read(base.join("a/field.csv")).unwrap();
    let field_b = std::fs::read(base.join("b/field.csv")).unwrap();

    for sub in ["ca", "cb"] {
        let dir = base.join(sub);
        wkcal_cli::run_cli([
            "wkcal",
            "--out-dir",
            dir.to_str().unwrap(),
            "calibrate",
            "--config",
            cal_path.to_str().unwrap(),
        ])
        .unwrap();
    }
    let mut identical = field_a == field_b;
    for name in [
        "calibrate_report.json",
        "samples.csv",
        "band_bias_corrected.csv",
        "band_pure_model.csv",
        "band_bias.csv",
    ] {
        identical &= std::fs::read(base.join("ca").join(name)).unwrap()
            == std::fs::read(base.join("cb").join(name)).unwrap();
    }
    check(
        11,
        identical,
        "repeated simulate and calibrate runs are byte-identical".into(),
    );
}
