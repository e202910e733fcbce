//! Independent adaptive-step oracle for the Windkessel simulators.
//!
//! A Runge-Kutta-Fehlberg 4(5) integrator, written without reference to the
//! fixed-step production path, integrates the pressure-form equations
//! directly (including the dI/dt term for WK3). The production simulators
//! must match its steady-state waveforms to a relative error below 1e-5.

use wkcal_core::inflow::InflowWaveform;
use wkcal_core::windkessel::{
    steady_wk2, steady_wk3, uniform_grid, Wk2Params, Wk3Params,
};

/// Adaptive RKF45 step integrator for a scalar ODE dy/dt = f(t, y).
fn rkf45<F: Fn(f64, f64) -> f64>(f: &F, t0: f64, t1: f64, y0: f64, tol: f64) -> f64 {
    // Fehlberg coefficients
    const A2: f64 = 1.0 / 4.0;
    const B31: f64 = 3.0 / 32.0;
    const B32: f64 = 9.0 / 32.0;
    const B41: f64 = 1932.0 / 2197.0;
    const B42: f64 = -7200.0 / 2197.0;
    const B43: f64 = 7296.0 / 2197.0;
    const B51: f64 = 439.0 / 216.0;
    const B52: f64 = -8.0;
    const B53: f64 = 3680.0 / 513.0;
    const B54: f64 = -845.0 / 4104.0;
    const B61: f64 = -8.0 / 27.0;
    const B62: f64 = 2.0;
    const B63: f64 = -3544.0 / 2565.0;
    const B64: f64 = 1859.0 / 4104.0;
    const B65: f64 = -11.0 / 40.0;
    // 4th-order solution weights
    const C1: f64 = 25.0 / 216.0;
    const C3: f64 = 1408.0 / 2565.0;
    const C4: f64 = 2197.0 / 4104.0;
    const C5: f64 = -1.0 / 5.0;
    // 5th-order solution weights
    const D1: f64 = 16.0 / 135.0;
    const D3: f64 = 6656.0 / 12825.0;
    const D4: f64 = 28561.0 / 56430.0;
    const D5: f64 = -9.0 / 50.0;
    const D6: f64 = 2.0 / 55.0;

    let mut t = t0;
    let mut y = y0;
    let mut h = (t1 - t0).min(1e-4);
    let h_min = 1e-12;
    let mut steps = 0usize;
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        let k1 = f(t, y);
        let k2 = f(t + A2 * h, y + h * A2 * k1);
        let k3 = f(t + 3.0 / 8.0 * h, y + h * (B31 * k1 + B32 * k2));
        let k4 = f(t + 12.0 / 13.0 * h, y + h * (B41 * k1 + B42 * k2 + B43 * k3));
        let k5 = f(t + h, y + h * (B51 * k1 + B52 * k2 + B53 * k3 + B54 * k4));
        let k6 = f(
            t + 0.5 * h,
            y + h * (B61 * k1 + B62 * k2 + B63 * k3 + B64 * k4 + B65 * k5),
        );
        let y4 = y + h * (C1 * k1 + C3 * k3 + C4 * k4 + C5 * k5);
        let y5 = y + h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6);
        let err = (y5 - y4).abs().max(1e-300);
        let scale = tol * (1.0 + y.abs());
        if err <= scale || h <= h_min {
            t += h;
            y = y5;
        }
        let factor = (0.9 * (scale / err).powf(0.2)).clamp(0.2, 4.0);
        h = (h * factor).max(h_min);
        steps += 1;
        assert!(steps < 20_000_000, "oracle failed to converge");
    }
    y
}

/// Oracle steady-state pressure at the given times: integrate many warmup
/// cycles adaptively, then step from time point to time point.
fn oracle_waveform<F: Fn(f64, f64) -> f64>(
    f: &F,
    period: f64,
    warmup_cycles: usize,
    grid: &[f64],
    p0: f64,
    tol: f64,
) -> Vec<f64> {
    let mut p = p0;
    for _ in 0..warmup_cycles {
        p = rkf45(f, 0.0, period, p, tol);
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut t = 0.0;
    for &tg in grid {
        if tg > t {
            p = rkf45(f, t, tg, p, tol);
            t = tg;
        }
        out.push(p);
    }
    out
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[test]
fn wk2_matches_adaptive_oracle_on_setup1_parameters() {
    let inflow = InflowWaveform::default_half_sine();
    let params = Wk2Params::new(1.1, 0.8).unwrap();
    let grid = uniform_grid(171, 0.005);

    let rhs = |t: f64, p: f64| (inflow.flow_at(t) - p / params.resistance) / params.compliance;
    let oracle = oracle_waveform(&rhs, inflow.period(), 60, &grid, 80.0, 1e-10);

    let sim = steady_wk2(&inflow, &params, &grid, 1e-3).unwrap();
    let err = max_rel_err(sim.values(), &oracle);
    assert!(err < 1e-5, "WK2 vs oracle rel err {err}");
}

#[test]
fn wk3_matches_adaptive_oracle_on_setup1_parameters() {
    // Setup 1: R1 = 0.1, R2 = 1.0, C = 0.8
    let inflow = InflowWaveform::default_half_sine();
    let params = Wk3Params::new(0.1, 1.0, 0.8).unwrap();
    let grid = uniform_grid(171, 0.005);

    // literal pressure form with the inflow derivative term
    let rhs = |t: f64, p: f64| {
        let r1 = params.impedance;
        let r2 = params.resistance;
        let c = params.compliance;
        -p / (r2 * c) + inflow.flow_at(t) * (1.0 + r1 / r2) / c + r1 * inflow.flow_derivative(t)
    };
    let oracle = oracle_waveform(&rhs, inflow.period(), 60, &grid, 80.0, 1e-10);

    let sim = steady_wk3(&inflow, &params, &grid, 1e-3).unwrap();
    let err = max_rel_err(sim.values(), &oracle);
    assert!(err < 1e-5, "WK3 vs oracle rel err {err}");
}

#[test]
fn wk3_oracle_also_validates_warmup_simulation() {
    use wkcal_core::windkessel::{simulate_wk3, SimulateOptions};
    let inflow = InflowWaveform::default_half_sine();
    let params = Wk3Params::new(0.05, 0.9, 0.8).unwrap();
    let grid = uniform_grid(18, 0.05);

    let rhs = |t: f64, p: f64| {
        let r1 = params.impedance;
        let r2 = params.resistance;
        let c = params.compliance;
        -p / (r2 * c) + inflow.flow_at(t) * (1.0 + r1 / r2) / c + r1 * inflow.flow_derivative(t)
    };
    let oracle = oracle_waveform(&rhs, inflow.period(), 60, &grid, 80.0, 1e-10);

    let opts = SimulateOptions {
        n_warmup_cycles: 40,
        ..Default::default()
    };
    let sim = simulate_wk3(&inflow, &params, &grid, &opts).unwrap();
    assert!(sim.converged());
    let err = max_rel_err(sim.values(), &oracle);
    assert!(err < 1e-5, "WK3 warmup vs oracle rel err {err}");
}
