//! Two- and three-element Windkessel models.
//!
//! WK2 relates aortic pressure and inflow through
//! `I = P/R + C dP/dt`; WK3 adds a characteristic impedance `R1` in series:
//! `dP/dt + P/(R2 C) = I (1 + R1/R2)/C + R1 dI/dt`.
//!
//! Substituting `Q = P - R1 I` turns the WK3 equation into
//! `dQ/dt = (I - Q/R2)/C`, the WK2 form with `R = R2` and no inflow
//! derivative in the stepped right-hand side. Both models therefore share one
//! classical fixed-step RK4 integrator; WK3 pressure is recovered as
//! `P = Q + R1 I`. The inflow kinks at cycle start and valve closure are kept
//! on step boundaries so each step integrates a smooth piece.
//!
//! Because the state equation is linear, the periodic steady state is the
//! fixed point of the affine one-cycle RK4 map `x -> a x + b`:
//! `x* = b / (1 - a)`. [`steady_wk2`]/[`steady_wk3`] use it directly;
//! [`simulate_wk2`]/[`simulate_wk3`] run explicit warmup cycles instead and
//! report convergence of consecutive cycles.

use crate::error::{Error, Result};
use crate::inflow::InflowWaveform;

/// WK2 parameters: vascular resistance `R` (mmHg s/ml) and total arterial
/// compliance `C` (ml/mmHg).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wk2Params {
    pub resistance: f64,
    pub compliance: f64,
}

impl Wk2Params {
    pub fn new(resistance: f64, compliance: f64) -> Result<Self> {
        if !(resistance.is_finite() && resistance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "WK2 resistance must be > 0, got {resistance}"
            )));
        }
        if !(compliance.is_finite() && compliance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "WK2 compliance must be > 0, got {compliance}"
            )));
        }
        Ok(Self {
            resistance,
            compliance,
        })
    }
}

/// WK3 parameters: characteristic impedance `R1 >= 0`, peripheral resistance
/// `R2 > 0` (both mmHg s/ml) and compliance `C > 0` (ml/mmHg).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wk3Params {
    pub impedance: f64,
    pub resistance: f64,
    pub compliance: f64,
}

impl Wk3Params {
    pub fn new(impedance: f64, resistance: f64, compliance: f64) -> Result<Self> {
        if !(impedance.is_finite() && impedance >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "WK3 impedance must be >= 0, got {impedance}"
            )));
        }
        if !(resistance.is_finite() && resistance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "WK3 resistance must be > 0, got {resistance}"
            )));
        }
        if !(compliance.is_finite() && compliance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "WK3 compliance must be > 0, got {compliance}"
            )));
        }
        Ok(Self {
            impedance,
            resistance,
            compliance,
        })
    }

    /// Total vascular resistance `R1 + R2`, the WK3 counterpart of WK2's `R`.
    pub fn total_resistance(&self) -> f64 {
        self.impedance + self.resistance
    }
}

/// Sampled pressure waveform on a strictly increasing time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    converged: bool,
}

impl PressureSeries {
    fn new(times: Vec<f64>, values: Vec<f64>, converged: bool) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite pressure value".into()));
        }
        Ok(Self {
            times,
            values,
            converged,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Whether the warmup (or fixed-point) pass reached a periodic steady
    /// state: consecutive cycles agree to within 1e-6 mmHg.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Integration options shared by both models.
#[derive(Debug, Clone, Copy)]
pub struct SimulateOptions {
    /// Whole cycles integrated before sampling starts.
    pub n_warmup_cycles: usize,
    /// State at the start of warmup, in mmHg.
    pub initial_pressure: f64,
    /// Upper bound on the RK4 step, in seconds.
    pub max_step: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            n_warmup_cycles: 10,
            initial_pressure: 80.0,
            max_step: 1e-3,
        }
    }
}

/// Threshold on consecutive-cycle pressure difference for the converged flag.
const CYCLE_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Shared linear stepper
// ---------------------------------------------------------------------------

/// Smooth branch of the inflow within one cycle. Integration never lets an
/// RK4 stage sample across the valve-closure kink: stages of a systole piece
/// evaluate the systolic branch (left limit at the boundary), stages of a
/// diastole piece see zero flow exactly.
#[derive(Clone, Copy, PartialEq)]
enum Branch {
    Systole,
    Diastole,
}

/// `dx/dt = (I(t) - x/rho)/c`; pressure is `x + r1 I(t)`.
struct LinearWk<'a> {
    inflow: &'a InflowWaveform,
    rho: f64,
    c: f64,
    r1: f64,
}

impl LinearWk<'_> {
    /// Inflow at elapsed time `phi` within a piece of the given branch,
    /// where `phi` is measured from cycle start.
    fn branch_flow(&self, branch: Branch, phi: f64) -> f64 {
        match branch {
            Branch::Diastole => 0.0,
            Branch::Systole => {
                let tau = self.inflow.systole_duration();
                // clamp away endpoint rounding; the systolic branch is
                // continuous so this is the left limit at the kink
                self.inflow.systolic_flow(phi.clamp(0.0, tau))
            }
        }
    }

    fn rk4_step(&self, branch: Branch, phi: f64, h: f64, x: f64) -> f64 {
        let f = |phi: f64, x: f64| (self.branch_flow(branch, phi) - x / self.rho) / self.c;
        let k1 = f(phi, x);
        let k2 = f(phi + 0.5 * h, x + 0.5 * h * k1);
        let k3 = f(phi + 0.5 * h, x + 0.5 * h * k2);
        let k4 = f(phi + h, x + h * k3);
        x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }

    /// Advance within one smooth piece, from elapsed time `from` to `to`
    /// (both relative to cycle start), with uniform RK4 steps <= `max_step`.
    /// When `trace` is given, the state after every step is appended to it.
    fn advance(
        &self,
        branch: Branch,
        from: f64,
        to: f64,
        x: &mut f64,
        max_step: f64,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<()> {
        let span = to - from;
        if span <= 0.0 {
            return Ok(());
        }
        let n = (span / max_step).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for i in 0..n {
            *x = self.rk4_step(branch, from + i as f64 * h, h, *x);
            if !x.is_finite() {
                return Err(Error::IntegrationFailure {
                    time: from + (i + 1) as f64 * h,
                });
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(*x);
            }
        }
        Ok(())
    }

    /// One full cycle, split at valve closure.
    fn advance_cycle(
        &self,
        max_step: f64,
        x: &mut f64,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<()> {
        let period = self.inflow.period();
        let tau = self.inflow.systole_duration();
        self.advance(Branch::Systole, 0.0, tau, x, max_step, trace.as_deref_mut())?;
        self.advance(Branch::Diastole, tau, period, x, max_step, trace)
    }

    /// Homogeneous one-cycle multiplier of the discrete RK4 map. For the
    /// linear scalar equation each step multiplies the state by the degree-4
    /// Taylor factor `r(z) = 1 + z + z^2/2 + z^3/6 + z^4/24`, `z = -h/(rho c)`.
    fn cycle_multiplier(&self, max_step: f64) -> f64 {
        let period = self.inflow.period();
        let tau = self.inflow.systole_duration();
        let mut a = 1.0;
        for (lo, hi) in [(0.0, tau), (tau, period)] {
            let span = hi - lo;
            if span <= 0.0 {
                continue;
            }
            let n = (span / max_step).ceil().max(1.0) as usize;
            let h = span / n as f64;
            let z = -h / (self.rho * self.c);
            let r = 1.0 + z * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)));
            a *= r.powi(n as i32);
        }
        a
    }

    /// Exact fixed point of the discrete one-cycle map `x -> a x + b`.
    fn steady_initial_state(&self, max_step: f64) -> Result<f64> {
        let a = self.cycle_multiplier(max_step);
        if !(a.abs() < 1.0) {
            return Err(Error::InvalidInput(format!(
                "cycle map is not contracting (multiplier {a}); check parameters"
            )));
        }
        let mut b = 0.0;
        self.advance_cycle(max_step, &mut b, None)?;
        Ok(b / (1.0 - a))
    }

    /// Integrate from `t = 0`, state `x0`, recording the pressure
    /// `x + r1 I(t)` at each grid time. Grid times and cycle kinks both become
    /// step boundaries; each piece is stepped on its own smooth branch.
    fn record_on_grid(&self, x0: f64, grid: &[f64], max_step: f64) -> Result<Vec<f64>> {
        let period = self.inflow.period();
        let tau = self.inflow.systole_duration();
        let mut out = Vec::with_capacity(grid.len());
        let mut gi = 0usize;
        let mut x = x0;
        let mut cycle = 0u64;
        while gi < grid.len() {
            let c0 = cycle as f64 * period;
            for (branch, lo, hi) in [
                (Branch::Systole, 0.0, tau),
                (Branch::Diastole, tau, period),
            ] {
                // elapsed-from-cycle-start coordinates within this piece
                let mut phi = lo;
                while gi < grid.len() && grid[gi] - c0 < hi - 1e-12 {
                    let target = grid[gi] - c0;
                    if target > phi + 1e-12 {
                        self.advance(branch, phi, target, &mut x, max_step, None)?;
                        phi = target;
                    }
                    out.push(x + self.r1 * self.inflow.flow_at(grid[gi]));
                    gi += 1;
                }
                if gi >= grid.len() {
                    break;
                }
                self.advance(branch, phi, hi, &mut x, max_step, None)?;
            }
            cycle += 1;
        }
        Ok(out)
    }

    /// Warmup integration over whole cycles; returns the end state and
    /// whether the last two cycles agree to within [`CYCLE_TOL`].
    fn warmup(&self, x0: f64, cycles: usize, max_step: f64) -> Result<(f64, bool)> {
        let mut x = x0;
        let mut prev: Option<Vec<f64>> = None;
        let mut converged = false;
        for _ in 0..cycles {
            let mut cur = Vec::new();
            self.advance_cycle(max_step, &mut x, Some(&mut cur))?;
            if let Some(p) = &prev {
                let max_diff = p
                    .iter()
                    .zip(&cur)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max);
                converged = max_diff < CYCLE_TOL;
            }
            prev = Some(cur);
        }
        Ok((x, converged))
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    let mut prev = f64::NEG_INFINITY;
    for &t in grid {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidInput(format!("bad grid time {t}")));
        }
        if t <= prev {
            return Err(Error::InvalidInput(
                "grid times must be strictly increasing".into(),
            ));
        }
        prev = t;
    }
    Ok(())
}

fn simulate(
    model: LinearWk<'_>,
    grid: &[f64],
    opts: &SimulateOptions,
) -> Result<PressureSeries> {
    validate_grid(grid)?;
    if !(opts.max_step.is_finite() && opts.max_step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "max_step must be > 0, got {}",
            opts.max_step
        )));
    }
    let x0 = opts.initial_pressure - model.r1 * model.inflow.flow_at(0.0);
    let (x, converged) = model.warmup(x0, opts.n_warmup_cycles, opts.max_step)?;
    let values = model.record_on_grid(x, grid, opts.max_step)?;
    PressureSeries::new(grid.to_vec(), values, converged)
}

fn simulate_steady(model: LinearWk<'_>, grid: &[f64], max_step: f64) -> Result<PressureSeries> {
    validate_grid(grid)?;
    let x0 = model.steady_initial_state(max_step)?;
    let values = model.record_on_grid(x0, grid, max_step)?;
    PressureSeries::new(grid.to_vec(), values, true)
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Simulate WK2 pressure on `grid` after `opts.n_warmup_cycles` warmup cycles
/// starting from `opts.initial_pressure`.
pub fn simulate_wk2(
    inflow: &InflowWaveform,
    params: &Wk2Params,
    grid: &[f64],
    opts: &SimulateOptions,
) -> Result<PressureSeries> {
    let model = LinearWk {
        inflow,
        rho: params.resistance,
        c: params.compliance,
        r1: 0.0,
    };
    simulate(model, grid, opts)
}

/// Simulate WK3 pressure on `grid`; see [`simulate_wk2`].
pub fn simulate_wk3(
    inflow: &InflowWaveform,
    params: &Wk3Params,
    grid: &[f64],
    opts: &SimulateOptions,
) -> Result<PressureSeries> {
    let model = LinearWk {
        inflow,
        rho: params.resistance,
        c: params.compliance,
        r1: params.impedance,
    };
    simulate(model, grid, opts)
}

/// WK2 pressure on `grid` in the exact periodic steady state of the discrete
/// RK4 cycle map (no warmup transient).
pub fn steady_wk2(
    inflow: &InflowWaveform,
    params: &Wk2Params,
    grid: &[f64],
    max_step: f64,
) -> Result<PressureSeries> {
    let model = LinearWk {
        inflow,
        rho: params.resistance,
        c: params.compliance,
        r1: 0.0,
    };
    simulate_steady(model, grid, max_step)
}

/// WK3 pressure on `grid` in the exact periodic steady state; see [`steady_wk2`].
pub fn steady_wk3(
    inflow: &InflowWaveform,
    params: &Wk3Params,
    grid: &[f64],
    max_step: f64,
) -> Result<PressureSeries> {
    let model = LinearWk {
        inflow,
        rho: params.resistance,
        c: params.compliance,
        r1: params.impedance,
    };
    simulate_steady(model, grid, max_step)
}

/// Diastolic pressure decay `P0 exp(-dt / (R C))`.
pub fn diastolic_decay(p0: f64, r: f64, c: f64, dt: f64) -> Result<f64> {
    if !(r.is_finite() && r > 0.0 && c.is_finite() && c > 0.0) {
        return Err(Error::InvalidInput(format!(
            "decay requires R > 0 and C > 0, got R={r}, C={c}"
        )));
    }
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "decay requires dt >= 0, got {dt}"
        )));
    }
    Ok(p0 * (-dt / (r * c)).exp())
}

/// Ratio of trapezoidal cycle-mean pressure to cycle-mean flow. Equals `R`
/// for a converged WK2 cycle and `R1 + R2` for WK3.
pub fn mean_ratio_resistance(series: &PressureSeries, flows: &[f64]) -> Result<f64> {
    if series.len() != flows.len() {
        return Err(Error::InvalidInput(format!(
            "pressure series has {} points but {} flows given",
            series.len(),
            flows.len()
        )));
    }
    if series.len() < 2 {
        return Err(Error::DegenerateInput(
            "need at least 2 points for cycle means".into(),
        ));
    }
    let mean_p = trapezoid_mean(series.times(), series.values());
    let mean_i = trapezoid_mean(series.times(), flows);
    if mean_i.abs() < 1e-12 {
        return Err(Error::DegenerateInput("zero mean flow".into()));
    }
    Ok(mean_p / mean_i)
}

fn trapezoid_mean(ts: &[f64], ys: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..ts.len() {
        acc += 0.5 * (ys[i] + ys[i - 1]) * (ts[i] - ts[i - 1]);
    }
    acc / (ts[ts.len() - 1] - ts[0])
}

/// Uniform grid of `n` points starting at 0 with spacing `dt`.
pub fn uniform_grid(n: usize, dt: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * dt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inflow::DEFAULT_PERIOD;

    /// Near-constant inflow: systole covers all but a vanishing slice of the
    /// cycle, so `I(t) = i0` for every time the integrator can resolve.
    fn constant_inflow(i0: f64) -> InflowWaveform {
        let period = DEFAULT_PERIOD;
        let tau = period * (1.0 - 1e-12);
        InflowWaveform::from_table(period, tau, &[(0.0, i0), (period * 0.999, i0)]).unwrap()
    }

    fn zero_inflow(period: f64) -> InflowWaveform {
        InflowWaveform::half_sine(period, period * 0.35, 0.0).unwrap()
    }

    #[test]
    fn constant_inflow_reaches_wk2_equilibrium() {
        let inflow = constant_inflow(90.0);
        let params = Wk2Params::new(1.1, 0.8).unwrap();
        let grid = uniform_grid(18, 0.05);
        let series = steady_wk2(&inflow, &params, &grid, 1e-3).unwrap();
        for (&t, &p) in series.times().iter().zip(series.values()) {
            assert!((p - 99.0).abs() < 1e-6, "t={t}: P={p} != 99");
        }
        let flows: Vec<f64> = grid.iter().map(|&t| inflow.flow_at(t)).collect();
        let ratio = mean_ratio_resistance(&series, &flows).unwrap();
        assert!((ratio - 1.1).abs() < 1e-9, "ratio {ratio}");
    }

    #[test]
    fn constant_inflow_reaches_wk3_equilibrium() {
        let inflow = constant_inflow(90.0);
        let params = Wk3Params::new(0.1, 1.0, 0.8).unwrap();
        let grid = uniform_grid(18, 0.05);
        let series = steady_wk3(&inflow, &params, &grid, 1e-3).unwrap();
        for &p in series.values() {
            assert!((p - 99.0).abs() < 1e-6, "P={p} != (R1+R2)*I0 = 99");
        }
    }

    #[test]
    fn zero_inflow_decays_analytically() {
        // P(ln 2) = P0/2 for R = C = 1; period chosen so the grid spans one cycle
        let t_half = std::f64::consts::LN_2;
        let inflow = zero_inflow(t_half);
        let params = Wk2Params::new(1.0, 1.0).unwrap();
        let opts = SimulateOptions {
            n_warmup_cycles: 0,
            initial_pressure: 100.0,
            max_step: 1e-3,
        };
        let grid = [0.0, 0.25, 0.5, t_half];
        let series = simulate_wk2(&inflow, &params, &grid, &opts).unwrap();
        for (&t, &p) in grid.iter().zip(series.values()) {
            let exact = diastolic_decay(100.0, 1.0, 1.0, t).unwrap();
            assert!(
                ((p - exact) / exact).abs() < 1e-9,
                "t={t}: P={p}, exact={exact}"
            );
        }
        assert!((series.values()[3] - 50.0).abs() < 1e-6);
    }

    #[test]
    fn diastolic_decay_closed_form() {
        assert_eq!(diastolic_decay(100.0, 1.1, 0.8, 0.0).unwrap(), 100.0);
        let half = diastolic_decay(100.0, 1.0, 1.0, std::f64::consts::LN_2).unwrap();
        assert!((half - 50.0).abs() < 1e-12);
        let e_fold = diastolic_decay(100.0, 1.1, 0.8, 0.88).unwrap();
        assert!((e_fold - 100.0 / std::f64::consts::E).abs() < 1e-12);
        assert!(diastolic_decay(100.0, -1.0, 1.0, 0.1).is_err());
        assert!(diastolic_decay(100.0, 1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn wk3_with_zero_impedance_equals_wk2() {
        let inflow = InflowWaveform::default_half_sine();
        let grid = uniform_grid(52, 0.05);
        let wk2 = Wk2Params::new(1.0, 0.8).unwrap();
        let wk3 = Wk3Params::new(0.0, 1.0, 0.8).unwrap();
        let opts = SimulateOptions::default();
        let a = simulate_wk2(&inflow, &wk2, &grid, &opts).unwrap();
        let b = simulate_wk3(&inflow, &wk3, &grid, &opts).unwrap();
        for (pa, pb) in a.values().iter().zip(b.values()) {
            assert!((pa - pb).abs() < 1e-8);
        }
    }

    #[test]
    fn wk3_wk2_gap_grows_with_impedance() {
        let inflow = InflowWaveform::default_half_sine();
        let grid = uniform_grid(171, 0.005);
        let wk2 = steady_wk2(&inflow, &Wk2Params::new(1.0, 0.8).unwrap(), &grid, 1e-3).unwrap();
        let mut last_gap = -1.0;
        for r1 in [0.0, 0.02, 0.05, 0.1, 0.2] {
            let wk3 = steady_wk3(
                &inflow,
                &Wk3Params::new(r1, 1.0, 0.8).unwrap(),
                &grid,
                1e-3,
            )
            .unwrap();
            let gap = wk2
                .values()
                .iter()
                .zip(wk3.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            assert!(
                gap >= last_gap,
                "sup gap not monotone: {gap} after {last_gap} at R1={r1}"
            );
            last_gap = gap;
        }
    }

    #[test]
    fn mean_ratio_matches_r_for_wk2_and_total_for_wk3() {
        let inflow = InflowWaveform::default_half_sine();
        let grid = uniform_grid(851, 1e-3);
        let flows: Vec<f64> = grid.iter().map(|&t| inflow.flow_at(t)).collect();

        let wk2 = steady_wk2(&inflow, &Wk2Params::new(1.1, 0.8).unwrap(), &grid, 1e-3).unwrap();
        let r = mean_ratio_resistance(&wk2, &flows).unwrap();
        assert!((r / 1.1 - 1.0).abs() < 0.01, "WK2 ratio {r}");

        // Setup 4 parameters: ratio should be R1 + R2 = 1.42
        let wk3 = steady_wk3(
            &inflow,
            &Wk3Params::new(0.02, 1.4, 1.3).unwrap(),
            &grid,
            1e-3,
        )
        .unwrap();
        let r = mean_ratio_resistance(&wk3, &flows).unwrap();
        assert!((r / 1.42 - 1.0).abs() < 0.01, "WK3 ratio {r}");
    }

    #[test]
    fn mean_ratio_rejects_zero_flow() {
        let inflow = zero_inflow(0.85);
        let grid = uniform_grid(18, 0.05);
        let series = steady_wk2(&inflow, &Wk2Params::new(1.0, 1.0).unwrap(), &grid, 1e-3).unwrap();
        let flows = vec![0.0; grid.len()];
        assert!(matches!(
            mean_ratio_resistance(&series, &flows),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn steady_state_agrees_with_long_warmup() {
        let inflow = InflowWaveform::default_half_sine();
        let params = Wk2Params::new(1.1, 0.8).unwrap();
        let grid = uniform_grid(18, 0.05);
        let fast = steady_wk2(&inflow, &params, &grid, 1e-3).unwrap();
        let opts = SimulateOptions {
            n_warmup_cycles: 40,
            ..Default::default()
        };
        let slow = simulate_wk2(&inflow, &params, &grid, &opts).unwrap();
        assert!(slow.converged());
        for (a, b) in fast.values().iter().zip(slow.values()) {
            assert!((a - b).abs() < 1e-9, "steady {a} vs warmup {b}");
        }
    }

    #[test]
    fn halving_the_step_changes_little() {
        // fourth-order accuracy: halving the step must move the converged
        // waveform by far less than 1e-4 mmHg
        let inflow = InflowWaveform::default_half_sine();
        let params = Wk3Params::new(0.1, 1.0, 0.8).unwrap();
        let grid = uniform_grid(18, 0.05);
        let coarse = steady_wk3(&inflow, &params, &grid, 1e-3).unwrap();
        let fine = steady_wk3(&inflow, &params, &grid, 5e-4).unwrap();
        let gap = coarse
            .values()
            .iter()
            .zip(fine.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(gap < 1e-4, "sup-norm change {gap} on step halving");
    }

    #[test]
    fn zero_inflow_simulation_tracks_decay_everywhere() {
        let inflow = zero_inflow(1.0);
        let params = Wk2Params::new(1.1, 0.8).unwrap();
        let opts = SimulateOptions {
            n_warmup_cycles: 0,
            initial_pressure: 120.0,
            max_step: 1e-3,
        };
        let grid = uniform_grid(1001, 1e-3);
        let series = simulate_wk2(&inflow, &params, &grid, &opts).unwrap();
        for (&t, &p) in grid.iter().zip(series.values()).skip(1) {
            let exact = diastolic_decay(120.0, 1.1, 0.8, t).unwrap();
            let rel = ((p - exact) / exact).abs();
            assert!(rel < 1e-6, "t={t}: rel err {rel}");
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let inflow = InflowWaveform::default_half_sine();
        let params = Wk2Params::new(1.0, 1.0).unwrap();
        let opts = SimulateOptions::default();
        assert!(simulate_wk2(&inflow, &params, &[], &opts).is_err());
        assert!(simulate_wk2(&inflow, &params, &[0.0, 0.0], &opts).is_err());
        assert!(simulate_wk2(&inflow, &params, &[0.1, 0.05], &opts).is_err());
        assert!(simulate_wk2(&inflow, &params, &[-0.1, 0.05], &opts).is_err());
    }
}
