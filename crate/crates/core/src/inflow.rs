//! Periodic aortic inflow waveforms.
//!
//! The inflow drives both Windkessel models. Two shapes are supported: a
//! parametric half-sine ejection pulse (analytic derivative) and a lookup
//! table of measured samples (derivative by centered finite differences).
//! Flow is identically zero during diastole, i.e. on
//! `[systole_duration, period)`: the aortic valve is closed.

use crate::error::{Error, Result};

/// Default cardiac cycle length in seconds.
pub const DEFAULT_PERIOD: f64 = 0.85;
/// Default ejection (systole) duration in seconds.
pub const DEFAULT_SYSTOLE: f64 = 0.3;
/// Default cycle-mean inflow in ml/s.
pub const DEFAULT_MEAN_FLOW: f64 = 90.0;

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// `I(t) = amplitude * sin(pi t / systole_duration)` on `[0, systole_duration)`.
    HalfSine { amplitude: f64 },
    /// Piecewise-linear interpolation of `(time, flow)` samples, with node
    /// derivatives from centered differences (one-sided at the ends).
    Table {
        times: Vec<f64>,
        flows: Vec<f64>,
        slopes: Vec<f64>,
    },
}

/// Periodic inflow `I(t)` with period `period` and ejection window
/// `[0, systole_duration)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InflowWaveform {
    period: f64,
    systole_duration: f64,
    shape: Shape,
}

impl InflowWaveform {
    /// Half-sine pulse with the given peak amplitude (ml/s).
    pub fn half_sine(period: f64, systole_duration: f64, amplitude: f64) -> Result<Self> {
        check_timing(period, systole_duration)?;
        if !amplitude.is_finite() || amplitude < 0.0 {
            return Err(Error::InvalidInput(format!(
                "inflow amplitude must be finite and >= 0, got {amplitude}"
            )));
        }
        Ok(Self {
            period,
            systole_duration,
            shape: Shape::HalfSine { amplitude },
        })
    }

    /// Half-sine pulse scaled so the cycle-mean flow equals `mean_flow` (ml/s).
    ///
    /// The cycle mean of `A sin(pi t / tau)` over one period `T` is
    /// `A 2 tau / (pi T)`, so `A = mean_flow * pi * T / (2 tau)`.
    pub fn half_sine_with_mean(period: f64, systole_duration: f64, mean_flow: f64) -> Result<Self> {
        let amplitude = mean_flow * std::f64::consts::PI * period / (2.0 * systole_duration);
        Self::half_sine(period, systole_duration, amplitude)
    }

    /// The default waveform: 0.85 s cycle, 0.3 s systole, 90 ml/s mean flow.
    pub fn default_half_sine() -> Self {
        Self::half_sine_with_mean(DEFAULT_PERIOD, DEFAULT_SYSTOLE, DEFAULT_MEAN_FLOW)
            .expect("default inflow parameters are valid")
    }

    /// Inflow from measured `(time, flow)` samples over one cycle.
    ///
    /// Sample times must be strictly increasing within `[0, period)`. Flow is
    /// interpolated linearly between samples and held at the boundary sample
    /// values outside their range, then forced to zero on
    /// `[systole_duration, period)`.
    pub fn from_table(period: f64, systole_duration: f64, samples: &[(f64, f64)]) -> Result<Self> {
        check_timing(period, systole_duration)?;
        if samples.len() < 2 {
            return Err(Error::InvalidInput(
                "table inflow needs at least 2 samples".into(),
            ));
        }
        let mut times = Vec::with_capacity(samples.len());
        let mut flows = Vec::with_capacity(samples.len());
        for &(t, q) in samples {
            if !t.is_finite() || !q.is_finite() {
                return Err(Error::InvalidInput("non-finite inflow sample".into()));
            }
            if t < 0.0 || t >= period {
                return Err(Error::InvalidInput(format!(
                    "inflow sample time {t} outside [0, {period})"
                )));
            }
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(Error::InvalidInput(format!(
                        "inflow sample times must be strictly increasing ({prev} then {t})"
                    )));
                }
            }
            times.push(t);
            flows.push(q);
        }
        let slopes = centered_slopes(&times, &flows);
        Ok(Self {
            period,
            systole_duration,
            shape: Shape::Table {
                times,
                flows,
                slopes,
            },
        })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn systole_duration(&self) -> f64 {
        self.systole_duration
    }

    /// Phase of `t` within the cycle, in `[0, period)`.
    fn phase(&self, t: f64) -> f64 {
        let p = t - (t / self.period).floor() * self.period;
        // floor rounding can land a hair outside the cycle
        if p >= self.period || p < 0.0 {
            0.0
        } else {
            p
        }
    }

    /// Inflow `I(t)` in ml/s; periodic in `t`, zero during diastole.
    pub fn flow_at(&self, t: f64) -> f64 {
        let tau = self.phase(t);
        if tau >= self.systole_duration {
            return 0.0;
        }
        self.systolic_flow(tau)
    }

    /// Systolic-branch flow at elapsed time `phi` from cycle start, without
    /// the diastole zeroing. Integrators use this to take the left limit at
    /// the valve-closure boundary; `phi` must lie in `[0, systole_duration]`.
    pub(crate) fn systolic_flow(&self, phi: f64) -> f64 {
        match &self.shape {
            Shape::HalfSine { amplitude } => {
                amplitude * (std::f64::consts::PI * phi / self.systole_duration).sin()
            }
            Shape::Table { times, flows, .. } => interp_clamped(times, flows, phi),
        }
    }

    /// Time derivative `dI/dt` in ml/s^2: analytic for the half-sine,
    /// centered finite differences interpolated linearly in table mode.
    pub fn flow_derivative(&self, t: f64) -> f64 {
        let tau = self.phase(t);
        if tau >= self.systole_duration {
            return 0.0;
        }
        match &self.shape {
            Shape::HalfSine { amplitude } => {
                let omega = std::f64::consts::PI / self.systole_duration;
                amplitude * omega * (omega * tau).cos()
            }
            Shape::Table { times, slopes, .. } => interp_clamped(times, slopes, tau),
        }
    }

    /// Build a table inflow from one recorded cycle. The period is the
    /// sample span plus one median interval, systole ends at the first
    /// (near-)zero flow after the peak, and the samples become the lookup
    /// table after rebasing to cycle-relative time.
    pub fn from_recorded_cycle(times: &[f64], flows: &[f64]) -> Result<Self> {
        if times.len() < 5 || times.len() != flows.len() {
            return Err(Error::InvalidInput(
                "recorded cycle needs at least 5 equal-length samples".into(),
            ));
        }
        let t0 = times[0];
        let rel: Vec<f64> = times.iter().map(|t| t - t0).collect();
        let mut gaps: Vec<f64> = rel.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median_gap = gaps[gaps.len() / 2];
        if !(median_gap > 0.0) {
            return Err(Error::InvalidInput("cycle times are not increasing".into()));
        }
        let period = rel[rel.len() - 1] + median_gap;

        let peak = flows.iter().cloned().fold(f64::MIN, f64::max);
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::InvalidInput(
                "recorded cycle has no positive flow".into(),
            ));
        }
        let peak_idx = flows.iter().position(|&f| f == peak).unwrap();
        let systole_end = rel
            .iter()
            .zip(flows)
            .skip(peak_idx)
            .find(|(_, &f)| f <= 1e-3 * peak)
            .map(|(&t, _)| t)
            .unwrap_or(0.4 * period)
            .clamp(median_gap, period * (1.0 - 1e-9));
        let samples: Vec<(f64, f64)> = rel
            .iter()
            .zip(flows)
            .filter(|(&t, _)| t < period)
            .map(|(&t, &f)| (t, f.max(0.0)))
            .collect();
        Self::from_table(period, systole_end, &samples)
    }

    /// Cycle-mean flow by trapezoidal quadrature on a 1 ms grid.
    pub fn mean_flow(&self) -> f64 {
        let n = (self.period / 1e-3).ceil() as usize;
        let h = self.period / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.flow_at(i as f64 * h);
            let b = self.flow_at((i + 1) as f64 * h);
            acc += 0.5 * (a + b) * h;
        }
        acc / self.period
    }
}

fn check_timing(period: f64, systole_duration: f64) -> Result<()> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::InvalidInput(format!(
            "inflow period must be positive, got {period}"
        )));
    }
    if !(systole_duration.is_finite() && systole_duration > 0.0 && systole_duration < period) {
        return Err(Error::InvalidInput(format!(
            "systole duration must lie in (0, period), got {systole_duration} for period {period}"
        )));
    }
    Ok(())
}

/// Node derivatives by centered differences, one-sided at the endpoints.
fn centered_slopes(times: &[f64], flows: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut s = vec![0.0; n];
    s[0] = (flows[1] - flows[0]) / (times[1] - times[0]);
    s[n - 1] = (flows[n - 1] - flows[n - 2]) / (times[n - 1] - times[n - 2]);
    for i in 1..n - 1 {
        s[i] = (flows[i + 1] - flows[i - 1]) / (times[i + 1] - times[i - 1]);
    }
    s
}

/// Linear interpolation with clamped ends.
fn interp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= *xs.last().unwrap() {
        return *ys.last().unwrap();
    }
    // binary search for the bracketing segment
    let mut lo = 0usize;
    let mut hi = xs.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if xs[mid] <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + w * (ys[hi] - ys[lo])
}
