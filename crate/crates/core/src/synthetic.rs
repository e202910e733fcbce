//! Synthetic field data and cycle handling for observed recordings.
//!
//! Datasets are produced by sampling a ground-truth Windkessel model in its
//! periodic steady state and adding i.i.d. Gaussian pressure noise. The noise
//! comes from a counter-based generator keyed by `(seed, cycle, index)`, so a
//! given observation's noise does not depend on how many cycles or replicates
//! are generated, and replicate `r` simply uses `seed + r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::inflow::InflowWaveform;
use crate::windkessel::{steady_wk2, steady_wk3, Wk2Params, Wk3Params};

/// Ground-truth model choice for synthetic data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruthModel {
    Wk2(Wk2Params),
    Wk3(Wk3Params),
}

/// Full description of one synthetic-data setup.
#[derive(Debug, Clone, PartialEq)]
pub struct SetupSpec {
    pub name: String,
    pub truth: TruthModel,
    pub inflow: InflowWaveform,
    /// Pressure noise standard deviation in mmHg.
    pub noise_sd: f64,
    /// Sampling interval in seconds.
    pub resolution: f64,
    pub n_cycles: usize,
    pub seed: u64,
}

impl SetupSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise_sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(Error::InvalidInput(format!(
                "resolution must be > 0, got {}",
                self.resolution
            )));
        }
        if self.n_cycles == 0 {
            return Err(Error::InvalidInput("n_cycles must be >= 1".into()));
        }
        if self.inflow.period() / self.resolution < 5.0 {
            return Err(Error::InvalidInput(
                "resolution too coarse: a cycle needs at least 5 samples".into(),
            ));
        }
        Ok(())
    }

    /// The four synthetic setups studied with the default inflow: WK3 truth
    /// parameters `(R1, R2, C)` of (0.1, 1, 0.8), (0.05, 0.9, 0.8),
    /// (0.1, 1, 0.9) and (0.02, 1.4, 1.3), sd-4 noise, 0.05 s resolution,
    /// three cycles.
    pub fn standard(setup: usize, seed: u64) -> Result<SetupSpec> {
        let (r1, r2, c) = match setup {
            1 => (0.1, 1.0, 0.8),
            2 => (0.05, 0.9, 0.8),
            3 => (0.1, 1.0, 0.9),
            4 => (0.02, 1.4, 1.3),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "unknown standard setup {setup}, expected 1..=4"
                )))
            }
        };
        Ok(SetupSpec {
            name: format!("setup{setup}"),
            truth: TruthModel::Wk3(Wk3Params::new(r1, r2, c)?),
            inflow: InflowWaveform::default_half_sine(),
            noise_sd: 4.0,
            resolution: 0.05,
            n_cycles: 3,
            seed,
        })
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Synthetic { name: String, seed: u64 },
    Recorded { path: String },
}

/// One observation row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub flow: f64,
    pub pressure: f64,
    pub cycle: u32,
}

/// Observed (or synthesized) field data: `(time, flow, pressure)` triples
/// annotated with a cycle id.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldData {
    observations: Vec<Observation>,
    provenance: Provenance,
}

impl FieldData {
    /// Validates the invariants: times strictly increasing within each cycle,
    /// at least 5 observations per cycle, everything finite.
    pub fn new(observations: Vec<Observation>, provenance: Provenance) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::InvalidInput("empty field data".into()));
        }
        let mut counts = std::collections::BTreeMap::<u32, usize>::new();
        let mut last_in_cycle = std::collections::BTreeMap::<u32, f64>::new();
        for obs in &observations {
            if !(obs.time.is_finite() && obs.flow.is_finite() && obs.pressure.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite observation at t={}",
                    obs.time
                )));
            }
            if let Some(prev) = last_in_cycle.get(&obs.cycle) {
                if obs.time <= *prev {
                    return Err(Error::InvalidInput(format!(
                        "times must be strictly increasing within cycle {} ({} then {})",
                        obs.cycle, prev, obs.time
                    )));
                }
            }
            last_in_cycle.insert(obs.cycle, obs.time);
            *counts.entry(obs.cycle).or_insert(0) += 1;
        }
        for (cycle, n) in &counts {
            if *n < 5 {
                return Err(Error::InvalidInput(format!(
                    "cycle {cycle} has only {n} observations; need at least 5"
                )));
            }
        }
        Ok(Self {
            observations,
            provenance,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.time).collect()
    }

    pub fn flows(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.flow).collect()
    }

    pub fn pressures(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.pressure).collect()
    }

    pub fn cycle_ids(&self) -> Vec<u32> {
        self.observations.iter().map(|o| o.cycle).collect()
    }

    /// Sorted list of distinct cycle ids.
    pub fn cycles(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.observations.iter().map(|o| o.cycle).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Observations of a single cycle, in order.
    pub fn cycle(&self, id: u32) -> Vec<Observation> {
        self.observations
            .iter()
            .filter(|o| o.cycle == id)
            .copied()
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Counter-based noise
// ---------------------------------------------------------------------------

/// Standard-normal draw keyed by `(seed, cycle, index)`.
///
/// ChaCha is a counter-mode stream cipher: fixing the stream to the
/// observation key and reading a fixed number of words makes the draw a pure
/// function of the key, independent of evaluation order and platform.
fn keyed_standard_normal(seed: u64, cycle: u32, index: u32) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(((cycle as u64) << 32) | index as u64);
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    // Box-Muller with a fixed word budget per key
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Simulate the setup's truth model to its periodic steady state, sample
/// `n_cycles` consecutive cycles at the requested resolution and add
/// i.i.d. `N(0, noise_sd^2)` pressure noise. Bit-identical for equal specs.
pub fn generate_dataset(setup: &SetupSpec) -> Result<FieldData> {
    generate_with_seed(setup, setup.seed)
}

fn generate_with_seed(setup: &SetupSpec, seed: u64) -> Result<FieldData> {
    setup.validate()?;
    let period = setup.inflow.period();
    let horizon = setup.n_cycles as f64 * period;
    let mut grid = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * setup.resolution;
        if t >= horizon - 1e-12 {
            break;
        }
        grid.push(t);
        k += 1;
    }

    let series = match &setup.truth {
        TruthModel::Wk2(p) => steady_wk2(&setup.inflow, p, &grid, 1e-3)?,
        TruthModel::Wk3(p) => steady_wk3(&setup.inflow, p, &grid, 1e-3)?,
    };

    let mut observations = Vec::with_capacity(grid.len());
    let mut cycle_of_prev = u32::MAX;
    let mut index_in_cycle = 0u32;
    for (&t, &p) in grid.iter().zip(series.values()) {
        let cycle = ((t + 1e-12) / period).floor() as u32;
        if cycle != cycle_of_prev {
            index_in_cycle = 0;
            cycle_of_prev = cycle;
        }
        let noise = if setup.noise_sd > 0.0 {
            setup.noise_sd * keyed_standard_normal(seed, cycle, index_in_cycle)
        } else {
            0.0
        };
        observations.push(Observation {
            time: t,
            flow: setup.inflow.flow_at(t),
            pressure: p + noise,
            cycle,
        });
        index_in_cycle += 1;
    }
    FieldData::new(
        observations,
        Provenance::Synthetic {
            name: setup.name.clone(),
            seed,
        },
    )
}

/// `n` replicate datasets with seeds `seed, seed+1, ..., seed+n-1`: the same
/// noiseless backbone under independent noise realizations.
pub fn replicate_datasets(setup: &SetupSpec, n: usize) -> Result<Vec<FieldData>> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least 1 replicate".into()));
    }
    (0..n)
        .map(|r| generate_with_seed(setup, setup.seed + r as u64))
        .collect()
}

/// Rebase every cycle's time to start at zero so all cycles overlay on one
/// interval. Requires cycle durations within a 1.2 max/min ratio.
pub fn synchronize_cycles(data: &FieldData) -> Result<FieldData> {
    let ids = data.cycles();
    let mut durations = Vec::with_capacity(ids.len());
    let mut rebased = Vec::with_capacity(data.len());
    for &id in &ids {
        let cycle = data.cycle(id);
        let start = cycle[0].time;
        let span = cycle[cycle.len() - 1].time - start;
        // estimate the full duration as span plus one median sample interval
        let mut gaps: Vec<f64> = cycle.windows(2).map(|w| w[1].time - w[0].time).collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median_gap = gaps[gaps.len() / 2];
        durations.push(span + median_gap);
        for obs in cycle {
            rebased.push(Observation {
                time: obs.time - start,
                ..obs
            });
        }
    }
    let max_d = durations.iter().cloned().fold(f64::MIN, f64::max);
    let min_d = durations.iter().cloned().fold(f64::MAX, f64::min);
    if max_d / min_d >= 1.2 {
        return Err(Error::Synchronization(format!(
            "cycle durations too dissimilar: {min_d:.3} s vs {max_d:.3} s"
        )));
    }
    FieldData::new(rebased, data.provenance().clone())
}

/// Assign cycle ids to a recording without annotations: a new cycle starts at
/// each upward crossing of 5% of peak flow.
pub fn detect_cycles(times: &[f64], flows: &[f64]) -> Result<Vec<u32>> {
    if times.len() != flows.len() || times.is_empty() {
        return Err(Error::InvalidInput(
            "cycle detection needs equal-length, non-empty time/flow arrays".into(),
        ));
    }
    let peak = flows.iter().cloned().fold(f64::MIN, f64::max);
    if !(peak.is_finite() && peak > 0.0) {
        // no positive flow at all: a single cycle
        return Ok(vec![0; times.len()]);
    }
    let threshold = 0.05 * peak;
    let mut ids = Vec::with_capacity(times.len());
    let mut cycle = 0u32;
    let mut since_start = 0usize;
    for i in 0..flows.len() {
        // debounced upcrossing: ignore a crossing within the first few
        // samples of the current cycle (recording onset, flow chatter)
        if i > 0 && flows[i - 1] < threshold && flows[i] >= threshold && since_start >= 5 {
            cycle += 1;
            since_start = 0;
        }
        ids.push(cycle);
        since_start += 1;
    }
    Ok(ids)
}
