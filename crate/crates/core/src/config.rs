//! Run configuration: JSON files with dotted-path `--set` overrides, strict
//! unknown-key rejection and a stable content hash embedded in every report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inflow::InflowWaveform;
use crate::nls::ModelKind;
use crate::synthetic::{SetupSpec, TruthModel};
use crate::windkessel::{Wk2Params, Wk3Params};

fn default_period() -> f64 {
    crate::inflow::DEFAULT_PERIOD
}
fn default_systole() -> f64 {
    crate::inflow::DEFAULT_SYSTOLE
}
fn default_mean_flow() -> f64 {
    crate::inflow::DEFAULT_MEAN_FLOW
}

/// Parametric inflow description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InflowConfig {
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_systole")]
    pub systole_duration: f64,
    #[serde(default = "default_mean_flow")]
    pub mean_flow: f64,
}

impl Default for InflowConfig {
    fn default() -> Self {
        Self {
            period: default_period(),
            systole_duration: default_systole(),
            mean_flow: default_mean_flow(),
        }
    }
}

impl InflowConfig {
    pub fn build(&self) -> Result<InflowWaveform> {
        InflowWaveform::half_sine_with_mean(self.period, self.systole_duration, self.mean_flow)
    }
}

/// Ground-truth data-generating setup.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SetupConfig {
    pub name: String,
    /// `"wk2"` or `"wk3"`.
    pub model: String,
    /// Characteristic impedance (WK3 only).
    #[serde(default)]
    pub r1: Option<f64>,
    /// Resistance: `R` for WK2, `R2` for WK3.
    pub r: f64,
    pub c: f64,
    pub noise_sd: f64,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default = "default_cycles")]
    pub n_cycles: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub inflow: InflowConfig,
}

fn default_resolution() -> f64 {
    0.05
}
fn default_cycles() -> usize {
    3
}

impl SetupConfig {
    /// A named standard setup (1-4) from the synthetic study.
    pub fn standard(index: usize, seed: u64) -> Result<Self> {
        let spec = SetupSpec::standard(index, seed)?;
        let TruthModel::Wk3(p) = spec.truth else {
            unreachable!("standard setups are WK3")
        };
        Ok(Self {
            name: spec.name,
            model: "wk3".into(),
            r1: Some(p.impedance),
            r: p.resistance,
            c: p.compliance,
            noise_sd: spec.noise_sd,
            resolution: spec.resolution,
            n_cycles: spec.n_cycles,
            seed,
            inflow: InflowConfig::default(),
        })
    }

    pub fn to_spec(&self) -> Result<SetupSpec> {
        let truth = match self.model.as_str() {
            "wk2" => {
                if self.r1.is_some() {
                    return Err(Error::Config("r1 is a WK3 parameter".into()));
                }
                TruthModel::Wk2(Wk2Params::new(self.r, self.c)?)
            }
            "wk3" => TruthModel::Wk3(Wk3Params::new(
                self.r1
                    .ok_or_else(|| Error::Config("WK3 setup needs r1".into()))?,
                self.r,
                self.c,
            )?),
            other => {
                return Err(Error::Config(format!(
                    "unknown model `{other}`, expected wk2 or wk3"
                )))
            }
        };
        let spec = SetupSpec {
            name: self.name.clone(),
            truth,
            inflow: self.inflow.build()?,
            noise_sd: self.noise_sd,
            resolution: self.resolution,
            n_cycles: self.n_cycles,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// `simulate` command configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub setup: SetupConfig,
}

/// Which models the fit and study commands run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Wk2,
    Wk3,
    Both,
}

impl ModelChoice {
    pub fn kinds(&self) -> Vec<ModelKind> {
        match self {
            ModelChoice::Wk2 => vec![ModelKind::Wk2],
            ModelChoice::Wk3 => vec![ModelKind::Wk3],
            ModelChoice::Both => vec![ModelKind::Wk2, ModelKind::Wk3],
        }
    }
}

fn default_n_starts() -> usize {
    16
}

/// `fit` command configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Field-data CSV path.
    pub input: String,
    pub model: ModelChoice,
    #[serde(default)]
    pub per_cycle: bool,
    #[serde(default = "default_n_starts")]
    pub n_starts: usize,
    #[serde(default)]
    pub seed: u64,
    /// Half-sine inflow parameters; omit to derive a table inflow from the
    /// file's first cycle.
    #[serde(default)]
    pub inflow: Option<InflowConfig>,
}

fn default_replicates() -> usize {
    100
}
fn default_study_starts() -> usize {
    6
}

/// `replicate-study` command configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReplicateStudyConfig {
    /// Standard setup indices to include (1-4); ignored when `setups` given.
    #[serde(default)]
    pub standard_setups: Vec<usize>,
    /// Explicit setups, overriding `standard_setups`.
    #[serde(default)]
    pub setups: Vec<SetupConfig>,
    pub model: ModelChoice,
    #[serde(default = "default_replicates")]
    pub n_replicates: usize,
    #[serde(default = "default_study_starts")]
    pub n_starts: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ReplicateStudyConfig {
    pub fn resolve_setups(&self) -> Result<Vec<SetupConfig>> {
        if !self.setups.is_empty() {
            return Ok(self.setups.clone());
        }
        if self.standard_setups.is_empty() {
            return Err(Error::Config(
                "replicate study needs standard_setups or setups".into(),
            ));
        }
        self.standard_setups
            .iter()
            .map(|&i| SetupConfig::standard(i, self.seed))
            .collect()
    }
}

fn default_k_influential() -> usize {
    12
}
fn default_n_rc() -> usize {
    200
}
fn default_chains() -> usize {
    4
}
fn default_iterations() -> usize {
    30_000
}
fn default_target_draws() -> usize {
    7_000
}
fn default_initial_guess() -> [f64; 2] {
    [1.75, 1.75]
}
fn default_emulator_restarts() -> usize {
    2
}

/// `calibrate` command configuration. Exactly one of `input` (a CSV path) or
/// `setup` (inline synthetic generation) must be set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    #[serde(default)]
    pub input: Option<String>,
    #[serde(default)]
    pub setup: Option<SetupConfig>,
    #[serde(default = "default_k_influential")]
    pub k_influential: usize,
    #[serde(default = "default_n_rc")]
    pub n_rc: usize,
    #[serde(default = "default_emulator_restarts")]
    pub emulator_restarts: usize,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_target_draws")]
    pub target_draws: usize,
    #[serde(default)]
    pub prior_only: bool,
    #[serde(default)]
    pub mean_only_emulator: bool,
    #[serde(default = "default_initial_guess")]
    pub initial_guess: [f64; 2],
    /// 0 puts the bands on the distinct observed times.
    #[serde(default)]
    pub band_grid_points: usize,
    #[serde(default)]
    pub seed: u64,
    /// Required with `input` when the file lacks a usable flow profile.
    #[serde(default)]
    pub inflow: Option<InflowConfig>,
}

// ---------------------------------------------------------------------------
// Loading, overrides, hashing
// ---------------------------------------------------------------------------

/// Parse a JSON config of type `T` after applying `--set key=value`
/// overrides. Override paths are dot-separated; values parse as JSON first
/// and fall back to strings.
pub fn load_config<T: serde::de::DeserializeOwned>(json: &str, sets: &[String]) -> Result<T> {
    let mut value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| Error::Config(format!("bad JSON: {e}")))?;
    for item in sets {
        apply_override(&mut value, item)?;
    }
    serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
}

/// Apply one `path.to.key=value` override to a JSON tree.
pub fn apply_override(value: &mut serde_json::Value, item: &str) -> Result<()> {
    let Some((path, raw)) = item.split_once('=') else {
        return Err(Error::Config(format!(
            "override `{item}` is not of the form key=value"
        )));
    };
    if path.is_empty() {
        return Err(Error::Config("empty override path".into()));
    }
    let new: serde_json::Value = match serde_json::from_str(raw) {
        Ok(v) => v,
        Err(_) => serde_json::Value::String(raw.to_string()),
    };
    let mut cursor = value;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("override path `{path}` has an empty segment")));
        }
        let obj = cursor.as_object_mut().ok_or_else(|| {
            Error::Config(format!("override path `{path}` descends into a non-object"))
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), new);
            return Ok(());
        }
        cursor = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last segment")
}

/// Stable hex hash of a config's canonical serialization (FNV-1a over the
/// serde_json encoding of the typed value; field order is fixed by the
/// struct definitions).
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}
