//! Command-line front end: configuration loading, data I/O, study
//! orchestration and report emission.
//!
//! The binary is a thin wrapper over [`run_cli`], which integration tests
//! drive in-process.

pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use wkcal_core::calibration::{calibrate, CalibrationOptions, McmcConfig};
use wkcal_core::config::{
    apply_override, config_hash, load_config, CalibrateConfig, FitConfig, ReplicateStudyConfig,
    SimulateConfig,
};
use wkcal_core::error::Error;
use wkcal_core::inflow::InflowWaveform;
use wkcal_core::io;
use wkcal_core::nls::{fit, param_names, replicate_study, ModelKind, WkParams};
use wkcal_core::synthetic::{generate_dataset, synchronize_cycles, FieldData, TruthModel};
use wkcal_core::windkessel::{steady_wk2, steady_wk3};

use report::{
    AnyReport, CalibrateReport, FitReport, FitRow, ParamRow, ReportMeta, StudyReport, StudyRow,
};

/// Arterial Windkessel toolkit: simulation, fitting and Bayesian calibration.
#[derive(Debug, Parser)]
#[command(name = "wkcal", version)]
pub struct Cli {
    /// Override every config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 forces serial execution.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory for generated files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Dotted-path overrides, e.g. `--set setup.noise_sd=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a noisy synthetic dataset and its noiseless reference.
    Simulate(ConfigArgs),
    /// Fit WK2/WK3 parameters to a field-data CSV by least squares.
    Fit(ConfigArgs),
    /// Replicate study: fits across many noise realizations.
    ReplicateStudy(ConfigArgs),
    /// Two-stage Bayesian calibration with model discrepancy.
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Replace the likelihood with a constant (prior recovery check).
        #[arg(long)]
        prior_only: bool,
    },
    /// Render a JSON report; verifies the config hash when given the config.
    Report {
        /// Report JSON file.
        #[arg(long)]
        input: PathBuf,
        /// Config to verify the report's hash against.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
}

/// Entry point used by both `main` and the integration tests.
pub fn run_cli<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()?;
    fs::create_dir_all(&cli.out_dir)?;
    pool.install(|| dispatch(&cli))
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Simulate(cfg) => cmd_simulate(cli, cfg),
        Command::Fit(cfg) => cmd_fit(cli, cfg),
        Command::ReplicateStudy(cfg) => cmd_replicate_study(cli, cfg),
        Command::Calibrate { config, prior_only } => cmd_calibrate(cli, config, *prior_only),
        Command::Report {
            input,
            config,
            sets,
        } => cmd_report(input, config.as_deref(), sets),
    }
}

fn read_config_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))
}

/// Apply the global `--seed` to the config JSON before parsing: `simulate`
/// seeds live under `setup.seed`, every other command has a top-level seed.
fn seed_overrides(cli: &Cli, command: &Command) -> Vec<String> {
    let Some(seed) = cli.seed else {
        return Vec::new();
    };
    match command {
        Command::Simulate(_) => vec![format!("setup.seed={seed}")],
        _ => vec![format!("seed={seed}"), format!("setup.seed={seed}")],
    }
}

fn out_path(cli: &Cli, name: &str) -> PathBuf {
    cli.out_dir.join(name)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(cli: &Cli, args: &ConfigArgs) -> anyhow::Result<()> {
    let mut sets = args.sets.clone();
    sets.extend(seed_overrides(cli, &cli.command));
    let config: SimulateConfig = load_config(&read_config_text(&args.config)?, &sets)?;
    let spec = config.setup.to_spec()?;

    let noisy = generate_dataset(&spec)?;
    let mut clean_spec = spec.clone();
    clean_spec.noise_sd = 0.0;
    let reference = generate_dataset(&clean_spec)?;

    let field_path = out_path(cli, "field.csv");
    let reference_path = out_path(cli, "reference.csv");
    io::write_field_csv(fs::File::create(&field_path)?, &noisy)?;
    io::write_field_csv(fs::File::create(&reference_path)?, &reference)?;
    eprintln!(
        "simulate[{}]: wrote {} ({} rows) and {}",
        config_hash(&config),
        field_path.display(),
        noisy.len(),
        reference_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

/// Inflow for a dataset: the configured half-sine, or a lookup table derived
/// from the file's first observed cycle.
fn resolve_inflow(
    configured: &Option<wkcal_core::config::InflowConfig>,
    data: &FieldData,
) -> anyhow::Result<InflowWaveform> {
    if let Some(cfg) = configured {
        return Ok(cfg.build()?);
    }
    let first = data.cycle(data.cycles()[0]);
    let times: Vec<f64> = first.iter().map(|o| o.time).collect();
    let flows: Vec<f64> = first.iter().map(|o| o.flow).collect();
    Ok(InflowWaveform::from_recorded_cycle(&times, &flows)?)
}

fn fit_row(model: ModelKind, scope: &str, result: &wkcal_core::nls::FitResult) -> FitRow {
    let values: Vec<f64> = match result.params {
        WkParams::Wk2(p) => vec![p.resistance, p.compliance],
        WkParams::Wk3(p) => vec![p.impedance, p.resistance, p.compliance],
    };
    FitRow {
        model: match model {
            ModelKind::Wk2 => "wk2".into(),
            ModelKind::Wk3 => "wk3".into(),
        },
        scope: scope.to_string(),
        params: param_names(model)
            .iter()
            .map(|s| s.to_string())
            .zip(values)
            .collect(),
        rss: result.rss,
        converged: result.converged,
        n_starts: result.n_starts,
    }
}

fn cmd_fit(cli: &Cli, args: &ConfigArgs) -> anyhow::Result<()> {
    let mut sets = args.sets.clone();
    sets.extend(seed_overrides(cli, &cli.command));
    let config: FitConfig = load_config(&read_config_text(&args.config)?, &sets)?;
    let data = io::read_field_csv(Path::new(&config.input))?;

    let mut rows = Vec::new();
    for kind in config.model.kinds() {
        if config.per_cycle {
            let names = param_names(kind);
            let mut sums = vec![0.0; names.len()];
            let mut n = 0usize;
            for id in data.cycles() {
                let cycle = data.cycle(id);
                let t0 = cycle[0].time;
                let rebased: Vec<wkcal_core::synthetic::Observation> = cycle
                    .iter()
                    .map(|o| wkcal_core::synthetic::Observation {
                        time: o.time - t0,
                        ..*o
                    })
                    .collect();
                let cycle_data =
                    FieldData::new(rebased, data.provenance().clone())?;
                let inflow = resolve_inflow(&config.inflow, &cycle_data)?;
                let result = fit(kind, &cycle_data, &inflow, None, config.n_starts, config.seed)?;
                let row = fit_row(kind, &format!("cycle {id}"), &result);
                for (i, (_, v)) in row.params.iter().enumerate() {
                    sums[i] += v;
                }
                n += 1;
                rows.push(row);
            }
            rows.push(FitRow {
                model: rows.last().unwrap().model.clone(),
                scope: "mean".into(),
                params: names
                    .iter()
                    .map(|s| s.to_string())
                    .zip(sums.iter().map(|s| s / n as f64))
                    .collect(),
                rss: f64::NAN,
                converged: true,
                n_starts: config.n_starts,
            });
        } else {
            let pooled = synchronize_cycles(&data)?;
            let inflow = resolve_inflow(&config.inflow, &pooled)?;
            let result = fit(kind, &pooled, &inflow, None, config.n_starts, config.seed)?;
            rows.push(fit_row(kind, "pooled", &result));
        }
    }

    let report = FitReport {
        meta: ReportMeta::new("fit", config_hash(&config), config.seed),
        input: config.input.clone(),
        rows,
    };
    let path = out_path(cli, "fit_report.json");
    write_json(&path, &report)?;
    eprintln!("fit[{}]: wrote {}", report.meta.config_hash, path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// replicate-study
// ---------------------------------------------------------------------------

fn cmd_replicate_study(cli: &Cli, args: &ConfigArgs) -> anyhow::Result<()> {
    let mut sets = args.sets.clone();
    sets.extend(seed_overrides(cli, &cli.command));
    let config: ReplicateStudyConfig = load_config(&read_config_text(&args.config)?, &sets)?;
    let setups = config.resolve_setups()?;

    let mut rows = Vec::new();
    for setup_cfg in &setups {
        let mut spec = setup_cfg.to_spec()?;
        if cli.seed.is_none() && config.seed != 0 {
            spec.seed = config.seed;
        }
        let truths: Vec<(&str, Option<f64>)> = match spec.truth {
            TruthModel::Wk2(p) => vec![("C", Some(p.compliance)), ("R", Some(p.resistance))],
            TruthModel::Wk3(p) => vec![
                ("C", Some(p.compliance)),
                ("R", Some(p.total_resistance())),
                ("R1", Some(p.impedance)),
                ("R2", Some(p.resistance)),
            ],
        };
        for kind in config.model.kinds() {
            let summary = replicate_study(&spec, kind, config.n_replicates, config.n_starts)?;
            for stat in &summary.params {
                let truth = truths
                    .iter()
                    .find(|(n, _)| *n == stat.name)
                    .and_then(|(_, t)| *t);
                rows.push(StudyRow {
                    setup: spec.name.clone(),
                    model: match kind {
                        ModelKind::Wk2 => "wk2".into(),
                        ModelKind::Wk3 => "wk3".into(),
                    },
                    param: stat.name.clone(),
                    truth,
                    mean: stat.mean,
                    lo90: stat.q05,
                    hi90: stat.q95,
                    n_replicates: summary.n_replicates,
                    n_failed: summary.n_failed,
                });
            }
        }
    }

    let report = StudyReport {
        meta: ReportMeta::new("replicate-study", config_hash(&config), config.seed),
        rows,
    };
    let path = out_path(cli, "replicate_report.json");
    write_json(&path, &report)?;
    eprintln!(
        "replicate-study[{}]: wrote {}",
        report.meta.config_hash,
        path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

fn cmd_calibrate(cli: &Cli, args: &ConfigArgs, prior_only: bool) -> anyhow::Result<()> {
    let mut sets = args.sets.clone();
    sets.extend(seed_overrides(cli, &cli.command));
    if prior_only {
        sets.push("prior_only=true".into());
    }
    let config: CalibrateConfig = load_config(&read_config_text(&args.config)?, &sets)?;

    let (data, inflow) = match (&config.input, &config.setup) {
        (Some(path), None) => {
            let data = io::read_field_csv(Path::new(path))?;
            let inflow = resolve_inflow(&config.inflow, &data)?;
            (data, inflow)
        }
        (None, Some(setup)) => {
            let spec = setup.to_spec()?;
            (generate_dataset(&spec)?, spec.inflow.clone())
        }
        _ => {
            return Err(Error::Config(
                "calibrate needs exactly one of `input` or `setup`".into(),
            )
            .into())
        }
    };

    let mut mcmc = McmcConfig::with_size(
        config.chains,
        config.iterations,
        config.target_draws,
        config.seed,
    );
    mcmc.prior_only = config.prior_only;
    mcmc.mean_only_emulator = config.mean_only_emulator;
    let opts = CalibrationOptions {
        k_influential: config.k_influential,
        n_rc: config.n_rc,
        rc_lo: 0.5,
        rc_hi: 3.0,
        emulator_restarts: config.emulator_restarts,
        stage2_restarts: 3,
        initial_guess: (config.initial_guess[0], config.initial_guess[1]),
        mcmc,
        band_grid_points: config.band_grid_points,
        seed: config.seed,
    };
    let outcome = calibrate(&data, &inflow, &opts)?;

    let sample_file = "samples.csv".to_string();
    io::write_samples_csv(
        fs::File::create(out_path(cli, &sample_file))?,
        &outcome.samples.draws,
    )?;
    let mut band_files = Vec::new();
    for band in &outcome.bands {
        let name = format!("band_{}.csv", band.kind.as_str());
        io::write_band_csv(fs::File::create(out_path(cli, &name))?, band)?;
        band_files.push(name);
    }

    let report = CalibrateReport {
        meta: ReportMeta::new("calibrate", config_hash(&config), config.seed),
        params: outcome
            .summary
            .params
            .iter()
            .map(|p| ParamRow {
                name: p.name.clone(),
                mean: p.mean,
                map: p.map,
                modes: p.modes.clone(),
                bimodal: p.bimodal,
                cri90: p.cri90,
            })
            .collect(),
        rhat_r: outcome.summary.rhat_r,
        rhat_c: outcome.summary.rhat_c,
        acceptance: outcome.summary.acceptance.clone(),
        n_draws: outcome.summary.n_draws,
        lambda_b_hat: outcome.lambda_b_hat,
        lambda_f_hat: outcome.lambda_f_hat,
        bias_lengthscales: outcome.bias_lengthscales,
        design_rows: outcome.design_rows,
        sample_file,
        band_files,
    };
    let path = out_path(cli, "calibrate_report.json");
    write_json(&path, &report)?;
    eprintln!(
        "calibrate[{}]: wrote {}",
        report.meta.config_hash,
        path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn cmd_report(input: &Path, config: Option<&Path>, sets: &[String]) -> anyhow::Result<()> {
    let text = fs::read_to_string(input)?;
    let report: AnyReport =
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("bad report JSON: {e}"))?;

    if let Some(config_path) = config {
        let mut value: serde_json::Value = serde_json::from_str(&read_config_text(config_path)?)
            .map_err(|e| anyhow::anyhow!("bad config JSON: {e}"))?;
        for item in sets {
            apply_override(&mut value, item)?;
        }
        // hash the typed config for the matching command
        let hash = match report.meta().command.as_str() {
            "fit" => config_hash(&serde_json::from_value::<FitConfig>(value)?),
            "replicate-study" => {
                config_hash(&serde_json::from_value::<ReplicateStudyConfig>(value)?)
            }
            "calibrate" => config_hash(&serde_json::from_value::<CalibrateConfig>(value)?),
            "simulate" => config_hash(&serde_json::from_value::<SimulateConfig>(value)?),
            other => anyhow::bail!("unknown report command `{other}`"),
        };
        if hash != report.meta().config_hash {
            anyhow::bail!(
                "config hash mismatch: report {} vs config {}",
                report.meta().config_hash,
                hash
            );
        }
    }
    print!("{}", report.render());
    Ok(())
}

// ---------------------------------------------------------------------------
// shared helpers for tests
// ---------------------------------------------------------------------------

/// Steady-state pressures of either model on a grid (test support).
pub fn steady_pressures(
    truth: &TruthModel,
    inflow: &InflowWaveform,
    grid: &[f64],
) -> anyhow::Result<Vec<f64>> {
    let series = match truth {
        TruthModel::Wk2(p) => steady_wk2(inflow, p, grid, 1e-3)?,
        TruthModel::Wk3(p) => steady_wk3(inflow, p, grid, 1e-3)?,
    };
    Ok(series.values().to_vec())
}
