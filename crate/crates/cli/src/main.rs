use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use floe_da::experiment::assimilate::{observed_truth, scheduled_ids, selection_schedule, SelectionEpoch};
use floe_da::experiment::manifest::{write_floes, write_modes, write_selected, FloeRow, RunManifest};
use floe_da::experiment::sweep::write_sweep;
use floe_da::experiment::{calibrate, generate_observations, run_assimilation, run_truth, sweep, RunConfig, TruthRun};
use floe_da::io::{read_field, read_observations, write_field, write_observations, write_toml, FieldFormat};
use floe_da::metrics::{nrmse, pcc};
use floe_da::{Error, FieldGrid64, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Binary,
}

impl From<Format> for FieldFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => FieldFormat::Csv,
            Format::Binary => FieldFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// Full-scale values (40,000 floes, 1000 members, T = 20).
    Full,
    /// Desk-scale scenario (2000 floes, 100 members, T = 2).
    Desk,
}

/// Twin experiments for Lagrangian sea-ice data assimilation.
#[derive(Debug, Parser)]
#[command(name = "floe-da", version)]
struct Cli {
    /// TOML run configuration; missing keys take the preset's values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Values used for keys the config file leaves out.
    #[arg(long, global = true, value_enum, default_value = "full")]
    preset: Preset,
    /// Run seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Field file format.
    #[arg(long, global = true, value_enum, default_value = "binary")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the truth and write its fields, floes and modes.
    Simulate,
    /// Write noisy positions of the selected floes.
    Observe,
    /// Assimilate observations and score the fused field.
    Assimilate {
        /// Observation CSV; generated from the truth when omitted.
        #[arg(long)]
        observations: Option<PathBuf>,
    },
    /// NRMSE and PCC of one field file against another.
    Evaluate {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Grid-size by observation-budget sweep over the configured seeds.
    Sweep,
    /// Calibrate the ocean amplitude and the floe drag to the speed targets.
    Calibrate {
        /// Target maximum floe speed.
        #[arg(long, default_value_t = 5.0)]
        ice_speed: f64,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, cli.preset) {
        (Some(path), Preset::Full) => RunConfig::load(path)?,
        (Some(path), Preset::Desk) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let base = toml::Table::try_from(RunConfig::desk_scale()).expect("config serialises");
            let user: toml::Table =
                toml::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
            let merged = merge(base, user);
            RunConfig::from_toml_str(&toml::to_string(&merged).expect("table serialises"))?
        }
        (None, Preset::Full) => RunConfig::default(),
        (None, Preset::Desk) => RunConfig::desk_scale(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Overlays `user` on `base`, table by table.
fn merge(mut base: toml::Table, user: toml::Table) -> toml::Table {
    for (k, v) in user {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => {
                base.insert(k, toml::Value::Table(merge(b, u)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Observation indices at which fields are written.
fn output_indices(cfg: &RunConfig) -> Vec<usize> {
    let last = cfg.n_cycles();
    match cfg.output.field_every {
        0 => vec![0, last],
        every => (0..=last).filter(|k| k % every == 0 || *k == last).collect(),
    }
}

fn manifest(cmd: &str, cfg: &RunConfig, truth: &TruthRun, schedule: Vec<SelectionEpoch>, outputs: Vec<String>) -> RunManifest {
    RunManifest {
        command: cmd.to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        amplitude_scale: truth.ocean.amplitude_scale,
        n_modes: truth.ocean.modes.len(),
        n_cycles: cfg.n_cycles(),
        schedule,
        outputs,
        config: cfg.clone(),
    }
}

fn name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn simulate(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let truth = run_truth(cfg, cfg.seed, None)?;
    let fmt: FieldFormat = cli.format.into();
    let dir = cli.out.join("truth");
    ensure_dir(&dir)?;
    let mut outputs = Vec::new();
    let picks = output_indices(cfg);
    for &k in &picks {
        let path = dir.join(format!("field_{k:05}.{}", fmt.extension()));
        write_field(&path, &truth.field(k, cfg.layout.grid_n)?, fmt)?;
        outputs.push(format!("truth/{}", name(&path)));
    }
    let floes: Vec<FloeRow> = truth.initial_floes.iter().enumerate().map(|(i, f)| FloeRow::new(i, f)).collect();
    write_floes(&dir.join("floes_initial.csv"), &floes)?;
    let last = truth.positions.len() - 1;
    let final_rows: Vec<FloeRow> = truth.tracked.iter().zip(&truth.final_floes).map(|(&id, f)| FloeRow::new(id, f)).collect();
    write_floes(&dir.join("floes_final.csv"), &final_rows)?;
    let states: Vec<_> = picks.iter().map(|&k| &truth.mode_trajectory[k]).collect();
    write_modes(&dir.join("modes.csv"), &truth.ocean.modes, &states)?;
    outputs.extend(["truth/floes_initial.csv", "truth/floes_final.csv", "truth/modes.csv"].map(String::from));
    manifest("simulate", cfg, &truth, Vec::new(), outputs).write(&cli.out.join("manifest.toml"))?;
    println!(
        "truth: {} floes, {} modes, {} cycles, amplitude scale {:.4}, final max speed {:.3}",
        cfg.floes.count,
        truth.ocean.modes.len(),
        cfg.n_cycles(),
        truth.ocean.amplitude_scale,
        truth.field(last, cfg.layout.grid_n)?.max_speed()
    );
    Ok(())
}

/// Truth tracking the floes the configured layout observes, with the
/// selection schedule.
fn truth_and_schedule(cfg: &RunConfig) -> Result<(TruthRun, Vec<SelectionEpoch>)> {
    let truth = observed_truth(cfg, cfg.seed)?;
    let schedule = selection_schedule(cfg, &truth)?;
    Ok((truth, schedule))
}

fn observe(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let (truth, schedule) = truth_and_schedule(cfg)?;
    ensure_dir(&cli.out)?;
    let obs = generate_observations(&truth, &scheduled_ids(&schedule), cfg.filter.sigma_obs, cfg.seed)?;
    write_observations(&cli.out.join("observations.csv"), &obs)?;
    write_selected(&cli.out.join("selected_floes.csv"), &schedule, &truth)?;
    let outputs = vec!["observations.csv".into(), "selected_floes.csv".into()];
    manifest("observe", cfg, &truth, schedule, outputs).write(&cli.out.join("manifest.toml"))?;
    println!("{} observation records", obs.len());
    Ok(())
}

fn assimilate(cli: &Cli, cfg: &RunConfig, observations: Option<&Path>) -> Result<()> {
    let (truth, schedule) = truth_and_schedule(cfg)?;
    let obs = match observations {
        Some(path) => read_observations(path)?,
        None => generate_observations(&truth, &scheduled_ids(&schedule), cfg.filter.sigma_obs, cfg.seed)?,
    };
    let run = run_assimilation(cfg, &truth, &obs, cfg.seed, None)?;
    let fmt: FieldFormat = cli.format.into();
    let dir = cli.out.join("assimilation");
    ensure_dir(&dir)?;
    let mut outputs = Vec::new();
    for k in output_indices(cfg) {
        for (label, field) in [("fused", run.fused[k].clone()), ("truth", truth.field(k, cfg.layout.grid_n)?)] {
            let path = dir.join(format!("{label}_{k:05}.{}", fmt.extension()));
            write_field(&path, &field, fmt)?;
            outputs.push(format!("assimilation/{}", name(&path)));
        }
    }
    write_selected(&cli.out.join("selected_floes.csv"), &schedule, &truth)?;
    write_toml(&cli.out.join("report.toml"), &run.report)?;
    outputs.extend(["selected_floes.csv", "report.toml"].map(String::from));
    manifest("assimilate", cfg, &truth, schedule, outputs).write(&cli.out.join("manifest.toml"))?;
    let r = &run.report;
    println!(
        "{}x{} l_obs={} seed={}: nrmse {:.4} pcc {:.4} (control {:.4}/{:.4}), runtime {:.2}s, analysis {:.2}s",
        r.nx, r.ny, r.l_obs, r.seed, r.nrmse, r.pcc, r.control_nrmse, r.control_pcc, r.runtime_s, r.analysis_s
    );
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    est: String,
    truth: String,
    time: f64,
    nrmse: f64,
    pcc: f64,
}

fn field_format(path: &Path) -> FieldFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => FieldFormat::Csv,
        _ => FieldFormat::Binary,
    }
}

fn evaluate(cli: &Cli, est: &Path, truth: &Path) -> Result<()> {
    let e: FieldGrid64 = read_field(est, field_format(est))?;
    let t: FieldGrid64 = read_field(truth, field_format(truth))?;
    let out = Evaluation {
        est: est.display().to_string(),
        truth: truth.display().to_string(),
        time: t.time(),
        nrmse: nrmse(&e, &t)?,
        pcc: pcc(&e, &t)?,
    };
    ensure_dir(&cli.out)?;
    write_toml(&cli.out.join("evaluation.toml"), &out)?;
    println!("nrmse {:.6} pcc {:.6}", out.nrmse, out.pcc);
    Ok(())
}

fn run_sweep(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let rows = sweep(cfg, &cfg.sweep.cases, &cfg.sweep.seeds)?;
    ensure_dir(&cli.out)?;
    write_sweep(&cli.out.join("sweep.csv"), &rows)?;
    println!("{:>5} {:>6} {:>6} {:>7} {:>7} {:>9} {:>9}", "grid", "l_obs", "seed", "nrmse", "pcc", "runtime", "analysis");
    for r in &rows {
        println!(
            "{:>5} {:>6} {:>6} {:>7.4} {:>7.4} {:>9.2} {:>9.3}",
            r.grid_size, r.l_obs, r.seed, r.nrmse, r.pcc, r.runtime_s, r.analysis_s
        );
    }
    Ok(())
}

fn run_calibrate(cli: &Cli, cfg: &RunConfig, ice_speed: f64) -> Result<()> {
    let report = calibrate(cfg, ice_speed)?;
    ensure_dir(&cli.out)?;
    write_toml(&cli.out.join("calibration.toml"), &report)?;
    println!(
        "amplitude scale {:.5} (median max ocean speed {:.3}); drag scale {:.4} gives max ice speed {:.3} (goal {:.3}, ocean max {:.3})",
        report.amplitude_scale,
        report.ocean_speed_median,
        report.drag_scale,
        report.ice_speed_max,
        report.ice_speed_goal,
        report.ocean_speed_max
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::config("--workers", "must be at least 1"));
        }
        // only fails when a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Simulate => simulate(cli, &cfg),
        Command::Observe => observe(cli, &cfg),
        Command::Assimilate { observations } => assimilate(cli, &cfg, observations.as_deref()),
        Command::Evaluate { est, truth } => evaluate(cli, est, truth),
        Command::Sweep => run_sweep(cli, &cfg),
        Command::Calibrate { ice_speed } => run_calibrate(cli, &cfg, *ice_speed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
