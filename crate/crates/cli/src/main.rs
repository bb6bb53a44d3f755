use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dynpbdw::experiment::{
    compute_truths, emit_ascent_csv, emit_csv, emit_true_theta_csv, load_truths, run, save_truths,
    transport_beta_decay_demo, ExperimentConfig, Mode, TransportConfig,
};
use dynpbdw::highfidelity::write_hamiltonian_csv;

#[derive(Parser)]
#[command(name = "dynpbdw", version, about = "State estimation with moving sensors and evolving reduced spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration: nls1d, swe1d, swe2d, paper-nls1d, paper-swe1d, paper-swe2d.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Debug logging and per-iteration ascent output.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate and store the ground-truth trajectories.
    Truth,
    /// Run the assimilation loop.
    Run,
    /// Stability of static and moving sensors on a transported packet.
    DemoTransport,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: dynpbdw::error::Error| e.to_string())
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(_), Some(_)) => bail!("--config and --preset are exclusive"),
        (Some(path), None) => {
            ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?
        }
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => ExperimentConfig::preset("nls1d")?,
    };
    if let Some(mode) = c.mode {
        cfg.run.mode = mode;
    }
    if let Some(seed) = c.seed {
        cfg.run.seed = seed;
    }
    if let Some(dir) = &c.out_dir {
        cfg.run.out_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Static => "static",
        Mode::Dynamic => "dynamic",
    }
}

fn truth(cfg: &ExperimentConfig) -> Result<()> {
    let dir = cfg.run.out_dir.join("truth");
    let truths = compute_truths(cfg)?;
    save_truths(&dir, &truths)?;
    for (i, tr) in truths.iter().enumerate() {
        write_hamiltonian_csv(tr, &dir.join(format!("hamiltonian_{i:03}.csv")))?;
        log::info!(
            "theta {:?}: {} snapshots, relative drift {:.3e}",
            tr.theta.0,
            tr.snapshots.len(),
            tr.max_relative_drift()
        );
    }
    println!("{} trajectories written to {}", truths.len(), dir.display());
    Ok(())
}

fn assimilate(cfg: &ExperimentConfig, verbose: bool) -> Result<bool> {
    let out = &cfg.run.out_dir;
    std::fs::create_dir_all(out)?;
    let truth_dir = out.join("truth");
    let truths = match load_truths(&truth_dir, cfg)? {
        Some(t) => t,
        None => {
            log::info!("no stored truths in {}; integrating", truth_dir.display());
            compute_truths(cfg)?
        }
    };
    let records = run(cfg, &truths)?;
    let stem = format!("{}_{}", cfg.model.kind.name(), mode_name(cfg.run.mode));
    std::fs::write(out.join(format!("{stem}.toml")), cfg.to_toml())?;
    let csv = out.join(format!("{stem}.csv"));
    emit_csv(&records, &csv)?;
    if !cfg.run.true_thetas.is_empty() {
        emit_true_theta_csv(&records, &cfg.run.true_thetas, &out.join(format!("{stem}_true_theta.csv")))?;
    }
    if verbose {
        emit_ascent_csv(&records, &out.join(format!("{stem}_ascent.csv")))?;
    }
    let failures = records.iter().filter(|r| r.failed()).count();
    let last = records.last().expect("at least one assimilation time");
    println!(
        "{}: {} rows, beta(T) = {:.3e}, {} below the floor",
        csv.display(),
        records.len(),
        last.beta,
        failures
    );
    Ok(failures > 0)
}

fn demo_transport(out: &Path, verbose: bool) -> Result<bool> {
    let cfg = TransportConfig::default();
    std::fs::create_dir_all(out)?;
    let mut failed = false;
    for mode in [Mode::Static, Mode::Dynamic] {
        let records = transport_beta_decay_demo(&cfg, mode)?;
        let path = out.join(format!("transport_{}.csv", mode_name(mode)));
        emit_csv(&records, &path)?;
        if verbose {
            emit_ascent_csv(&records, &out.join(format!("transport_{}_ascent.csv", mode_name(mode))))?;
        }
        failed |= records.iter().any(|r| r.failed());
        let last = records.last().expect("at least one time");
        println!("{}: beta(0) = {:.3e}, beta(T) = {:.3e}", path.display(), records[0].beta, last.beta);
    }
    Ok(failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Truth => load_config(&cli.common).and_then(|cfg| truth(&cfg).map(|_| false)),
        Command::Run => load_config(&cli.common).and_then(|cfg| assimilate(&cfg, cli.common.verbose)),
        Command::DemoTransport => {
            let out = cli.common.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
            demo_transport(&out, cli.common.verbose)
        }
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
