use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::{error, info};

use irs_ce::harness::{parse_sweep, preset_specs, run_experiment, trial_rng, write_csv, Preset, SubphasePolicy};
use irs_ce::sysconfig::{build_geometry, PathLossSet, SystemConfig};
use irs_ce::{channel::ChannelModel, Result};

/// Monte-Carlo channel-estimation experiments for distributed-IRS MISO uplinks.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// JSON system configuration; missing fields take the reference defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fig2a | fig2b | fig2c | fig3 | table1 | custom
    #[arg(long, default_value = "custom")]
    experiment: String,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Override the swept variable and its values: name=v1,v2,...
    /// (sigma2, beta_d, beta_2, L, S, eta).
    #[arg(long)]
    sweep: Option<String>,
    /// Raise the proposed protocol's S to NL + 1, where DFT training is full rank.
    #[arg(long)]
    full_rank_s: bool,
    /// Also write one channel realization (trial 0) as CSV matrices into this directory.
    #[arg(long)]
    dump_channel: Option<PathBuf>,
}

fn run(cli: &Cli) -> Result<usize> {
    let base = match &cli.config {
        Some(path) => SystemConfig::from_json_file(path)?,
        None => SystemConfig::reference(),
    };
    let preset: Preset = cli.experiment.parse()?;
    let mut specs = preset_specs(preset, &base, cli.trials, cli.seed);
    if let Some(text) = &cli.sweep {
        let (var, values) = parse_sweep(text)?;
        for spec in &mut specs {
            spec.sweep = var;
            spec.values = values.clone();
        }
    }
    if cli.full_rank_s {
        specs.iter_mut().for_each(|s| s.subphases = SubphasePolicy::FullRank);
    }
    if let Some(dir) = &cli.dump_channel {
        std::fs::create_dir_all(dir)?;
        let geo = build_geometry(&base)?;
        let model = ChannelModel::new(&base, &geo, PathLossSet::from_geometry(&geo)?)?;
        model.draw(&mut trial_rng(cli.seed, 0)).dump_csv(dir)?;
    }
    let mut rows = Vec::new();
    for spec in &specs {
        rows.extend(run_experiment(spec)?);
    }
    write_csv(&cli.out, &rows)?;
    Ok(rows.len())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(n) => {
            info!("wrote {n} rows to {}", cli.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
