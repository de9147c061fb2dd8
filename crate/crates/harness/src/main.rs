use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use intsense_harness::commands::{cmd_design, cmd_evaluate, cmd_fit, cmd_heatmap};
use intsense_harness::config::HeatmapOperator;
use intsense_harness::corpus::{write_synthetic_corpus, Split};
use intsense_harness::{selftest, Config, Result};
use log::{error, info};

#[derive(Parser)]
#[command(
    name = "intsense",
    version,
    about = "Measurement design and integral-image estimation experiments"
)]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    block_side: Option<usize>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the prior on the training split.
    Fit,
    /// Solve for the measurement design from the fitted prior.
    Design,
    /// Sweep measurement ranks on the test split.
    Evaluate(EvaluateArgs),
    /// Write exact and estimated box-filter maps for one test image.
    Heatmap(HeatmapArgs),
    /// Run the f = 4 consistency checks.
    Selftest,
    /// Write a synthetic dead-leaves corpus with disjoint splits.
    GenCorpus(GenCorpusArgs),
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_delimiter = ',')]
    rank: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    filters: Option<Vec<usize>>,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    filter: Option<usize>,
    #[arg(long)]
    image: Option<String>,
    /// Use the bypass operator instead of the design.
    #[arg(long)]
    identity: bool,
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long, default_value = "corpus")]
    dir: PathBuf,
    #[arg(long, default_value_t = 500)]
    train: usize,
    #[arg(long, default_value_t = 100)]
    test: usize,
    #[arg(long, default_value_t = 128)]
    size: usize,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(f) = cli.block_side {
        config.model.block_side = f;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    match &cli.command {
        Command::Evaluate(a) => {
            if let Some(r) = &a.rank {
                config.evaluate.ranks = r.clone();
            }
            if let Some(k) = &a.filters {
                config.evaluate.filters = k.clone();
            }
        }
        Command::Heatmap(a) => {
            config.heatmap.rank = a.rank.or(config.heatmap.rank);
            config.heatmap.filter = a.filter.unwrap_or(config.heatmap.filter);
            config.heatmap.image = a.image.clone().or(config.heatmap.image.take());
            if a.identity {
                config.heatmap.operator = HeatmapOperator::Identity;
            }
        }
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<bool> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Fit => {
            let fit = cmd_fit(&config)?;
            println!("beta = {} from {} images", fit.model.beta().value(), fit.images);
        }
        Command::Design => {
            let run = cmd_design(&config)?;
            let d = &run.design;
            println!(
                "converged = {}, iterations = {}, rank(Q*) = {}, rank(P*) = {}",
                d.converged, run.outcome.iterations, d.rank_q, d.rank_p
            );
            return Ok(d.converged);
        }
        Command::Evaluate(_) => {
            let eval = cmd_evaluate(&config)?;
            for s in &eval.summary {
                println!(
                    "{:>8} M = {:>4} rate = {:.4} RSNR = {:.2} dB",
                    s.operator, s.m, s.measurement_rate, s.mean_rsnr_integral
                );
            }
        }
        Command::Heatmap(_) => {
            let h = cmd_heatmap(&config)?;
            println!("{} M = {} k = {} correlation = {:.4}", h.image, h.m, h.k, h.correlation);
        }
        Command::Selftest => {
            let checks = selftest::run(config.seed)?;
            let mut ok = true;
            for c in &checks {
                println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            return Ok(ok);
        }
        Command::GenCorpus(a) => {
            write_synthetic_corpus(&a.dir.join("train"), a.train, a.size, config.seed, Split::Train)?;
            write_synthetic_corpus(
                &a.dir.join("test"),
                a.test,
                a.size,
                config.seed.wrapping_add(1) << 32,
                Split::Test,
            )?;
            info!(
                "wrote {} train and {} test images under {}",
                a.train,
                a.test,
                a.dir.display()
            );
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
