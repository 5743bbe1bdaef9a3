use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use hjb_ergodic_cli::config::{CostConfig, ExperimentConfig, Format, Pipeline};
use hjb_ergodic_cli::pipelines::run_experiment;
use hjb_ergodic_cli::report::emit_report;

/// Ergodic HJB experiments on a controlled Markov chain discretization.
#[derive(Parser, Debug)]
#[command(name = "hjb-ergodic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment file; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    h: Option<f64>,
    #[arg(long, global = true)]
    p: Option<f64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Running cost, e.g. `zero`, `constant:0.5`, `bump:1,0.5`, `cosine:1,3.14`.
    #[arg(long, global = true)]
    f: Option<String>,
    /// Output directory (HJB_ERGODIC_OUTPUT_DIR overrides the config file, this flag overrides both).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Vec<FormatArg>,
    /// Record wall time in the summary (output is then no longer reproducible byte for byte).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Discounted problems and the small-discount estimate of the eigenvalue.
    Solve,
    /// Eigenvalue along a family of dilated domains, with one-sided slopes.
    Eigencurve,
    /// One-sided derivatives and the Mather measure at the reference domain.
    Derivatives,
    /// Vanishing-discount limit along scaled domains and the measure identities.
    DiscountLimit,
    /// Linear eigenproblem for p = 2 through the logarithmic transform.
    HopfCole,
    /// All pipelines in order; the linear stage reuses epsilon and f and ignores p.
    Suite,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Csv,
    Json,
    PlotData,
}

impl Command {
    fn pipeline(self) -> Pipeline {
        match self {
            Command::Solve => Pipeline::Discounted,
            Command::Eigencurve => Pipeline::Eigencurve,
            Command::Derivatives => Pipeline::Derivatives,
            Command::DiscountLimit => Pipeline::DiscountLimit,
            Command::HopfCole => Pipeline::HopfCole,
            Command::Suite => Pipeline::FullSuite,
        }
    }
}

fn load(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    cfg.pipeline = cli.command.pipeline();
    if let Some(h) = cli.h {
        cfg.grid.h = h;
    }
    if let Some(p) = cli.p {
        cfg.lagrangian.p = p;
    }
    if let Some(e) = cli.epsilon {
        cfg.lagrangian.epsilon = e;
    }
    if let Some(f) = &cli.f {
        cfg.lagrangian.f = CostConfig::parse_short(f)?;
    }
    if let Ok(dir) = std::env::var("HJB_ERGODIC_OUTPUT_DIR") {
        cfg.output_dir = PathBuf::from(dir);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if !cli.format.is_empty() {
        cfg.formats = cli
            .format
            .iter()
            .map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
                FormatArg::PlotData => Format::PlotData,
            })
            .collect();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let report = match load(&cli).and_then(|cfg| Ok((run_experiment(&cfg, cli.timing)?, cfg))) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("configuration error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let (report, cfg) = report;
    for line in report.ledger_lines() {
        println!("{line}");
    }
    match emit_report(&report, &cfg.output_dir, &cfg.formats) {
        Ok(paths) => log::info!("wrote {} files to {}", paths.len(), cfg.output_dir.display()),
        Err(e) => {
            eprintln!("writing output to {}: {e}", cfg.output_dir.display());
            return ExitCode::FAILURE;
        }
    }
    if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
