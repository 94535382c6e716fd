use clap::{Args, Parser, Subcommand};
use maze_core::bench::Method;
use maze_core::config::{load_config, RunConfig, RunConfigError};
use maze_core::env::Archetype;
use maze_core::par::Parallelism;
use maze_core::pipeline::{PipelineError, Study};
use std::path::PathBuf;
use std::process::ExitCode;

/// Coevolving agent and partner populations for two-role cooking coordination.
#[derive(Parser, Debug)]
#[command(name = "maze", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one method for every seed.
    Train,
    /// Train what is missing and cross-evaluate against the partner suite.
    Eval,
    /// Write training curves and the results table from finished runs.
    Report,
    /// Train and evaluate the component ladder from V-MAZE to MAZE.
    Ablate,
    /// Train SP, PP and V-MAZE and plot their training curves.
    Rq1,
}

#[derive(Args, Debug)]
struct Opts {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    layout: Option<String>,
    #[arg(long, global = true)]
    method: Option<String>,
    /// Seeds, repeated or comma-separated.
    #[arg(long, global = true, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Budget scale in (0, 1].
    #[arg(long, global = true)]
    scale: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    single_thread: bool,
}

fn config_error(field: &str, reason: impl ToString) -> PipelineError {
    PipelineError::Config(RunConfigError::Invalid { field: field.into(), reason: reason.to_string() })
}

fn build_config(opts: &Opts) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &opts.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(l) = &opts.layout {
        cfg.layout = l.parse::<Archetype>().map_err(|e| config_error("layout", e))?;
        cfg.layout_text = None;
    }
    if let Some(m) = &opts.method {
        cfg.method = m.parse::<Method>().map_err(|e| config_error("method", e))?;
    }
    if !opts.seed.is_empty() {
        cfg.seeds = opts.seed.clone();
    }
    if let Some(s) = opts.scale {
        cfg.scale = s;
    }
    if let Some(o) = &opts.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = build_config(&cli.opts)?;
    let par = if cli.opts.single_thread { Parallelism::Sequential } else { Parallelism::Parallel.effective() };
    let study = Study::new(cfg, par)?;
    study.prepare()?;
    match cli.command {
        Command::Train => {
            study.train(study.config.method)?;
            study.report()?;
        }
        Command::Eval => {
            let m = study.evaluate(&study.config.eval_methods())?;
            print!("{}", m.render_table());
        }
        Command::Report => {
            for c in study.report()? {
                let last = c.points.last().map_or(0.0, |p| p.1);
                println!("{}: final mean reward {last:.1}", c.method);
            }
            let table = study.root.join("table.md");
            if table.exists() {
                print!("{}", std::fs::read_to_string(&table).unwrap_or_default());
            }
        }
        Command::Ablate => {
            let m = study.evaluate(&Method::LADDER)?;
            study.report()?;
            print!("{}", m.render_table());
        }
        Command::Rq1 => {
            for method in Method::RQ1 {
                let runs = study.train(method)?;
                let finals: Vec<String> = runs
                    .iter()
                    .map(|t| format!("{:.1}", t.metrics.last().map_or(0.0, |m| m.mean_reward)))
                    .collect();
                println!("{method}: final mean reward per seed [{}]", finals.join(", "));
            }
            study.report()?;
        }
    }
    println!("outputs in {}", study.root.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PipelineError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
