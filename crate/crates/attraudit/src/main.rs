use std::path::PathBuf;
use std::process::ExitCode;

use attraudit::config::{ConfigError, ModelKind};
use attraudit::report::TableFormat;
use attraudit::runs::RunRecord;
use attraudit::{classify, execute, Command, Overrides, RunConfig};
use attraudit_core::attribution::Method;
use attraudit_core::perturb::StrategyKind;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "attraudit", version, about = "Audit feature attributions and their evaluations")]
struct Cli {
    /// TOML config file, or a run.json whose config is reused.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Perturbation ratio(s), comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    ratio: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, global = true, value_delimiter = ',')]
    strategies: Option<Vec<StrategyKind>>,
    #[arg(long, global = true)]
    beam_cap: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<TableFormat>,
    /// Output root.
    #[arg(long, global = true, env = "ATTRAUDIT_OUT")]
    out: Option<PathBuf>,
    /// Training data (path or bundled:<corpus>/<split>).
    #[arg(long, global = true)]
    train: Option<String>,
    /// Data to process (path or bundled:<corpus>/<split>).
    #[arg(long, global = true)]
    eval: Option<String>,
    /// Saved model file to use instead of training.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    kind: Option<Kind>,
    /// Process only the first N instances.
    #[arg(long, global = true)]
    limit: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Linear,
    Rationale,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Train a model and save it as model.json.
    Train,
    /// Write per-token attributions (and optional heat maps).
    Attribute,
    /// Compute the metric matrix over methods and modification strategies.
    Evaluate,
    /// Run synonym-substitution attacks on attributions or rationales.
    Attack,
    /// Blank a field and measure how many predictions survive.
    Audit,
    /// Aggregate run records into per-experiment summaries.
    Report {
        /// Directory of runs; defaults to the output root.
        dir: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf) -> anyhow::Result<RunConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        let record: RunRecord = serde_json::from_str(&text)
            .map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        Ok(record.config)
    } else {
        Ok(RunConfig::load(path)?)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    Overrides {
        seed: cli.seed,
        ratios: cli.ratio,
        methods: cli.methods,
        strategies: cli.strategies,
        beam_capacity: cli.beam_cap,
        format: cli.format,
        output_dir: cli.out,
        train: cli.train,
        eval: cli.eval,
        model_path: cli.model,
        model_kind: cli.kind.map(|k| match k {
            Kind::Linear => ModelKind::Linear,
            Kind::Rationale => ModelKind::Rationale,
        }),
        limit: cli.limit,
    }
    .apply(&mut config);
    let command = match cli.command {
        Sub::Train => Command::Train,
        Sub::Attribute => Command::Attribute,
        Sub::Evaluate => Command::Evaluate,
        Sub::Attack => Command::Attack,
        Sub::Audit => Command::Audit,
        Sub::Report { dir } => Command::Report(dir.unwrap_or_else(|| config.output_dir.clone())),
    };
    let outcome = execute(&command, &config)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", outcome.run_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e) as u8)
        }
    }
}
