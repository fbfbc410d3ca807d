use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use cdm_core::config::RunConfig;
use cdm_core::dataset::synthetic::SyntheticConfig;
use cdm_core::experiments;
use cdm_core::models::ModelKind;
use cdm_core::Result;

/// Cognitive diagnosis experiments: training, identifiability (rq1),
/// explainability (rq2) and prediction (rq3).
#[derive(Parser, Debug)]
#[command(name = "cdm", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for splits, initialisation and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model kind for `train` and `export`; restricts the experiment
    /// commands to this one model.
    #[arg(long, global = true)]
    model: Option<ModelKind>,
    #[arg(long, global = true)]
    dataset_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Use this checkpoint instead of training.
    #[arg(long, global = true)]
    from_checkpoint: Option<PathBuf>,
    /// Extra `key=value` override; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Preprocess, split and train one model; writes checkpoint and reports.
    Train,
    /// Identifiability scores on shadow-augmented data.
    Rq1,
    /// Degree of consistency and explainability overfitting.
    Rq2,
    /// Prediction accuracy, RMSE and F1 on the test part.
    Rq3,
    /// Learner traits and question parameters of a checkpoint as CSV.
    Export,
    /// Write a seeded synthetic dataset (logs.csv, q.csv) to the dataset directory.
    Synth {
        #[arg(long, default_value_t = 4209)]
        learners: usize,
        #[arg(long, default_value_t = 20)]
        questions: usize,
        #[arg(long, default_value_t = 11)]
        concepts: usize,
    },
    /// Print the effective configuration.
    Config,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| cdm_core::CdmError::Config(format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(model) = cli.model {
        cfg.model = model;
        cfg.models = vec![model];
    }
    if let Some(dir) = &cli.dataset_dir {
        cfg.dataset_dir = dir.clone();
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(path) = &cli.from_checkpoint {
        cfg.from_checkpoint = Some(path.clone());
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Train => {
            let a = experiments::cmd_train(&cfg)?;
            println!(
                "trained {} for {} epochs (best {}), checkpoint {}",
                cfg.model,
                a.report.epochs.len(),
                a.report.best_epoch,
                a.checkpoint.display()
            );
        }
        Command::Rq1 => {
            for r in experiments::cmd_rq1(&cfg)? {
                println!("{},{},{:.6} (std {:.6})", r.model, r.mode, r.ids, r.ids_std);
            }
        }
        Command::Rq2 => {
            for r in experiments::cmd_rq2(&cfg)? {
                println!("{},{:.6},{:.6},{:.6}", r.model, r.doc_train, r.doc_test, r.reo);
            }
        }
        Command::Rq3 => {
            for r in experiments::cmd_rq3(&cfg)? {
                println!("{},{:.6},{:.6},{:.6}", r.model, r.acc, r.rmse, r.f1);
            }
        }
        Command::Export => {
            let ckpt = cfg
                .from_checkpoint
                .clone()
                .unwrap_or_else(|| cfg.out_dir.join("model.ckpt"));
            let (t, q) = experiments::cmd_export(&cfg, &ckpt)?;
            println!("wrote {} and {}", t.display(), q.display());
        }
        Command::Synth {
            learners,
            questions,
            concepts,
        } => {
            let synth = SyntheticConfig {
                learners: *learners,
                questions: *questions,
                concepts: *concepts,
                concepts_per_question: SyntheticConfig::math1_like(0)
                    .concepts_per_question
                    .min(*concepts as f64),
                ..SyntheticConfig::math1_like(cfg.seed())
            };
            let ds = experiments::cmd_synth(&cfg.dataset_dir, &synth)?;
            println!(
                "wrote {} logs ({} learners, {} questions) to {}",
                ds.logs.len(),
                ds.n_learners,
                ds.n_questions,
                cfg.dataset_dir.display()
            );
        }
        Command::Config => print!("{}", cfg.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let defaults = format!(
        "Configuration keys (config file or --set) and their defaults:\n{}",
        RunConfig::default().to_text()
    );
    let matches = Cli::command().after_long_help(defaults).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
