use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pmjdot::data::{generate, load_corpus, save_corpus};
use pmjdot::experiment::{
    ablate, evaluate_checkpoint, resume_with, run_with, write_report, Checkpoint, EpochMetrics, ExperimentConfig,
    Mode, REPORT_JSON,
};
use pmjdot::{Error, Result};

#[derive(Parser)]
#[command(name = "pmjdot", version, about = "Unsupervised cross-domain alignment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply to anything left out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ablation mode, v1..v5.
    #[arg(long)]
    mode: Option<Mode>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(mode) = self.mode {
            config.mode = mode;
        }
        if let Some(out) = &self.out {
            config.out = Some(out.clone());
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus to `<out>/corpus.csv`.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate one experiment.
    Train {
        #[command(flatten)]
        common: Common,
        /// Overrides the config's epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from a checkpoint; the config must match its hash.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Suppress per-epoch progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Retrieval report for a checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corpus file; defaults to the checkpoint config's corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Retrieval cutoff; defaults to the checkpoint config's.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Sweep modes and seeds and write a combined CSV.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Number of consecutive seeds, starting at the config seed.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Comma-separated modes; all five by default.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<Mode>,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn progress(quiet: bool) -> impl FnMut(&EpochMetrics) {
    move |m| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  loss {:>9.4}  prec@k {:.4}  map@k {:.4}  map {:.4}",
                m.epoch, m.mean_total_loss, m.prec_at_k, m.map_at_k, m.map
            );
        }
    }
}

fn require_out(config: &ExperimentConfig) -> Result<&Path> {
    config.out.as_deref().ok_or_else(|| Error::Config("an output directory is required (--out or `out` in the config)".into()))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Generate { common } => {
            let mut config = common.config()?;
            if let Some(seed) = common.seed {
                config.data.seed = seed;
            }
            let out = require_out(&config)?;
            std::fs::create_dir_all(out)?;
            let path = out.join("corpus.csv");
            save_corpus(&generate(&config.data)?, &path)?;
            println!("{}", path.display());
        }
        Command::Train { common, epochs, resume, quiet } => {
            let mut config = match (&common.config, &resume) {
                (None, Some(ckpt)) => {
                    let mut c = Checkpoint::load(ckpt)?.config;
                    c.out = common.out.clone().or(c.out);
                    c.seed = common.seed.unwrap_or(c.seed);
                    c.mode = common.mode.unwrap_or(c.mode);
                    c
                }
                _ => common.config()?,
            };
            if let Some(e) = epochs {
                config.epochs = e;
            }
            require_out(&config)?;
            let output = match resume {
                Some(path) => resume_with(Checkpoint::load(&path)?, &config, progress(quiet))?,
                None => run_with(&config, progress(quiet))?,
            };
            println!("{}", output.report.csv_summary());
        }
        Command::Evaluate { common, checkpoint, corpus, k } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let corpus = match (&corpus, &common.config) {
                (Some(path), _) => load_corpus(path)?,
                (None, Some(_)) => common.config()?.load_corpus()?,
                (None, None) => ckpt.config.load_corpus()?,
            };
            let report = evaluate_checkpoint(&ckpt, &corpus, k.unwrap_or(ckpt.config.eval_k))?;
            if let Some(dir) = &common.out {
                write_report(dir, &report)?;
                eprintln!("wrote {}", dir.join(REPORT_JSON).display());
            }
            println!("{}", report.csv_summary());
        }
        Command::Ablate { common, seeds, modes, epochs } => {
            let mut config = common.config()?;
            if let Some(e) = epochs {
                config.epochs = e;
            }
            require_out(&config)?;
            let modes = if modes.is_empty() { Mode::ALL.to_vec() } else { modes };
            let seeds: Vec<u64> = (config.seed..config.seed + seeds).collect();
            let rows = ablate(&config, &modes, &seeds, |mode, seed, metrics| {
                eprintln!("{mode} seed {seed}: final map {:.4}", metrics.final_map());
            })?;
            println!("mode,seeds,mean_final_map");
            for r in rows {
                println!("{},{},{:.6}", r.mode, r.seeds.len(), r.mean_final_map);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
