//! The `cfrec` command line: data preparation, training, evaluation,
//! embedding export and hyperparameter sweeps.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use cfrec_core::data::SyntheticConfig;
use clap::{Args, Parser, Subcommand};

use commands::{Axis, Scorer, SplitName, Which};
use config::{env_overrides, Override, RunConfig};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "cfrec", version, about = "Sequential recommendation with counterfactual contrastive training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every pipeline command. Flags beat `--set`, which
/// beats `CFREC_*` variables, which beat the config file.
#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, env = "CFREC_CONFIG")]
    pub config: Option<PathBuf>,
    /// Directory for prepared data and run artifacts.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Interaction TSV (user, item, timestamp).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// item, interest or hierarchical.
    #[arg(long)]
    pub variant: Option<String>,
    /// none, no-co, no-ii, pos-only, neg-only or base.
    #[arg(long)]
    pub ablation: Option<String>,
    /// Weight of the contrastive term.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Weight of the interest-independence term.
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Any configuration key, e.g. `--set causal.r_rep=0.4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Suppress progress output.
    #[arg(long, short)]
    pub quiet: bool,
}

impl Common {
    pub fn overrides(&self, env: impl IntoIterator<Item = (String, String)>) -> CliResult<Vec<Override>> {
        let mut out = env_overrides(env);
        for s in &self.set {
            out.push(Override::parse(s)?);
        }
        let mut flag = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push(Override {
                    key: key.into(),
                    value: toml::Value::String(v),
                });
            }
        };
        flag("out_dir", self.out_dir.as_ref().map(|p| p.display().to_string()));
        flag("data.path", self.data.as_ref().map(|p| p.display().to_string()));
        flag("variant", self.variant.clone());
        if let Some(name) = &self.ablation {
            let a = cfrec_core::trainer::Ablation::from_name(name)?;
            for (k, v) in [
                ("disable_co", a.disable_co),
                ("disable_ii", a.disable_ii),
                ("pos_only", a.pos_only),
                ("neg_only", a.neg_only),
            ] {
                out.push(Override {
                    key: format!("train.ablation.{k}"),
                    value: toml::Value::Boolean(v),
                });
            }
        }
        for (key, v) in [("causal.lambda1", self.lambda1), ("causal.lambda2", self.lambda2)] {
            if let Some(v) = v {
                out.push(Override { key: key.into(), value: toml::Value::Float(v) });
            }
        }
        for (key, v) in [("train.seed", self.seed.map(|s| s as i64)), ("train.epochs", self.epochs.map(|e| e as i64))] {
            if let Some(v) = v {
                out.push(Override { key: key.into(), value: toml::Value::Integer(v) });
            }
        }
        Ok(out)
    }

    pub fn load(&self) -> CliResult<RunConfig> {
        config::load(self.config.as_deref(), &self.overrides(std::env::vars())?)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load or generate interactions, k-core filter, truncate and split users.
    Prepare(#[command(flatten)] Common),
    /// Train on the prepared data; writes logs, checkpoints and test metrics.
    Train(#[command(flatten)] Common),
    /// Score a split with a checkpoint or the popularity baseline.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file written by `train`.
        #[arg(long, required_unless_present = "pop", conflicts_with = "pop")]
        checkpoint: Option<PathBuf>,
        /// Rank by training-split popularity; needs no checkpoint.
        #[arg(long)]
        pop: bool,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
        /// Comma-separated list lengths.
        #[arg(long, value_delimiter = ',', default_value = "20,50")]
        cutoffs: Vec<usize>,
    },
    /// Write user or item vectors as tab-separated text.
    ExportEmbeddings {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        which: Which,
        /// Users to export when `--which users`.
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
        /// Defaults to a file under the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train one run per grid point along an axis and tabulate test metrics.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// r_rep, MN or K.
        #[arg(long, value_enum)]
        axis: Axis,
    },
    /// Write a synthetic interaction log with planted interest clusters.
    GenSynthetic {
        #[arg(long, default_value_t = 2000)]
        n_users: usize,
        #[arg(long, default_value_t = 400)]
        n_items: usize,
        #[arg(long, default_value_t = 8)]
        n_clusters: usize,
        #[arg(long, default_value_t = 20)]
        seq_len: usize,
        /// Probability that a behavior comes from the whole catalog.
        #[arg(long, default_value_t = 0.3)]
        noise_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Prepare(c) => {
            commands::set_quiet(c.quiet);
            let summary = commands::cmd_prepare(&c.load()?)?;
            print!("{}", summary.to_table());
        }
        Command::Train(c) => {
            commands::set_quiet(c.quiet);
            let cfg = c.load()?;
            let s = commands::cmd_train(&cfg)?;
            println!("test, final checkpoint");
            print!("{}", s.test_final.to_table());
            println!("test, best validation checkpoint");
            print!("{}", s.test_best.to_table());
        }
        Command::Eval { common, checkpoint, pop, split, cutoffs } => {
            commands::set_quiet(common.quiet);
            let scorer = match (checkpoint, pop) {
                (_, true) => Scorer::Popularity,
                (Some(p), false) => Scorer::Checkpoint(p),
                (None, false) => return Err(CliError::Config("pass --checkpoint or --pop".into())),
            };
            let report = commands::cmd_eval(&common.load()?, &scorer, split, &cutoffs)?;
            print!("{}", report.to_table());
        }
        Command::ExportEmbeddings { common, checkpoint, which, split, output } => {
            commands::set_quiet(common.quiet);
            let path = commands::cmd_export_embeddings(&common.load()?, &checkpoint, which, split, output.as_deref())?;
            println!("{}", path.display());
        }
        Command::Sweep { common, axis } => {
            commands::set_quiet(common.quiet);
            let table = commands::cmd_sweep(&common.load()?, axis)?;
            print!("{}", table.to_table());
        }
        Command::GenSynthetic { n_users, n_items, n_clusters, seq_len, noise_rate, seed, output } => {
            let syn = SyntheticConfig { n_users, n_items, n_clusters, seq_len, noise_rate, seed }.generate()?;
            if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            syn.log.write_tsv(&output)?;
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
