use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use cfrec_core::data::{
    k_core_filter, load_interactions, make_eval_examples, split_users, truncate_histories,
    EvalSet, InteractionLog, UserSplit,
};
use cfrec_core::eval::{evaluate, evaluate_popularity, MetricsReport};
use cfrec_core::model::{load_checkpoint, save_checkpoint, ModelParams, Popularity};
use cfrec_core::trainer::{train, TrainEvent, TrainingData};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

static QUIET: AtomicBool = AtomicBool::new(false);

pub fn set_quiet(quiet: bool) {
    QUIET.store(quiet, Ordering::Relaxed);
}

macro_rules! progress {
    ($($arg:tt)*) => {
        if !QUIET.load(Ordering::Relaxed) {
            eprintln!($($arg)*);
        }
    };
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifacts serialize");
    s.push('\n');
    s
}

/// Counts in the layout of a dataset statistics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub density: f64,
    pub train_users: usize,
    pub val_users: usize,
    pub test_users: usize,
}

impl DatasetSummary {
    pub fn to_table(&self) -> String {
        format!(
            "{:>8} {:>8} {:>13} {:>10}\n{:>8} {:>8} {:>13} {:>9.4}%\n",
            "#users",
            "#items",
            "#interactions",
            "density",
            self.users,
            self.items,
            self.interactions,
            100.0 * self.density
        )
    }
}

/// A preprocessed log together with its user split.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub log: InteractionLog,
    pub split: UserSplit,
}

impl Prepared {
    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            users: self.log.n_users(),
            items: self.log.n_items(),
            interactions: self.log.n_interactions(),
            density: self.log.density(),
            train_users: self.split.train.len(),
            val_users: self.split.val.len(),
            test_users: self.split.test.len(),
        }
    }

    pub fn eval_set(&self, cfg: &RunConfig, split: SplitName) -> CliResult<EvalSet> {
        let users = match split {
            SplitName::Train => &self.split.train,
            SplitName::Val => &self.split.val,
            SplitName::Test => &self.split.test,
        };
        Ok(make_eval_examples(&self.log, users, cfg.train.prefix_frac)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

fn prepared_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("prepared")
}

/// Load or generate, k-core filter, truncate, split.
pub fn prepare_data(cfg: &RunConfig) -> CliResult<Prepared> {
    let raw = match (&cfg.data.path, &cfg.data.synthetic) {
        (Some(p), None) => load_interactions(p)?,
        (None, Some(s)) => s.generate()?.log,
        _ => return Err(CliError::Config("set exactly one of data.path and data.synthetic".into())),
    };
    let log = truncate_histories(&k_core_filter(&raw, cfg.data.k_core), cfg.data.max_len);
    if log.is_empty() {
        return Err(CliError::Data(format!(
            "no interactions survive {}-core filtering",
            cfg.data.k_core
        )));
    }
    let split = split_users(&log, (8, 1, 1), cfg.data.split_seed)?;
    Ok(Prepared { log, split })
}

/// Writes the prepared log, split manifests and summary under
/// `<out_dir>/prepared`.
pub fn cmd_prepare(cfg: &RunConfig) -> CliResult<DatasetSummary> {
    let p = prepare_data(cfg)?;
    let dir = prepared_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    p.log.write_tsv(&dir.join("interactions.tsv"))?;
    for (name, users) in [("train", &p.split.train), ("val", &p.split.val), ("test", &p.split.test)] {
        let mut text = users.join("\n");
        text.push('\n');
        write(&dir.join(format!("{name}_users.txt")), text)?;
    }
    let summary = p.summary();
    write(&dir.join("summary.json"), json(&summary))?;
    Ok(summary)
}

pub fn load_prepared(cfg: &RunConfig) -> CliResult<Prepared> {
    let dir = prepared_dir(cfg);
    let tsv = dir.join("interactions.tsv");
    if !tsv.exists() {
        return Err(CliError::Data(format!(
            "no prepared dataset in {}; run `cfrec prepare` first",
            dir.display()
        )));
    }
    let log = load_interactions(&tsv)?;
    let read = |name: &str| -> CliResult<Vec<String>> {
        let path = dir.join(format!("{name}_users.txt"));
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect())
    };
    let split = UserSplit {
        train: read("train")?,
        val: read("val")?,
        test: read("test")?,
    };
    Ok(Prepared { log, split })
}

/// What a training run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub stopped_early: bool,
    pub best_validation: Option<MetricsReport>,
    pub test_final: MetricsReport,
    pub test_best: MetricsReport,
}

/// Trains on prepared data and writes every artifact under `out_dir`.
pub fn train_run(cfg: &RunConfig, prepared: &Prepared, out_dir: &Path) -> CliResult<TrainSummary> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    write(&out_dir.join("config.toml"), cfg.to_toml())?;
    let data = TrainingData::from_split(&prepared.log, &prepared.split, &cfg.train)?;
    let model = cfg.model_config(data.n_items);
    let hash = cfg.hash();

    let log_path = out_dir.join("train_log.jsonl");
    let mut log_file = fs::File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut validation_lines = String::new();
    let mut sink_error: Option<CliError> = None;
    let mut on_event = |event: TrainEvent<'_>| -> cfrec_core::Result<()> {
        let r: CliResult<()> = (|| match event {
            TrainEvent::Log(rec) => {
                let line = serde_json::to_string(rec).expect("records serialize");
                writeln!(log_file, "{line}").map_err(|e| CliError::io(&log_path, e))
            }
            TrainEvent::Validation { record, params, is_best } => {
                let line = serde_json::json!({
                    "step": record.step,
                    "epoch": record.epoch,
                    "report": record.report,
                });
                let _ = writeln!(validation_lines, "{line}");
                let r50 = record.report.recall_at(50).unwrap_or(f64::NAN);
                progress!("epoch {} step {}: val Recall@50 {:.4}{}", record.epoch, record.step, r50, if is_best { " (best)" } else { "" });
                save_checkpoint(&out_dir.join(format!("ckpt-{}.bin", record.step)), params, &hash)?;
                if is_best {
                    save_checkpoint(&out_dir.join("best.bin"), params, &hash)?;
                }
                Ok(())
            }
        })();
        r.map_err(|e| {
            let msg = e.to_string();
            sink_error = Some(e);
            cfrec_core::Error::Config(msg)
        })
    };
    let outcome = train(&data, &model, &cfg.train, &cfg.causal, &mut on_event);
    if let Some(e) = sink_error {
        return Err(e);
    }
    let outcome = outcome?;
    write(&out_dir.join("validation.jsonl"), validation_lines)?;
    save_checkpoint(&out_dir.join("final.bin"), &outcome.final_params, &hash)?;
    if outcome.best_report.is_none() {
        save_checkpoint(&out_dir.join("best.bin"), &outcome.best_params, &hash)?;
    }

    let test = prepared.eval_set(cfg, SplitName::Test)?;
    let test_final = evaluate(&outcome.final_params, cfg.variant, &test, &[20, 50])?;
    let test_best = evaluate(&outcome.best_params, cfg.variant, &test, &[20, 50])?;
    if let Some(r) = &outcome.best_report {
        write(&out_dir.join("best_validation.json"), r.to_json() + "\n")?;
    }
    write(&out_dir.join("test_final.json"), test_final.to_json() + "\n")?;
    write(&out_dir.join("test_best.json"), test_best.to_json() + "\n")?;
    Ok(TrainSummary {
        steps: outcome.steps,
        stopped_early: outcome.stopped_early,
        best_validation: outcome.best_report,
        test_final,
        test_best,
    })
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<TrainSummary> {
    let prepared = load_prepared(cfg)?;
    train_run(cfg, &prepared, &cfg.out_dir)
}

pub enum Scorer {
    Checkpoint(PathBuf),
    Popularity,
}

fn load_params(cfg: &RunConfig, prepared: &Prepared, path: &Path) -> CliResult<ModelParams> {
    let expected = cfg.model_config(prepared.log.n_items());
    Ok(load_checkpoint(path, Some(&expected))?.0)
}

/// Scores one split and writes `eval-<name>-<split>.json`.
pub fn cmd_eval(cfg: &RunConfig, scorer: &Scorer, split: SplitName, cutoffs: &[usize]) -> CliResult<MetricsReport> {
    let prepared = load_prepared(cfg)?;
    let set = prepared.eval_set(cfg, split)?;
    let (name, report) = match scorer {
        Scorer::Popularity => {
            let pop = Popularity::fit(&prepared.log, &prepared.split.train);
            ("pop".to_string(), evaluate_popularity(&pop, &set, cutoffs)?)
        }
        Scorer::Checkpoint(path) => {
            let params = load_params(cfg, &prepared, path)?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (stem, evaluate(&params, cfg.variant, &set, cutoffs)?)
        }
    };
    write(&cfg.out_dir.join(format!("eval-{name}-{}.json", split.name())), report.to_json() + "\n")?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Which {
    Users,
    Items,
}

/// Writes `id<TAB>v1<TAB>…<TAB>vd` rows. Item rows follow the vocabulary;
/// user rows follow the split manifest, each encoding the user's most recent
/// `train.max_len` behaviors.
pub fn cmd_export_embeddings(
    cfg: &RunConfig,
    checkpoint: &Path,
    which: Which,
    split: SplitName,
    output: Option<&Path>,
) -> CliResult<PathBuf> {
    let prepared = load_prepared(cfg)?;
    let params = load_params(cfg, &prepared, checkpoint)?;
    let mut text = String::new();
    let mut row = |id: &str, v: &[f64]| {
        text.push_str(id);
        for x in v {
            let _ = write!(text, "\t{x:.16e}");
        }
        text.push('\n');
    };
    let default_name = match which {
        Which::Items => {
            let table = params.item_table();
            for i in 0..table.rows() {
                row(prepared.log.item_id(i), table.row(i));
            }
            "embeddings-items.tsv".to_string()
        }
        Which::Users => {
            let users = match split {
                SplitName::Train => &prepared.split.train,
                SplitName::Val => &prepared.split.val,
                SplitName::Test => &prepared.split.test,
            };
            for id in users {
                let hist = &prepared
                    .log
                    .user(id)
                    .ok_or_else(|| CliError::Data(format!("user `{id}` missing from the prepared log")))?
                    .items;
                let recent = &hist[hist.len().saturating_sub(cfg.train.max_len)..];
                let u = params.user_vector(cfg.variant.encoder(), recent)?;
                row(id, u.data());
            }
            format!("embeddings-users-{}.tsv", split.name())
        }
    };
    let path = output.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.join(default_name));
    write(&path, text)?;
    Ok(path)
}

/// Reads a file written by [`cmd_export_embeddings`].
pub fn read_embeddings(path: &Path) -> CliResult<Vec<(String, Vec<f64>)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(n, line)| {
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default().to_string();
            let v = fields
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
            Ok((id, v))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Axis {
    #[value(name = "r_rep", alias = "r-rep")]
    #[serde(rename = "r_rep")]
    RRep,
    #[value(name = "MN", alias = "mn")]
    #[serde(rename = "MN")]
    Mn,
    #[value(name = "K", alias = "k")]
    #[serde(rename = "K")]
    K,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::RRep => "r_rep",
            Axis::Mn => "MN",
            Axis::K => "K",
        }
    }

    /// Grid points as (label, configuration).
    pub fn grid(self, base: &RunConfig) -> CliResult<Vec<(String, RunConfig)>> {
        let point = |label: String, edit: &dyn Fn(&mut RunConfig)| {
            let mut c = base.clone();
            edit(&mut c);
            (label, c)
        };
        Ok(match self {
            Axis::RRep => [0.2, 0.4, 0.5, 0.6, 0.8]
                .into_iter()
                .map(|r| point(format!("r_rep={r}"), &|c| c.causal.r_rep = r))
                .collect(),
            Axis::Mn => [(1, 1), (4, 4), (8, 8), (8, 1), (1, 8)]
                .into_iter()
                .map(|(n, m)| {
                    point(format!("N={n},M={m}"), &|c| {
                        c.causal.n = n;
                        c.causal.m = m;
                    })
                })
                .collect(),
            Axis::K => {
                if base.variant.encoder() != cfrec_core::model::EncoderLevel::Interest {
                    return Err(CliError::Config(format!(
                        "the K axis needs an interest-level variant, not `{}`",
                        base.variant.name()
                    )));
                }
                [4, 10, 20, 30]
                    .into_iter()
                    .map(|k| point(format!("K={k}"), &|c| c.causal.k = k))
                    .collect()
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    /// Test metrics of the best-validation checkpoint.
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: Axis,
    pub variant: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.rows.first() else {
            return out;
        };
        let _ = write!(out, "{:<14}", self.axis.name());
        for m in &first.report.metrics {
            for name in ["Recall", "NDCG", "HR"] {
                let _ = write!(out, " {:>10}", format!("{name}@{}", m.cutoff));
            }
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<14}", row.label);
            for m in &row.report.metrics {
                for v in [m.recall, m.ndcg, m.hitrate] {
                    let _ = write!(out, " {v:>10.4}");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Runs the grid of one axis sequentially, each point under
/// `<out_dir>/sweep-<axis>/<label>`.
pub fn cmd_sweep(cfg: &RunConfig, axis: Axis) -> CliResult<SweepTable> {
    let prepared = load_prepared(cfg)?;
    let root = cfg.out_dir.join(format!("sweep-{}", axis.name()));
    let mut rows = Vec::new();
    for (label, point) in axis.grid(cfg)? {
        point.validate()?;
        progress!("sweep {label}");
        let dir = root.join(label.replace([',', '='], "_"));
        let summary = train_run(&point, &prepared, &dir)?;
        rows.push(SweepRow {
            label,
            report: summary.test_best,
        });
    }
    let table = SweepTable {
        axis,
        variant: cfg.variant.name().to_string(),
        rows,
    };
    write(&root.join("table.txt"), table.to_table())?;
    write(&root.join("table.json"), json(&table))?;
    Ok(table)
}
