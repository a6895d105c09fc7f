//! Run configuration: built-in defaults, a TOML file, `CFREC_*` environment
//! variables and command-line overrides, applied in that order.

use std::path::{Path, PathBuf};

use cfrec_core::causal::VariantConfig;
use cfrec_core::data::SyntheticConfig;
use cfrec_core::model::{config_hash, ModelConfig, Variant};
use cfrec_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

pub const ENV_PREFIX: &str = "CFREC_";

/// Where interactions come from and how they are preprocessed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Headerless `user<TAB>item<TAB>timestamp` file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Generate the log instead of reading `path`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    pub k_core: usize,
    /// Most recent behaviors kept per user.
    pub max_len: usize,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            synthetic: None,
            k_core: 10,
            max_len: 20,
            split_seed: 0,
        }
    }
}

/// Encoder sizes. The item count comes from the data and the concept count
/// from `causal.k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelShape {
    pub dim: usize,
    pub hidden: usize,
    pub attn_dim: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            dim: 64,
            hidden: 256,
            attn_dim: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelShape,
    pub train: TrainConfig,
    pub causal: VariantConfig,
}

impl RunConfig {
    pub fn defaults(variant: Variant) -> Self {
        Self {
            variant,
            out_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            model: ModelShape::default(),
            train: TrainConfig::new(variant),
            causal: VariantConfig::new(variant),
        }
    }

    pub fn model_config(&self, n_items: usize) -> ModelConfig {
        ModelConfig {
            n_items,
            dim: self.model.dim,
            hidden: self.model.hidden,
            attn_dim: self.model.attn_dim,
            n_concepts: self.causal.k,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.train.variant != self.variant || self.causal.variant != self.variant {
            return Err(CliError::Config(format!(
                "variant `{}` disagrees with train.variant `{}` or causal.variant `{}`",
                self.variant.name(),
                self.train.variant.name(),
                self.causal.variant.name()
            )));
        }
        if self.data.path.is_some() && self.data.synthetic.is_some() {
            return Err(CliError::Config("set only one of data.path and data.synthetic".into()));
        }
        if self.data.k_core == 0 || self.data.max_len == 0 {
            return Err(CliError::Config("data.k_core and data.max_len must be at least 1".into()));
        }
        for (name, v) in [
            ("model.dim", self.model.dim),
            ("model.hidden", self.model.hidden),
            ("model.attn_dim", self.model.attn_dim),
        ] {
            if v == 0 {
                return Err(CliError::Config(format!("{name} must be positive")));
            }
        }
        self.train.validate()?;
        self.causal.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize")
    }

    /// Hash stored in checkpoints; independent of the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        config_hash(&c)
    }
}

/// One `key.path = value` override.
#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: Value,
}

impl Override {
    /// Parses `key.path=value`; the value is read as a TOML literal when
    /// possible and as a plain string otherwise.
    pub fn parse(text: &str) -> CliResult<Self> {
        let (key, raw) = text
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{text}` is not of the form key=value")))?;
        Ok(Self::new(key.trim(), raw.trim()))
    }

    pub fn new(key: &str, raw: &str) -> Self {
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        Self {
            key: key.to_string(),
            value,
        }
    }
}

/// `CFREC_TRAIN__EPOCHS=3` becomes `train.epochs = 3`.
pub fn env_overrides(vars: impl IntoIterator<Item = (String, String)>) -> Vec<Override> {
    let mut out: Vec<Override> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            let key = rest.to_ascii_lowercase().replace("__", ".");
            (key != "config").then(|| Override::new(&key, &v))
        })
        .collect();
    out.sort_by(|a, b| a.key.cmp(&b.key));
    out
}

fn read_file(path: &Path) -> CliResult<Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn set_path(table: &mut Table, key: &str, value: Value) -> CliResult<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        cur = match cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new())) {
            Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("`{key}`: `{p}` is not a section"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Keys that exist in no default configuration are typos.
fn check_keys(given: &Table, reference: &Table, prefix: &str) -> CliResult<()> {
    for (k, v) in given {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        if path == "data.path" || path == "data.synthetic" {
            continue;
        }
        match (reference.get(k).or_else(|| reference.get(&k.to_ascii_lowercase())), v) {
            (None, _) => return Err(CliError::Config(format!("unknown key `{path}`"))),
            (Some(Value::Table(r)), Value::Table(g)) => check_keys(g, r, &path)?,
            _ => {}
        }
    }
    Ok(())
}

fn variant_of(table: &Table) -> CliResult<Option<Variant>> {
    match table.get("variant") {
        None => Ok(None),
        Some(Value::String(s)) => s.parse().map(Some).map_err(|e: cfrec_core::Error| CliError::Config(e.to_string())),
        Some(v) => Err(CliError::Config(format!("variant must be a string, got {v}"))),
    }
}

/// Builds a configuration from an optional file plus overrides, later
/// overrides winning. Per-variant defaults follow the final `variant`.
pub fn load(file: Option<&Path>, overrides: &[Override]) -> CliResult<RunConfig> {
    let mut given = match file {
        Some(p) => read_file(p)?,
        None => Table::new(),
    };
    for o in overrides {
        set_path(&mut given, &o.key, o.value.clone())?;
    }
    let variant = variant_of(&given)?.unwrap_or(Variant::Item);
    let defaults = Table::try_from(RunConfig::defaults(variant)).expect("defaults convert to a table");
    check_keys(&given, &defaults, "")?;
    for section in ["train", "causal"] {
        set_path(&mut given, &format!("{section}.variant"), Value::String(variant.name().into()))?;
    }
    let mut merged = defaults;
    merge(&mut merged, given);
    let cfg: RunConfig = Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
