//! Run configuration.
//!
//! Values are layered: built-in defaults, then the TOML file, then `DKTO_*`
//! environment variables, then `--set key=value` flags. Every key can be set at
//! every layer, and unknown keys are rejected at each one.
//!
//! Environment variables name a key as `DKTO_<SECTION>_<KEY>` in upper case, e.g.
//! `DKTO_ALIGN_BATCH_SIZE=256` for `align.batch_size`, or `DKTO_SEED=3` for a
//! top-level key.

use std::path::Path;
use std::str::FromStr;

use dkto_core::alignment::AlignmentConfig;
use dkto_core::datasets::{PartitionRule, SuiteParams};
use dkto_core::ddpm::{ModelConfig, PretrainConfig, ScheduleSpec};
use dkto_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

pub const ENV_PREFIX: &str = "DKTO_";

/// Environment variables read by the argument parser rather than the config layer.
const RESERVED_ENV: &[&str] = &["DKTO_CONFIG"];

/// Where alignment feedback comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSource {
    /// The generating Gaussian of each sample decides its label.
    Labeled,
    /// Random pairwise comparisons, split with the at-least-once rule.
    AtLeastOnce,
    /// Random pairwise comparisons, split with the win-only rule.
    WinOnly,
}

impl FeedbackSource {
    pub fn partition_rule(self) -> Option<PartitionRule> {
        match self {
            FeedbackSource::Labeled => None,
            FeedbackSource::AtLeastOnce => Some(PartitionRule::AtLeastOnce),
            FeedbackSource::WinOnly => Some(PartitionRule::WinOnly),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackConfig {
    pub source: FeedbackSource,
    /// Comparisons drawn when the source is pairwise.
    pub pairs: usize,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            source: FeedbackSource::Labeled,
            pairs: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub n: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { n: 3_500 }
    }
}

/// Everything a run depends on besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Alignment objective: `kto`, a utility name, `dpo_pair`, `sft` or `csft`.
    pub objective: String,
    pub model: ModelConfig,
    pub schedule: ScheduleSpec,
    pub data: SuiteParams,
    pub feedback: FeedbackConfig,
    pub pretrain: PretrainConfig,
    pub align: AlignmentConfig,
    pub sample: SampleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            objective: "kto".into(),
            model: ModelConfig::default(),
            schedule: ScheduleSpec::default(),
            data: SuiteParams::default(),
            feedback: FeedbackConfig::default(),
            pretrain: PretrainConfig::default(),
            align: AlignmentConfig::default(),
            sample: SampleConfig::default(),
        }
    }
}

/// A `key=value` override, with `key` dotted as `section.key`.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: String,
}

impl FromStr for Override {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {s:?}"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("empty key in {s:?}"));
        }
        Ok(Self {
            key: key.to_owned(),
            value: value.trim().to_owned(),
        })
    }
}

impl RunConfig {
    /// Defaults overlaid with `file`, `env` and `overrides`, in that order.
    pub fn resolve<I>(file: Option<&Path>, env: I, overrides: &[Override]) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = Self::default().to_table();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            let parsed: Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
                path: Some(path.to_path_buf()),
                line: line_of(&text, e.span().map(|s| s.start)),
                message: e.message().to_owned(),
            })?;
            merge(&mut table, parsed, "")?;
        }
        let mut env: Vec<_> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && !RESERVED_ENV.contains(&k.as_str()))
            .collect();
        env.sort();
        for (name, value) in env {
            let key = env_key(&table, &name)?;
            set(&mut table, &key, &value).map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        for o in overrides {
            set(&mut table, &o.key, &o.value).map_err(|e| Error::Config(format!("--set {}: {e}", o.key)))?;
        }
        Self::from_table(table)
    }

    /// Returns a copy with one more override applied.
    pub fn with(&self, key: &str, value: &str) -> Result<Self> {
        let mut table = self.to_table();
        set(&mut table, key, value).map_err(|e| Error::Config(format!("{key}: {e}")))?;
        Self::from_table(table)
    }

    fn to_table(&self) -> Table {
        match Value::try_from(self) {
            Ok(Value::Table(t)) => t,
            // Every field is a plain number, string, list or table.
            other => unreachable!("config serializes to a table, got {other:?}"),
        }
    }

    fn from_table(table: Table) -> Result<Self> {
        let cfg: Self = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.align.validate()?;
        self.schedule.build()?;
        dkto_core::alignment::Objective::parse(&self.objective, self.align.utility)?;
        if self.pretrain.batch_size == 0 {
            return Err(Error::Config("pretrain.batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        // Serialization cannot fail: keys are strings and values are finite or plain.
        toml::to_string(self).unwrap_or_default()
    }

    /// SHA-256 of [`RunConfig::to_toml`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn line_of(text: &str, offset: Option<usize>) -> u64 {
    offset.map_or(0, |o| {
        text.as_bytes()[..o.min(text.len())]
            .iter()
            .filter(|&&b| b == b'\n')
            .count() as u64
            + 1
    })
}

fn merge(base: &mut Table, over: Table, prefix: &str) -> Result<()> {
    for (k, v) in over {
        let path = format!("{prefix}{k}");
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o, &format!("{path}."))?,
            (Some(slot), v) => *slot = v,
            (None, _) => return Err(Error::Config(format!("unknown key {path:?}"))),
        }
    }
    Ok(())
}

fn env_key(table: &Table, name: &str) -> Result<String> {
    let rest = name[ENV_PREFIX.len()..].to_ascii_lowercase();
    if table.get(&rest).is_some_and(|v| !v.is_table()) {
        return Ok(rest);
    }
    if let Some((section, key)) = rest.split_once('_') {
        if table.get(section).is_some_and(Value::is_table) {
            return Ok(format!("{section}.{key}"));
        }
    }
    Err(Error::Config(format!(
        "environment variable {name} names no config key"
    )))
}

/// Sets a dotted key, parsing `raw` according to the type already stored there.
fn set(table: &mut Table, key: &str, raw: &str) -> std::result::Result<(), String> {
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        let slot = cur.get_mut(part).ok_or_else(|| format!("unknown key {key:?}"))?;
        if parts.peek().is_none() {
            *slot = parse_like(slot, raw)?;
            return Ok(());
        }
        cur = slot
            .as_table_mut()
            .ok_or_else(|| format!("{part:?} is not a section"))?;
    }
    Err(format!("empty key {key:?}"))
}

fn parse_like(current: &Value, raw: &str) -> std::result::Result<Value, String> {
    let bad = |what: &str| format!("expected {what}, got {raw:?}");
    Ok(match current {
        Value::String(_) => Value::String(raw.trim_matches('"').to_owned()),
        Value::Integer(_) => Value::Integer(raw.replace('_', "").parse().map_err(|_| bad("an integer"))?),
        Value::Float(_) => Value::Float(raw.parse().map_err(|_| bad("a number"))?),
        Value::Boolean(_) => Value::Boolean(raw.parse().map_err(|_| bad("true or false"))?),
        Value::Table(_) => return Err("cannot assign a whole section".into()),
        Value::Array(_) | Value::Datetime(_) => {
            let doc: Table = format!("v = {raw}").parse().map_err(|_| bad("a TOML value"))?;
            doc["v"].clone()
        }
    })
}
