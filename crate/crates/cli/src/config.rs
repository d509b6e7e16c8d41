//! Run configuration: one TOML document, with command-line overrides applied
//! as dotted-key assignments before deserialization.

use std::path::{Path, PathBuf};

use ccbm_core::eval::ConceptMatchRule;
use ccbm_core::oracle::PoolProposalStyle;
use ccbm_core::sampler::SamplerConfig;
use ccbm_llm::LlmConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSettings {
    /// Pool definition file.
    pub pool: PathBuf,
    #[serde(default)]
    pub style: PoolProposalStyle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleSettings {
    Pool(PoolSettings),
    Llm(LlmConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Training observations, one JSON object per line.
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    /// Annotation and keyphrase caches. Defaults to `<output_dir>/cache`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    /// True concept questions for the recovery report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    /// Observations used to correlate sampled and true concepts. Defaults to
    /// the training set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panel: Option<PathBuf>,
    /// Start from these questions instead of asking the oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_concepts: Option<Vec<String>>,
    pub oracle: OracleSettings,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub matching: ConceptMatchRule,
}

/// Keys holding paths. Relative values in a config file are taken relative
/// to that file.
const PATH_KEYS: [&str; 7] = [
    "dataset",
    "output_dir",
    "cache_dir",
    "truth",
    "panel",
    "oracle.pool",
    "oracle.templates_dir",
];

fn get_mut<'a>(table: &'a mut Table, key: &str) -> Option<&'a mut Value> {
    let mut parts = key.split('.');
    let first = parts.next()?;
    let mut cur = table.get_mut(first)?;
    for part in parts {
        cur = cur.as_table_mut()?.get_mut(part)?;
    }
    Some(cur)
}

/// Sets `a.b.c = value`, creating intermediate tables.
pub fn set_key(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad config key {key:?}")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{key}: {part} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses the right-hand side of `--set key=value` as a TOML value, falling
/// back to a plain string.
pub fn parse_assignment(raw: &str) -> Result<(String, Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got {raw:?}")))?;
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));
    Ok((key.trim().to_string(), parsed))
}

fn absolutize(base: &Path, table: &mut Table) {
    for key in PATH_KEYS {
        if let Some(Value::String(s)) = get_mut(table, key) {
            let p = Path::new(s.as_str());
            if p.is_relative() {
                *s = base.join(p).display().to_string();
            }
        }
    }
}

/// Reads `path` (if any), applies `overrides` in order and deserializes.
/// Override paths are used as given, so they resolve against the working
/// directory.
pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunConfig, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            let mut t: Table = text
                .parse()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            absolutize(p.parent().unwrap_or(Path::new(".")), &mut t);
            t
        }
        None => Table::new(),
    };
    for (key, value) in overrides {
        set_key(&mut table, key, value.clone())?;
    }
    let cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

impl RunConfig {
    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("cache"))
    }

    /// Checks every referenced input exists and the numeric settings are
    /// usable.
    pub fn validate(&self) -> Result<(), CliError> {
        let must_exist = |what: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(CliError::Config(format!("{what} {} does not exist", p.display())))
            }
        };
        must_exist("dataset", &self.dataset)?;
        if let Some(p) = &self.truth {
            must_exist("truth file", p)?;
        }
        if let Some(p) = &self.panel {
            must_exist("panel dataset", p)?;
        }
        match &self.oracle {
            OracleSettings::Pool(p) => must_exist("pool definition", &p.pool)?,
            OracleSettings::Llm(l) => {
                if let Some(dir) = &l.templates_dir {
                    must_exist("templates directory", dir)?;
                }
                if l.max_in_flight == 0 {
                    return Err(CliError::Config("oracle.max_in_flight must be at least 1".into()));
                }
            }
        }
        if let Some(init) = &self.initial_concepts {
            if init.len() != self.sampler.k {
                return Err(CliError::Config(format!(
                    "{} initial concepts for k = {}",
                    init.len(),
                    self.sampler.k
                )));
            }
        }
        self.sampler.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.matching.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// True concept questions: a JSON array of strings, or an object with a
/// `concepts` array.
pub fn read_truth(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Truth {
        List(Vec<String>),
        Wrapped { concepts: Vec<String> },
    }
    match serde_json::from_str(&text) {
        Ok(Truth::List(v)) | Ok(Truth::Wrapped { concepts: v }) => Ok(v),
        Err(e) => Err(CliError::Config(format!("{}: {e}", path.display()))),
    }
}
