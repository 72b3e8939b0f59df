//! Held-out input configurations: schema, file format, and a deterministic
//! template generator.
//!
//! The on-disk document is `{configs: [{name, category, params}]}`. Task
//! runners find it through the `ARENA_TESTCASE_FILE` environment variable.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// File name of the injected document at the workspace root.
pub const UNSEEN_CONFIG_FILE: &str = "unseen_configs.yaml";
/// Environment variable pointing task runners at the active test cases.
pub const TESTCASE_FILE_ENV: &str = "ARENA_TESTCASE_FILE";

#[derive(Debug, thiserror::Error)]
pub enum UnseenError {
    #[error("unseen config set for {0} is empty")]
    Empty(String),
    #[error("duplicate unseen config name `{0}`")]
    DuplicateName(String),
    #[error("failed to read or write {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneralizationCategory {
    EdgeCase,
    ScaleUp,
    ScaleDown,
    AlignmentStress,
    Asymmetric,
    ProductionRealistic,
}

impl GeneralizationCategory {
    pub const ALL: [GeneralizationCategory; 6] = [
        GeneralizationCategory::EdgeCase,
        GeneralizationCategory::ScaleUp,
        GeneralizationCategory::ScaleDown,
        GeneralizationCategory::AlignmentStress,
        GeneralizationCategory::Asymmetric,
        GeneralizationCategory::ProductionRealistic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GeneralizationCategory::EdgeCase => "edge_case",
            GeneralizationCategory::ScaleUp => "scale_up",
            GeneralizationCategory::ScaleDown => "scale_down",
            GeneralizationCategory::AlignmentStress => "alignment_stress",
            GeneralizationCategory::Asymmetric => "asymmetric",
            GeneralizationCategory::ProductionRealistic => "production_realistic",
        }
    }
}

impl fmt::Display for GeneralizationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A parameter value: a scalar or a list of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    List(Vec<ParamValue>),
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnseenConfig {
    pub name: String,
    pub category: GeneralizationCategory,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

/// Wire shape of `unseen_configs.yaml`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UnseenConfigFile {
    pub configs: Vec<UnseenConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnseenConfigSet {
    pub task_id: String,
    pub configs: Vec<UnseenConfig>,
}

impl UnseenConfigSet {
    pub fn new(task_id: impl Into<String>, configs: Vec<UnseenConfig>) -> Result<Self, UnseenError> {
        let set = UnseenConfigSet {
            task_id: task_id.into(),
            configs,
        };
        set.check()?;
        Ok(set)
    }

    pub fn check(&self) -> Result<(), UnseenError> {
        if self.configs.is_empty() {
            return Err(UnseenError::Empty(self.task_id.clone()));
        }
        let mut seen = BTreeSet::new();
        for c in &self.configs {
            if !seen.insert(c.name.as_str()) {
                return Err(UnseenError::DuplicateName(c.name.clone()));
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> UnseenConfigFile {
        UnseenConfigFile {
            configs: self.configs.clone(),
        }
    }

    /// Renders the injected document.
    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(&self.to_file()).expect("unseen configs serialize")
    }

    /// The document restricted to a single config, for one evaluation round.
    pub fn single_yaml(config: &UnseenConfig) -> String {
        let file = UnseenConfigFile {
            configs: vec![config.clone()],
        };
        serde_yaml::to_string(&file).expect("unseen configs serialize")
    }

    pub fn load(path: &Path, task_id: &str) -> Result<Self, UnseenError> {
        let text = std::fs::read_to_string(path).map_err(|e| UnseenError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let file: UnseenConfigFile = serde_yaml::from_str(&text).map_err(|e| UnseenError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::new(task_id, file.configs)
    }
}

/// Inputs to the template generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    /// The task's dominant dimension on its seen cases.
    pub base_size: i64,
    /// A production-like size for the dominant dimension.
    #[serde(default = "default_production_size")]
    pub production_size: i64,
}

fn default_production_size() -> i64 {
    4096
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            base_size: 256,
            production_size: default_production_size(),
        }
    }
}

/// Prime sizes used for alignment stress.
pub const ALIGNMENT_PRIMES: [i64; 3] = [37, 131, 4003];

/// Emits eight configs covering all six categories: one each for edge case,
/// scale-up (4x), scale-down (1/4), asymmetric and production-realistic,
/// plus three prime-sized alignment-stress configs. Output depends only on
/// the inputs.
pub fn generate_unseen(task_id: &str, spec: &GeneratorSpec) -> UnseenConfigSet {
    let base = spec.base_size.max(1);
    let sized = |name: &str, category, size: i64, extra: &[(&str, i64)]| {
        let mut params = BTreeMap::new();
        params.insert("size".to_string(), ParamValue::Int(size));
        for (k, v) in extra {
            params.insert(k.to_string(), ParamValue::Int(*v));
        }
        UnseenConfig {
            name: name.to_string(),
            category,
            params,
        }
    };
    use GeneralizationCategory::*;
    let mut configs = vec![
        sized("edge_batch1", EdgeCase, 1, &[("batch", 1)]),
        sized("scale_up_4x", ScaleUp, base * 4, &[]),
        sized("scale_down_4x", ScaleDown, (base / 4).max(1), &[]),
    ];
    for p in ALIGNMENT_PRIMES {
        configs.push(sized(&format!("align_prime_{p}"), AlignmentStress, p, &[]));
    }
    configs.push(sized("asym_m1_n65536", Asymmetric, 65536, &[("m", 1), ("n", 65536)]));
    configs.push(sized("production", ProductionRealistic, spec.production_size, &[]));
    UnseenConfigSet {
        task_id: task_id.to_string(),
        configs,
    }
}
