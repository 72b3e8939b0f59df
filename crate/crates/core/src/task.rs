//! Task discovery, `config.yaml` parsing, and structural/executable validation.
//!
//! A task is a self-contained directory holding kernel sources, evaluation
//! scripts, and a `config.yaml`. The presence of `config.yaml` marks a
//! directory as a task; its id is the directory path relative to the tasks
//! root, always `/`-separated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use globset::{Glob, GlobBuilder, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::eval::{self, Phase, PhaseOptions};

/// File name that marks a directory as a task.
pub const TASK_CONFIG_FILE: &str = "config.yaml";

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("tasks root {0} is not a readable directory")]
    UnreadableRoot(PathBuf),
    #[error("{path}: missing required field `{field}`")]
    MissingField { path: PathBuf, field: &'static str },
    #[error("{path}: field `{field}` must be a non-empty list")]
    EmptyField { path: PathBuf, field: &'static str },
    #[error("{path}: unknown task_type `{value}`")]
    UnknownTaskType { path: PathBuf, value: String },
    #[error("{path}: malformed config: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("invalid task filter `{pattern}`: {message}")]
    BadFilter { pattern: String, message: String },
}

/// Source/target programming-model pair of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    #[serde(rename = "hip2hip")]
    Hip2Hip,
    #[serde(rename = "triton2triton")]
    Triton2Triton,
    #[serde(rename = "torch2hip")]
    Torch2Hip,
}

impl TaskType {
    pub const ALL: [TaskType; 3] = [TaskType::Hip2Hip, TaskType::Triton2Triton, TaskType::Torch2Hip];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::Hip2Hip => "hip2hip",
            TaskType::Triton2Triton => "triton2triton",
            TaskType::Torch2Hip => "torch2hip",
        }
    }

    /// Human category label used in report titles.
    pub fn label(self) -> &'static str {
        match self {
            TaskType::Hip2Hip => "HIP-to-HIP",
            TaskType::Triton2Triton => "Triton-to-Triton",
            TaskType::Torch2Hip => "PyTorch-to-HIP",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task_type `{s}`"))
    }
}

/// A parsed task configuration bound to its directory.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub task_id: String,
    pub task_dir: PathBuf,
    pub task_type: TaskType,
    pub source_file_paths: Vec<String>,
    pub target_kernel_functions: Vec<String>,
    pub compile_command: Vec<String>,
    pub correctness_command: Vec<String>,
    pub performance_command: Vec<String>,
    /// Empty when the config has no `prompt.instructions`.
    pub prompt_instructions: String,
    pub source_attribution: Option<String>,
    /// Unrecognized top-level keys, kept so re-serialization is lossless.
    pub extra: BTreeMap<String, serde_yaml::Value>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct PromptBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instructions: Option<String>,
}

/// On-disk shape of `config.yaml`. Every field is optional here so that a
/// missing key can be reported by name.
#[derive(Debug, Default, Serialize, Deserialize)]
struct RawTaskConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_file_path: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_kernel_functions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    compile_command: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    correctness_command: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    performance_command: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prompt: Option<PromptBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_attribution: Option<String>,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_yaml::Value>,
}

impl TaskConfig {
    /// Parses config text. `origin` is only used in error messages.
    pub fn from_yaml_str(
        text: &str,
        task_id: impl Into<String>,
        task_dir: impl Into<PathBuf>,
        origin: &Path,
    ) -> Result<Self, TaskError> {
        let raw: RawTaskConfig = serde_yaml::from_str(text).map_err(|e| TaskError::Malformed {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;

        let required = |value: Option<Vec<String>>, field: &'static str| {
            let list = value.ok_or_else(|| TaskError::MissingField {
                path: origin.to_path_buf(),
                field,
            })?;
            if list.is_empty() {
                return Err(TaskError::EmptyField {
                    path: origin.to_path_buf(),
                    field,
                });
            }
            Ok(list)
        };

        let source_file_paths = required(raw.source_file_path, "source_file_path")?;
        let target_kernel_functions = required(raw.target_kernel_functions, "target_kernel_functions")?;
        let compile_command = required(raw.compile_command, "compile_command")?;
        let correctness_command = required(raw.correctness_command, "correctness_command")?;
        let performance_command = required(raw.performance_command, "performance_command")?;
        let type_str = raw.task_type.ok_or_else(|| TaskError::MissingField {
            path: origin.to_path_buf(),
            field: "task_type",
        })?;
        let task_type = type_str.parse().map_err(|_| TaskError::UnknownTaskType {
            path: origin.to_path_buf(),
            value: type_str.clone(),
        })?;

        Ok(TaskConfig {
            task_id: task_id.into(),
            task_dir: task_dir.into(),
            task_type,
            source_file_paths,
            target_kernel_functions,
            compile_command,
            correctness_command,
            performance_command,
            prompt_instructions: raw.prompt.and_then(|p| p.instructions).unwrap_or_default(),
            source_attribution: raw.source_attribution,
            extra: raw.extra,
        })
    }

    /// Serializes back to the `config.yaml` shape.
    pub fn to_yaml_string(&self) -> String {
        let raw = RawTaskConfig {
            source_file_path: Some(self.source_file_paths.clone()),
            target_kernel_functions: Some(self.target_kernel_functions.clone()),
            compile_command: Some(self.compile_command.clone()),
            correctness_command: Some(self.correctness_command.clone()),
            performance_command: Some(self.performance_command.clone()),
            task_type: Some(self.task_type.as_str().to_string()),
            prompt: (!self.prompt_instructions.is_empty()).then(|| PromptBlock {
                instructions: Some(self.prompt_instructions.clone()),
            }),
            source_attribution: self.source_attribution.clone(),
            extra: self.extra.clone(),
        };
        serde_yaml::to_string(&raw).expect("task config serializes")
    }

    pub fn commands(&self, phase: Phase) -> &[String] {
        match phase {
            Phase::Compile => &self.compile_command,
            Phase::Correctness => &self.correctness_command,
            Phase::Performance => &self.performance_command,
        }
    }
}

/// Parses a `config.yaml`. The task id defaults to the name of the
/// directory containing the file; [`discover_tasks`] replaces it with the
/// root-relative path.
pub fn parse_task_config(path: &Path) -> Result<TaskConfig, TaskError> {
    let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let task_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let task_id = task_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    TaskConfig::from_yaml_str(&text, task_id, task_dir, path)
}

/// A task directory whose config could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryDiagnostic {
    pub task_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Discovery {
    pub tasks: Vec<TaskConfig>,
    pub skipped: Vec<DiscoveryDiagnostic>,
}

fn build_filters(filters: &[String]) -> Result<GlobSet, TaskError> {
    let mut builder = GlobSetBuilder::new();
    let patterns: Vec<&str> = if filters.is_empty() {
        vec!["**"]
    } else {
        filters.iter().map(String::as_str).collect()
    };
    for pattern in patterns {
        let glob: Glob =
            GlobBuilder::new(pattern)
                .literal_separator(true)
                .build()
                .map_err(|e| TaskError::BadFilter {
                    pattern: pattern.to_string(),
                    message: e.to_string(),
                })?;
        builder.add(glob);
    }
    builder.build().map_err(|e| TaskError::BadFilter {
        pattern: filters.join(","),
        message: e.to_string(),
    })
}

/// Finds every task under `root` whose id matches one of `filters`
/// (all tasks when `filters` is empty). Results are sorted by task id.
pub fn discover_tasks(root: &Path, filters: &[String]) -> Result<Discovery, TaskError> {
    if !root.is_dir() || std::fs::read_dir(root).is_err() {
        return Err(TaskError::UnreadableRoot(root.to_path_buf()));
    }
    let globs = build_filters(filters)?;

    let mut discovery = Discovery::default();
    for entry in WalkDir::new(root).follow_links(true).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                tracing::warn!("skipping unreadable entry under {}: {e}", root.display());
                continue;
            }
        };
        if !entry.file_type().is_file() || entry.file_name() != TASK_CONFIG_FILE {
            continue;
        }
        let Some(task_dir) = entry.path().parent() else {
            continue;
        };
        let Ok(rel) = task_dir.strip_prefix(root) else { continue };
        let task_id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        // A config.yaml at the root itself is not a task.
        if task_id.is_empty() || !globs.is_match(&task_id) {
            continue;
        }
        match parse_task_config(entry.path()) {
            Ok(mut cfg) => {
                cfg.task_id = task_id;
                discovery.tasks.push(cfg);
            }
            Err(e) => discovery.skipped.push(DiscoveryDiagnostic {
                task_id,
                message: e.to_string(),
            }),
        }
    }
    discovery.tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    discovery.skipped.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok(discovery)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub task_id: String,
    pub structural_ok: bool,
    pub executable_ok: bool,
    pub issues: Vec<ValidationIssue>,
}

/// Checks a pristine copy of a task. Executable checks only run when the
/// structure is sound, and include a parse of the performance result file
/// so that a passing task is guaranteed to yield a usable baseline.
pub fn validate_task(cfg: &TaskConfig, workdir: &Path, opts: &PhaseOptions) -> ValidationReport {
    let mut issues = Vec::new();
    let error = |issues: &mut Vec<ValidationIssue>, message: String| {
        issues.push(ValidationIssue {
            severity: Severity::Error,
            message,
        })
    };

    for rel in &cfg.source_file_paths {
        if !workdir.join(rel).is_file() {
            error(&mut issues, format!("source file `{rel}` not found"));
        }
    }
    for phase in Phase::ALL {
        if cfg.commands(phase).iter().all(|c| c.trim().is_empty()) {
            error(&mut issues, format!("{phase} command list is empty"));
        }
    }
    if cfg.target_kernel_functions.is_empty() {
        error(&mut issues, "no target kernel functions".to_string());
    }
    let structural_ok = issues.is_empty();

    let mut executable_ok = false;
    if structural_ok {
        executable_ok = true;
        for phase in Phase::ALL {
            let outcome = eval::run_phase(workdir, cfg.commands(phase), phase, opts);
            if !outcome.passed {
                error(
                    &mut issues,
                    format!(
                        "{phase} failed on the unmodified task (exit {:?}, log {})",
                        outcome.exit_code,
                        outcome.log_path.display()
                    ),
                );
                executable_ok = false;
                break;
            }
        }
        if executable_ok {
            if let Err(e) = eval::parse_perf_output(workdir) {
                error(&mut issues, format!("performance output unusable: {e}"));
                executable_ok = false;
            }
        }
    }

    ValidationReport {
        task_id: cfg.task_id.clone(),
        structural_ok,
        executable_ok,
        issues,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FUSED_MOE: &str = r#"source_file_path:
  - source/triton_fused_moe.py
target_kernel_functions:
  - fused_moe_kernel
compile_command:
  - python3 scripts/task_runner.py compile
correctness_command:
  - python3 scripts/task_runner.py correctness
performance_command:
  - python3 scripts/task_runner.py performance
task_type: triton2triton
prompt:
  instructions: |
    Optimize the Triton fused_moe_kernel for maximum
    GPU throughput. Must maintain the same function
    signature for fused_moe. Output must match
    reference within atol=5e-2, rtol=5e-2 for float16.
"#;

    fn parse(text: &str) -> Result<TaskConfig, TaskError> {
        TaskConfig::from_yaml_str(text, "t", "/tmp/t", Path::new("config.yaml"))
    }

    #[test]
    fn parses_fused_moe_config() {
        let cfg = parse(FUSED_MOE).unwrap();
        assert_eq!(cfg.task_type, TaskType::Triton2Triton);
        assert_eq!(cfg.source_file_paths, vec!["source/triton_fused_moe.py"]);
        assert_eq!(cfg.target_kernel_functions, vec!["fused_moe_kernel"]);
        assert_eq!(cfg.compile_command, vec!["python3 scripts/task_runner.py compile"]);
        assert!(cfg
            .prompt_instructions
            .starts_with("Optimize the Triton fused_moe_kernel"));
        assert!(cfg.extra.is_empty());
    }

    #[test]
    fn missing_prompt_block_leaves_instructions_empty() {
        let text = FUSED_MOE.split("prompt:").next().unwrap();
        let cfg = parse(text).unwrap();
        assert!(cfg.prompt_instructions.is_empty());
    }

    #[test]
    fn unknown_task_type_is_rejected() {
        let text = FUSED_MOE.replace("task_type: triton2triton", "task_type: cuda2cuda");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("unknown task_type"), "{err}");
    }

    #[test]
    fn missing_field_is_named() {
        let text = FUSED_MOE.replace("compile_command:\n  - python3 scripts/task_runner.py compile\n", "");
        let err = parse(&text).unwrap_err();
        assert!(
            matches!(
                err,
                TaskError::MissingField {
                    field: "compile_command",
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn empty_command_list_is_rejected() {
        let text = FUSED_MOE.replace(
            "performance_command:\n  - python3 scripts/task_runner.py performance\n",
            "performance_command: []\n",
        );
        assert!(matches!(
            parse(&text),
            Err(TaskError::EmptyField {
                field: "performance_command",
                ..
            })
        ));
    }

    #[test]
    fn extra_fields_survive_round_trip() {
        let text = format!("{FUSED_MOE}tolerance:\n  atol: 0.05\n");
        let cfg = parse(&text).unwrap();
        assert!(cfg.extra.contains_key("tolerance"));
        let again = parse(&cfg.to_yaml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn discovery_of_empty_root_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let found = discover_tasks(dir.path(), &["**".into()]).unwrap();
        assert!(found.tasks.is_empty() && found.skipped.is_empty());
    }

    #[test]
    fn discovery_rejects_missing_root() {
        let err = discover_tasks(Path::new("/definitely/not/here"), &[]).unwrap_err();
        assert!(matches!(err, TaskError::UnreadableRoot(_)));
    }

    fn write_task(root: &Path, rel: &str, body: &str) {
        let dir = root.join(rel);
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join(TASK_CONFIG_FILE), body).unwrap();
    }

    #[test]
    fn discovery_filters_and_orders() {
        let dir = tempfile::tempdir().unwrap();
        write_task(dir.path(), "triton2triton/vllm/triton_fused_moe", FUSED_MOE);
        let hip = FUSED_MOE.replace("triton2triton", "hip2hip");
        write_task(dir.path(), "hip2hip/gpumode/gelu", &hip);
        write_task(dir.path(), "hip2hip/gpumode/broken", "task_type: [");

        let only_triton = discover_tasks(dir.path(), &["triton2triton/**".into()]).unwrap();
        assert_eq!(only_triton.tasks.len(), 1);
        assert_eq!(only_triton.tasks[0].task_id, "triton2triton/vllm/triton_fused_moe");
        assert_eq!(only_triton.tasks[0].task_type, TaskType::Triton2Triton);
        assert!(only_triton.skipped.is_empty());

        let all = discover_tasks(dir.path(), &["**".into()]).unwrap();
        let ids: Vec<_> = all.tasks.iter().map(|t| t.task_id.as_str()).collect();
        assert_eq!(ids, vec!["hip2hip/gpumode/gelu", "triton2triton/vllm/triton_fused_moe"]);
        assert_eq!(all.skipped.len(), 1);
        assert_eq!(all.skipped[0].task_id, "hip2hip/gpumode/broken");

        // `*` does not cross directory boundaries.
        let shallow = discover_tasks(dir.path(), &["hip2hip/*".into()]).unwrap();
        assert!(shallow.tasks.is_empty());
        let again = discover_tasks(dir.path(), &["**".into()]).unwrap();
        assert_eq!(all.tasks, again.tasks);
    }

    fn ident() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_]{0,12}"
    }

    fn command() -> impl Strategy<Value = String> {
        "[a-z0-9_ ./-]{1,30}".prop_filter("non-blank", |s| !s.trim().is_empty())
    }

    proptest! {
        #[test]
        fn parse_serialize_parse_round_trips(
            sources in prop::collection::vec("[a-z]{1,8}/[a-z_]{1,10}\\.(py|hip|cpp)", 1..4),
            targets in prop::collection::vec(ident(), 1..4),
            compile in prop::collection::vec(command(), 1..3),
            correctness in prop::collection::vec(command(), 1..3),
            performance in prop::collection::vec(command(), 1..3),
            ty in prop::sample::select(TaskType::ALL.to_vec()),
            instructions in proptest::option::of("[A-Za-z0-9 .,=\n-]{1,80}"),
        ) {
            let instructions = instructions.unwrap_or_default();
            let cfg = TaskConfig {
                task_id: "t".into(),
                task_dir: "/tmp/t".into(),
                task_type: ty,
                source_file_paths: sources,
                target_kernel_functions: targets,
                compile_command: compile,
                correctness_command: correctness,
                performance_command: performance,
                prompt_instructions: instructions,
                source_attribution: None,
                extra: BTreeMap::new(),
            };
            let once = parse(&cfg.to_yaml_string()).unwrap();
            prop_assert_eq!(&once, &cfg);
            let twice = parse(&once.to_yaml_string()).unwrap();
            prop_assert_eq!(twice, once);
        }
    }
}
