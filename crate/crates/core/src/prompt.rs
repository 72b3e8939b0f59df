//! Eight-section agent prompt assembly and the GPU architecture registry.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::task::{TaskConfig, TaskType};

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("unknown GPU model `{model}`; known models: {known}")]
    UnknownGpu { model: String, known: String },
    #[error("cheatsheet `{role}` for {model} is not configured")]
    CheatsheetNotConfigured { model: String, role: &'static str },
    #[error("cheatsheet {path} unreadable: {message}")]
    CheatsheetMissing { path: PathBuf, message: String },
    #[error("invalid architecture registry {path}: {message}")]
    BadRegistry { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheatsheetRole {
    ArchGuide,
    HipBestPractices,
    TritonBestPractices,
}

impl CheatsheetRole {
    fn key(self) -> &'static str {
        match self {
            CheatsheetRole::ArchGuide => "arch_guide",
            CheatsheetRole::HipBestPractices => "hip_best_practices",
            CheatsheetRole::TritonBestPractices => "triton_best_practices",
        }
    }
}

/// One entry of the architecture registry document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchRecord {
    pub arch_token: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch_guide: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hip_best_practices: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triton_best_practices: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GpuArchEntry {
    pub gpu_model: String,
    pub arch_token: String,
    /// Paths relative to the cheatsheet root.
    pub cheatsheet_paths: BTreeMap<CheatsheetRole, PathBuf>,
}

impl GpuArchEntry {
    fn from_record(gpu_model: &str, rec: &ArchRecord) -> Self {
        let mut cheatsheet_paths = BTreeMap::new();
        for (role, path) in [
            (CheatsheetRole::ArchGuide, &rec.arch_guide),
            (CheatsheetRole::HipBestPractices, &rec.hip_best_practices),
            (CheatsheetRole::TritonBestPractices, &rec.triton_best_practices),
        ] {
            if let Some(p) = path {
                cheatsheet_paths.insert(role, p.clone());
            }
        }
        GpuArchEntry {
            gpu_model: gpu_model.to_string(),
            arch_token: rec.arch_token.clone(),
            cheatsheet_paths,
        }
    }
}

/// GPU model -> architecture token and cheatsheet files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchRegistry {
    entries: Vec<GpuArchEntry>,
}

impl ArchRegistry {
    /// Built-in entries for MI300X (gfx942) and MI355X (gfx950).
    pub fn builtin() -> Self {
        let rec = |token: &str, dir: &str| ArchRecord {
            arch_token: token.to_string(),
            arch_guide: Some(format!("{dir}/arch_guide.md").into()),
            hip_best_practices: Some("hip_best_practices.md".into()),
            triton_best_practices: Some("triton_best_practices.md".into()),
        };
        let mut doc = BTreeMap::new();
        doc.insert("MI300X".to_string(), rec("gfx942", "MI300X"));
        doc.insert("MI355X".to_string(), rec("gfx950", "MI355X"));
        Self::from_records(&doc)
    }

    pub fn from_records(doc: &BTreeMap<String, ArchRecord>) -> Self {
        ArchRegistry {
            entries: doc.iter().map(|(m, r)| GpuArchEntry::from_record(m, r)).collect(),
        }
    }

    pub fn from_yaml_str(text: &str, origin: &Path) -> Result<Self, PromptError> {
        let doc: BTreeMap<String, ArchRecord> = serde_yaml::from_str(text).map_err(|e| PromptError::BadRegistry {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        if doc.is_empty() {
            return Err(PromptError::BadRegistry {
                path: origin.to_path_buf(),
                message: "registry has no entries".into(),
            });
        }
        Ok(Self::from_records(&doc))
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|e| PromptError::BadRegistry {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_yaml_str(&text, path)
    }

    pub fn entries(&self) -> &[GpuArchEntry] {
        &self.entries
    }
}

/// Finds the entry for `gpu_model`.
pub fn lookup_arch<'a>(gpu_model: &str, registry: &'a ArchRegistry) -> Result<&'a GpuArchEntry, PromptError> {
    registry
        .entries
        .iter()
        .find(|e| e.gpu_model == gpu_model)
        .ok_or_else(|| PromptError::UnknownGpu {
            model: gpu_model.to_string(),
            known: registry
                .entries
                .iter()
                .map(|e| e.gpu_model.as_str())
                .collect::<Vec<_>>()
                .join(", "),
        })
}

/// The specialist role sentence for a task type.
pub fn role_for(task_type: TaskType) -> &'static str {
    match task_type {
        TaskType::Triton2Triton => {
            "You are a Kernel Optimization Specialist with expertise in Triton programming. \
Your core mission is to systematically optimize existing Triton kernels for maximum performance \
while ensuring strict numerical correctness and functional equivalence to the original code. \
You understand Triton's block-based programming model, memory tiling strategies, and how to \
leverage compiler hints for optimal GPU performance."
        }
        TaskType::Hip2Hip => {
            "You are a Kernel Optimization Specialist with expertise in HIP programming. \
Your core mission is to systematically optimize existing HIP kernels for maximum performance \
while ensuring strict numerical correctness and functional equivalence to the original code. \
You understand thread and wavefront mapping, shared-memory (LDS) tiling, memory coalescing, \
and occupancy trade-offs on AMD GPUs."
        }
        TaskType::Torch2Hip => {
            "You are a Kernel Optimization Specialist with expertise in HIP programming. \
Your core mission is to create new HIP kernels from a PyTorch module specification that run \
faster than PyTorch eager execution while producing numerically equivalent outputs. \
You understand how to bridge high-level tensor operations to low-level GPU code: memory layout, \
thread mapping, and numerical precision."
        }
    }
}

/// Section identifiers in their fixed order.
pub const SECTION_TITLES: [&str; 8] = [
    "Task type role",
    "Source code specification",
    "GPU architecture pre-check",
    "Instructions",
    "Completion",
    "Cheatsheet",
    "Workspace directory",
    "Iteration directive",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptSection {
    pub id: u8,
    pub title: &'static str,
    pub text: String,
}

/// Always holds all eight sections; a section with empty text is absent
/// from the rendered prompt (cheatsheets disabled, no iteration directive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptSpec {
    pub sections: Vec<PromptSection>,
}

impl PromptSpec {
    pub fn section(&self, id: u8) -> &PromptSection {
        &self.sections[usize::from(id - 1)]
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in self.sections.iter().filter(|s| !s.text.is_empty()) {
            let _ = write!(out, "[{}. {}]\n{}\n\n", s.id, s.title, s.text.trim_end_matches('\n'));
        }
        out
    }

    pub fn total_chars(&self) -> usize {
        self.render().chars().count()
    }
}

/// Inputs beyond the task config.
#[derive(Debug, Clone)]
pub struct PromptInputs<'a> {
    pub arch: &'a GpuArchEntry,
    pub cheatsheet_root: &'a Path,
    pub workspace_root: &'a Path,
    pub cheatsheets_enabled: bool,
    pub max_iterations: u32,
}

fn read_cheatsheet(arch: &GpuArchEntry, root: &Path, role: CheatsheetRole) -> Result<String, PromptError> {
    let rel = arch
        .cheatsheet_paths
        .get(&role)
        .ok_or_else(|| PromptError::CheatsheetNotConfigured {
            model: arch.gpu_model.clone(),
            role: role.key(),
        })?;
    let path = root.join(rel);
    std::fs::read_to_string(&path).map_err(|e| PromptError::CheatsheetMissing {
        path,
        message: e.to_string(),
    })
}

fn auto_instructions(cfg: &TaskConfig) -> String {
    let mut out = String::new();
    let targets = cfg.target_kernel_functions.join(", ");
    match cfg.task_type {
        TaskType::Torch2Hip => {
            let _ = writeln!(
                out,
                "Implement {targets} as HIP kernel(s) that reproduce the module's outputs and run faster than PyTorch eager execution."
            );
        }
        _ => {
            let _ = writeln!(
                out,
                "Optimize {targets} for maximum GPU throughput while keeping outputs numerically equivalent to the original."
            );
        }
    }
    out.push_str("Use these commands from the workspace root to check your work:\n");
    for (label, cmds) in [
        ("Compile", &cfg.compile_command),
        ("Correctness", &cfg.correctness_command),
        ("Performance", &cfg.performance_command),
    ] {
        for c in cmds {
            let _ = writeln!(out, "- {label}: `{c}`");
        }
    }
    out
}

/// Builds the prompt. Identical inputs always produce identical output.
pub fn assemble_prompt(cfg: &TaskConfig, inputs: &PromptInputs<'_>) -> Result<PromptSpec, PromptError> {
    let arch = inputs.arch;

    let mut source = String::new();
    match cfg.task_type {
        // No reference HIP kernel exists; the source is the module spec.
        TaskType::Torch2Hip => {
            let _ = writeln!(
                source,
                "Module specification file(s): {}",
                cfg.source_file_paths.join(", ")
            );
            let _ = writeln!(
                source,
                "Kernel function(s) to create: {}",
                cfg.target_kernel_functions.join(", ")
            );
        }
        _ => {
            let _ = writeln!(source, "File(s) to optimize: {}", cfg.source_file_paths.join(", "));
            let _ = writeln!(
                source,
                "Target kernel function(s): {}",
                cfg.target_kernel_functions.join(", ")
            );
        }
    }

    let precheck = format!(
        "Target GPU: {model}, architecture token: {token}\n\
Before running any build, test, or benchmark command, scan all build-related files for hardcoded GPU \
architecture strings. If any file targets an architecture other than {token}, update it before proceeding.\n",
        model = arch.gpu_model,
        token = arch.arch_token
    );

    let instructions = if cfg.prompt_instructions.is_empty() {
        auto_instructions(cfg)
    } else {
        cfg.prompt_instructions.clone()
    };

    let completion = "Save your optimized kernel code in the workspace directory. DO NOT write task_result.yaml; \
the framework will automatically check compilation, validate correctness, measure performance, and generate \
task_result.yaml with standardized metrics.\n"
        .to_string();

    let cheatsheet = if inputs.cheatsheets_enabled {
        let language = match cfg.task_type {
            TaskType::Triton2Triton => CheatsheetRole::TritonBestPractices,
            TaskType::Hip2Hip | TaskType::Torch2Hip => CheatsheetRole::HipBestPractices,
        };
        let mut text = read_cheatsheet(arch, inputs.cheatsheet_root, CheatsheetRole::ArchGuide)?;
        text.push_str(&read_cheatsheet(arch, inputs.cheatsheet_root, language)?);
        text
    } else {
        String::new()
    };

    let workspace = format!(
        "Your working directory is: {}\n\
This workspace contains all source files, build system, test/validation scripts, and profiling tools.\n",
        inputs.workspace_root.display()
    );

    let iteration = if inputs.max_iterations > 0 {
        format!(
            "For this optimization, you must iterate up to {} versions.\n",
            inputs.max_iterations
        )
    } else {
        String::new()
    };

    let texts = [
        role_for(cfg.task_type).to_string(),
        source,
        precheck,
        instructions,
        completion,
        cheatsheet,
        workspace,
        iteration,
    ];
    Ok(PromptSpec {
        sections: texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| PromptSection {
                id: i as u8 + 1,
                title: SECTION_TITLES[i],
                text,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(task_type: TaskType, instructions: &str) -> TaskConfig {
        TaskConfig {
            task_id: "triton2triton/vllm/triton_fused_moe".into(),
            task_dir: "/tasks/triton2triton/vllm/triton_fused_moe".into(),
            task_type,
            source_file_paths: vec!["source/triton_fused_moe.py".into()],
            target_kernel_functions: vec!["fused_moe_kernel".into()],
            compile_command: vec!["python3 scripts/task_runner.py compile".into()],
            correctness_command: vec!["python3 scripts/task_runner.py correctness".into()],
            performance_command: vec!["python3 scripts/task_runner.py performance".into()],
            prompt_instructions: instructions.into(),
            source_attribution: None,
            extra: BTreeMap::new(),
        }
    }

    fn cheatsheets() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("MI300X")).unwrap();
        std::fs::write(dir.path().join("MI300X/arch_guide.md"), "# MI300X guide\nCDNA3.\n").unwrap();
        std::fs::write(dir.path().join("triton_best_practices.md"), "# Triton\nautotune.\n").unwrap();
        std::fs::write(dir.path().join("hip_best_practices.md"), "# HIP\nLDS.\n").unwrap();
        dir
    }

    #[test]
    fn lookup_known_and_unknown_models() {
        let reg = ArchRegistry::builtin();
        assert_eq!(lookup_arch("MI300X", &reg).unwrap().arch_token, "gfx942");
        assert_eq!(lookup_arch("MI355X", &reg).unwrap().gpu_model, "MI355X");
        let err = lookup_arch("H100", &reg).unwrap_err().to_string();
        assert!(err.contains("MI300X") && err.contains("MI355X"), "{err}");
    }

    #[test]
    fn roles_per_task_type() {
        assert!(role_for(TaskType::Triton2Triton)
            .starts_with("You are a Kernel Optimization Specialist with expertise in Triton programming"));
        assert!(role_for(TaskType::Hip2Hip)
            .starts_with("You are a Kernel Optimization Specialist with expertise in HIP programming"));
        assert!(role_for(TaskType::Torch2Hip).contains("PyTorch module specification"));
    }

    #[test]
    fn full_prompt_has_eight_ordered_sections() {
        let sheets = cheatsheets();
        let reg = ArchRegistry::builtin();
        let arch = lookup_arch("MI300X", &reg).unwrap();
        let inputs = PromptInputs {
            arch,
            cheatsheet_root: sheets.path(),
            workspace_root: Path::new("/workspace/triton2triton/vllm/triton_fused_moe/"),
            cheatsheets_enabled: true,
            max_iterations: 3,
        };
        let p = assemble_prompt(&cfg(TaskType::Triton2Triton, "Optimize it.\n"), &inputs).unwrap();
        assert_eq!(p.sections.len(), 8);
        let ids: Vec<u8> = p.sections.iter().map(|s| s.id).collect();
        assert_eq!(ids, (1..=8).collect::<Vec<_>>());
        assert!(p.section(2).text.contains("source/triton_fused_moe.py"));
        assert!(p.section(2).text.contains("fused_moe_kernel"));
        assert!(p.section(3).text.contains("gfx942"));
        assert_eq!(p.section(4).text, "Optimize it.\n");
        assert!(p.section(5).text.contains("DO NOT write task_result.yaml"));
        assert_eq!(p.section(6).text, "# MI300X guide\nCDNA3.\n# Triton\nautotune.\n");
        assert!(p
            .section(7)
            .text
            .contains("/workspace/triton2triton/vllm/triton_fused_moe/"));
        assert!(p.section(8).text.contains("you must iterate up to 3 versions"));
        assert_eq!(
            p.render(),
            assemble_prompt(&cfg(TaskType::Triton2Triton, "Optimize it.\n"), &inputs)
                .unwrap()
                .render()
        );
        assert!(p.total_chars() > 0);
    }

    #[test]
    fn disabled_cheatsheets_and_no_iterations() {
        let reg = ArchRegistry::builtin();
        let arch = lookup_arch("MI300X", &reg).unwrap();
        let base = PromptInputs {
            arch,
            cheatsheet_root: Path::new("/nonexistent"),
            workspace_root: Path::new("/ws"),
            cheatsheets_enabled: false,
            max_iterations: 3,
        };
        let c = cfg(TaskType::Hip2Hip, "");
        let with_iter = assemble_prompt(&c, &base).unwrap();
        assert!(with_iter.section(6).text.is_empty());
        let without = assemble_prompt(
            &c,
            &PromptInputs {
                max_iterations: 0,
                ..base.clone()
            },
        )
        .unwrap();
        assert!(without.section(8).text.is_empty());
        assert!(!without.render().contains("[8."));
        for id in 1..=7 {
            assert_eq!(with_iter.section(id), without.section(id));
        }
    }

    #[test]
    fn auto_instructions_enumerate_commands() {
        let reg = ArchRegistry::builtin();
        let inputs = PromptInputs {
            arch: lookup_arch("MI300X", &reg).unwrap(),
            cheatsheet_root: Path::new("/nonexistent"),
            workspace_root: Path::new("/ws"),
            cheatsheets_enabled: false,
            max_iterations: 0,
        };
        let p = assemble_prompt(&cfg(TaskType::Triton2Triton, ""), &inputs).unwrap();
        let s4 = &p.section(4).text;
        for cmd in ["compile", "correctness", "performance"] {
            assert!(s4.contains(&format!("python3 scripts/task_runner.py {cmd}")), "{s4}");
        }
    }

    #[test]
    fn torch2hip_omits_reference_kernel_wording() {
        let reg = ArchRegistry::builtin();
        let inputs = PromptInputs {
            arch: lookup_arch("MI300X", &reg).unwrap(),
            cheatsheet_root: Path::new("/nonexistent"),
            workspace_root: Path::new("/ws"),
            cheatsheets_enabled: false,
            max_iterations: 0,
        };
        let p = assemble_prompt(&cfg(TaskType::Torch2Hip, ""), &inputs).unwrap();
        assert!(!p.section(2).text.contains("File(s) to optimize"));
        assert!(p.section(2).text.contains("Module specification"));
    }

    #[test]
    fn missing_cheatsheet_is_an_error_when_enabled() {
        let reg = ArchRegistry::builtin();
        let inputs = PromptInputs {
            arch: lookup_arch("MI355X", &reg).unwrap(),
            cheatsheet_root: Path::new("/nonexistent"),
            workspace_root: Path::new("/ws"),
            cheatsheets_enabled: true,
            max_iterations: 3,
        };
        let err = assemble_prompt(&cfg(TaskType::Hip2Hip, ""), &inputs).unwrap_err();
        assert!(matches!(err, PromptError::CheatsheetMissing { .. }));
    }

    #[test]
    fn registry_parses_yaml_document() {
        let text =
            "MI300X:\n  arch_token: gfx942\n  arch_guide: MI300X/arch_guide.md\n  triton_best_practices: triton.md\n";
        let reg = ArchRegistry::from_yaml_str(text, Path::new("r.yaml")).unwrap();
        let e = lookup_arch("MI300X", &reg).unwrap();
        assert_eq!(e.cheatsheet_paths.len(), 2);
        assert!(ArchRegistry::from_yaml_str("{}", Path::new("r.yaml")).is_err());
    }
}
