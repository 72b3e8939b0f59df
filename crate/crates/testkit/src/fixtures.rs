//! The five fixture tasks and their hand-authored unseen config sets.

use std::path::{Path, PathBuf};

use crate::kernel::KernelSpec;
use crate::runner::{CaseEntry, CaseFile, SEEN_CASES_FILE};

/// Design limit of every pristine fixture kernel.
pub const DESIGN_MAX_SIZE: i64 = 4096;

#[derive(Debug, Clone, Copy)]
pub struct FixtureTask {
    pub id: &'static str,
    pub task_type: &'static str,
    pub kernel_file: &'static str,
    pub target: &'static str,
    /// Seen cases as (name, size); every size is at most 32.
    pub cases: &'static [(&'static str, i64)],
    pub base_ms: f64,
    pub per_size_ms: f64,
}

impl FixtureTask {
    pub fn kernel(&self) -> KernelSpec {
        KernelSpec {
            compiles: true,
            correct: true,
            max_size: Some(DESIGN_MAX_SIZE),
            scale: 1.0,
            base_ms: self.base_ms,
            per_size_ms: self.per_size_ms,
        }
    }

    pub fn dir_name(&self) -> String {
        self.id.replace('/', "__")
    }
}

pub const FIXTURE_TASKS: [FixtureTask; 5] = [
    FixtureTask {
        id: "hip2hip/gpumode/gelu",
        task_type: "hip2hip",
        kernel_file: "gelu.hip",
        target: "gelu_kernel",
        cases: &[("n8", 8)],
        base_ms: 2.0,
        per_size_ms: 0.25,
    },
    FixtureTask {
        id: "hip2hip/gpumode/layernorm",
        task_type: "hip2hip",
        kernel_file: "layernorm.hip",
        target: "layernorm_kernel",
        cases: &[("rows4", 4), ("rows16", 16), ("rows32", 32)],
        base_ms: 1.0,
        per_size_ms: 0.5,
    },
    FixtureTask {
        id: "torch2hip/gpumode/silu",
        task_type: "torch2hip",
        kernel_file: "silu.hip",
        target: "silu_kernel",
        cases: &[("n32", 32)],
        base_ms: 0.5,
        per_size_ms: 0.25,
    },
    FixtureTask {
        id: "triton2triton/rocmbench/softmax",
        task_type: "triton2triton",
        kernel_file: "softmax.py",
        target: "softmax_kernel",
        cases: &[("cols16", 16)],
        base_ms: 2.0,
        per_size_ms: 0.5,
    },
    FixtureTask {
        id: "triton2triton/vllm/triton_fused_moe",
        task_type: "triton2triton",
        kernel_file: "fused_moe.py",
        target: "fused_moe_kernel",
        cases: &[("tok8", 8), ("tok16", 16), ("tok24", 24), ("tok32", 32)],
        base_ms: 6.0,
        per_size_ms: 0.125,
    },
];

fn sized(name: &str, category: Option<&str>, size: i64) -> CaseEntry {
    CaseEntry {
        name: name.to_string(),
        category: category.map(str::to_string),
        params: [("size".to_string(), serde_yaml::Value::from(size))]
            .into_iter()
            .collect(),
    }
}

/// Writes one task directory under `root` and returns it. Phase commands
/// invoke `runner` (the fixture binary) with `run <phase> <kernel file>`.
pub fn write_task(root: &Path, task: &FixtureTask, runner: &Path) -> PathBuf {
    let dir = root.join(task.id);
    std::fs::create_dir_all(&dir).expect("create task dir");
    let cmd = |phase: &str| format!("'{}' run {phase} {}", runner.display(), task.kernel_file);
    let config = format!(
        "task_type: {}\nsource_file_path:\n  - {}\ntarget_kernel_functions:\n  - {}\ncompile_command:\n  - {}\ncorrectness_command:\n  - {}\nperformance_command:\n  - {}\n",
        task.task_type,
        task.kernel_file,
        task.target,
        serde_yaml::to_string(&cmd("compile")).expect("string").trim_end(),
        serde_yaml::to_string(&cmd("correctness")).expect("string").trim_end(),
        serde_yaml::to_string(&cmd("performance")).expect("string").trim_end(),
    );
    std::fs::write(dir.join("config.yaml"), config).expect("write config");
    std::fs::write(dir.join(task.kernel_file), task.kernel().render()).expect("write kernel");
    let cases = CaseFile {
        configs: task.cases.iter().map(|(n, s)| sized(n, None, *s)).collect(),
    };
    std::fs::write(dir.join(SEEN_CASES_FILE), serde_yaml::to_string(&cases).expect("cases")).expect("write cases");
    dir
}

pub fn write_fixture_tree(root: &Path, runner: &Path) -> Vec<PathBuf> {
    FIXTURE_TASKS.iter().map(|t| write_task(root, t, runner)).collect()
}

/// Held-out configs shared by every fixture task: two inside the hardcoded
/// limit, one scale-up beyond it, one beyond the design limit.
pub const UNSEEN_SET: [(&str, &str, i64); 4] = [
    ("edge_size1", "edge_case", 1),
    ("scale_up_64", "scale_up", 64),
    ("scale_down_4", "scale_down", 4),
    ("beyond_spec_8192", "production_realistic", 8192),
];

pub fn unseen_set_yaml() -> String {
    let file = CaseFile {
        configs: UNSEEN_SET.iter().map(|(n, c, s)| sized(n, Some(c), *s)).collect(),
    };
    serde_yaml::to_string(&file).expect("unseen set serializes")
}

/// Writes `<task id with / as __>.yaml` for every fixture task into `dir`.
pub fn write_unseen_sets(dir: &Path) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).expect("create unseen dir");
    FIXTURE_TASKS
        .iter()
        .map(|t| {
            let p = dir.join(format!("{}.yaml", t.dir_name()));
            std::fs::write(&p, unseen_set_yaml()).expect("write unseen set");
            p
        })
        .collect()
}
