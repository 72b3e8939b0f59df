//! Task runner: `compile`, `correctness` and `performance` subcommands
//! following the task contract (exit status, `build/perf_result.yaml`,
//! `ARENA_TESTCASE_FILE`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::kernel::KernelSpec;

pub const TESTCASE_ENV: &str = "ARENA_TESTCASE_FILE";
/// Seen test cases, relative to the task root.
pub const SEEN_CASES_FILE: &str = "testcases.yaml";
pub const ARTIFACT: &str = "build/kernel.o";
pub const PERF_FILE: &str = "build/perf_result.yaml";
pub const ITERATIONS: u64 = 100;
pub const WARMUP: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_yaml::Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CaseFile {
    pub configs: Vec<CaseEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PerfCase {
    name: String,
    mean_ms: f64,
    iterations: u64,
    warmup: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PerfFile {
    test_cases: Vec<PerfCase>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Compile,
    Correctness,
    Performance,
}

impl std::str::FromStr for Subcommand {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "compile" => Ok(Subcommand::Compile),
            "correctness" => Ok(Subcommand::Correctness),
            "performance" => Ok(Subcommand::Performance),
            other => Err(format!("unknown subcommand `{other}`")),
        }
    }
}

/// Active cases: the file named by `testcase_file`, else the seen cases.
pub fn active_cases(root: &Path, testcase_file: Option<&Path>) -> Result<Vec<(String, i64)>, String> {
    let path: PathBuf = match testcase_file {
        Some(p) if p.is_absolute() => p.to_path_buf(),
        Some(p) => root.join(p),
        None => root.join(SEEN_CASES_FILE),
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let file: CaseFile = serde_yaml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if file.configs.is_empty() {
        return Err(format!("{}: no test cases", path.display()));
    }
    file.configs
        .into_iter()
        .map(|c| {
            let size = c
                .params
                .get("size")
                .and_then(serde_yaml::Value::as_i64)
                .ok_or_else(|| format!("case `{}` has no integer `size`", c.name))?;
            Ok((c.name, size))
        })
        .collect()
}

fn compiled_kernel(root: &Path) -> Result<KernelSpec, String> {
    let text =
        std::fs::read_to_string(root.join(ARTIFACT)).map_err(|_| "kernel not built; run compile first".to_string())?;
    KernelSpec::parse(&text).map_err(|e| e.to_string())
}

/// Runs one subcommand in `root`. Returns the process exit code and the
/// lines to print on stdout.
pub fn run(sub: Subcommand, root: &Path, kernel_file: &str, testcase_file: Option<&Path>) -> (i32, Vec<String>) {
    let mut out = Vec::new();
    let code = match run_inner(sub, root, kernel_file, testcase_file, &mut out) {
        Ok(()) => 0,
        Err(msg) => {
            out.push(format!("error: {msg}"));
            1
        }
    };
    (code, out)
}

fn run_inner(
    sub: Subcommand,
    root: &Path,
    kernel_file: &str,
    testcase_file: Option<&Path>,
    out: &mut Vec<String>,
) -> Result<(), String> {
    match sub {
        Subcommand::Compile => {
            let src = root.join(kernel_file);
            let text = std::fs::read_to_string(&src).map_err(|e| format!("{}: {e}", src.display()))?;
            let kernel = KernelSpec::parse(&text).map_err(|e| e.to_string())?;
            if !kernel.compiles {
                return Err(format!("{kernel_file}: compilation failed"));
            }
            let artifact = root.join(ARTIFACT);
            std::fs::create_dir_all(artifact.parent().expect("artifact has parent")).map_err(|e| e.to_string())?;
            std::fs::write(&artifact, text).map_err(|e| e.to_string())?;
            out.push(format!("compiled {kernel_file}"));
            Ok(())
        }
        Subcommand::Correctness => {
            let kernel = compiled_kernel(root)?;
            let cases = active_cases(root, testcase_file)?;
            let mut failed = 0;
            for (name, size) in &cases {
                let ok = kernel.handles(*size);
                out.push(format!("{name} (size {size}): {}", if ok { "PASS" } else { "FAIL" }));
                failed += usize::from(!ok);
            }
            if failed > 0 {
                return Err(format!("{failed} of {} cases failed", cases.len()));
            }
            Ok(())
        }
        Subcommand::Performance => {
            let kernel = compiled_kernel(root)?;
            let cases = active_cases(root, testcase_file)?;
            let file = PerfFile {
                test_cases: cases
                    .iter()
                    .map(|(name, size)| PerfCase {
                        name: name.clone(),
                        mean_ms: kernel.time_ms(*size),
                        iterations: ITERATIONS,
                        warmup: WARMUP,
                    })
                    .collect(),
            };
            let path = root.join(PERF_FILE);
            std::fs::create_dir_all(path.parent().expect("perf file has parent")).map_err(|e| e.to_string())?;
            std::fs::write(&path, serde_yaml::to_string(&file).expect("perf serializes")).map_err(|e| e.to_string())?;
            for c in &file.test_cases {
                out.push(format!("{}: {} ms", c.name, c.mean_ms));
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{write_task, FIXTURE_TASKS};

    #[test]
    fn pristine_task_passes_every_phase() {
        let dir = tempfile::tempdir().unwrap();
        let task = &FIXTURE_TASKS[1];
        let root = write_task(dir.path(), task, Path::new("/bin/true"));
        for sub in [Subcommand::Compile, Subcommand::Correctness, Subcommand::Performance] {
            let (code, out) = run(sub, &root, task.kernel_file, None);
            assert_eq!(code, 0, "{out:?}");
        }
        let perf = std::fs::read_to_string(root.join(PERF_FILE)).unwrap();
        assert!(perf.contains("rows4") && perf.contains("mean_ms: 3.0") && perf.contains("iterations: 100"));
    }

    #[test]
    fn correctness_needs_a_build_and_honors_case_file() {
        let dir = tempfile::tempdir().unwrap();
        let task = &FIXTURE_TASKS[0];
        let root = write_task(dir.path(), task, Path::new("/bin/true"));
        assert_eq!(run(Subcommand::Correctness, &root, task.kernel_file, None).0, 1);
        assert_eq!(run(Subcommand::Compile, &root, task.kernel_file, None).0, 0);
        let big = root.join("big.yaml");
        std::fs::write(&big, "configs:\n  - {name: huge, params: {size: 100000}}\n").unwrap();
        assert_eq!(run(Subcommand::Correctness, &root, task.kernel_file, Some(&big)).0, 1);
        assert_eq!(run(Subcommand::Performance, &root, task.kernel_file, Some(&big)).0, 0);
    }

    #[test]
    fn malformed_kernel_fails_compile() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("k.hip"), "int main() {}").unwrap();
        assert_eq!(run(Subcommand::Compile, dir.path(), "k.hip", None).0, 1);
    }
}
