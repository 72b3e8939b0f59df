//! Mock agents. Each behavior makes one deterministic edit to the task's
//! kernel file (or none) and echoes the prompt size to its transcript.

use std::path::Path;
use std::time::Duration;

use serde::Deserialize;

use crate::kernel::KernelSpec;

/// Size limit baked in by the `hardcode_shape` behavior.
pub const HARDCODED_MAX_SIZE: i64 = 32;
/// How long `slow_sleep` sleeps; far beyond any test timeout.
pub const SLOW_SLEEP: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Behavior {
    Noop,
    Speedup2x,
    BreakCompile,
    BreakCorrectness,
    HardcodeShape,
    SlowSleep,
}

impl Behavior {
    pub const ALL: [Behavior; 6] = [
        Behavior::Noop,
        Behavior::Speedup2x,
        Behavior::BreakCompile,
        Behavior::BreakCorrectness,
        Behavior::HardcodeShape,
        Behavior::SlowSleep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::Noop => "noop",
            Behavior::Speedup2x => "speedup_2x",
            Behavior::BreakCompile => "break_compile",
            Behavior::BreakCorrectness => "break_correctness",
            Behavior::HardcodeShape => "hardcode_shape",
            Behavior::SlowSleep => "slow_sleep",
        }
    }

    /// The kernel after this behavior's edit.
    pub fn edit(self, k: &KernelSpec) -> KernelSpec {
        let mut k = k.clone();
        match self {
            Behavior::Noop | Behavior::SlowSleep => {}
            Behavior::Speedup2x => k.scale *= 0.5,
            Behavior::BreakCompile => k.compiles = false,
            Behavior::BreakCorrectness => k.correct = false,
            Behavior::HardcodeShape => {
                k.scale *= 0.5;
                k.max_size = Some(HARDCODED_MAX_SIZE);
            }
        }
        k
    }
}

impl std::fmt::Display for Behavior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Behavior {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Behavior::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| format!("unknown behavior `{s}`"))
    }
}

#[derive(Deserialize)]
struct SourceFiles {
    source_file_path: Vec<String>,
}

/// Runs the behavior against `workspace`. Returns exit code and transcript
/// lines.
pub fn run(behavior: Behavior, prompt_file: &Path, workspace: &Path) -> (i32, Vec<String>) {
    let mut out = Vec::new();
    let prompt_chars = match std::fs::read_to_string(prompt_file) {
        Ok(p) => p.chars().count(),
        Err(e) => {
            out.push(format!("cannot read prompt {}: {e}", prompt_file.display()));
            return (1, out);
        }
    };
    out.push(format!("mock agent {behavior}: prompt {prompt_chars} chars"));
    if behavior == Behavior::SlowSleep {
        std::thread::sleep(SLOW_SLEEP);
    }
    let kernel_file = std::fs::read_to_string(workspace.join("config.yaml"))
        .ok()
        .and_then(|t| serde_yaml::from_str::<SourceFiles>(&t).ok())
        .and_then(|s| s.source_file_path.into_iter().next());
    let Some(kernel_file) = kernel_file else {
        out.push("no source_file_path in config.yaml".into());
        return (1, out);
    };
    let path = workspace.join(&kernel_file);
    let edited = std::fs::read_to_string(&path)
        .map_err(|e| e.to_string())
        .and_then(|t| KernelSpec::parse(&t).map_err(|e| e.to_string()))
        .map(|k| behavior.edit(&k));
    match edited {
        Ok(k) => {
            if behavior != Behavior::Noop {
                if let Err(e) = std::fs::write(&path, k.render()) {
                    out.push(format!("write {}: {e}", path.display()));
                    return (1, out);
                }
                out.push(format!("edited {kernel_file}"));
            }
        }
        Err(e) => {
            out.push(format!("{kernel_file}: {e}"));
            return (1, out);
        }
    }
    out.push(format!("ARENA_OUTPUT_TOKENS={}", prompt_chars / 4));
    (0, out)
}
