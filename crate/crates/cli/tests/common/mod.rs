#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use arena_testkit::{write_fixture_tree, write_unseen_sets, Behavior};
use tempfile::TempDir;

pub const ARENA: &str = env!("CARGO_BIN_EXE_arena");
pub const FIXTURE: &str = env!("CARGO_BIN_EXE_arena-fixture");

/// Fixture tasks and unseen sets in a scratch directory.
pub struct Fixture {
    pub dir: TempDir,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        write_fixture_tree(&dir.path().join("tasks"), Path::new(FIXTURE));
        write_unseen_sets(&dir.path().join("unseen"));
        Fixture { dir }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn tasks(&self) -> PathBuf {
        self.path().join("tasks")
    }

    pub fn unseen(&self) -> PathBuf {
        self.path().join("unseen")
    }

    pub fn out(&self) -> PathBuf {
        self.path().join("out")
    }
}

#[derive(Debug, Clone)]
pub struct CampaignOpts {
    pub runs: u32,
    pub timeout_s: u64,
    pub workers: usize,
    pub unseen: bool,
    pub tasks: Vec<String>,
}

impl Default for CampaignOpts {
    fn default() -> Self {
        CampaignOpts {
            runs: 3,
            timeout_s: 60,
            workers: 5,
            unseen: true,
            tasks: Vec::new(),
        }
    }
}

/// Writes `<behavior>.yaml` for a mock-agent campaign and returns its path.
pub fn write_config(fx: &Fixture, behavior: Behavior, opts: &CampaignOpts) -> PathBuf {
    let tasks = if opts.tasks.is_empty() {
        String::new()
    } else {
        format!(
            "tasks: [{}]\n",
            opts.tasks
                .iter()
                .map(|t| format!("'{t}'"))
                .collect::<Vec<_>>()
                .join(", ")
        )
    };
    let text = format!(
        "agent: {{template: mock, model: {behavior}, timeout_s: {timeout}, max_iterations: 3}}\n\
tasks_root: tasks\n{tasks}output_root: out\nruns: {runs}\nparallel_workers: {workers}\n\
target_gpu_model: MI300X\nphase_timeout_s: 60\n\
unseen: {{enabled: {unseen}, configs_dir: unseen}}\n\
launchers:\n  mock: ['{exe}', agent, '{{model}}', '{{prompt_file}}', '{{workspace}}']\n",
        timeout = opts.timeout_s,
        runs = opts.runs,
        workers = opts.workers,
        unseen = opts.unseen,
        exe = FIXTURE,
    );
    let path = fx.path().join(format!("{behavior}.yaml"));
    std::fs::write(&path, text).expect("write config");
    path
}

pub fn arena(args: &[&str], cwd: &Path) -> Output {
    Command::new(ARENA)
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn arena")
}

pub fn campaign_dir(fx: &Fixture, behavior: Behavior) -> PathBuf {
    fx.out().join(format!("mock__{behavior}"))
}

/// Relative paths of every file under `root`, sorted.
pub fn tree(root: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = walk(root)
        .into_iter()
        .map(|p| p.strip_prefix(root).expect("under root").to_path_buf())
        .collect();
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                out.extend(walk(&p));
            } else {
                out.push(p);
            }
        }
    }
    out
}

/// Differences between two report trees, as human-readable lines.
pub fn diff_trees(expected: &Path, actual: &Path) -> Vec<String> {
    let (a, b) = (tree(expected), tree(actual));
    let mut problems = Vec::new();
    for f in a.iter().filter(|f| !b.contains(f)) {
        problems.push(format!("missing {}", f.display()));
    }
    for f in b.iter().filter(|f| !a.contains(f)) {
        problems.push(format!("unexpected {}", f.display()));
    }
    for f in a.iter().filter(|f| b.contains(f)) {
        if std::fs::read(expected.join(f)).ok() != std::fs::read(actual.join(f)).ok() {
            problems.push(format!("differs {}", f.display()));
        }
    }
    problems
}

pub fn copy_dir(src: &Path, dst: &Path) {
    for f in tree(src) {
        let to = dst.join(&f);
        std::fs::create_dir_all(to.parent().expect("parent")).expect("mkdir");
        std::fs::copy(src.join(&f), to).expect("copy");
    }
}
