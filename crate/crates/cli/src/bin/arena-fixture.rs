//! Fixture task runner and mock agent launcher.
//!
//!   arena-fixture run <compile|correctness|performance> <kernel file>
//!   arena-fixture agent <behavior> <prompt file> [workspace]
//!   arena-fixture tree <tasks root> [unseen dir]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arena_testkit::{agent, runner, write_fixture_tree, write_unseen_sets, Behavior};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arena-fixture", about = "Deterministic fixture tasks and mock agents")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Task runner phase, run from the task root.
    Run {
        phase: runner::Subcommand,
        kernel_file: String,
    },
    /// Mock agent: applies `behavior` to the workspace.
    Agent {
        behavior: Behavior,
        prompt_file: PathBuf,
        /// Defaults to $ARENA_WORKSPACE, then the current directory.
        workspace: Option<PathBuf>,
    },
    /// Writes the fixture task tree, and unseen sets when a dir is given.
    Tree {
        tasks_root: PathBuf,
        unseen_dir: Option<PathBuf>,
    },
}

fn emit(code: i32, lines: Vec<String>) -> ExitCode {
    for l in lines {
        println!("{l}");
    }
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Run { phase, kernel_file } => {
            let testcases = std::env::var_os(runner::TESTCASE_ENV).map(PathBuf::from);
            let (code, lines) = runner::run(phase, Path::new("."), &kernel_file, testcases.as_deref());
            emit(code, lines)
        }
        Cmd::Agent {
            behavior,
            prompt_file,
            workspace,
        } => {
            let ws = workspace
                .or_else(|| std::env::var_os("ARENA_WORKSPACE").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            let (code, lines) = agent::run(behavior, &prompt_file, &ws);
            emit(code, lines)
        }
        Cmd::Tree { tasks_root, unseen_dir } => {
            let exe = std::env::current_exe().expect("own path");
            for d in write_fixture_tree(&tasks_root, &exe) {
                println!("{}", d.display());
            }
            if let Some(u) = unseen_dir {
                for p in write_unseen_sets(&u) {
                    println!("{}", p.display());
                }
            }
            ExitCode::SUCCESS
        }
    }
}
