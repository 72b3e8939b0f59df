use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use arena_core::campaign::{self, exit, CampaignConfig, CampaignError, CampaignResult, REPORTS_DIR};
use arena_core::eval::PhaseOptions;
use arena_core::report::{self, Format};
use arena_core::task::{self, Severity};
use arena_core::unseen::{generate_unseen, GeneratorSpec};
use arena_core::workspace::{self, CleanupPolicy, WorkspaceKind, WorkspaceManager};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arena", version, about = "Benchmark harness for kernel-optimization agents")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a campaign from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Continue an interrupted campaign with the same config.
        #[arg(long)]
        resume: bool,
    },
    /// Check task configs and run every phase on the pristine tasks.
    Validate {
        #[arg(long)]
        tasks: PathBuf,
        /// Glob filters over task ids.
        #[arg(long = "filter")]
        filters: Vec<String>,
        /// Scratch directory for validation workspaces.
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
    /// Re-emit reports from stored results.
    Report {
        /// Campaign directory; repeat to put several agents in one table.
        #[arg(long = "campaign", required = true)]
        campaigns: Vec<PathBuf>,
        /// csv, json or markdown; repeatable. Default: all three.
        #[arg(long = "format")]
        formats: Vec<Format>,
        /// Defaults to <first campaign>/reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the unseen-config pass over an existing campaign.
    Unseen {
        #[arg(long)]
        campaign: PathBuf,
        #[arg(long)]
        configs_dir: Option<PathBuf>,
    },
    /// Generate an unseen config set from size templates.
    GenUnseen {
        #[arg(long)]
        task_id: String,
        #[arg(long)]
        base_size: i64,
        #[arg(long, default_value_t = 4096)]
        production_size: i64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_summary(result: &CampaignResult) {
    println!("campaign {}", result.manifest.campaign_id);
    for (tt, cat) in &result.categories {
        let m = &cat.metrics;
        println!(
            "  {:<14} tasks {:>3}  comp {:>5.1}%  corr {:>5.1}%  mean spd {:.2}×  score {:.1}",
            tt.label(),
            m.tasks,
            m.compilation_rate,
            m.correctness_rate,
            m.mean_speedup,
            m.mean_score
        );
    }
    for s in &result.unevaluable {
        match s.run_index {
            Some(r) => println!("  unevaluable: {} run {r}: {}", s.task_id, s.reason),
            None => println!("  unevaluable: {}: {}", s.task_id, s.reason),
        }
    }
}

fn emit_reports(results: &[CampaignResult], out: &Path, formats: &[Format]) -> anyhow::Result<()> {
    let formats = if formats.is_empty() { &Format::ALL[..] } else { formats };
    let written = report::write_reports(results, out, formats)?;
    tracing::info!("wrote {} report files under {}", written.len(), out.display());
    Ok(())
}

fn run(config: &Path, resume: bool) -> anyhow::Result<i32> {
    let cfg = CampaignConfig::load(config)?;
    let result = if resume {
        campaign::resume_campaign(&cfg.campaign_dir(), Some(&cfg))?
    } else {
        campaign::run_campaign(cfg.clone())?
    };
    emit_reports(
        std::slice::from_ref(&result),
        &cfg.campaign_dir().join(REPORTS_DIR),
        &[],
    )?;
    print_summary(&result);
    Ok(result.exit_code())
}

fn validate(tasks: &Path, filters: &[String], work_dir: Option<PathBuf>) -> anyhow::Result<i32> {
    let discovery = task::discover_tasks(tasks, filters)?;
    let scratch =
        work_dir.unwrap_or_else(|| std::env::temp_dir().join(format!("arena-validate-{}", std::process::id())));
    let mgr = WorkspaceManager::new(&scratch);
    let mut failed = discovery.skipped.len();
    println!("{:<48} {:<8} issues", "task", "status");
    for d in &discovery.skipped {
        println!("{:<48} {:<8} {}", d.task_id, "INVALID", d.message);
    }
    for cfg in &discovery.tasks {
        let ws = mgr
            .create_workspace(cfg, 0, WorkspaceKind::Validation)
            .with_context(|| format!("workspace for {}", cfg.task_id))?;
        let rep = task::validate_task(cfg, &ws.root_path, &PhaseOptions::default());
        let _ = workspace::cleanup(&ws, CleanupPolicy::Delete);
        let errors = rep.issues.iter().filter(|i| i.severity == Severity::Error).count();
        let status = if errors == 0 { "OK" } else { "FAIL" };
        failed += usize::from(errors > 0);
        let issues: Vec<String> = rep
            .issues
            .iter()
            .map(|i| format!("[{:?}] {}", i.severity, i.message))
            .collect();
        println!("{:<48} {:<8} {}", cfg.task_id, status, issues.join("; "));
    }
    let _ = std::fs::remove_dir_all(&scratch);
    Ok(if failed == 0 { exit::SUCCESS } else { exit::UNEVALUABLE })
}

fn execute(cmd: Cmd) -> anyhow::Result<i32> {
    match cmd {
        Cmd::Run { config, resume } => run(&config, resume),
        Cmd::Validate {
            tasks,
            filters,
            work_dir,
        } => validate(&tasks, &filters, work_dir),
        Cmd::Report {
            campaigns,
            formats,
            out,
        } => {
            let results = campaigns
                .iter()
                .map(|c| campaign::load_campaign(c))
                .collect::<Result<Vec<_>, CampaignError>>()?;
            let out = out.unwrap_or_else(|| campaigns[0].join(REPORTS_DIR));
            emit_reports(&results, &out, &formats)?;
            Ok(exit::SUCCESS)
        }
        Cmd::Unseen { campaign, configs_dir } => {
            let result = campaign::unseen_for_campaign(&campaign, configs_dir)?;
            emit_reports(std::slice::from_ref(&result), &campaign.join(REPORTS_DIR), &[])?;
            match result.pooled_generalization() {
                Some(g) => println!(
                    "configs {}  conditional correctness {}  Δ_g {}",
                    g.counts.total(),
                    g.conditional_correctness
                        .map_or("-".into(), |c| format!("{:.1}%", 100.0 * c)),
                    g.delta_g.map_or("-".into(), |d| format!("{d:.3}"))
                ),
                None => println!("no unseen results"),
            }
            Ok(exit::SUCCESS)
        }
        Cmd::GenUnseen {
            task_id,
            base_size,
            production_size,
            out,
        } => {
            let set = generate_unseen(
                &task_id,
                &GeneratorSpec {
                    base_size,
                    production_size,
                },
            );
            match out {
                Some(p) => std::fs::write(&p, set.to_yaml()).with_context(|| p.display().to_string())?,
                None => print!("{}", set.to_yaml()),
            }
            Ok(exit::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::FATAL as u8)
        }
    }
}
