//! Benchmark harness for kernel-optimization agents: task registry,
//! isolated workspaces, prompt assembly, agent launch, gated evaluation,
//! scoring, generalization checks, campaign orchestration and reporting.

pub mod agent;
pub mod campaign;
pub mod eval;
pub mod generalization;
pub mod process;
pub mod prompt;
pub mod report;
pub mod scoring;
pub mod task;
pub mod unseen;
pub mod workspace;

pub use agent::{launch_agent, AgentSession, AgentSpec, Launcher, LauncherRegistry, SessionStatus};
pub use campaign::{load_campaign, resume_campaign, run_campaign, CampaignConfig, CampaignResult};
pub use eval::{evaluate_gated, evaluate_workspace, Phase, PhaseOptions, TaskEvalResult, TaskResultRecord};
pub use generalization::{
    classify_quadrant, evaluate_unseen, summarize, ConfigOutcome, GeneralizationReport, QuadrantLabel,
};
pub use prompt::{assemble_prompt, ArchRegistry, PromptSpec};
pub use report::{
    emit_distribution_table, emit_generalization_report, emit_main_table, serialize, Format, ReportTable,
};
pub use scoring::{aggregate, score_task, AggregateMetrics, TaskScore};
pub use task::{discover_tasks, parse_task_config, TaskConfig, TaskType};
pub use unseen::{generate_unseen, UnseenConfig, UnseenConfigSet};
pub use workspace::{Workspace, WorkspaceManager};
