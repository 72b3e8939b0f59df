//! Campaign orchestration: one agent over a task set for R runs. Each
//! (task, run) goes through workspace setup, baseline, agent session,
//! evaluation and, optionally, the unseen-config pass. Results are written
//! as soon as they exist, so an interrupted campaign can be resumed.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{launch_agent_with_env, AgentError, AgentSession, AgentSpec, LauncherRegistry, TemplateLauncher};
use crate::eval::{self, Baseline, CaseTime, EvalContext, PhaseOptions, TaskResultRecord, TASK_RESULT_FILE};
use crate::generalization::{self, ConfigOutcome, GeneralizationReport};
use crate::prompt::{assemble_prompt, lookup_arch, ArchRegistry, GpuArchEntry, PromptError, PromptInputs};
use crate::scoring::{self, AggregateMetrics, PerTaskAverage, TaskScore};
use crate::task::{discover_tasks, TaskConfig, TaskError, TaskType};
use crate::unseen::UnseenConfigSet;
use crate::workspace::{self, task_dir_name, CleanupPolicy, Workspace, WorkspaceKind, WorkspaceManager};

pub const MANIFEST_FILE: &str = "manifest.yaml";
pub const SESSION_FILE: &str = "session.yaml";
pub const TRANSCRIPT_FILE: &str = "transcript.log";
pub const UNSEEN_RESULT_FILE: &str = "unseen.yaml";
pub const BASELINE_FILE: &str = "baseline.yaml";
pub const RESULTS_DIR: &str = "results";
pub const REPORTS_DIR: &str = "reports";
pub const WORKSPACES_DIR: &str = "workspaces";
pub const HARNESS_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit codes for campaign commands.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const UNEVALUABLE: i32 = 2;
    pub const FATAL: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("no tasks matched the configured filters")]
    NoTasks,
    #[error("campaign already exists at {0}; resume it or pick another campaign_id")]
    Exists(PathBuf),
    #[error("stored campaign does not match:\n{0}")]
    Mismatch(String),
    #[error("stored results are inconsistent: {0}")]
    Corrupt(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |e| CampaignError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn default_timeout_s() -> u64 {
    3600
}
fn default_runs() -> u32 {
    1
}
fn default_workers() -> usize {
    1
}
fn default_gpu() -> String {
    "MI300X".into()
}
fn default_true() -> bool {
    true
}
fn default_phase_timeout_s() -> u64 {
    eval::DEFAULT_PHASE_TIMEOUT.as_secs()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    /// Launcher id: a builtin or one declared under `launchers`.
    pub template: String,
    pub model: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default)]
    pub max_iterations: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra_args: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnseenSection {
    #[serde(default)]
    pub enabled: bool,
    /// Run the pass after every run rather than only the last.
    #[serde(default = "default_true")]
    pub per_run: bool,
    /// Holds `<task id with / as __>.yaml` per task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub configs_dir: Option<PathBuf>,
}

impl Default for UnseenSection {
    fn default() -> Self {
        UnseenSection {
            enabled: false,
            per_run: true,
            configs_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub campaign_id: Option<String>,
    pub agent: AgentSection,
    pub tasks_root: PathBuf,
    /// Glob filters over task ids; empty means every task.
    #[serde(default)]
    pub tasks: Vec<String>,
    #[serde(default = "default_runs")]
    pub runs: u32,
    #[serde(default = "default_gpu")]
    pub target_gpu_model: String,
    #[serde(default)]
    pub cheatsheets_enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cheatsheet_root: Option<PathBuf>,
    /// GPU registry YAML; the builtin registry when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch_registry: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub parallel_workers: usize,
    pub output_root: PathBuf,
    #[serde(default)]
    pub unseen: UnseenSection,
    #[serde(default = "default_true")]
    pub retain_workspaces: bool,
    #[serde(default)]
    pub per_run_baseline: bool,
    #[serde(default = "default_phase_timeout_s")]
    pub phase_timeout_s: u64,
    /// Environment per worker slot, assigned round-robin.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub worker_env: Vec<BTreeMap<String, String>>,
    /// Extra launcher command templates by id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub launchers: BTreeMap<String, Vec<String>>,
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl CampaignConfig {
    /// Parses a config; relative paths are taken relative to `base_dir`.
    pub fn from_yaml_str(text: &str, base_dir: &Path) -> Result<Self, CampaignError> {
        let mut cfg: CampaignConfig = serde_yaml::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))?;
        absolutize(base_dir, &mut cfg.tasks_root);
        absolutize(base_dir, &mut cfg.output_root);
        for p in [
            &mut cfg.cheatsheet_root,
            &mut cfg.arch_registry,
            &mut cfg.unseen.configs_dir,
        ]
        .into_iter()
        .flatten()
        {
            absolutize(base_dir, p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let base = std::path::absolute(base).map_err(io_err(base))?;
        Self::from_yaml_str(&text, &base)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: &str| Err(CampaignError::Config(m.to_string()));
        if self.runs < 1 {
            return bad("runs must be >= 1");
        }
        if self.parallel_workers < 1 {
            return bad("parallel_workers must be >= 1");
        }
        if self.agent.timeout_s == 0 {
            return bad("agent.timeout_s must be > 0");
        }
        if self.phase_timeout_s == 0 {
            return bad("phase_timeout_s must be > 0");
        }
        if self.cheatsheets_enabled && self.cheatsheet_root.is_none() {
            return bad("cheatsheets_enabled requires cheatsheet_root");
        }
        if self.unseen.enabled && self.unseen.configs_dir.is_none() {
            return bad("unseen.enabled requires unseen.configs_dir");
        }
        let id = self.campaign_id();
        if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
            return bad("campaign_id must be a single path component");
        }
        Ok(())
    }

    /// Explicit id, or `<template>__<model>`.
    pub fn campaign_id(&self) -> String {
        self.campaign_id.clone().unwrap_or_else(|| {
            format!("{}__{}", self.agent.template, self.agent.model)
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                        c
                    } else {
                        '_'
                    }
                })
                .collect()
        })
    }

    pub fn campaign_dir(&self) -> PathBuf {
        self.output_root.join(self.campaign_id())
    }

    pub fn agent_spec(&self) -> AgentSpec {
        AgentSpec {
            launcher_id: self.agent.template.clone(),
            model_id: self.agent.model.clone(),
            timeout_s: self.agent.timeout_s,
            max_iterations: self.agent.max_iterations,
            extra_args: self.agent.extra_args.clone(),
        }
    }

    /// Builtin launchers overlaid with the config's templates.
    pub fn launcher_registry(&self) -> LauncherRegistry {
        let mut reg = LauncherRegistry::with_builtins();
        for (id, command) in &self.launchers {
            reg.register_or_replace(
                id.clone(),
                TemplateLauncher {
                    command: command.clone(),
                },
            );
        }
        reg
    }

    fn phase_options(&self, env: &BTreeMap<String, String>) -> PhaseOptions {
        PhaseOptions {
            timeout: Some(Duration::from_secs(self.phase_timeout_s)),
            env: env.clone(),
            log_dir: None,
            log_prefix: String::new(),
        }
    }

    fn worker_env(&self, worker: usize) -> BTreeMap<String, String> {
        if self.worker_env.is_empty() {
            BTreeMap::new()
        } else {
            self.worker_env[worker % self.worker_env.len()].clone()
        }
    }

    fn unseen_config_path(&self, task_id: &str) -> Option<PathBuf> {
        self.unseen
            .configs_dir
            .as_ref()
            .map(|d| d.join(format!("{}.yaml", task_dir_name(task_id))))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_index: Option<u32>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub campaign_id: String,
    pub harness_version: String,
    pub config: CampaignConfig,
    pub tasks: Vec<String>,
    pub started_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub unevaluable: Vec<SkipEntry>,
}

impl CampaignManifest {
    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_yaml::from_str(&text).map_err(|e| CampaignError::Corrupt(format!("{}: {e}", path.display())))
    }

    fn store(&self, dir: &Path) -> Result<(), CampaignError> {
        write_atomic(
            &dir.join(MANIFEST_FILE),
            &serde_yaml::to_string(self).expect("manifest serializes"),
        )
    }
}

/// Unseen-pass output for one (task, run), stored as `unseen.yaml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnseenRecord {
    pub task_id: String,
    pub run_index: u32,
    pub outcomes: Vec<ConfigOutcome>,
    pub report: GeneralizationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub task_id: String,
    pub cases: Vec<CaseTime>,
}

fn write_atomic(path: &Path, text: &str) -> Result<(), CampaignError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_yaml<T: Serialize>(path: &Path, value: &T) -> Result<(), CampaignError> {
    write_atomic(path, &serde_yaml::to_string(value).expect("record serializes"))
}

fn read_yaml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CampaignError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_yaml::from_str(&text).map_err(|e| CampaignError::Corrupt(format!("{}: {e}", path.display())))
}

pub fn run_dir(campaign_dir: &Path, task_id: &str, run_index: u32) -> PathBuf {
    campaign_dir
        .join(RESULTS_DIR)
        .join(task_dir_name(task_id))
        .join(run_index.to_string())
}

/// Line diff of two texts: lines only in `old` as `- `, only in `new` as `+ `.
fn line_diff(old: &str, new: &str) -> String {
    let a: BTreeSet<&str> = old.lines().collect();
    let b: BTreeSet<&str> = new.lines().collect();
    let mut out = String::new();
    for l in old.lines().filter(|l| !b.contains(l)) {
        out.push_str(&format!("- {l}\n"));
    }
    for l in new.lines().filter(|l| !a.contains(l)) {
        out.push_str(&format!("+ {l}\n"));
    }
    out
}

/// Runs `f` over `items` on `workers` threads; `sink` receives results on
/// the calling thread, in completion order.
fn run_pool<T, R, F, S>(items: Vec<T>, workers: usize, f: F, mut sink: S)
where
    T: Send,
    R: Send,
    F: Fn(usize, T) -> R + Sync,
    S: FnMut(R),
{
    let queue = Mutex::new(VecDeque::from(items));
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for w in 0..workers {
            let tx = tx.clone();
            let (queue, f) = (&queue, &f);
            scope.spawn(move || loop {
                let next = queue.lock().expect("queue lock").pop_front();
                match next {
                    Some(item) => {
                        if tx.send(f(w, item)).is_err() {
                            return;
                        }
                    }
                    None => return,
                }
            });
        }
        drop(tx);
        for r in rx {
            sink(r);
        }
    });
}

struct Prepared {
    config: CampaignConfig,
    dir: PathBuf,
    tasks: Vec<TaskConfig>,
    arch: GpuArchEntry,
    registry: LauncherRegistry,
}

struct RunOutput {
    task_id: String,
    run_index: u32,
    session: Option<AgentSession>,
    record: Option<TaskResultRecord>,
    unseen: Option<UnseenRecord>,
    skip: Option<SkipEntry>,
}

fn fail_record(cfg: &TaskConfig, run_index: u32, spec: &AgentSpec, message: String) -> TaskResultRecord {
    let now = Utc::now();
    TaskResultRecord {
        task_id: cfg.task_id.clone(),
        task_type: cfg.task_type,
        run_index,
        agent: spec.launcher_id.clone(),
        model: spec.model_id.clone(),
        compiled: false,
        correct: false,
        test_cases: Vec::new(),
        mean_speedup: 0.0,
        score: 0.0,
        started_at: now,
        ended_at: now,
        diagnostics: vec![message],
    }
}

impl Prepared {
    fn new(config: CampaignConfig, registry: LauncherRegistry) -> Result<Self, CampaignError> {
        config.validate()?;
        let discovery = discover_tasks(&config.tasks_root, &config.tasks)?;
        if discovery.tasks.is_empty() {
            return Err(CampaignError::NoTasks);
        }
        let arch_registry = match &config.arch_registry {
            Some(p) => ArchRegistry::load(p)?,
            None => ArchRegistry::builtin(),
        };
        let arch = lookup_arch(&config.target_gpu_model, &arch_registry)?.clone();
        registry.resolve(&config.agent.template)?;
        let spec = config.agent_spec();
        spec.validate()?;
        let cheatsheet_root = config.cheatsheet_root.clone().unwrap_or_default();
        for cfg in &discovery.tasks {
            assemble_prompt(
                cfg,
                &PromptInputs {
                    arch: &arch,
                    cheatsheet_root: &cheatsheet_root,
                    workspace_root: Path::new("/"),
                    cheatsheets_enabled: config.cheatsheets_enabled,
                    max_iterations: config.agent.max_iterations,
                },
            )?;
        }
        for d in &discovery.skipped {
            tracing::warn!("task {} not loadable: {}", d.task_id, d.message);
        }
        let mut tasks = discovery.tasks;
        tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        Ok(Prepared {
            dir: config.campaign_dir(),
            config,
            tasks,
            arch,
            registry,
        })
    }

    fn task_ids(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.task_id.clone()).collect()
    }

    fn discovery_skips(&self) -> Result<Vec<SkipEntry>, CampaignError> {
        Ok(discover_tasks(&self.config.tasks_root, &self.config.tasks)?
            .skipped
            .into_iter()
            .map(|d| SkipEntry {
                task_id: d.task_id,
                run_index: None,
                reason: format!("unloadable task config: {}", d.message),
            })
            .collect())
    }

    fn workspace_manager(&self) -> WorkspaceManager {
        WorkspaceManager::new(self.dir.join(WORKSPACES_DIR))
    }

    fn cleanup(&self, ws: &Workspace) {
        if !self.config.retain_workspaces {
            if let Some(w) = workspace::cleanup(ws, CleanupPolicy::Delete) {
                tracing::warn!("{w}");
            }
        }
    }

    /// Baseline measured once per task (unless per-run baselines are on),
    /// cached under `results/<task>/baseline.yaml`.
    fn campaign_baseline(&self, mgr: &WorkspaceManager, cfg: &TaskConfig, worker: usize) -> Result<Baseline, String> {
        let path = self
            .dir
            .join(RESULTS_DIR)
            .join(task_dir_name(&cfg.task_id))
            .join(BASELINE_FILE);
        if let Ok(rec) = read_yaml::<BaselineRecord>(&path) {
            return Ok(Baseline {
                task_id: rec.task_id,
                cases: rec.cases,
            });
        }
        let opts = self.config.phase_options(&self.config.worker_env(worker));
        let (baseline, ws) = eval::measure_baseline(mgr, cfg, 0, &opts).map_err(|e| e.to_string())?;
        self.cleanup(&ws);
        write_yaml(
            &path,
            &BaselineRecord {
                task_id: baseline.task_id.clone(),
                cases: baseline.cases.clone(),
            },
        )
        .map_err(|e| e.to_string())?;
        Ok(baseline)
    }

    fn run_item(
        &self,
        mgr: &WorkspaceManager,
        worker: usize,
        cfg: &TaskConfig,
        run_index: u32,
        baseline: Option<&Baseline>,
    ) -> RunOutput {
        let spec = self.config.agent_spec();
        let env = self.config.worker_env(worker);
        let opts = self.config.phase_options(&env);
        let out_dir = run_dir(&self.dir, &cfg.task_id, run_index);
        let mut out = RunOutput {
            task_id: cfg.task_id.clone(),
            run_index,
            session: None,
            record: None,
            unseen: None,
            skip: None,
        };

        let per_run;
        let baseline = match baseline {
            Some(b) => b,
            None => match eval::measure_baseline(mgr, cfg, run_index, &opts) {
                Ok((b, ws)) => {
                    self.cleanup(&ws);
                    let _ = write_yaml(
                        &out_dir.join(BASELINE_FILE),
                        &BaselineRecord {
                            task_id: b.task_id.clone(),
                            cases: b.cases.clone(),
                        },
                    );
                    per_run = b;
                    &per_run
                }
                Err(e) => {
                    out.skip = Some(SkipEntry {
                        task_id: cfg.task_id.clone(),
                        run_index: Some(run_index),
                        reason: e.to_string(),
                    });
                    return out;
                }
            },
        };

        let ws = match mgr.create_workspace(cfg, run_index, WorkspaceKind::Agent) {
            Ok(ws) => ws,
            Err(e) => {
                out.record = Some(fail_record(
                    cfg,
                    run_index,
                    &spec,
                    format!("workspace setup failed: {e}"),
                ));
                return out;
            }
        };
        let cheatsheet_root = self.config.cheatsheet_root.clone().unwrap_or_default();
        let prompt = assemble_prompt(
            cfg,
            &PromptInputs {
                arch: &self.arch,
                cheatsheet_root: &cheatsheet_root,
                workspace_root: &ws.root_path,
                cheatsheets_enabled: self.config.cheatsheets_enabled,
                max_iterations: self.config.agent.max_iterations,
            },
        );
        let prompt = match prompt {
            Ok(p) => p,
            Err(e) => {
                out.record = Some(fail_record(
                    cfg,
                    run_index,
                    &spec,
                    format!("prompt assembly failed: {e}"),
                ));
                self.cleanup(&ws);
                return out;
            }
        };
        let session = launch_agent_with_env(
            &self.registry,
            &spec,
            &prompt,
            &ws,
            &out_dir.join(TRANSCRIPT_FILE),
            &env,
        );
        let ctx = EvalContext {
            agent: spec.launcher_id.clone(),
            model: spec.model_id.clone(),
        };
        let (_, mut record) = eval::evaluate_workspace(&ws, cfg, baseline, &ctx, &opts);
        if let Some(d) = &session.diagnostic {
            record.diagnostics.insert(0, format!("agent session: {d}"));
        }

        let unseen_due = self.config.unseen.enabled && (self.config.unseen.per_run || run_index == self.config.runs);
        if unseen_due {
            out.unseen = Some(self.unseen_pass(mgr, cfg, &ws, record.mean_speedup, &opts));
        }
        self.cleanup(&ws);
        out.session = Some(session);
        out.record = Some(record);
        out
    }

    fn unseen_pass(
        &self,
        mgr: &WorkspaceManager,
        cfg: &TaskConfig,
        agent_ws: &Workspace,
        s_bar_seen: f64,
        opts: &PhaseOptions,
    ) -> UnseenRecord {
        let empty = |diag: String| UnseenRecord {
            task_id: cfg.task_id.clone(),
            run_index: agent_ws.run_index,
            outcomes: Vec::new(),
            report: {
                let mut r = generalization::summarize(&[], s_bar_seen);
                r.diagnostics.push(diag);
                r
            },
        };
        let Some(path) = self.config.unseen_config_path(&cfg.task_id) else {
            return empty("no unseen config directory".into());
        };
        let set = match UnseenConfigSet::load(&path, &cfg.task_id) {
            Ok(s) => s,
            Err(e) => return empty(format!("unseen configs unavailable: {e}")),
        };
        let copies = mgr
            .create_workspace(cfg, agent_ws.run_index, WorkspaceKind::UnseenOriginal)
            .and_then(|orig| Ok((orig, mgr.duplicate_workspace(agent_ws, WorkspaceKind::UnseenOptimized)?)))
            .and_then(|(orig, opt)| {
                workspace::inject_unseen_configs(&orig, &set)?;
                workspace::inject_unseen_configs(&opt, &set)?;
                Ok((orig, opt))
            });
        let (orig, opt) = match copies {
            Ok(c) => c,
            Err(e) => return empty(format!("unseen workspace setup failed: {e}")),
        };
        let evaluation = generalization::evaluate_unseen(&orig, &opt, cfg, &set, opts);
        self.cleanup(&orig);
        self.cleanup(&opt);
        let mut report = generalization::summarize(&evaluation.outcomes, s_bar_seen);
        report.diagnostics.extend(evaluation.diagnostics);
        UnseenRecord {
            task_id: cfg.task_id.clone(),
            run_index: agent_ws.run_index,
            outcomes: evaluation.outcomes,
            report,
        }
    }

    fn completed(&self, task_id: &str, run_index: u32) -> bool {
        run_dir(&self.dir, task_id, run_index).join(TASK_RESULT_FILE).is_file()
    }

    /// Executes every (task, run) without a stored result, then reloads the
    /// campaign from disk.
    fn execute(&self, mut manifest: CampaignManifest) -> Result<CampaignResult, CampaignError> {
        manifest.unevaluable = self.discovery_skips()?;
        manifest.finished_at = None;
        manifest.store(&self.dir)?;
        let mgr = self.workspace_manager();
        let workers = self.config.parallel_workers;

        let mut baselines: BTreeMap<String, Baseline> = BTreeMap::new();
        let pending_tasks: Vec<&TaskConfig> = self
            .tasks
            .iter()
            .filter(|t| (1..=self.config.runs).any(|r| !self.completed(&t.task_id, r)))
            .collect();
        if !self.config.per_run_baseline {
            run_pool(
                pending_tasks.clone(),
                workers,
                |w, cfg| (cfg.task_id.clone(), self.campaign_baseline(&mgr, cfg, w)),
                |(task_id, res)| match res {
                    Ok(b) => {
                        baselines.insert(task_id, b);
                    }
                    Err(reason) => manifest.unevaluable.push(SkipEntry {
                        task_id,
                        run_index: None,
                        reason,
                    }),
                },
            );
            manifest.updated_at = Utc::now();
            manifest.store(&self.dir)?;
        }

        let mut items = Vec::new();
        for cfg in &pending_tasks {
            if !self.config.per_run_baseline && !baselines.contains_key(&cfg.task_id) {
                continue;
            }
            for r in 1..=self.config.runs {
                if !self.completed(&cfg.task_id, r) {
                    items.push((*cfg, r));
                }
            }
        }

        let mut write_err = None;
        run_pool(
            items,
            workers,
            |w, (cfg, r)| self.run_item(&mgr, w, cfg, r, baselines.get(&cfg.task_id)),
            |out| {
                if let Err(e) = self.persist(&mut manifest, out) {
                    tracing::error!("{e}");
                    write_err.get_or_insert(e);
                }
            },
        );
        if let Some(e) = write_err {
            return Err(e);
        }
        manifest
            .unevaluable
            .sort_by(|a, b| (&a.task_id, a.run_index).cmp(&(&b.task_id, b.run_index)));
        manifest.finished_at = Some(Utc::now());
        manifest.updated_at = Utc::now();
        manifest.store(&self.dir)?;
        load_campaign(&self.dir)
    }

    /// Single writer for the results tree. `task_result.yaml` goes last: it
    /// marks the (task, run) complete.
    fn persist(&self, manifest: &mut CampaignManifest, out: RunOutput) -> Result<(), CampaignError> {
        let dir = run_dir(&self.dir, &out.task_id, out.run_index);
        if let Some(skip) = out.skip {
            manifest.unevaluable.push(skip);
        }
        if let Some(s) = &out.session {
            write_yaml(&dir.join(SESSION_FILE), s)?;
        }
        if let Some(u) = &out.unseen {
            write_yaml(&dir.join(UNSEEN_RESULT_FILE), u)?;
        }
        if let Some(r) = &out.record {
            write_atomic(&dir.join(TASK_RESULT_FILE), &r.to_yaml())?;
        }
        manifest.updated_at = Utc::now();
        manifest.store(&self.dir)
    }
}

/// Starts a new campaign. Refuses if the campaign directory already holds a
/// manifest.
pub fn run_campaign(config: CampaignConfig) -> Result<CampaignResult, CampaignError> {
    let registry = config.launcher_registry();
    run_campaign_with(config, registry)
}

pub fn run_campaign_with(config: CampaignConfig, registry: LauncherRegistry) -> Result<CampaignResult, CampaignError> {
    let prepared = Prepared::new(config, registry)?;
    let manifest_path = prepared.dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        return Err(CampaignError::Exists(prepared.dir.clone()));
    }
    std::fs::create_dir_all(&prepared.dir).map_err(io_err(&prepared.dir))?;
    let now = Utc::now();
    let manifest = CampaignManifest {
        campaign_id: prepared.config.campaign_id(),
        harness_version: HARNESS_VERSION.into(),
        config: prepared.config.clone(),
        tasks: prepared.task_ids(),
        started_at: now,
        updated_at: now,
        finished_at: None,
        unevaluable: Vec::new(),
    };
    prepared.execute(manifest)
}

/// Accepts a manifest file or a campaign directory.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Continues an interrupted campaign. When `config` is given it must match
/// the stored snapshot; the rediscovered task list must match as well.
pub fn resume_campaign(manifest: &Path, config: Option<&CampaignConfig>) -> Result<CampaignResult, CampaignError> {
    let stored = CampaignManifest::load(&manifest_path(manifest))?;
    let registry = config.unwrap_or(&stored.config).launcher_registry();
    resume_campaign_with(manifest, config, registry)
}

pub fn resume_campaign_with(
    manifest: &Path,
    config: Option<&CampaignConfig>,
    registry: LauncherRegistry,
) -> Result<CampaignResult, CampaignError> {
    let path = manifest_path(manifest);
    let stored = CampaignManifest::load(&path)?;
    if let Some(cfg) = config {
        if *cfg != stored.config {
            return Err(CampaignError::Mismatch(line_diff(
                &stored.config.to_yaml(),
                &cfg.to_yaml(),
            )));
        }
    }
    let prepared = Prepared::new(stored.config.clone(), registry)?;
    let tasks = prepared.task_ids();
    if tasks != stored.tasks {
        return Err(CampaignError::Mismatch(line_diff(
            &stored.tasks.join("\n"),
            &tasks.join("\n"),
        )));
    }
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if std::path::absolute(&dir).ok() != std::path::absolute(&prepared.dir).ok() {
        return Err(CampaignError::Mismatch(format!(
            "manifest lives in {} but its config targets {}",
            dir.display(),
            prepared.dir.display()
        )));
    }
    prepared.execute(stored)
}

/// Runs the unseen-config pass over an existing campaign, using each run's
/// retained agent workspace, and rewrites `unseen.yaml` for every run it
/// could evaluate. `configs_dir` overrides the stored config's directory.
pub fn unseen_for_campaign(dir: &Path, configs_dir: Option<PathBuf>) -> Result<CampaignResult, CampaignError> {
    let path = manifest_path(dir);
    let stored = CampaignManifest::load(&path)?;
    let campaign_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut config = stored.config.clone();
    if configs_dir.is_some() {
        config.unseen.configs_dir = configs_dir;
    }
    if config.unseen.configs_dir.is_none() {
        return Err(CampaignError::Config("no unseen configs directory given".into()));
    }
    config.unseen.enabled = true;
    let registry = config.launcher_registry();
    let mut prepared = Prepared::new(config, registry)?;
    prepared.dir = campaign_dir;
    let mgr = prepared.workspace_manager();

    let mut items = Vec::new();
    for cfg in &prepared.tasks {
        for r in 1..=prepared.config.runs {
            let rd = run_dir(&prepared.dir, &cfg.task_id, r);
            let (Ok(record), Ok(session)) = (
                TaskResultRecord::load(&rd.join(TASK_RESULT_FILE)),
                read_yaml::<AgentSession>(&rd.join(SESSION_FILE)),
            ) else {
                continue;
            };
            let ws = Workspace {
                root_path: prepared.dir.join(WORKSPACES_DIR).join(&session.workspace_id),
                workspace_id: session.workspace_id,
                task_id: cfg.task_id.clone(),
                run_index: r,
                created_at: session.started_at,
                kind: WorkspaceKind::Agent,
            };
            if !ws.root_path.is_dir() {
                tracing::warn!("{} run {r}: agent workspace not retained; skipped", cfg.task_id);
                continue;
            }
            items.push((cfg, ws, record.mean_speedup));
        }
    }
    let mut write_err = None;
    run_pool(
        items,
        prepared.config.parallel_workers,
        |w, (cfg, ws, seen)| {
            let opts = prepared.config.phase_options(&prepared.config.worker_env(w));
            prepared.unseen_pass(&mgr, cfg, &ws, seen, &opts)
        },
        |rec| {
            let p = run_dir(&prepared.dir, &rec.task_id, rec.run_index).join(UNSEEN_RESULT_FILE);
            if let Err(e) = write_yaml(&p, &rec) {
                write_err.get_or_insert(e);
            }
        },
    );
    if let Some(e) = write_err {
        return Err(e);
    }
    load_campaign(&prepared.dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSession {
    pub task_id: String,
    pub run_index: u32,
    pub session: AgentSession,
}

/// Generalization results for one task across its unseen passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGeneralization {
    pub task_id: String,
    pub task_type: TaskType,
    pub runs: Vec<UnseenRecord>,
    pub pooled: GeneralizationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub task_type: TaskType,
    pub metrics: AggregateMetrics,
    pub per_task: Vec<PerTaskAverage>,
}

/// Everything reports need, rebuilt purely from the stored results tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub manifest: CampaignManifest,
    pub records: Vec<TaskResultRecord>,
    pub sessions: Vec<StoredSession>,
    pub per_task: Vec<PerTaskAverage>,
    pub categories: BTreeMap<TaskType, CategoryResult>,
    pub generalization: Vec<TaskGeneralization>,
    pub unevaluable: Vec<SkipEntry>,
}

impl CampaignResult {
    pub fn agent(&self) -> &str {
        &self.manifest.config.agent.template
    }

    pub fn model(&self) -> &str {
        &self.manifest.config.agent.model
    }

    pub fn exit_code(&self) -> i32 {
        if self.unevaluable.is_empty() {
            exit::SUCCESS
        } else {
            exit::UNEVALUABLE
        }
    }

    pub fn records_for<'a>(&'a self, task_id: &'a str) -> impl Iterator<Item = &'a TaskResultRecord> + 'a {
        self.records.iter().filter(move |r| r.task_id == task_id)
    }

    /// Generalization pooled across every task and run.
    pub fn pooled_generalization(&self) -> Option<GeneralizationReport> {
        let reports: Vec<GeneralizationReport> = self
            .generalization
            .iter()
            .flat_map(|g| g.runs.iter().map(|r| r.report.clone()))
            .collect();
        generalization::pool(&reports)
    }
}

/// Loads a campaign directory: manifest plus every stored record.
pub fn load_campaign(dir: &Path) -> Result<CampaignResult, CampaignError> {
    let manifest = CampaignManifest::load(&manifest_path(dir))?;
    let dir = if dir.is_dir() {
        dir.to_path_buf()
    } else {
        dir.parent().unwrap_or(Path::new(".")).to_path_buf()
    };
    let mut records = Vec::new();
    let mut sessions = Vec::new();
    let mut unseen: BTreeMap<String, Vec<UnseenRecord>> = BTreeMap::new();
    for task_id in &manifest.tasks {
        for r in 1..=manifest.config.runs {
            let rd = run_dir(&dir, task_id, r);
            let result_path = rd.join(TASK_RESULT_FILE);
            if !result_path.is_file() {
                continue;
            }
            let record: TaskResultRecord = TaskResultRecord::load(&result_path).map_err(CampaignError::Corrupt)?;
            if record.task_id != *task_id || record.run_index != r {
                return Err(CampaignError::Corrupt(format!(
                    "{} holds {} run {}",
                    result_path.display(),
                    record.task_id,
                    record.run_index
                )));
            }
            records.push(record);
            let session_path = rd.join(SESSION_FILE);
            if session_path.is_file() {
                sessions.push(StoredSession {
                    task_id: task_id.clone(),
                    run_index: r,
                    session: read_yaml(&session_path)?,
                });
            }
            let unseen_path = rd.join(UNSEEN_RESULT_FILE);
            if unseen_path.is_file() {
                unseen
                    .entry(task_id.clone())
                    .or_default()
                    .push(read_yaml(&unseen_path)?);
            }
        }
    }

    let scores: Vec<TaskScore> = records
        .iter()
        .map(TaskScore::try_from)
        .collect::<Result<_, _>>()
        .map_err(|e| CampaignError::Corrupt(e.to_string()))?;
    let per_task = scoring::average_by_task(&scores).map_err(|e| CampaignError::Corrupt(e.to_string()))?;
    let types: BTreeMap<&str, TaskType> = records.iter().map(|r| (r.task_id.as_str(), r.task_type)).collect();

    let mut categories = BTreeMap::new();
    for tt in TaskType::ALL {
        let cat_tasks: Vec<PerTaskAverage> = per_task
            .iter()
            .filter(|p| types.get(p.task_id.as_str()) == Some(&tt))
            .cloned()
            .collect();
        if cat_tasks.is_empty() {
            continue;
        }
        let cat_scores: Vec<TaskScore> = scores
            .iter()
            .filter(|s| types.get(s.task_id.as_str()) == Some(&tt))
            .cloned()
            .collect();
        let metrics = scoring::aggregate(
            &cat_tasks,
            &scoring::run_spread(&cat_scores),
            &scoring::DEFAULT_P_VALUES,
        )
        .map_err(|e| CampaignError::Corrupt(e.to_string()))?;
        categories.insert(
            tt,
            CategoryResult {
                task_type: tt,
                metrics,
                per_task: cat_tasks,
            },
        );
    }

    let generalization = unseen
        .into_iter()
        .filter_map(|(task_id, runs)| {
            let task_type = *types.get(task_id.as_str())?;
            let pooled = generalization::pool(&runs.iter().map(|r| r.report.clone()).collect::<Vec<_>>())?;
            Some(TaskGeneralization {
                task_id,
                task_type,
                runs,
                pooled,
            })
        })
        .collect();

    let mut unevaluable = manifest.unevaluable.clone();
    for task_id in &manifest.tasks {
        let evaluated = records.iter().any(|r| r.task_id == *task_id);
        let listed = unevaluable.iter().any(|s| s.task_id == *task_id);
        if !evaluated && !listed {
            unevaluable.push(SkipEntry {
                task_id: task_id.clone(),
                run_index: None,
                reason: "no stored results".into(),
            });
        }
    }

    Ok(CampaignResult {
        manifest,
        records,
        sessions,
        per_task,
        categories,
        generalization,
        unevaluable,
    })
}
