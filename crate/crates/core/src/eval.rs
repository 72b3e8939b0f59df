//! Gated compile -> correctness -> performance evaluation.
//!
//! Correctness only runs after a successful compile, performance only after
//! correctness passes. Timings come exclusively from `build/perf_result.yaml`
//! written by the task's own performance command; the file is removed before
//! each performance run so stale or agent-authored numbers are never read.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::process::{self, Invocation, Termination};
use crate::scoring;
use crate::task::{TaskConfig, TaskType};
use crate::workspace::{Workspace, WorkspaceError, WorkspaceKind, WorkspaceManager};

/// Performance result file, relative to the workspace root.
pub const PERF_RESULT_FILE: &str = "build/perf_result.yaml";
/// Standardized result file written by the harness at the workspace root.
pub const TASK_RESULT_FILE: &str = "task_result.yaml";
pub const DEFAULT_PHASE_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Compile,
    Correctness,
    Performance,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Compile, Phase::Correctness, Phase::Performance];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Compile => "compile",
            Phase::Correctness => "correctness",
            Phase::Performance => "performance",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutcome {
    pub phase: Phase,
    pub ran: bool,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    pub duration_s: f64,
    pub log_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl PhaseOutcome {
    pub fn skipped(phase: Phase) -> Self {
        PhaseOutcome {
            phase,
            ran: false,
            passed: false,
            exit_code: None,
            duration_s: 0.0,
            log_path: PathBuf::new(),
            diagnostic: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PhaseOptions {
    pub timeout: Option<Duration>,
    /// Extra environment for every command, e.g. `ARENA_TESTCASE_FILE`.
    pub env: BTreeMap<String, String>,
    /// Defaults to `<workspace>/.arena/logs`.
    pub log_dir: Option<PathBuf>,
    /// Prepended to log file names, to keep rounds apart.
    pub log_prefix: String,
}

impl PhaseOptions {
    fn log_path(&self, root: &Path, phase: Phase) -> PathBuf {
        let dir = self.log_dir.clone().unwrap_or_else(|| root.join(".arena").join("logs"));
        dir.join(format!("{}{}.log", self.log_prefix, phase))
    }
}

/// Runs `commands` sequentially in `root`; stops at the first failure.
pub fn run_phase(root: &Path, commands: &[String], phase: Phase, opts: &PhaseOptions) -> PhaseOutcome {
    let log_path = opts.log_path(root, phase);
    let started = Instant::now();
    let fail = |diagnostic: String, exit_code| PhaseOutcome {
        phase,
        ran: true,
        passed: false,
        exit_code,
        duration_s: started.elapsed().as_secs_f64(),
        log_path: log_path.clone(),
        diagnostic: Some(diagnostic),
    };

    if let Some(dir) = log_path.parent() {
        if let Err(e) = std::fs::create_dir_all(dir) {
            return fail(format!("cannot create log dir: {e}"), None);
        }
    }
    let mut log: File = match OpenOptions::new().create(true).append(true).open(&log_path) {
        Ok(f) => f,
        Err(e) => return fail(format!("cannot open log: {e}"), None),
    };
    if commands.is_empty() {
        return fail("no commands configured".into(), None);
    }

    let timeout = opts.timeout.unwrap_or(DEFAULT_PHASE_TIMEOUT);
    let mut last_code = None;
    for command in commands {
        let _ = writeln!(log, "$ {command}");
        let mut inv = Invocation::shell(command);
        inv.env.extend(opts.env.clone());
        let remaining = timeout.saturating_sub(started.elapsed());
        let out = process::run_logged(&inv, root, Some(remaining), &mut log, false);
        match out.termination {
            Termination::Exited(0) => last_code = Some(0),
            Termination::Exited(code) => {
                return fail(format!("`{command}` exited with {code}"), Some(code));
            }
            Termination::Signaled(sig) => return fail(format!("`{command}` killed by signal {sig}"), None),
            Termination::TimedOut => {
                return fail(format!("{phase} exceeded {}s", timeout.as_secs()), None);
            }
            Termination::SpawnFailed(msg) => return fail(msg, None),
        }
    }
    PhaseOutcome {
        phase,
        ran: true,
        passed: true,
        exit_code: last_code,
        duration_s: started.elapsed().as_secs_f64(),
        log_path,
        diagnostic: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTime {
    pub name: String,
    pub mean_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<u64>,
}

/// Wire shape of `build/perf_result.yaml`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PerfResultFile {
    #[serde(default)]
    pub test_cases: Vec<CaseTime>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerfError {
    #[error("performance result file missing: {0}")]
    Missing(String),
    #[error("performance result file malformed: {0}")]
    Malformed(String),
    #[error("no test cases")]
    NoCases,
    #[error("duplicate test case `{0}`")]
    Duplicate(String),
    #[error("non-positive timing for `{0}`")]
    NonPositive(String),
}

/// Validates timings parsed from a performance result document.
pub fn parse_perf_str(text: &str) -> Result<Vec<CaseTime>, PerfError> {
    let file: PerfResultFile = if text.trim().is_empty() {
        PerfResultFile::default()
    } else {
        serde_yaml::from_str(text).map_err(|e| PerfError::Malformed(e.to_string()))?
    };
    if file.test_cases.is_empty() {
        return Err(PerfError::NoCases);
    }
    let mut names = BTreeSet::new();
    for c in &file.test_cases {
        if !names.insert(c.name.as_str()) {
            return Err(PerfError::Duplicate(c.name.clone()));
        }
        if !(c.mean_ms.is_finite() && c.mean_ms > 0.0) {
            return Err(PerfError::NonPositive(c.name.clone()));
        }
    }
    Ok(file.test_cases)
}

pub fn parse_perf_output(root: &Path) -> Result<Vec<CaseTime>, PerfError> {
    let path = root.join(PERF_RESULT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| PerfError::Missing(format!("{}: {e}", path.display())))?;
    parse_perf_str(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCaseTiming {
    pub case_name: String,
    pub t_base: f64,
    pub t_opt: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEvalResult {
    pub task_id: String,
    pub run_index: u32,
    pub compiled: bool,
    pub correct: bool,
    pub timings: Vec<TestCaseTiming>,
    pub task_speedup: f64,
    pub phases: Vec<PhaseOutcome>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl TaskEvalResult {
    pub fn phase(&self, phase: Phase) -> Option<&PhaseOutcome> {
        self.phases.iter().find(|p| p.phase == phase)
    }

    pub fn score(&self) -> f64 {
        scoring::score_task(self.compiled, self.correct, self.task_speedup)
            .expect("evaluation results satisfy score preconditions")
    }
}

/// Speedups joined by exact case name, sorted by name, plus their mean.
/// Any difference between the two case sets is an error.
pub fn join_timings(baseline: &[CaseTime], optimized: &[CaseTime]) -> Result<(Vec<TestCaseTiming>, f64), String> {
    let base: BTreeMap<&str, f64> = baseline.iter().map(|c| (c.name.as_str(), c.mean_ms)).collect();
    let opt: BTreeMap<&str, f64> = optimized.iter().map(|c| (c.name.as_str(), c.mean_ms)).collect();
    if base.keys().ne(opt.keys()) || base.is_empty() {
        let missing: Vec<_> = base.keys().filter(|k| !opt.contains_key(*k)).collect();
        let extra: Vec<_> = opt.keys().filter(|k| !base.contains_key(*k)).collect();
        return Err(format!("case set mismatch (missing {missing:?}, unexpected {extra:?})"));
    }
    let timings: Vec<TestCaseTiming> = base
        .iter()
        .map(|(name, &t_base)| {
            let t_opt = opt[name];
            TestCaseTiming {
                case_name: name.to_string(),
                t_base,
                t_opt,
                speedup: t_base / t_opt,
            }
        })
        .collect();
    let mean = timings.iter().map(|t| t.speedup).sum::<f64>() / timings.len() as f64;
    Ok((timings, mean))
}

/// Source of phase outcomes for [`evaluate_gated`].
pub trait PhaseExecutor {
    fn run(&mut self, phase: Phase) -> PhaseOutcome;
    /// Reads timings after a passing performance phase.
    fn read_perf(&mut self) -> Result<Vec<CaseTime>, PerfError>;
}

/// Runs phases against a workspace directory with shell commands.
pub struct ShellExecutor<'a> {
    pub root: &'a Path,
    pub cfg: &'a TaskConfig,
    pub opts: &'a PhaseOptions,
}

impl PhaseExecutor for ShellExecutor<'_> {
    fn run(&mut self, phase: Phase) -> PhaseOutcome {
        if phase == Phase::Performance {
            let _ = std::fs::remove_file(self.root.join(PERF_RESULT_FILE));
        }
        run_phase(self.root, self.cfg.commands(phase), phase, self.opts)
    }

    fn read_perf(&mut self) -> Result<Vec<CaseTime>, PerfError> {
        parse_perf_output(self.root)
    }
}

/// The gating state machine. A task only counts as correct when its
/// correctness phase passed and its timings could be joined with the
/// baseline; a performance failure therefore leaves `correct = false` and
/// `task_speedup = 0`, keeping `task_speedup > 0` exactly when `correct`.
pub fn evaluate_gated(
    exec: &mut impl PhaseExecutor,
    task_id: &str,
    run_index: u32,
    baseline: &[CaseTime],
) -> TaskEvalResult {
    let mut result = TaskEvalResult {
        task_id: task_id.to_string(),
        run_index,
        compiled: false,
        correct: false,
        timings: Vec::new(),
        task_speedup: 0.0,
        phases: Vec::with_capacity(3),
        diagnostics: Vec::new(),
    };

    let compile = exec.run(Phase::Compile);
    result.compiled = compile.passed;
    result.diagnostics.extend(compile.diagnostic.clone());
    result.phases.push(compile);
    if !result.compiled {
        result.phases.push(PhaseOutcome::skipped(Phase::Correctness));
        result.phases.push(PhaseOutcome::skipped(Phase::Performance));
        return result;
    }

    let correctness = exec.run(Phase::Correctness);
    let correctness_ok = correctness.passed;
    result.diagnostics.extend(correctness.diagnostic.clone());
    result.phases.push(correctness);
    if !correctness_ok {
        result.phases.push(PhaseOutcome::skipped(Phase::Performance));
        return result;
    }

    let mut perf = exec.run(Phase::Performance);
    result.diagnostics.extend(perf.diagnostic.clone());
    if perf.passed {
        let joined = exec
            .read_perf()
            .map_err(|e| e.to_string())
            .and_then(|opt| join_timings(baseline, &opt));
        match joined {
            Ok((timings, mean)) if mean > 0.0 && mean.is_finite() => {
                result.timings = timings;
                result.task_speedup = mean;
                result.correct = true;
            }
            Ok(_) => {
                perf.passed = false;
                result.diagnostics.push("degenerate speedup".into());
            }
            Err(msg) => {
                perf.passed = false;
                perf.diagnostic = Some(msg.clone());
                result.diagnostics.push(msg);
            }
        }
    }
    if !perf.passed {
        result
            .diagnostics
            .push("correctness passed but performance could not be measured".into());
    }
    result.phases.push(perf);
    result
}

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error("baseline {phase} failed for {task_id}: {message}")]
    Phase {
        task_id: String,
        phase: Phase,
        message: String,
    },
    #[error("baseline timings unusable for {task_id}: {source}")]
    Perf {
        task_id: String,
        #[source]
        source: PerfError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub task_id: String,
    pub cases: Vec<CaseTime>,
}

/// Compiles and profiles the unmodified task in a fresh baseline workspace.
/// Correctness is skipped: the reference defines correctness.
pub fn measure_baseline(
    mgr: &WorkspaceManager,
    cfg: &TaskConfig,
    run_index: u32,
    opts: &PhaseOptions,
) -> Result<(Baseline, Workspace), BaselineError> {
    let ws = mgr.create_workspace(cfg, run_index, WorkspaceKind::Baseline)?;
    for phase in [Phase::Compile, Phase::Performance] {
        let out = run_phase(&ws.root_path, cfg.commands(phase), phase, opts);
        if !out.passed {
            return Err(BaselineError::Phase {
                task_id: cfg.task_id.clone(),
                phase,
                message: out.diagnostic.unwrap_or_default(),
            });
        }
    }
    let cases = parse_perf_output(&ws.root_path).map_err(|source| BaselineError::Perf {
        task_id: cfg.task_id.clone(),
        source,
    })?;
    Ok((
        Baseline {
            task_id: cfg.task_id.clone(),
            cases,
        },
        ws,
    ))
}

/// Identifies who produced the kernel being evaluated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalContext {
    pub agent: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub name: String,
    pub t_base_ms: f64,
    pub t_opt_ms: f64,
    pub speedup: f64,
}

/// Wire shape of `task_result.yaml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResultRecord {
    pub task_id: String,
    pub task_type: TaskType,
    pub run_index: u32,
    pub agent: String,
    pub model: String,
    pub compiled: bool,
    pub correct: bool,
    pub test_cases: Vec<CaseRecord>,
    pub mean_speedup: f64,
    pub score: f64,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl TaskResultRecord {
    pub fn from_result(
        result: &TaskEvalResult,
        task_type: TaskType,
        ctx: &EvalContext,
        started_at: DateTime<Utc>,
        ended_at: DateTime<Utc>,
    ) -> Self {
        TaskResultRecord {
            task_id: result.task_id.clone(),
            task_type,
            run_index: result.run_index,
            agent: ctx.agent.clone(),
            model: ctx.model.clone(),
            compiled: result.compiled,
            correct: result.correct,
            test_cases: result
                .timings
                .iter()
                .map(|t| CaseRecord {
                    name: t.case_name.clone(),
                    t_base_ms: t.t_base,
                    t_opt_ms: t.t_opt,
                    speedup: t.speedup,
                })
                .collect(),
            mean_speedup: result.task_speedup,
            score: result.score(),
            started_at,
            ended_at,
            diagnostics: result.diagnostics.clone(),
        }
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("task result serializes")
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_yaml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Evaluates `ws` against `baseline` and writes `task_result.yaml` into it.
pub fn evaluate_workspace(
    ws: &Workspace,
    cfg: &TaskConfig,
    baseline: &Baseline,
    ctx: &EvalContext,
    opts: &PhaseOptions,
) -> (TaskEvalResult, TaskResultRecord) {
    let started_at = Utc::now();
    // Whatever the agent left here is not ours to trust.
    let _ = std::fs::remove_file(ws.root_path.join(TASK_RESULT_FILE));
    let mut exec = ShellExecutor {
        root: &ws.root_path,
        cfg,
        opts,
    };
    let result = evaluate_gated(&mut exec, &cfg.task_id, ws.run_index, &baseline.cases);
    let record = TaskResultRecord::from_result(&result, cfg.task_type, ctx, started_at, Utc::now().max(started_at));
    if let Err(e) = std::fs::write(ws.root_path.join(TASK_RESULT_FILE), record.to_yaml()) {
        tracing::warn!("could not write {TASK_RESULT_FILE} in {}: {e}", ws.root_path.display());
    }
    (result, record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(name: &str, ms: f64) -> CaseTime {
        CaseTime {
            name: name.into(),
            mean_ms: ms,
            iterations: Some(100),
            warmup: Some(10),
        }
    }

    #[test]
    fn parse_perf_examples() {
        let cases = parse_perf_str(
            "test_cases:\n  - {name: case_1, mean_ms: 0.342, iterations: 100, warmup: 10}\n  - {name: case_2, mean_ms: 1.205}\n",
        )
        .unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].mean_ms, 0.342);
        assert_eq!(cases[1].iterations, None);
        assert_eq!(parse_perf_str(""), Err(PerfError::NoCases));
        assert_eq!(parse_perf_str("test_cases: []"), Err(PerfError::NoCases));
        assert_eq!(
            parse_perf_str("test_cases:\n  - {name: c, mean_ms: 0}\n"),
            Err(PerfError::NonPositive("c".into()))
        );
        assert_eq!(
            parse_perf_str("test_cases:\n  - {name: c, mean_ms: 1}\n  - {name: c, mean_ms: 2}\n"),
            Err(PerfError::Duplicate("c".into()))
        );
        assert!(matches!(parse_perf_str("test_cases: 7"), Err(PerfError::Malformed(_))));
    }

    #[test]
    fn join_examples() {
        let (t, s) = join_timings(&[case("c1", 0.342)], &[case("c1", 0.298)]).unwrap();
        assert_eq!(t[0].speedup, 0.342 / 0.298);
        assert!((s - 1.148).abs() < 5e-4);
        let (_, s) = join_timings(&[case("c1", 2.0), case("c2", 3.0)], &[case("c2", 3.0), case("c1", 1.0)]).unwrap();
        assert_eq!(s, 1.5);
        let err = join_timings(&[case("c1", 2.0), case("c2", 3.0)], &[case("c1", 1.0)]).unwrap_err();
        assert!(err.contains("case set mismatch"));
    }

    fn shell_cfg(dir: &Path, compile: &str, correct: &str, perf: &str) -> TaskConfig {
        TaskConfig {
            task_id: "t".into(),
            task_dir: dir.to_path_buf(),
            task_type: TaskType::Hip2Hip,
            source_file_paths: vec![],
            target_kernel_functions: vec!["k".into()],
            compile_command: vec![compile.into()],
            correctness_command: vec![correct.into()],
            performance_command: vec![perf.into()],
            prompt_instructions: String::new(),
            source_attribution: None,
            extra: BTreeMap::new(),
        }
    }

    const WRITE_PERF: &str =
        "mkdir -p build && printf 'test_cases:\\n  - {name: c1, mean_ms: 0.298}\\n' > build/perf_result.yaml";

    fn ws(root: &Path) -> Workspace {
        Workspace {
            workspace_id: "t/1".into(),
            root_path: root.to_path_buf(),
            task_id: "t".into(),
            run_index: 1,
            created_at: Utc::now(),
            kind: WorkspaceKind::Agent,
        }
    }

    #[test]
    fn run_phase_exit_codes_and_fail_fast() {
        let tmp = tempfile::tempdir().unwrap();
        let opts = PhaseOptions::default();
        assert!(run_phase(tmp.path(), &["exit 0".into()], Phase::Compile, &opts).passed);
        let out = run_phase(tmp.path(), &["exit 1".into()], Phase::Correctness, &opts);
        assert!(out.ran && !out.passed);
        assert_eq!(out.exit_code, Some(1));
        let out = run_phase(
            tmp.path(),
            &["exit 2".into(), "touch second".into()],
            Phase::Compile,
            &opts,
        );
        assert!(!out.passed);
        assert!(!tmp.path().join("second").exists());
        let out = run_phase(tmp.path(), &["no-such-binary-xyz".into()], Phase::Compile, &opts);
        assert!(!out.passed);
        assert_eq!(out.exit_code, Some(127));
        assert!(out.log_path.exists());
    }

    #[test]
    fn phase_timeout_fails_phase() {
        let tmp = tempfile::tempdir().unwrap();
        let opts = PhaseOptions {
            timeout: Some(Duration::from_millis(300)),
            ..Default::default()
        };
        let out = run_phase(tmp.path(), &["sleep 10".into()], Phase::Performance, &opts);
        assert!(out.ran && !out.passed && out.exit_code.is_none());
        assert!(out.duration_s < 3.0);
    }

    #[test]
    fn compile_failure_gates_everything() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = shell_cfg(tmp.path(), "exit 1", "touch ran_correctness", WRITE_PERF);
        let base = Baseline {
            task_id: "t".into(),
            cases: vec![case("c1", 0.342)],
        };
        let (r, rec) = evaluate_workspace(
            &ws(tmp.path()),
            &cfg,
            &base,
            &EvalContext::default(),
            &PhaseOptions::default(),
        );
        assert!(!r.compiled && !r.correct);
        assert_eq!(r.task_speedup, 0.0);
        assert!(!r.phase(Phase::Correctness).unwrap().ran);
        assert!(!r.phase(Phase::Performance).unwrap().ran);
        assert!(!tmp.path().join("ran_correctness").exists());
        assert_eq!(rec.score, 0.0);
    }

    #[test]
    fn correctness_failure_scores_compile_only() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = shell_cfg(tmp.path(), "true", "exit 1", WRITE_PERF);
        let base = Baseline {
            task_id: "t".into(),
            cases: vec![case("c1", 0.342)],
        };
        let (r, rec) = evaluate_workspace(
            &ws(tmp.path()),
            &cfg,
            &base,
            &EvalContext::default(),
            &PhaseOptions::default(),
        );
        assert!(r.compiled && !r.correct);
        assert!(!r.phase(Phase::Performance).unwrap().ran);
        assert_eq!(rec.score, 20.0);
    }

    #[test]
    fn passing_pipeline_writes_result_file() {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::write(tmp.path().join(TASK_RESULT_FILE), "forged: true\n").unwrap();
        let cfg = shell_cfg(tmp.path(), "true", "true", WRITE_PERF);
        let base = Baseline {
            task_id: "t".into(),
            cases: vec![case("c1", 0.342)],
        };
        let ctx = EvalContext {
            agent: "mock".into(),
            model: "m".into(),
        };
        let (r, _) = evaluate_workspace(&ws(tmp.path()), &cfg, &base, &ctx, &PhaseOptions::default());
        assert!(r.correct);
        assert!((r.task_speedup - 1.148).abs() < 5e-4);
        let rec = TaskResultRecord::load(&tmp.path().join(TASK_RESULT_FILE)).unwrap();
        assert_eq!(rec.agent, "mock");
        assert_eq!(rec.test_cases.len(), 1);
        assert_eq!(rec.mean_speedup, r.task_speedup);
        assert_eq!(rec.score, 20.0 + 100.0 + 100.0 * r.task_speedup);
    }

    #[test]
    fn stale_perf_file_is_not_trusted() {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(tmp.path().join("build")).unwrap();
        std::fs::write(
            tmp.path().join(PERF_RESULT_FILE),
            "test_cases:\n  - {name: c1, mean_ms: 0.001}\n",
        )
        .unwrap();
        let cfg = shell_cfg(tmp.path(), "true", "true", "true");
        let base = Baseline {
            task_id: "t".into(),
            cases: vec![case("c1", 0.342)],
        };
        let (r, _) = evaluate_workspace(
            &ws(tmp.path()),
            &cfg,
            &base,
            &EvalContext::default(),
            &PhaseOptions::default(),
        );
        assert!(!r.correct);
        assert_eq!(r.task_speedup, 0.0);
        assert!(
            r.diagnostics.iter().any(|d| d.contains("missing")),
            "{:?}",
            r.diagnostics
        );
    }

    #[test]
    fn case_mismatch_is_a_performance_failure() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = shell_cfg(tmp.path(), "true", "true", WRITE_PERF);
        let base = Baseline {
            task_id: "t".into(),
            cases: vec![case("c1", 0.342), case("c2", 1.205)],
        };
        let (r, _) = evaluate_workspace(
            &ws(tmp.path()),
            &cfg,
            &base,
            &EvalContext::default(),
            &PhaseOptions::default(),
        );
        let perf = r.phase(Phase::Performance).unwrap();
        assert!(perf.ran && !perf.passed);
        assert!(r.phase(Phase::Correctness).unwrap().passed);
        assert!(!r.correct && r.task_speedup == 0.0);
        assert!(r.diagnostics.iter().any(|d| d.contains("case set mismatch")));
    }

    #[test]
    fn baseline_measurement() {
        let tmp = tempfile::tempdir().unwrap();
        let task = tmp.path().join("task");
        std::fs::create_dir_all(&task).unwrap();
        let mgr = WorkspaceManager::new(tmp.path().join("out"));
        let perf =
            "mkdir -p build && printf 'test_cases:\\n  - {name: case_1, mean_ms: 10.0}\\n' > build/perf_result.yaml";
        let cfg = shell_cfg(&task, "true", "exit 1", perf);
        let (a, ws_a) = measure_baseline(&mgr, &cfg, 1, &PhaseOptions::default()).unwrap();
        let (b, ws_b) = measure_baseline(&mgr, &cfg, 1, &PhaseOptions::default()).unwrap();
        assert_eq!(
            a.cases,
            vec![CaseTime {
                name: "case_1".into(),
                mean_ms: 10.0,
                iterations: None,
                warmup: None
            }]
        );
        assert_eq!(a, b);
        assert_ne!(ws_a.root_path, ws_b.root_path);
        assert_eq!(ws_a.kind, WorkspaceKind::Baseline);

        let broken = shell_cfg(&task, "exit 1", "true", perf);
        let err = measure_baseline(&mgr, &broken, 1, &PhaseOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            BaselineError::Phase {
                phase: Phase::Compile,
                ..
            }
        ));
    }

    #[test]
    fn untouched_workspace_against_own_baseline_is_exactly_one() {
        let tmp = tempfile::tempdir().unwrap();
        let task = tmp.path().join("task");
        std::fs::create_dir_all(&task).unwrap();
        let mgr = WorkspaceManager::new(tmp.path().join("out"));
        let perf = "mkdir -p build && printf 'test_cases:\\n  - {name: a, mean_ms: 0.7}\\n  - {name: b, mean_ms: 3.3}\\n' > build/perf_result.yaml";
        let cfg = shell_cfg(&task, "true", "true", perf);
        let (base, _) = measure_baseline(&mgr, &cfg, 1, &PhaseOptions::default()).unwrap();
        let agent = mgr.create_workspace(&cfg, 1, WorkspaceKind::Agent).unwrap();
        let (r, _) = evaluate_workspace(&agent, &cfg, &base, &EvalContext::default(), &PhaseOptions::default());
        assert_eq!(r.task_speedup, 1.0);
    }

    #[test]
    fn env_reaches_commands() {
        let tmp = tempfile::tempdir().unwrap();
        let mut opts = PhaseOptions::default();
        opts.env.insert("ARENA_TESTCASE_FILE".into(), "/x/y.yaml".into());
        let out = run_phase(
            tmp.path(),
            &["test \"$ARENA_TESTCASE_FILE\" = /x/y.yaml".into()],
            Phase::Correctness,
            &opts,
        );
        assert!(out.passed);
    }
}
