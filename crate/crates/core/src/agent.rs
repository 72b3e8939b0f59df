//! Agent launchers and sessions.
//!
//! A launcher turns an [`AgentSpec`], a prompt file and a workspace into a
//! subprocess invocation. The harness runs it inside the workspace under a
//! wall-clock limit and records a timestamped transcript. It never counts
//! or limits what the agent does internally.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::process::{self, Invocation, Termination};
use crate::prompt::PromptSpec;
use crate::workspace::Workspace;

/// File the prompt is written to at the workspace root.
pub const PROMPT_FILE: &str = "prompt.txt";
/// Environment variable carrying the workspace root to the agent.
pub const WORKSPACE_ENV: &str = "ARENA_WORKSPACE";
/// Launchers may report token usage with a stdout line `ARENA_OUTPUT_TOKENS=<n>`.
pub const OUTPUT_TOKENS_MARKER: &str = "ARENA_OUTPUT_TOKENS=";

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("launcher `{0}` is already registered")]
    Duplicate(String),
    #[error("unknown launcher `{id}`; registered: {known}")]
    Unknown { id: String, known: String },
    #[error("agent spec invalid: {0}")]
    InvalidSpec(String),
    #[error("launcher could not build an invocation: {0}")]
    Invocation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub launcher_id: String,
    pub model_id: String,
    pub timeout_s: u64,
    pub max_iterations: u32,
    #[serde(default)]
    pub extra_args: BTreeMap<String, String>,
}

impl AgentSpec {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.timeout_s == 0 {
            return Err(AgentError::InvalidSpec("timeout_s must be > 0".into()));
        }
        Ok(())
    }
}

pub trait Launcher: Send + Sync {
    fn invocation(&self, spec: &AgentSpec, prompt_file: &Path, workspace: &Path) -> Result<Invocation, AgentError>;
}

impl<F> Launcher for F
where
    F: Fn(&AgentSpec, &Path, &Path) -> Result<Invocation, AgentError> + Send + Sync,
{
    fn invocation(&self, spec: &AgentSpec, prompt_file: &Path, workspace: &Path) -> Result<Invocation, AgentError> {
        self(spec, prompt_file, workspace)
    }
}

/// An argv template. Placeholders `{model}`, `{timeout_s}`,
/// `{max_iterations}`, `{prompt_file}`, `{workspace}` and `{extra.<key>}`
/// are substituted in every element; no shell is involved unless the
/// template itself invokes one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateLauncher {
    pub command: Vec<String>,
}

impl Launcher for TemplateLauncher {
    fn invocation(&self, spec: &AgentSpec, prompt_file: &Path, workspace: &Path) -> Result<Invocation, AgentError> {
        let Some((program, rest)) = self.command.split_first() else {
            return Err(AgentError::Invocation("empty command template".into()));
        };
        let fill = |s: &str| {
            let mut out = s
                .replace("{model}", &spec.model_id)
                .replace("{timeout_s}", &spec.timeout_s.to_string())
                .replace("{max_iterations}", &spec.max_iterations.to_string())
                .replace("{prompt_file}", &prompt_file.display().to_string())
                .replace("{workspace}", &workspace.display().to_string());
            for (k, v) in &spec.extra_args {
                out = out.replace(&format!("{{extra.{k}}}"), v);
            }
            out
        };
        Ok(Invocation {
            program: fill(program),
            args: rest.iter().map(|a| fill(a)).collect(),
            env: BTreeMap::new(),
        })
    }
}

#[derive(Clone, Default)]
pub struct LauncherRegistry {
    launchers: BTreeMap<String, Arc<dyn Launcher>>,
}

impl std::fmt::Debug for LauncherRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.launchers.keys()).finish()
    }
}

impl LauncherRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with command templates for the common agent CLIs. These
    /// read the prompt file and hand its text to the tool's non-interactive
    /// mode; override them in the campaign config if your install differs.
    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        let sh = |script: &str| TemplateLauncher {
            command: vec![
                "sh".into(),
                "-c".into(),
                script.into(),
                "launcher".into(),
                "{model}".into(),
                "{prompt_file}".into(),
            ],
        };
        reg.register(
            "claude",
            sh(r#"claude -p --model "$1" --dangerously-skip-permissions < "$2""#),
        )
        .expect("fresh registry");
        reg.register("codex", sh(r#"codex exec --model "$1" --full-auto "$(cat "$2")""#))
            .expect("fresh registry");
        reg.register(
            "cursor-agent",
            sh(r#"cursor-agent -p --force --model "$1" "$(cat "$2")""#),
        )
        .expect("fresh registry");
        reg
    }

    pub fn register(&mut self, id: impl Into<String>, launcher: impl Launcher + 'static) -> Result<(), AgentError> {
        let id = id.into();
        if self.launchers.contains_key(&id) {
            return Err(AgentError::Duplicate(id));
        }
        self.launchers.insert(id, Arc::new(launcher));
        Ok(())
    }

    /// Replaces any existing launcher under `id`.
    pub fn register_or_replace(&mut self, id: impl Into<String>, launcher: impl Launcher + 'static) {
        self.launchers.insert(id.into(), Arc::new(launcher));
    }

    pub fn resolve(&self, id: &str) -> Result<Arc<dyn Launcher>, AgentError> {
        self.launchers.get(id).cloned().ok_or_else(|| AgentError::Unknown {
            id: id.to_string(),
            known: self.launchers.keys().cloned().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.launchers.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Completed,
    TimedOut,
    LaunchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSession {
    pub spec: AgentSpec,
    pub workspace_id: String,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub duration_s: f64,
    pub exit_status: SessionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    pub transcript_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

fn scan_output_tokens(transcript: &Path) -> Option<u64> {
    let text = std::fs::read_to_string(transcript).ok()?;
    text.lines()
        .filter_map(|l| l.split_once(OUTPUT_TOKENS_MARKER))
        .filter_map(|(_, rest)| rest.trim().parse().ok())
        .next_back()
}

/// Runs the agent in `ws` and records the session. Never fails: a missing
/// launcher or binary yields `LaunchFailed` and the caller evaluates the
/// workspace as-is.
pub fn launch_agent(
    registry: &LauncherRegistry,
    spec: &AgentSpec,
    prompt: &PromptSpec,
    ws: &Workspace,
    transcript_path: &Path,
) -> AgentSession {
    launch_agent_with_env(registry, spec, prompt, ws, transcript_path, &BTreeMap::new())
}

/// As [`launch_agent`], with extra environment for the agent process
/// (e.g. per-worker device visibility).
pub fn launch_agent_with_env(
    registry: &LauncherRegistry,
    spec: &AgentSpec,
    prompt: &PromptSpec,
    ws: &Workspace,
    transcript_path: &Path,
    env: &BTreeMap<String, String>,
) -> AgentSession {
    let started_at = Utc::now();
    let session = |status, exit_code, duration_s, diagnostic: Option<String>| AgentSession {
        spec: spec.clone(),
        workspace_id: ws.workspace_id.clone(),
        started_at,
        ended_at: Utc::now().max(started_at),
        duration_s,
        exit_status: status,
        exit_code,
        transcript_path: transcript_path.to_path_buf(),
        output_tokens: scan_output_tokens(transcript_path),
        diagnostic,
    };

    if let Some(parent) = transcript_path.parent() {
        let _ = std::fs::create_dir_all(parent);
    }
    let mut transcript = match File::create(transcript_path) {
        Ok(f) => f,
        Err(e) => return session(SessionStatus::LaunchFailed, None, 0.0, Some(format!("transcript: {e}"))),
    };

    let invocation = spec
        .validate()
        .and_then(|_| registry.resolve(&spec.launcher_id))
        .and_then(|launcher| {
            let prompt_file = ws.root_path.join(PROMPT_FILE);
            std::fs::write(&prompt_file, prompt.render())
                .map_err(|e| AgentError::Invocation(format!("writing prompt: {e}")))?;
            launcher.invocation(spec, &prompt_file, &ws.root_path)
        });
    let mut invocation = match invocation {
        Ok(inv) => inv,
        Err(e) => {
            use std::io::Write;
            let _ = writeln!(transcript, "[harness] launch failed: {e}");
            return session(SessionStatus::LaunchFailed, None, 0.0, Some(e.to_string()));
        }
    };
    for (k, v) in env {
        invocation.env.entry(k.clone()).or_insert_with(|| v.clone());
    }
    invocation
        .env
        .insert(WORKSPACE_ENV.into(), ws.root_path.display().to_string());

    let outcome = process::run_logged(
        &invocation,
        &ws.root_path,
        Some(Duration::from_secs(spec.timeout_s)),
        &mut transcript,
        true,
    );
    drop(transcript);
    let secs = outcome.duration.as_secs_f64();
    match outcome.termination {
        Termination::Exited(code) => session(SessionStatus::Completed, Some(code), secs, None),
        Termination::Signaled(sig) => session(
            SessionStatus::Completed,
            None,
            secs,
            Some(format!("agent killed by signal {sig}")),
        ),
        Termination::TimedOut => session(
            SessionStatus::TimedOut,
            None,
            secs,
            Some(format!("timed out after {}s", spec.timeout_s)),
        ),
        Termination::SpawnFailed(msg) => session(SessionStatus::LaunchFailed, None, secs, Some(msg)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workspace::WorkspaceKind;

    fn spec(launcher: &str, timeout_s: u64) -> AgentSpec {
        AgentSpec {
            launcher_id: launcher.into(),
            model_id: "model-x".into(),
            timeout_s,
            max_iterations: 3,
            extra_args: BTreeMap::from([("effort".to_string(), "high".to_string())]),
        }
    }

    fn workspace(root: &Path) -> Workspace {
        std::fs::create_dir_all(root).unwrap();
        Workspace {
            workspace_id: "t/1".into(),
            root_path: root.to_path_buf(),
            task_id: "t".into(),
            run_index: 1,
            created_at: Utc::now(),
            kind: WorkspaceKind::Agent,
        }
    }

    fn prompt() -> PromptSpec {
        PromptSpec {
            sections: vec![crate::prompt::PromptSection {
                id: 1,
                title: "Task type role",
                text: "do things".into(),
            }],
        }
    }

    fn sh(script: &str) -> TemplateLauncher {
        TemplateLauncher {
            command: vec![
                "sh".into(),
                "-c".into(),
                script.into(),
                "x".into(),
                "{prompt_file}".into(),
                "{model}".into(),
            ],
        }
    }

    #[test]
    fn registration_is_unique_and_resolvable() {
        let mut reg = LauncherRegistry::new();
        reg.register("mock", sh("true")).unwrap();
        assert!(reg.resolve("mock").is_ok());
        assert!(matches!(
            reg.register("mock", sh("true")),
            Err(AgentError::Duplicate(_))
        ));
        let err = reg.resolve("cursor-agent").err().unwrap().to_string();
        assert!(err.contains("cursor-agent") && err.contains("mock"), "{err}");
    }

    #[test]
    fn template_substitutes_placeholders() {
        let t = TemplateLauncher {
            command: vec![
                "agent".into(),
                "--model={model}".into(),
                "{extra.effort}".into(),
                "{timeout_s}".into(),
            ],
        };
        let inv = t.invocation(&spec("t", 60), Path::new("/p"), Path::new("/w")).unwrap();
        assert_eq!(inv.program, "agent");
        assert_eq!(inv.args, vec!["--model=model-x", "high", "60"]);
    }

    #[test]
    fn completed_session_edits_workspace_and_records_transcript() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = workspace(&tmp.path().join("ws"));
        let mut reg = LauncherRegistry::new();
        reg.register(
            "mock",
            sh(r#"wc -c < "$1"; echo "$2" > edited.txt; test "$ARENA_WORKSPACE" = "$PWD" && echo ARENA_OUTPUT_TOKENS=42"#),
        )
        .unwrap();
        let transcript = tmp.path().join("logs/transcript.log");
        let s = launch_agent(&reg, &spec("mock", 10), &prompt(), &ws, &transcript);
        assert_eq!(s.exit_status, SessionStatus::Completed);
        assert_eq!(s.exit_code, Some(0));
        assert!(s.ended_at >= s.started_at);
        assert_eq!(
            std::fs::read_to_string(ws.root_path.join("edited.txt")).unwrap(),
            "model-x\n"
        );
        assert!(ws.root_path.join(PROMPT_FILE).exists());
        assert_eq!(s.output_tokens, Some(42));
        assert!(std::fs::read_to_string(&transcript).unwrap().contains("[stdout]"));
    }

    #[test]
    fn timeout_is_enforced() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = workspace(&tmp.path().join("ws"));
        let mut reg = LauncherRegistry::new();
        reg.register("sleepy", sh("sleep 30")).unwrap();
        let s = launch_agent(&reg, &spec("sleepy", 1), &prompt(), &ws, &tmp.path().join("t.log"));
        assert_eq!(s.exit_status, SessionStatus::TimedOut);
        assert!(s.duration_s >= 1.0 && s.duration_s < 3.0, "{}", s.duration_s);
    }

    #[test]
    fn unknown_launcher_and_missing_binary_are_launch_failures() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = workspace(&tmp.path().join("ws"));
        let mut reg = LauncherRegistry::new();
        reg.register(
            "ghost",
            TemplateLauncher {
                command: vec!["/no/such/agent".into()],
            },
        )
        .unwrap();
        let s = launch_agent(&reg, &spec("missing", 5), &prompt(), &ws, &tmp.path().join("a.log"));
        assert_eq!(s.exit_status, SessionStatus::LaunchFailed);
        let s = launch_agent(&reg, &spec("ghost", 5), &prompt(), &ws, &tmp.path().join("b.log"));
        assert_eq!(s.exit_status, SessionStatus::LaunchFailed);
    }

    #[test]
    fn zero_timeout_is_invalid() {
        assert!(spec("x", 0).validate().is_err());
    }
}
