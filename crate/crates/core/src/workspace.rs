//! Isolated, timestamped per-execution copies of task directories.
//!
//! Layout: `<output_root>/<task_id with "/" -> "__">/<run>__<UTC ms>__<kind>`.
//! A numeric suffix is appended if two workspaces land on the same
//! millisecond. Copies are deep; symlinks are resolved.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::task::TaskConfig;
use crate::unseen::{UnseenConfigSet, UNSEEN_CONFIG_FILE};

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error("workspace I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("source tree {0} is not readable: {1}")]
    Walk(PathBuf, String),
    #[error("refusing to inject an empty unseen config set")]
    EmptyInjection,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WorkspaceError + '_ {
    move |source| WorkspaceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkspaceKind {
    Agent,
    Baseline,
    UnseenOriginal,
    UnseenOptimized,
    Validation,
}

impl WorkspaceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WorkspaceKind::Agent => "agent",
            WorkspaceKind::Baseline => "baseline",
            WorkspaceKind::UnseenOriginal => "unseen_original",
            WorkspaceKind::UnseenOptimized => "unseen_optimized",
            WorkspaceKind::Validation => "validation",
        }
    }
}

impl fmt::Display for WorkspaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workspace {
    pub workspace_id: String,
    pub root_path: PathBuf,
    pub task_id: String,
    pub run_index: u32,
    pub created_at: DateTime<Utc>,
    pub kind: WorkspaceKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CleanupPolicy {
    Retain,
    Delete,
}

/// Maps a task id to a single path component.
pub fn task_dir_name(task_id: &str) -> String {
    task_id.replace('/', "__")
}

/// Allocates workspaces under one output root. Safe to share across threads.
#[derive(Debug)]
pub struct WorkspaceManager {
    output_root: PathBuf,
    counter: AtomicU64,
}

impl WorkspaceManager {
    pub fn new(output_root: impl Into<PathBuf>) -> Self {
        WorkspaceManager {
            output_root: output_root.into(),
            counter: AtomicU64::new(0),
        }
    }

    pub fn output_root(&self) -> &Path {
        &self.output_root
    }

    /// Reserves a fresh, unique, empty directory.
    fn allocate(&self, task_id: &str, run_index: u32, kind: WorkspaceKind) -> Result<Workspace, WorkspaceError> {
        let parent = self.output_root.join(task_dir_name(task_id));
        std::fs::create_dir_all(&parent).map_err(io_err(&parent))?;
        let created_at = Utc::now();
        let stamp = created_at.format("%Y%m%dT%H%M%S%.3fZ");
        let base = format!("{run_index}__{stamp}__{kind}");
        loop {
            let n = self.counter.fetch_add(1, Ordering::Relaxed);
            let name = if n == 0 { base.clone() } else { format!("{base}__{n}") };
            let root_path = parent.join(&name);
            match std::fs::create_dir(&root_path) {
                Ok(()) => {
                    return Ok(Workspace {
                        workspace_id: format!("{}/{name}", task_dir_name(task_id)),
                        root_path,
                        task_id: task_id.to_string(),
                        run_index,
                        created_at,
                        kind,
                    })
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(io_err(&root_path)(e)),
            }
        }
    }

    /// Copies the full task directory into a new workspace.
    pub fn create_workspace(
        &self,
        cfg: &TaskConfig,
        run_index: u32,
        kind: WorkspaceKind,
    ) -> Result<Workspace, WorkspaceError> {
        let ws = self.allocate(&cfg.task_id, run_index, kind)?;
        copy_tree(&cfg.task_dir, &ws.root_path)?;
        Ok(ws)
    }

    /// Byte-identical copy of an existing workspace under a fresh root.
    pub fn duplicate_workspace(&self, ws: &Workspace, kind: WorkspaceKind) -> Result<Workspace, WorkspaceError> {
        let copy = self.allocate(&ws.task_id, ws.run_index, kind)?;
        copy_tree(&ws.root_path, &copy.root_path)?;
        Ok(copy)
    }
}

/// Recursively copies `src` into the existing directory `dst`, following
/// symlinks so the copy never points back into the source tree.
pub fn copy_tree(src: &Path, dst: &Path) -> Result<(), WorkspaceError> {
    for entry in WalkDir::new(src).follow_links(true).min_depth(1) {
        let entry = entry.map_err(|e| WorkspaceError::Walk(src.to_path_buf(), e.to_string()))?;
        let rel = entry.path().strip_prefix(src).expect("walk stays under root");
        let target = dst.join(rel);
        if entry.file_type().is_dir() {
            std::fs::create_dir_all(&target).map_err(io_err(&target))?;
        } else {
            std::fs::copy(entry.path(), &target).map_err(io_err(&target))?;
        }
    }
    Ok(())
}

/// Writes `unseen_configs.yaml` into the workspace and returns its path.
pub fn inject_unseen_configs(ws: &Workspace, configs: &UnseenConfigSet) -> Result<PathBuf, WorkspaceError> {
    if configs.configs.is_empty() {
        return Err(WorkspaceError::EmptyInjection);
    }
    let path = ws.root_path.join(UNSEEN_CONFIG_FILE);
    std::fs::write(&path, configs.to_yaml()).map_err(io_err(&path))?;
    Ok(path)
}

/// Applies `policy`. Failures are returned as a warning string, never fatal.
pub fn cleanup(ws: &Workspace, policy: CleanupPolicy) -> Option<String> {
    match policy {
        CleanupPolicy::Retain => None,
        CleanupPolicy::Delete => match std::fs::remove_dir_all(&ws.root_path) {
            Ok(()) => None,
            Err(e) => {
                let msg = format!("could not remove workspace {}: {e}", ws.root_path.display());
                tracing::warn!("{msg}");
                Some(msg)
            }
        },
    }
}

/// Sorted relative paths of all regular files under `root`.
pub fn manifest(root: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = WalkDir::new(root)
        .follow_links(true)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.path().strip_prefix(root).unwrap().to_path_buf())
        .collect();
    files.sort();
    files
}
