//! Subprocess execution with a wall-clock limit and whole-tree termination.
//!
//! Every child is placed in its own process group. When the limit expires,
//! or once the leader has exited, the whole group is sent `SIGKILL` so no
//! compiler, profiler or shell spawned by the child outlives it.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

/// How long to keep draining output after the group has been killed.
const DRAIN_GRACE: Duration = Duration::from_secs(2);
const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    Exited(i32),
    Signaled(i32),
    TimedOut,
    SpawnFailed(String),
}

#[derive(Debug, Clone)]
pub struct ProcessOutcome {
    pub termination: Termination,
    pub duration: Duration,
}

impl ProcessOutcome {
    pub fn success(&self) -> bool {
        self.termination == Termination::Exited(0)
    }

    pub fn exit_code(&self) -> Option<i32> {
        match self.termination {
            Termination::Exited(code) => Some(code),
            _ => None,
        }
    }
}

/// What to run. `program` is executed directly; use [`Invocation::shell`]
/// for command strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub program: String,
    pub args: Vec<String>,
    pub env: BTreeMap<String, String>,
}

impl Invocation {
    pub fn shell(command: &str) -> Self {
        Invocation {
            program: "sh".into(),
            args: vec!["-c".into(), command.into()],
            env: BTreeMap::new(),
        }
    }

    pub fn display(&self) -> String {
        std::iter::once(self.program.as_str())
            .chain(self.args.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Clone, Copy)]
enum Stream {
    Stdout,
    Stderr,
}

impl Stream {
    fn tag(self) -> &'static str {
        match self {
            Stream::Stdout => "stdout",
            Stream::Stderr => "stderr",
        }
    }
}

fn pump<R: Read + Send + 'static>(reader: R, stream: Stream, tx: mpsc::Sender<(Stream, Vec<u8>)>) {
    thread::spawn(move || {
        let mut reader = BufReader::new(reader);
        loop {
            let mut line = Vec::new();
            match reader.read_until(b'\n', &mut line) {
                Ok(0) | Err(_) => break,
                Ok(_) => {
                    if tx.send((stream, line)).is_err() {
                        break;
                    }
                }
            }
        }
    });
}

fn kill_group(pgid: u32) {
    // ESRCH (group already gone) is expected and ignored.
    unsafe {
        libc::kill(-(pgid as libc::pid_t), libc::SIGKILL);
    }
}

struct LogSink<'a> {
    out: &'a mut File,
    started: Instant,
    timestamps: bool,
}

impl LogSink<'_> {
    fn write(&mut self, stream: Stream, line: &[u8]) {
        let res = if self.timestamps {
            let t = self.started.elapsed().as_secs_f64();
            write!(self.out, "[+{t:.3}s] [{}] ", stream.tag()).and_then(|_| self.out.write_all(line))
        } else {
            self.out.write_all(line)
        };
        let res = res.and_then(|_| {
            if line.last() != Some(&b'\n') {
                self.out.write_all(b"\n")
            } else {
                Ok(())
            }
        });
        if let Err(e) = res {
            tracing::warn!("failed to write process log: {e}");
        }
    }
}

/// Runs `inv` in `cwd`, appending stdout/stderr lines to `log`. When
/// `timestamps` is set each line is prefixed with elapsed time and stream.
pub fn run_logged(
    inv: &Invocation,
    cwd: &Path,
    timeout: Option<Duration>,
    log: &mut File,
    timestamps: bool,
) -> ProcessOutcome {
    let started = Instant::now();
    let mut cmd = Command::new(&inv.program);
    cmd.args(&inv.args)
        .current_dir(cwd)
        .envs(&inv.env)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);

    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => {
            let msg = format!("failed to spawn `{}`: {e}", inv.program);
            let _ = writeln!(log, "{msg}");
            return ProcessOutcome {
                termination: Termination::SpawnFailed(msg),
                duration: started.elapsed(),
            };
        }
    };
    let pgid = child.id();
    let (tx, rx) = mpsc::channel();
    if let Some(out) = child.stdout.take() {
        pump(out, Stream::Stdout, tx.clone());
    }
    if let Some(err) = child.stderr.take() {
        pump(err, Stream::Stderr, tx);
    }

    let mut sink = LogSink {
        out: log,
        started,
        timestamps,
    };
    let deadline = timeout.map(|t| started + t);
    let termination = loop {
        while let Ok((stream, line)) = rx.try_recv() {
            sink.write(stream, &line);
        }
        match child.try_wait() {
            Ok(Some(status)) => {
                break match status.code() {
                    Some(code) => Termination::Exited(code),
                    None => Termination::Signaled(status.signal().unwrap_or(0)),
                };
            }
            Ok(None) => {}
            Err(e) => {
                tracing::warn!("wait on pid {pgid} failed: {e}");
            }
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            kill_group(pgid);
            let _ = child.wait();
            break Termination::TimedOut;
        }
        if let Ok((stream, line)) = rx.recv_timeout(POLL) {
            sink.write(stream, &line);
        }
    };
    let duration = started.elapsed();

    // Reap anything the leader left behind; their pipes close with them.
    kill_group(pgid);
    let drain_until = Instant::now() + DRAIN_GRACE;
    loop {
        let left = drain_until.saturating_duration_since(Instant::now());
        match rx.recv_timeout(left) {
            Ok((stream, line)) => sink.write(stream, &line),
            Err(_) => break,
        }
    }
    if termination == Termination::TimedOut {
        let _ = writeln!(
            sink.out,
            "[harness] terminated after {:.3}s (limit reached)",
            duration.as_secs_f64()
        );
    }

    ProcessOutcome { termination, duration }
}
