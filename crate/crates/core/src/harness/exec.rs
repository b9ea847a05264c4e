use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::protocol::{self, DriverRequest, PROTOCOL_ERROR_TYPE, TIMEOUT_TYPE};
use super::{Candidate, ExecutionReport, HarnessError, Task, TestStatus};

/// Per-test time limit used when none is given.
pub const DEFAULT_TIMEOUT_S: f64 = 4.0;
/// Slack on top of the driver's own per-test alarms before the harness kills it.
pub const KILL_GRACE_S: f64 = 2.0;

const POLL_INTERVAL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub timeout_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_mb: Option<u64>,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            timeout_s: DEFAULT_TIMEOUT_S,
            memory_mb: None,
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(HarnessError::InvalidLimits(format!(
                "timeout_s must be positive, got {}",
                self.timeout_s
            )));
        }
        if self.memory_mb == Some(0) {
            return Err(HarnessError::InvalidLimits("memory_mb must be positive".into()));
        }
        Ok(())
    }

    /// Wall-clock budget for a whole candidate: every test may use its full
    /// alarm, plus the kill grace.
    pub fn hard_deadline(&self, num_tests: usize) -> Duration {
        Duration::from_secs_f64(self.timeout_s * num_tests as f64 + KILL_GRACE_S)
    }
}

/// Interpreter plus driver script; run as `<interpreter> <driver>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverCommand {
    pub interpreter: PathBuf,
    pub driver: PathBuf,
}

impl DriverCommand {
    pub fn new(interpreter: impl Into<PathBuf>, driver: impl Into<PathBuf>) -> Self {
        Self {
            interpreter: interpreter.into(),
            driver: driver.into(),
        }
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        if !self.driver.is_file() {
            return Err(HarnessError::DriverUnavailable(format!(
                "driver script {} not found",
                self.driver.display()
            )));
        }
        Ok(())
    }

    fn spawn(&self, memory_mb: Option<u64>) -> Result<Child, HarnessError> {
        let mut cmd = Command::new(&self.interpreter);
        cmd.arg(&self.driver)
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        if let Some(mb) = memory_mb {
            let bytes = mb.saturating_mul(1024 * 1024) as libc::rlim_t;
            // SAFETY: setrlimit is async-signal-safe and touches no shared state.
            unsafe {
                cmd.pre_exec(move || {
                    let lim = libc::rlimit {
                        rlim_cur: bytes,
                        rlim_max: bytes,
                    };
                    if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                        return Err(std::io::Error::last_os_error());
                    }
                    Ok(())
                });
            }
        }
        cmd.spawn().map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
                HarnessError::DriverUnavailable(format!(
                    "cannot run interpreter {}: {e}",
                    self.interpreter.display()
                ))
            }
            _ => HarnessError::Io(e),
        })
    }
}

enum Termination {
    Exited,
    Killed,
}

fn kill_group(child: &Child) {
    // The driver leads its own process group, so this also reaps anything the
    // candidate forked.
    let pgid = child.id() as libc::pid_t;
    unsafe {
        libc::killpg(pgid, libc::SIGKILL);
    }
}

fn wait_with_deadline(child: &mut Child, deadline: Duration) -> std::io::Result<Termination> {
    let start = Instant::now();
    loop {
        if child.try_wait()?.is_some() {
            return Ok(Termination::Exited);
        }
        if start.elapsed() >= deadline {
            kill_group(child);
            let _ = child.kill();
            child.wait()?;
            return Ok(Termination::Killed);
        }
        thread::sleep(POLL_INTERVAL);
    }
}

fn drain<R: Read + Send + 'static>(mut reader: R) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = reader.read_to_end(&mut buf);
        buf
    })
}

/// Runs one candidate against its task's tests in a fresh driver process.
///
/// Only environment problems are errors; anything the candidate does ends up
/// in the returned report.
pub fn execute_candidate(
    driver: &DriverCommand,
    task: &Task,
    candidate: &Candidate,
    limits: &Limits,
) -> Result<ExecutionReport, HarnessError> {
    if task.task_id != candidate.task_id {
        return Err(HarnessError::TaskMismatch {
            task_id: task.task_id.clone(),
            candidate_task: candidate.task_id.clone(),
            candidate_id: candidate.candidate_id.clone(),
        });
    }
    limits.validate()?;
    task.validate()?;
    driver.check()?;

    let request = serde_json::to_vec(&DriverRequest::new(task, candidate, limits.timeout_s))
        .expect("driver request serializes");
    let start = Instant::now();
    let mut child = driver.spawn(limits.memory_mb)?;

    let mut stdin = child.stdin.take().expect("stdin piped");
    let writer = thread::spawn(move || {
        // A driver that dies early closes the pipe; that shows up as a
        // protocol error below, not here.
        let _ = stdin.write_all(&request);
    });
    let stdout = drain(child.stdout.take().expect("stdout piped"));
    let stderr = drain(child.stderr.take().expect("stderr piped"));

    let termination = wait_with_deadline(&mut child, limits.hard_deadline(task.num_tests()))?;
    if matches!(termination, Termination::Exited) {
        kill_group(&child);
    }
    let _ = writer.join();
    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();
    let wall_time_ms = start.elapsed().as_millis() as u64;

    let results = match termination {
        Termination::Killed => {
            debug!(
                "{}/{}: killed after {} ms",
                task.task_id, candidate.candidate_id, wall_time_ms
            );
            protocol::uniform_fault(
                task,
                TestStatus::Timeout,
                TIMEOUT_TYPE,
                Some("driver killed after hard deadline".into()),
            )
        }
        Termination::Exited => {
            match protocol::parse_report(&stdout).and_then(|r| protocol::into_results(r, task)) {
                Ok(results) => results,
                Err(e) => {
                    let tail = String::from_utf8_lossy(&stderr);
                    let tail = tail.lines().last().unwrap_or_default();
                    warn!(
                        "{}/{}: protocol error: {e} (stderr: {tail})",
                        task.task_id, candidate.candidate_id
                    );
                    protocol::uniform_fault(
                        task,
                        TestStatus::ExecError,
                        PROTOCOL_ERROR_TYPE,
                        Some(e.to_string()),
                    )
                }
            }
        }
    };

    Ok(ExecutionReport::from_results(
        task.task_id.clone(),
        candidate.candidate_id.clone(),
        task.test_format,
        results,
        wall_time_ms,
    ))
}
