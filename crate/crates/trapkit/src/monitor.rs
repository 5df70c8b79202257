//! Trap monitoring: native filesystem change notifications on the
//! directories holding traps, filtered to trap paths, with a
//! first-alert latch driving a pluggable kill action.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, Sender};
use std::sync::{mpsc, Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use notify::event::{ModifyKind, RenameMode};
use notify::{EventKind, RecursiveMode, Watcher};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{monotonic_now_s, MonotonicSeconds};
use crate::traps::TrapList;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKindTag {
    Modified,
    Renamed,
    Deleted,
    Created,
}

/// One qualifying change to a trap path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrapEvent {
    pub path: PathBuf,
    pub kind: EventKindTag,
    /// Monotonic timestamp, seconds since the process clock anchor.
    pub observed_at: MonotonicSeconds,
    /// Wall clock, seconds since epoch.
    pub observed_at_wall: f64,
    /// Set when the platform reported an event-queue overflow and the
    /// alert is conservative.
    #[serde(default)]
    pub overflow: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionOutcome {
    ActionInvoked,
    ActionFailed,
    DryRun,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlertReport {
    pub event: TrapEvent,
    pub alert_raised_at: MonotonicSeconds,
    pub action_outcome: ActionOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WatchMode {
    /// Invoke the action exactly once, on the first qualifying event.
    FirstHit,
    /// Keep emitting reports; the action still fires only once.
    Continuous,
}

/// The kill action invoked on the first alert.
pub trait KillAction: Send {
    /// Returns Ok to record ActionInvoked, Err for ActionFailed.
    fn invoke(&mut self) -> std::result::Result<(), String>;
    fn is_dry_run(&self) -> bool {
        false
    }
}

/// No-op action for DryRun runs.
pub struct DryRunAction;

impl KillAction for DryRunAction {
    fn invoke(&mut self) -> std::result::Result<(), String> {
        Ok(())
    }
    fn is_dry_run(&self) -> bool {
        true
    }
}

/// Stops the in-process attack emulator through its stop latch.
pub struct EmulatorKillAction {
    stop: Arc<AtomicBool>,
}

impl EmulatorKillAction {
    pub fn new(stop: Arc<AtomicBool>) -> Self {
        Self { stop }
    }
}

impl KillAction for EmulatorKillAction {
    fn invoke(&mut self) -> std::result::Result<(), String> {
        // Idempotent: signalling an already-stopped emulator succeeds.
        self.stop.store(true, Ordering::SeqCst);
        Ok(())
    }
}

/// Terminates a set of processes by pid. Only for live deployment; tests
/// use the emulator action.
pub struct ProcessKillAction {
    pub pids: Vec<u32>,
}

impl KillAction for ProcessKillAction {
    fn invoke(&mut self) -> std::result::Result<(), String> {
        let mut failures = Vec::new();
        for &pid in &self.pids {
            let status = std::process::Command::new("kill")
                .arg("-TERM")
                .arg(pid.to_string())
                .status();
            match status {
                Ok(s) if s.success() => {}
                Ok(s) => failures.push(format!("pid {pid}: kill exited {s}")),
                Err(e) => failures.push(format!("pid {pid}: {e}")),
            }
        }
        if failures.is_empty() {
            Ok(())
        } else {
            Err(failures.join("; "))
        }
    }
}

/// A running watch over a trap list.
pub struct MonitorHandle {
    _watcher: notify::RecommendedWatcher,
    reports: Receiver<AlertReport>,
    running: Arc<AtomicBool>,
    consumer: Option<std::thread::JoinHandle<()>>,
}

impl MonitorHandle {
    /// Blocking receive with timeout.
    pub fn next_report(&self, timeout: Duration) -> Option<AlertReport> {
        self.reports.recv_timeout(timeout).ok()
    }

    pub fn try_reports(&self) -> Vec<AlertReport> {
        self.reports.try_iter().collect()
    }

    pub fn is_running(&self) -> bool {
        self.running.load(Ordering::SeqCst)
    }

    pub fn stop(mut self) {
        self.running.store(false, Ordering::SeqCst);
        if let Some(t) = self.consumer.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MonitorHandle {
    fn drop(&mut self) {
        self.running.store(false, Ordering::SeqCst);
    }
}

/// Register native watches for the directories containing traps and start
/// the single-consumer alert loop. All watches are registered before this
/// returns; `on_ready` fires right before the function returns (the CLI
/// prints the READY line from it).
pub fn watch(
    list: &TrapList,
    action: Box<dyn KillAction>,
    mode: WatchMode,
    on_ready: impl FnOnce(),
) -> Result<MonitorHandle> {
    // Canonicalize everything: the notify backend reports absolute,
    // symlink-resolved paths, so relative trap paths would never match.
    let mut trap_paths = HashSet::new();
    for path in list.active_paths() {
        if !path.exists() {
            return Err(Error::invalid(
                "trap list",
                format!("active path missing: {}", path.display()),
            ));
        }
        trap_paths.insert(path.canonicalize().map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?);
    }
    let mut directories = HashSet::new();
    for entry in &list.entries {
        directories.insert(entry.directory.canonicalize().map_err(|source| Error::Io {
            path: entry.directory.clone(),
            source,
        })?);
    }

    let (raw_tx, raw_rx) = mpsc::channel::<notify::Result<notify::Event>>();
    let mut watcher = notify::recommended_watcher(move |event| {
        let _ = raw_tx.send(event);
    })
    .map_err(|e| Error::WatchRegistration {
        directory: PathBuf::new(),
        reason: e.to_string(),
    })?;

    for dir in &directories {
        watcher
            .watch(dir, RecursiveMode::NonRecursive)
            .map_err(|e| Error::WatchRegistration {
                directory: dir.clone(),
                reason: e.to_string(),
            })?;
    }

    let (report_tx, report_rx) = mpsc::channel();
    let running = Arc::new(AtomicBool::new(true));
    let consumer = spawn_consumer(
        raw_rx,
        report_tx,
        trap_paths,
        action,
        mode,
        Arc::clone(&running),
    );

    on_ready();
    Ok(MonitorHandle {
        _watcher: watcher,
        reports: report_rx,
        running,
        consumer: Some(consumer),
    })
}

fn spawn_consumer(
    raw_rx: Receiver<notify::Result<notify::Event>>,
    report_tx: Sender<AlertReport>,
    trap_paths: HashSet<PathBuf>,
    mut action: Box<dyn KillAction>,
    mode: WatchMode,
    running: Arc<AtomicBool>,
) -> std::thread::JoinHandle<()> {
    std::thread::spawn(move || {
        // The first-alert latch: the action fires at most once no matter
        // how many events race in.
        let mut action_fired = false;
        while running.load(Ordering::SeqCst) {
            let event = match raw_rx.recv_timeout(Duration::from_millis(50)) {
                Ok(e) => e,
                Err(mpsc::RecvTimeoutError::Timeout) => continue,
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
            };
            let trap_event = match classify(event, &trap_paths) {
                Some(e) => e,
                None => continue,
            };
            let outcome = if action.is_dry_run() {
                ActionOutcome::DryRun
            } else if action_fired {
                ActionOutcome::ActionInvoked
            } else {
                action_fired = true;
                match action.invoke() {
                    Ok(()) => ActionOutcome::ActionInvoked,
                    Err(_) => ActionOutcome::ActionFailed,
                }
            };
            let report = AlertReport {
                event: trap_event,
                alert_raised_at: monotonic_now_s(),
                action_outcome: outcome,
            };
            let _ = report_tx.send(report);
            if mode == WatchMode::FirstHit {
                running.store(false, Ordering::SeqCst);
                break;
            }
        }
    })
}

fn classify(
    event: notify::Result<notify::Event>,
    trap_paths: &HashSet<PathBuf>,
) -> Option<TrapEvent> {
    let now = monotonic_now_s();
    let wall = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let event = match event {
        Ok(e) => e,
        Err(err) => {
            // Queue overflow or backend error: conservative alert.
            if format!("{err:?}").contains("MaxFilesWatch") || err.paths.is_empty() {
                return Some(TrapEvent {
                    path: PathBuf::new(),
                    kind: EventKindTag::Modified,
                    observed_at: now,
                    observed_at_wall: wall,
                    overflow: true,
                });
            }
            return None;
        }
    };
    if matches!(event.kind, EventKind::Other) && event.need_rescan() {
        return Some(TrapEvent {
            path: PathBuf::new(),
            kind: EventKindTag::Modified,
            observed_at: now,
            observed_at_wall: wall,
            overflow: true,
        });
    }

    let kind = match event.kind {
        EventKind::Modify(ModifyKind::Name(RenameMode::Any | RenameMode::From | RenameMode::Both)) => {
            EventKindTag::Renamed
        }
        EventKind::Modify(ModifyKind::Name(RenameMode::To)) => return None,
        EventKind::Modify(_) => EventKindTag::Modified,
        EventKind::Remove(_) => EventKindTag::Deleted,
        EventKind::Create(_) => EventKindTag::Created,
        EventKind::Access(_) | EventKind::Any | EventKind::Other => return None,
    };
    let path = event.paths.iter().find(|p| trap_paths.contains(*p))?;
    // Created events only matter for rename targets of traps; a brand new
    // unrelated file never matches the trap set.
    Some(TrapEvent {
        path: path.clone(),
        kind,
        observed_at: now,
        observed_at_wall: wall,
        overflow: false,
    })
}

/// Resident memory of this process in MB, sampled several times and
/// averaged. Errors when the platform metric is unavailable.
pub fn measure_monitor_memory() -> Result<f64> {
    let mut samples = Vec::new();
    for _ in 0..3 {
        samples.push(resident_memory_mb()?);
        std::thread::sleep(Duration::from_millis(10));
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Resident memory of an arbitrary pid in MB (for observing a spawned
/// monitor process).
pub fn resident_memory_mb_of(pid: u32) -> Result<f64> {
    parse_vmrss(&format!("/proc/{pid}/status"))
}

fn resident_memory_mb() -> Result<f64> {
    parse_vmrss("/proc/self/status")
}

fn parse_vmrss(path: &str) -> Result<f64> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: PathBuf::from(path),
        source,
    })?;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("VmRSS:") {
            let kb: f64 = rest
                .trim()
                .trim_end_matches("kB")
                .trim()
                .parse()
                .map_err(|_| Error::Other("unparseable VmRSS".to_string()))?;
            return Ok(kb / 1024.0);
        }
    }
    Err(Error::Other("VmRSS not reported".to_string()))
}

/// Append alert reports to a JSON-lines audit log.
pub fn append_audit_log(path: &Path, report: &AlertReport) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let line = serde_json::to_string(report).map_err(|e| Error::Other(e.to_string()))?;
    writeln!(file, "{line}").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Shared observer used by tests and the harness to detect the first hit.
pub struct FirstAlert {
    pub report: Mutex<Option<AlertReport>>,
}
