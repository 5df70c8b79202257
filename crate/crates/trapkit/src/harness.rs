//! Evaluation harness: wire selection, monitoring, and the attack
//! emulator into closed-loop experiments with resumable grids and
//! per-method comparison reports.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::emulator::{
    generate_corpus, load_manifest, restore_corpus, run_attack, save_manifest, AttackProfile,
    CorpusManifest, CorpusSpec, CORPUS_MARKER,
};
use crate::error::{Error, Result};
use crate::monitor::{watch, AlertReport, EmulatorKillAction, WatchMode};
use crate::time::MonotonicSeconds;
use crate::traps::{
    rename_traps, select_traps, SelectionMethod, SelectionOptions, TrapList,
};
use crate::features::ScanConfig;

/// Outcome of one selection + attack round trip.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub method: SelectionMethod,
    pub profile: String,
    pub seed: u64,
    pub total_files: usize,
    pub files_lost: usize,
    pub loss_percent: f64,
    /// Seconds from attack start to the first alert; `None` when missed.
    pub detection_delay_s: Option<f64>,
    pub missed: bool,
    pub traps: usize,
    pub trap_percentage: f64,
    /// Mean resident memory of the monitoring process while armed.
    #[serde(default)]
    pub monitor_memory_mb: Option<f64>,
    /// Wall clock at experiment start, seconds since epoch.
    #[serde(default)]
    pub started_at_wall: f64,
}

/// Count encrypted files (the family extension) under a corpus root.
pub fn count_file_loss(root: &Path, extension: &str) -> Result<usize> {
    if !root.is_dir() {
        return Err(Error::UnreadableRoot {
            root: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory"),
        });
    }
    let mut lost = 0;
    for item in WalkDir::new(root).into_iter().filter_map(|e| e.ok()) {
        if item.file_type().is_file()
            && item.file_name().to_string_lossy().ends_with(extension)
        {
            lost += 1;
        }
    }
    Ok(lost)
}

/// Seconds between attack start and the alert's event observation.
/// An alert timestamped before the attack started is a clock misuse bug,
/// not a negative delay.
pub fn detection_delay(attack_start: MonotonicSeconds, alert: &AlertReport) -> Result<f64> {
    let delay = alert.event.observed_at.0 - attack_start.0;
    if delay < 0.0 {
        return Err(Error::NegativeDelay);
    }
    Ok(delay)
}

/// Run one experiment against an already-generated corpus using an
/// already-computed trap list: rename traps, arm the monitor, launch the
/// attack, stop it on the first alert, measure, and restore the corpus
/// bit-exactly. The trap list must have been selected against the
/// pristine corpus (original paths, not yet renamed).
pub fn run_experiment(
    root: &Path,
    manifest: &CorpusManifest,
    list: &TrapList,
    profile: &AttackProfile,
    attack_seed: u64,
    suffix: &str,
) -> Result<ExperimentResult> {
    let started_at_wall = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let renamed = rename_traps(list, suffix)?;
    let result = run_experiment_armed(root, manifest, list, &renamed, profile, attack_seed);
    if result.is_err() {
        // Put trap names back so a failed run leaves no residue; the
        // success path restores the whole corpus instead.
        let _ = crate::traps::restore_traps(&renamed);
    }
    result.map(|mut r| {
        r.started_at_wall = started_at_wall;
        r
    })
}

fn run_experiment_armed(
    root: &Path,
    manifest: &CorpusManifest,
    list: &TrapList,
    renamed: &TrapList,
    profile: &AttackProfile,
    attack_seed: u64,
) -> Result<ExperimentResult> {
    let stop = Arc::new(AtomicBool::new(false));
    let handle = watch(
        renamed,
        Box::new(EmulatorKillAction::new(Arc::clone(&stop))),
        WatchMode::FirstHit,
        || {},
    )?;
    let monitor_memory_mb = crate::monitor::measure_monitor_memory().ok();

    let log = run_attack(profile, root, stop, attack_seed)?;
    let report = handle.next_report(Duration::from_millis(800));

    let files_lost = count_file_loss(root, &profile.extension)?;
    debug_assert_eq!(files_lost, log.files_encrypted());
    // File conservation: every manifest file is either encrypted or
    // still present (possibly under its trap name).
    let survivors = count_surviving_files(root, &profile.extension)?;
    debug_assert_eq!(files_lost + survivors, manifest.total_files());
    let total_files = manifest.total_files();

    let detection_delay_s = match &report {
        Some(r) => Some(detection_delay(log.start_at, r)?),
        None => None,
    };

    restore_corpus(manifest, root)?;

    Ok(ExperimentResult {
        method: list.method,
        profile: profile.name.clone(),
        seed: attack_seed,
        total_files,
        files_lost,
        loss_percent: if total_files == 0 {
            0.0
        } else {
            100.0 * files_lost as f64 / total_files as f64
        },
        detection_delay_s,
        missed: report.is_none(),
        traps: list.entries.len(),
        trap_percentage: list.trap_percentage(),
        monitor_memory_mb,
        started_at_wall: 0.0, // filled in by run_experiment
    })
}

fn count_surviving_files(root: &Path, extension: &str) -> Result<usize> {
    let mut alive = 0;
    for item in WalkDir::new(root).into_iter().filter_map(|e| e.ok()) {
        let name = item.file_name().to_string_lossy().to_string();
        if item.file_type().is_file() && !name.ends_with(extension) && name != CORPUS_MARKER {
            alive += 1;
        }
    }
    Ok(alive)
}

/// Configuration for a method x profile x seed sweep.
#[derive(Debug, Clone)]
pub struct GridConfig {
    pub root: PathBuf,
    pub corpus: CorpusSpec,
    pub methods: Vec<SelectionMethod>,
    pub profiles: Vec<AttackProfile>,
    pub seeds: Vec<u64>,
    pub suffix: String,
    /// JSON-lines file; completed cells are appended as they finish and
    /// skipped on restart.
    pub results_path: PathBuf,
    pub selection: SelectionOptions,
}

fn cell_key(method: SelectionMethod, profile: &str, seed: u64) -> String {
    format!("{method}|{profile}|{seed}")
}

fn manifest_path(config: &GridConfig) -> PathBuf {
    config
        .results_path
        .parent()
        .unwrap_or(Path::new("."))
        .join("corpus-manifest.json")
}

/// Run (or resume) a sweep. Results land in `results_path` one JSON line
/// per cell; a rerun loads completed cells, skips them, and only executes
/// what is missing. A torn final line (crash mid-write) is dropped with a
/// warning. Returns all results, loaded and fresh.
pub fn run_grid(config: &GridConfig, warnings: &mut Vec<String>) -> Result<Vec<ExperimentResult>> {
    let manifest = ensure_corpus(config)?;

    let mut done: BTreeMap<String, ExperimentResult> = BTreeMap::new();
    if config.results_path.is_file() {
        let text = fs::read_to_string(&config.results_path).map_err(|source| Error::Io {
            path: config.results_path.clone(),
            source,
        })?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ExperimentResult>(line) {
                Ok(result) => {
                    done.insert(cell_key(result.method, &result.profile, result.seed), result);
                }
                Err(e) => warnings.push(format!(
                    "dropping unreadable result line {}: {e}",
                    i + 1
                )),
            }
        }
    }

    let mut selections: HashMap<(SelectionMethod, u64), TrapList> = HashMap::new();
    let mut out = Vec::new();
    for &seed in &config.seeds {
        for &method in &config.methods {
            let pending: Vec<&AttackProfile> = config
                .profiles
                .iter()
                .filter(|p| !done.contains_key(&cell_key(method, &p.name, seed)))
                .collect();
            if pending.is_empty() {
                continue;
            }
            let list = match selections.entry((method, seed)) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    let mut options = config.selection.clone();
                    options.seed = seed;
                    let scan = ScanConfig::new(vec![config.root.clone()]);
                    e.insert(select_traps(&scan, method, &options, warnings)?)
                }
            };
            for profile in pending {
                match run_experiment(&config.root, &manifest, list, profile, seed, &config.suffix)
                {
                    Ok(result) => {
                        append_result(&config.results_path, &result)?;
                        done.insert(cell_key(method, &profile.name, seed), result);
                    }
                    Err(err) => {
                        // Infrastructure failure: surface it, leave the
                        // cell unrecorded so a rerun retries it, and put
                        // the corpus back before the next cell.
                        warnings.push(format!(
                            "cell {} failed: {err}",
                            cell_key(method, &profile.name, seed)
                        ));
                        restore_corpus(&manifest, &config.root)?;
                    }
                }
            }
        }
    }
    out.extend(done.into_values());
    Ok(out)
}

fn ensure_corpus(config: &GridConfig) -> Result<CorpusManifest> {
    let manifest_file = manifest_path(config);
    if config.root.join(CORPUS_MARKER).is_file() && manifest_file.is_file() {
        return load_manifest(&manifest_file);
    }
    if let Some(parent) = config.results_path.parent() {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    let manifest = generate_corpus(&config.corpus, &config.root)?;
    save_manifest(&manifest, &manifest_file)?;
    Ok(manifest)
}

fn append_result(path: &Path, result: &ExperimentResult) -> Result<()> {
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let line = serde_json::to_string(result).map_err(|e| Error::Other(e.to_string()))?;
    writeln!(file, "{line}").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-method aggregate over a set of experiment results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: SelectionMethod,
    pub runs: usize,
    pub mean_files_lost: f64,
    pub mean_loss_percent: f64,
    /// Mean over detected runs only.
    pub mean_detection_delay_s: Option<f64>,
    pub missed: usize,
    pub mean_trap_percentage: f64,
    /// Mean over runs that reported a memory sample.
    pub mean_monitor_memory_mb: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub summaries: Vec<MethodSummary>,
}

impl ComparisonReport {
    pub fn from_results(results: &[ExperimentResult]) -> Self {
        let mut by_method: BTreeMap<String, Vec<&ExperimentResult>> = BTreeMap::new();
        for r in results {
            by_method.entry(r.method.to_string()).or_default().push(r);
        }
        let summaries = by_method
            .values()
            .map(|rs| {
                let n = rs.len() as f64;
                let delays: Vec<f64> = rs.iter().filter_map(|r| r.detection_delay_s).collect();
                let memory: Vec<f64> = rs.iter().filter_map(|r| r.monitor_memory_mb).collect();
                MethodSummary {
                    method: rs[0].method,
                    runs: rs.len(),
                    mean_files_lost: rs.iter().map(|r| r.files_lost as f64).sum::<f64>() / n,
                    mean_loss_percent: rs.iter().map(|r| r.loss_percent).sum::<f64>() / n,
                    mean_detection_delay_s: if delays.is_empty() {
                        None
                    } else {
                        Some(delays.iter().sum::<f64>() / delays.len() as f64)
                    },
                    missed: rs.iter().filter(|r| r.missed).count(),
                    mean_trap_percentage: rs.iter().map(|r| r.trap_percentage).sum::<f64>() / n,
                    mean_monitor_memory_mb: if memory.is_empty() {
                        None
                    } else {
                        Some(memory.iter().sum::<f64>() / memory.len() as f64)
                    },
                }
            })
            .collect();
        Self { summaries }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,runs,mean_trap_percentage,mean_files_lost,mean_loss_percent,mean_detection_delay_s,mean_monitor_memory_mb,missed\n",
        );
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{:.4},{:.3},{:.4},{},{},{}\n",
                s.method,
                s.runs,
                s.mean_trap_percentage,
                s.mean_files_lost,
                s.mean_loss_percent,
                s.mean_detection_delay_s
                    .map(|d| format!("{d:.4}"))
                    .unwrap_or_default(),
                s.mean_monitor_memory_mb
                    .map(|m| format!("{m:.2}"))
                    .unwrap_or_default(),
                s.missed
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| method | runs | trap % | avg files lost | avg loss % | avg delay (s) | avg memory (MB) | missed |\n\
             |--------|------|--------|----------------|------------|---------------|-----------------|--------|\n",
        );
        for s in &self.summaries {
            out.push_str(&format!(
                "| {} | {} | {:.3} | {:.2} | {:.3} | {} | {} | {} |\n",
                s.method,
                s.runs,
                s.mean_trap_percentage,
                s.mean_files_lost,
                s.mean_loss_percent,
                s.mean_detection_delay_s
                    .map(|d| format!("{d:.3}"))
                    .unwrap_or_else(|| "-".into()),
                s.mean_monitor_memory_mb
                    .map(|m| format!("{m:.2}"))
                    .unwrap_or_else(|| "-".into()),
                s.missed
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::{verify_corpus, TraversalOrder};
    use crate::monitor::{ActionOutcome, EventKindTag, TrapEvent};

    fn fast_profile(order: TraversalOrder, threads: usize) -> AttackProfile {
        AttackProfile {
            name: "test".into(),
            order,
            threads,
            pre_encryption_delay_s: 0.0,
            extension: ".locked".into(),
            min_size_filter: 0,
            throughput_files_per_s: 500.0,
        }
    }

    fn report_at(observed: f64) -> AlertReport {
        AlertReport {
            event: TrapEvent {
                path: PathBuf::new(),
                kind: EventKindTag::Modified,
                observed_at: MonotonicSeconds(observed),
                observed_at_wall: 0.0,
                overflow: false,
            },
            alert_raised_at: MonotonicSeconds(observed),
            action_outcome: ActionOutcome::ActionInvoked,
        }
    }

    #[test]
    fn detection_delay_simple() {
        let d = detection_delay(MonotonicSeconds(10.0), &report_at(10.25)).unwrap();
        assert!((d - 0.25).abs() < 1e-12);
    }

    #[test]
    fn detection_delay_negative_is_error() {
        assert!(matches!(
            detection_delay(MonotonicSeconds(10.0), &report_at(9.0)),
            Err(Error::NegativeDelay)
        ));
    }

    #[test]
    fn experiment_detects_and_restores() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = generate_corpus(&CorpusSpec::small(101), tmp.path()).unwrap();
        let scan = ScanConfig::new(vec![tmp.path().to_path_buf()]);
        let list = select_traps(
            &scan,
            SelectionMethod::Apfo,
            &SelectionOptions::default(),
            &mut Vec::new(),
        )
        .unwrap();
        assert!(!list.entries.is_empty());

        let profile = fast_profile(TraversalOrder::Alphabetical, 1);
        let result =
            run_experiment(tmp.path(), &manifest, &list, &profile, 101, "_tp").unwrap();

        assert!(!result.missed, "alphabetical attack must hit the alpha trap");
        assert!(result.files_lost < result.total_files);
        assert!(result.detection_delay_s.unwrap() >= 0.0);
        assert_eq!(result.total_files, manifest.total_files());

        // Corpus back to pristine, traps included.
        assert!(verify_corpus(&manifest, tmp.path()).unwrap().is_empty());
    }

    #[test]
    fn experiment_without_traps_is_missed() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = generate_corpus(&CorpusSpec::small(103), tmp.path()).unwrap();
        let list = TrapList {
            entries: vec![],
            method: SelectionMethod::Ap,
            created_at: 0.0,
            total_files: manifest.total_files(),
            eligible_directories: 0,
            suffix: None,
        };
        let mut profile = fast_profile(TraversalOrder::Random, 4);
        profile.throughput_files_per_s = 10_000.0;
        let result = run_experiment(tmp.path(), &manifest, &list, &profile, 1, "_tp").unwrap();
        assert!(result.missed);
        assert_eq!(result.files_lost, result.total_files);
        assert!(verify_corpus(&manifest, tmp.path()).unwrap().is_empty());
    }

    #[test]
    fn grid_is_resumable_without_duplicates() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().join("corpus");
        let results = tmp.path().join("work").join("results.jsonl");
        let mut profile = fast_profile(TraversalOrder::Alphabetical, 2);
        profile.throughput_files_per_s = 10_000.0;
        let base = GridConfig {
            root: root.clone(),
            corpus: CorpusSpec::small(111),
            methods: vec![SelectionMethod::Apfo],
            profiles: vec![profile.clone()],
            seeds: vec![1, 2],
            suffix: "_tp".into(),
            results_path: results.clone(),
            selection: SelectionOptions::default(),
        };

        // First pass: only seed 1.
        let mut first = base.clone();
        first.seeds = vec![1];
        let partial = run_grid(&first, &mut Vec::new()).unwrap();
        assert_eq!(partial.len(), 1);
        let lines_after_first = fs::read_to_string(&results).unwrap().lines().count();
        assert_eq!(lines_after_first, 1);

        // Second pass: full grid resumes, adds only the missing cell.
        let all = run_grid(&base, &mut Vec::new()).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(fs::read_to_string(&results).unwrap().lines().count(), 2);

        // Third pass: nothing to do, file untouched.
        let again = run_grid(&base, &mut Vec::new()).unwrap();
        assert_eq!(again.len(), 2);
        assert_eq!(fs::read_to_string(&results).unwrap().lines().count(), 2);
    }

    #[test]
    fn grid_drops_torn_line_with_warning() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().join("corpus");
        let results = tmp.path().join("results.jsonl");
        fs::write(&results, "{\"method\":\"ap\",\"prof").unwrap();
        let mut profile = fast_profile(TraversalOrder::Alphabetical, 1);
        profile.throughput_files_per_s = 10_000.0;
        let config = GridConfig {
            root,
            corpus: CorpusSpec::small(121),
            methods: vec![SelectionMethod::Apfo],
            profiles: vec![profile],
            seeds: vec![3],
            suffix: "_tp".into(),
            results_path: results,
            selection: SelectionOptions::default(),
        };
        let mut warnings = Vec::new();
        let all = run_grid(&config, &mut warnings).unwrap();
        assert_eq!(all.len(), 1);
        assert!(warnings.iter().any(|w| w.contains("unreadable result line")));
    }

    #[test]
    fn report_aggregates_per_method() {
        let mk = |method: SelectionMethod, lost: usize, delay: Option<f64>| ExperimentResult {
            method,
            profile: "p".into(),
            seed: 0,
            total_files: 100,
            files_lost: lost,
            loss_percent: lost as f64,
            detection_delay_s: delay,
            missed: delay.is_none(),
            traps: 5,
            trap_percentage: 5.0,
            monitor_memory_mb: Some(12.0),
            started_at_wall: 0.0,
        };
        let results = vec![
            mk(SelectionMethod::Ap, 10, Some(0.2)),
            mk(SelectionMethod::Ap, 20, Some(0.4)),
            mk(SelectionMethod::Optics, 4, None),
        ];
        let report = ComparisonReport::from_results(&results);
        assert_eq!(report.summaries.len(), 2);
        let ap = report
            .summaries
            .iter()
            .find(|s| s.method == SelectionMethod::Ap)
            .unwrap();
        assert_eq!(ap.runs, 2);
        assert!((ap.mean_files_lost - 15.0).abs() < 1e-12);
        assert!((ap.mean_detection_delay_s.unwrap() - 0.3).abs() < 1e-12);
        let optics = report
            .summaries
            .iter()
            .find(|s| s.method == SelectionMethod::Optics)
            .unwrap();
        assert_eq!(optics.missed, 1);
        assert!(optics.mean_detection_delay_s.is_none());

        let csv = report.to_csv();
        assert!(csv.starts_with("method,"));
        assert_eq!(csv.lines().count(), 3);
        let md = report.to_markdown();
        assert!(md.contains("| ap |"));
        assert!(md.contains("| optics |"));
    }
}
