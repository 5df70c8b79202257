//! Trap selection: per-directory clustering rolled up into an
//! endpoint-wide trap list, plus renaming, persistence, and periodic
//! rescans.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::cluster::{
    self, affinity::Preference, dbcv::default_minpts_candidates, ApOptions, ClusterMethod,
    Criterion, GmmOptions, MeanShiftOptions,
};
use crate::error::{Error, Result};
use crate::features::{self, DatasetOptions, DirectoryDataset, ScanConfig};

/// Endpoint-level selection method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Ap,
    Gmm,
    MeanShift,
    Optics,
    Apfo,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 5] = [
        SelectionMethod::Ap,
        SelectionMethod::Gmm,
        SelectionMethod::MeanShift,
        SelectionMethod::Optics,
        SelectionMethod::Apfo,
    ];
}

impl std::fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SelectionMethod::Ap => "ap",
            SelectionMethod::Gmm => "gmm",
            SelectionMethod::MeanShift => "meanshift",
            SelectionMethod::Optics => "optics",
            SelectionMethod::Apfo => "apfo",
        };
        f.write_str(s)
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "ap" => Ok(SelectionMethod::Ap),
            "gmm" => Ok(SelectionMethod::Gmm),
            "meanshift" | "mean-shift" | "ms" => Ok(SelectionMethod::MeanShift),
            "optics" => Ok(SelectionMethod::Optics),
            "apfo" => Ok(SelectionMethod::Apfo),
            other => Err(Error::invalid("method", format!("unknown method {other}"))),
        }
    }
}

/// How an entry got into the list: clustering exemplar, alphabetically
/// first, or reverse-alphabetically first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrapSource {
    Ml,
    Alpha,
    RevAlpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapEntry {
    pub original_path: PathBuf,
    /// Path after renaming; equals `original_path` until traps are renamed.
    pub active_path: PathBuf,
    pub directory: PathBuf,
    pub method: SelectionMethod,
    pub source: TrapSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapList {
    pub entries: Vec<TrapEntry>,
    pub method: SelectionMethod,
    /// Wall-clock creation time, seconds since epoch.
    pub created_at: f64,
    pub total_files: usize,
    pub eligible_directories: usize,
    /// Suffix applied by rename, if any.
    #[serde(default)]
    pub suffix: Option<String>,
}

impl TrapList {
    pub fn trap_percentage(&self) -> f64 {
        if self.total_files == 0 {
            0.0
        } else {
            100.0 * self.entries.len() as f64 / self.total_files as f64
        }
    }

    pub fn active_paths(&self) -> HashSet<PathBuf> {
        self.entries.iter().map(|e| e.active_path.clone()).collect()
    }
}

/// Per-method clustering parameters with the toolkit defaults.
#[derive(Debug, Clone)]
pub struct SelectionOptions {
    pub seed: u64,
    pub include_name_order: bool,
    pub variance_retained: f64,
    pub ap: ApOptions,
    pub gmm_criterion: Criterion,
    pub gmm_k_max: usize,
    pub gmm_restarts: usize,
    pub gmm: GmmOptions,
    pub ms_quantile: f64,
    pub optics_minpts_candidates: Option<Vec<usize>>,
    pub optics_threshold_quantile: f64,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            include_name_order: false,
            variance_retained: 0.95,
            ap: ApOptions::default(),
            gmm_criterion: Criterion::Bic,
            gmm_k_max: 10,
            gmm_restarts: 5,
            gmm: GmmOptions::default(),
            ms_quantile: 0.3,
            optics_minpts_candidates: None,
            optics_threshold_quantile: 0.75,
        }
    }
}

/// Cluster one directory's matrix and return the exemplar row indices.
pub fn cluster_directory(
    matrix: &[Vec<f64>],
    method: ClusterMethod,
    options: &SelectionOptions,
    seed: u64,
) -> Result<Vec<usize>> {
    let m = matrix.len();
    match method {
        ClusterMethod::AffinityPropagation => {
            let s = cluster::similarity_matrix(matrix, Preference::Median);
            let result = cluster::affinity_propagation(&s, &options.ap)?;
            Ok(result.exemplars)
        }
        ClusterMethod::MeanShift => {
            let bandwidth = if m < 2 {
                1e-6
            } else {
                cluster::estimate_bandwidth(matrix, options.ms_quantile)?
            };
            let result = cluster::mean_shift(matrix, &MeanShiftOptions::with_bandwidth(bandwidth))?;
            Ok(result.exemplars)
        }
        ClusterMethod::Gmm => {
            let (result, _) = cluster::gmm_select(
                matrix,
                options.gmm_k_max.min(m),
                options.gmm_criterion,
                options.gmm_restarts,
                seed,
                &options.gmm,
            )?;
            Ok(result.exemplars)
        }
        ClusterMethod::Optics => {
            let candidates = options
                .optics_minpts_candidates
                .clone()
                .unwrap_or_else(|| default_minpts_candidates(m));
            let (_, result) =
                cluster::select_minpts(matrix, &candidates, options.optics_threshold_quantile)?;
            Ok(result.exemplars)
        }
    }
}

fn directory_seed(base: u64, directory: &Path) -> u64 {
    // Stable FNV-1a over the path bytes so per-directory seeds do not
    // depend on scan order.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in directory.as_os_str().as_encoded_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ base
}

fn method_to_cluster(method: SelectionMethod) -> ClusterMethod {
    match method {
        SelectionMethod::Ap | SelectionMethod::Apfo => ClusterMethod::AffinityPropagation,
        SelectionMethod::Gmm => ClusterMethod::Gmm,
        SelectionMethod::MeanShift => ClusterMethod::MeanShift,
        SelectionMethod::Optics => ClusterMethod::Optics,
    }
}

/// Select traps across the endpoint with one clustering method. Every
/// eligible directory contributes at least one entry; a directory whose
/// clustering fails falls back to its medoid file with a warning.
pub fn select_traps(
    config: &ScanConfig,
    method: SelectionMethod,
    options: &SelectionOptions,
    warnings: &mut Vec<String>,
) -> Result<TrapList> {
    if method == SelectionMethod::Apfo {
        return apfo_select(config, options, warnings);
    }
    let directories = features::scan_endpoint(config, warnings)?;
    if directories.is_empty() {
        warnings.push("no eligible directories found".to_string());
    }
    let mut entries = Vec::new();
    let mut total_files = 0;
    for dir in &directories {
        let dataset = match build_for(dir, options, warnings) {
            Ok(d) => d,
            Err(err) => {
                warnings.push(format!("skipping {}: {err}", dir.display()));
                continue;
            }
        };
        total_files += dataset.records.len();
        let exemplars = exemplars_with_fallback(&dataset, method, options, warnings);
        for idx in exemplars {
            entries.push(entry_for(&dataset, idx, method, TrapSource::Ml));
        }
    }
    Ok(assemble(entries, method, total_files, directories.len()))
}

/// APFO: AP exemplars per directory, unioned with the alphabetically
/// first and reverse-alphabetically first file of each directory,
/// deduplicated by original path.
pub fn apfo_select(
    config: &ScanConfig,
    options: &SelectionOptions,
    warnings: &mut Vec<String>,
) -> Result<TrapList> {
    let directories = features::scan_endpoint(config, warnings)?;
    if directories.is_empty() {
        warnings.push("no eligible directories found".to_string());
    }
    let mut entries: Vec<TrapEntry> = Vec::new();
    let mut seen: HashSet<PathBuf> = HashSet::new();
    let mut total_files = 0;
    for dir in &directories {
        let dataset = match build_for(dir, options, warnings) {
            Ok(d) => d,
            Err(err) => {
                warnings.push(format!("skipping {}: {err}", dir.display()));
                continue;
            }
        };
        total_files += dataset.records.len();
        let exemplars = exemplars_with_fallback(
            &dataset,
            SelectionMethod::Ap,
            options,
            warnings,
        );
        for idx in exemplars {
            let entry = entry_for(&dataset, idx, SelectionMethod::Apfo, TrapSource::Ml);
            if seen.insert(entry.original_path.clone()) {
                entries.push(entry);
            }
        }
        // Heuristic picks: one file per ordering end.
        let mut order: Vec<usize> = (0..dataset.records.len()).collect();
        order.sort_by_key(|&i| name_key(&dataset.records[i].path));
        if let Some(&first) = order.first() {
            let entry = entry_for(&dataset, first, SelectionMethod::Apfo, TrapSource::Alpha);
            if seen.insert(entry.original_path.clone()) {
                entries.push(entry);
            }
        }
        if let Some(&last) = order.last() {
            let entry = entry_for(&dataset, last, SelectionMethod::Apfo, TrapSource::RevAlpha);
            if seen.insert(entry.original_path.clone()) {
                entries.push(entry);
            }
        }
    }
    Ok(assemble(
        entries,
        SelectionMethod::Apfo,
        total_files,
        directories.len(),
    ))
}

fn name_key(path: &Path) -> Vec<u8> {
    path.file_name()
        .map(|n| {
            n.as_encoded_bytes()
                .iter()
                .map(|b| b.to_ascii_lowercase())
                .collect()
        })
        .unwrap_or_default()
}

fn build_for(
    dir: &Path,
    options: &SelectionOptions,
    warnings: &mut Vec<String>,
) -> Result<DirectoryDataset> {
    let dataset_options = DatasetOptions {
        include_name_order: options.include_name_order,
        variance_retained: options.variance_retained,
    };
    features::build_dataset(dir, &dataset_options, warnings)
}

fn exemplars_with_fallback(
    dataset: &DirectoryDataset,
    method: SelectionMethod,
    options: &SelectionOptions,
    warnings: &mut Vec<String>,
) -> Vec<usize> {
    let seed = directory_seed(options.seed, &dataset.directory);
    match cluster_directory(&dataset.matrix, method_to_cluster(method), options, seed) {
        Ok(exemplars) if !exemplars.is_empty() => exemplars,
        Ok(_) | Err(_) => {
            warnings.push(format!(
                "clustering failed for {}; falling back to medoid",
                dataset.directory.display()
            ));
            let members: Vec<usize> = (0..dataset.matrix.len()).collect();
            vec![crate::cluster::medoid(&dataset.matrix, &members)]
        }
    }
}

fn entry_for(
    dataset: &DirectoryDataset,
    idx: usize,
    method: SelectionMethod,
    source: TrapSource,
) -> TrapEntry {
    let path = dataset.records[idx].path.clone();
    TrapEntry {
        active_path: path.clone(),
        original_path: path,
        directory: dataset.directory.clone(),
        method,
        source,
    }
}

fn assemble(
    mut entries: Vec<TrapEntry>,
    method: SelectionMethod,
    total_files: usize,
    eligible_directories: usize,
) -> TrapList {
    // Dedup by original path, first occurrence wins.
    let mut seen = HashSet::new();
    entries.retain(|e| seen.insert(e.original_path.clone()));
    TrapList {
        entries,
        method,
        created_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0),
        total_files,
        eligible_directories,
        suffix: None,
    }
}

/// Rename every trap to `original + suffix`. Atomic per file; on any
/// failure, files renamed so far are rolled back and the error returned.
pub fn rename_traps(list: &TrapList, suffix: &str) -> Result<TrapList> {
    if suffix.is_empty() {
        return Err(Error::invalid("suffix", "must be nonempty"));
    }
    let mut renamed: Vec<(PathBuf, PathBuf)> = Vec::new();
    let mut out = list.clone();
    for entry in out.entries.iter_mut() {
        let target = suffixed_path(&entry.original_path, suffix);
        let result = if target.exists() {
            Err(Error::RenameCollision(target.clone()))
        } else {
            fs::rename(&entry.original_path, &target).map_err(|source| Error::Io {
                path: entry.original_path.clone(),
                source,
            })
        };
        match result {
            Ok(()) => {
                renamed.push((entry.original_path.clone(), target.clone()));
                entry.active_path = target;
            }
            Err(err) => {
                for (orig, active) in renamed.iter().rev() {
                    let _ = fs::rename(active, orig);
                }
                return Err(err);
            }
        }
    }
    out.suffix = Some(suffix.to_string());
    Ok(out)
}

/// Rename traps back to their original names. Best-effort per file; the
/// first error aborts (already-restored files stay restored).
pub fn restore_traps(list: &TrapList) -> Result<TrapList> {
    let mut out = list.clone();
    for entry in out.entries.iter_mut() {
        if entry.active_path != entry.original_path {
            fs::rename(&entry.active_path, &entry.original_path).map_err(|source| Error::Io {
                path: entry.active_path.clone(),
                source,
            })?;
            entry.active_path = entry.original_path.clone();
        }
    }
    out.suffix = None;
    Ok(out)
}

fn suffixed_path(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(suffix);
    path.with_file_name(name)
}

/// Write a trap list as pretty JSON.
pub fn persist_traps(list: &TrapList, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(list).map_err(|e| Error::Other(e.to_string()))?;
    fs::write(path, json).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load a trap list; a malformed file is a parse error with line context
/// and never yields a partial list.
pub fn load_traps(path: &Path) -> Result<TrapList> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        context: format!("line {}, column {}", e.line(), e.column()),
        reason: e.to_string(),
    })
}

/// Handle for a scheduled rescan loop; dropping it does not cancel.
pub struct RescanHandle {
    cancelled: Arc<(Mutex<bool>, Condvar)>,
    thread: Option<std::thread::JoinHandle<()>>,
    pub invocations: Arc<AtomicBool>,
}

impl RescanHandle {
    pub fn cancel(mut self) {
        let (lock, cvar) = &*self.cancelled;
        *lock.lock().unwrap() = true;
        cvar.notify_all();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Invoke `callback` every `interval` until cancelled. The callback
/// returns the new trap list or an error; errors are logged to `on_error`
/// and the previous selection stays in effect (the callback owns the
/// swap).
pub fn schedule_rescan<F, E>(interval: Duration, mut callback: F, mut on_error: E) -> Result<RescanHandle>
where
    F: FnMut() -> Result<()> + Send + 'static,
    E: FnMut(String) + Send + 'static,
{
    if interval.is_zero() {
        return Err(Error::invalid("interval", "must be > 0"));
    }
    let cancelled = Arc::new((Mutex::new(false), Condvar::new()));
    let flag = Arc::clone(&cancelled);
    let invocations = Arc::new(AtomicBool::new(false));
    let inv = Arc::clone(&invocations);
    let thread = std::thread::spawn(move || loop {
        let (lock, cvar) = &*flag;
        let guard = lock.lock().unwrap();
        // Check before waiting: a cancel that lands before the first wait
        // would otherwise be missed until the interval expires.
        if *guard {
            return;
        }
        let (guard, timeout) = cvar.wait_timeout(guard, interval).unwrap();
        if *guard {
            return;
        }
        drop(guard);
        if timeout.timed_out() {
            inv.store(true, Ordering::SeqCst);
            if let Err(err) = callback() {
                on_error(format!("rescan failed, keeping previous traps: {err}"));
            }
        }
    });
    Ok(RescanHandle {
        cancelled,
        thread: Some(thread),
        invocations,
    })
}
