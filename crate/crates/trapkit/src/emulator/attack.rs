//! Emulated encryption runs: multi-threaded traversal over a marked
//! corpus with per-family ordering, pacing, and a cooperative stop latch.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::corpus::CORPUS_MARKER;
use super::{AttackProfile, TraversalOrder};
use crate::error::{Error, Result};
use crate::time::{monotonic_now_s, MonotonicSeconds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopCause {
    /// Ran out of files.
    Finished,
    /// The stop latch was raised (monitor kill).
    Killed,
}

/// One encrypted file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRecord {
    /// Path before the extension rename.
    pub path: PathBuf,
    pub thread: usize,
    pub completed_at: MonotonicSeconds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackLog {
    pub profile: String,
    pub start_at: MonotonicSeconds,
    pub end_at: MonotonicSeconds,
    pub stop_cause: StopCause,
    pub records: Vec<AttackRecord>,
}

impl AttackLog {
    pub fn files_encrypted(&self) -> usize {
        self.records.len()
    }
}

/// Sleep in short slices so the stop latch is honored promptly.
fn interruptible_sleep(total: Duration, stop: &AtomicBool) -> bool {
    let slice = Duration::from_millis(20);
    let mut remaining = total;
    while remaining > Duration::ZERO {
        if stop.load(Ordering::SeqCst) {
            return false;
        }
        let step = remaining.min(slice);
        thread::sleep(step);
        remaining -= step;
    }
    !stop.load(Ordering::SeqCst)
}

fn name_key(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().to_lowercase())
        .unwrap_or_default()
}

/// Directory with its candidate files and walk metadata.
struct DirFiles {
    depth: usize,
    /// Position in the depth-first walk, used for depth-first ordering.
    walk_index: usize,
    files: Vec<PathBuf>,
}

fn collect_directories(root: &Path, extension: &str) -> Vec<DirFiles> {
    let mut dirs = Vec::new();
    for (walk_index, item) in WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_dir())
        .enumerate()
    {
        let mut files: Vec<PathBuf> = fs::read_dir(item.path())
            .into_iter()
            .flatten()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
            .map(|e| e.path())
            .filter(|p| {
                let name = p.file_name().map(|n| n.to_string_lossy().to_string());
                name.as_deref() != Some(CORPUS_MARKER)
                    && !name.map(|n| n.ends_with(extension)).unwrap_or(false)
            })
            .collect();
        files.sort_by_key(|p| name_key(p));
        if !files.is_empty() {
            dirs.push(DirFiles {
                depth: item.depth(),
                walk_index,
                files,
            });
        }
    }
    dirs
}

/// Build one thread's file sequence from its assigned directories.
fn order_files(
    mut dirs: Vec<DirFiles>,
    order: TraversalOrder,
    rng: &mut ChaCha8Rng,
) -> Vec<PathBuf> {
    match order {
        TraversalOrder::Alphabetical => {}
        TraversalOrder::ReverseAlphabetical => {
            for dir in dirs.iter_mut() {
                dir.files.reverse();
            }
        }
        TraversalOrder::DepthFirst => dirs.sort_by_key(|d| d.walk_index),
        TraversalOrder::BreadthFirst => dirs.sort_by_key(|d| (d.depth, d.walk_index)),
        TraversalOrder::Random => {}
    }
    let mut files: Vec<PathBuf> = dirs.into_iter().flat_map(|d| d.files).collect();
    if order == TraversalOrder::Random {
        files.shuffle(rng);
    }
    files
}

/// Overwrite `path` with pseudo-random bytes of the same length and rename
/// it with the family extension appended.
fn encrypt_file(path: &Path, extension: &str, rng: &mut ChaCha8Rng) -> Result<()> {
    let io = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let size = fs::metadata(path).map_err(io)?.len();
    let file = File::create(path).map_err(io)?;
    super::corpus::write_content_from_rng(rng, size, BufWriter::new(file)).map_err(io)?;

    let mut new_name = path.file_name().unwrap_or_default().to_os_string();
    new_name.push(extension);
    fs::rename(path, path.with_file_name(new_name)).map_err(io)
}

/// Run an emulated attack against a marked corpus root. Refuses to touch
/// any tree without the corpus marker file. Blocks until every worker
/// thread has stopped, either by exhausting its files or by observing the
/// `stop` latch (checked before every file and inside every sleep).
pub fn run_attack(
    profile: &AttackProfile,
    root: &Path,
    stop: Arc<AtomicBool>,
    seed: u64,
) -> Result<AttackLog> {
    if !root.join(CORPUS_MARKER).is_file() {
        return Err(Error::UnsafeAttackRoot(root.to_path_buf()));
    }
    if profile.threads == 0 {
        return Err(Error::invalid("threads", "must be > 0"));
    }
    if profile.throughput_files_per_s <= 0.0 {
        return Err(Error::invalid("throughput_files_per_s", "must be > 0"));
    }

    let dirs = collect_directories(root, &profile.extension);
    // Directories are dealt round-robin so concurrent threads touch
    // disjoint parts of the tree, like real multi-threaded lockers.
    let mut assignments: Vec<Vec<DirFiles>> = (0..profile.threads).map(|_| Vec::new()).collect();
    for (i, dir) in dirs.into_iter().enumerate() {
        assignments[i % profile.threads].push(dir);
    }

    let start_at = monotonic_now_s();
    let pace = Duration::from_secs_f64(1.0 / profile.throughput_files_per_s);
    let delay = Duration::from_secs_f64(profile.pre_encryption_delay_s.max(0.0));
    interruptible_sleep(delay, &stop);

    let mut handles = Vec::new();
    for (t, dirs) in assignments.into_iter().enumerate() {
        let stop = Arc::clone(&stop);
        let extension = profile.extension.clone();
        let min_size = profile.min_size_filter;
        let order = profile.order;
        handles.push(thread::spawn(move || -> Result<Vec<AttackRecord>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((t as u64) << 32 | 0x9e37));
            let files = order_files(dirs, order, &mut rng);
            let mut records = Vec::new();
            for path in files {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                match fs::metadata(&path) {
                    Ok(meta) if meta.len() < min_size => continue,
                    Ok(_) => {}
                    Err(_) => continue, // raced with a rescan or rename
                }
                encrypt_file(&path, &extension, &mut rng)?;
                records.push(AttackRecord {
                    path,
                    thread: t,
                    completed_at: monotonic_now_s(),
                });
                if !interruptible_sleep(pace, &stop) {
                    break;
                }
            }
            Ok(records)
        }));
    }

    let mut records = Vec::new();
    for handle in handles {
        let thread_records = handle
            .join()
            .map_err(|_| Error::Other("attack worker panicked".into()))??;
        records.extend(thread_records);
    }

    Ok(AttackLog {
        profile: profile.name.clone(),
        start_at,
        end_at: monotonic_now_s(),
        stop_cause: if stop.load(Ordering::SeqCst) {
            StopCause::Killed
        } else {
            StopCause::Finished
        },
        records,
    })
}
