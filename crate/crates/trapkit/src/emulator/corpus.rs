//! Synthetic corpus generation and bit-exact restore.
//!
//! File contents are pseudo-random streams keyed by a per-file content
//! seed recorded in the manifest, so the corpus can be regenerated exactly
//! after an attack without storing a backup copy. A marker file written
//! into the corpus root acts as an interlock: the attack emulator refuses
//! to run against any directory tree that lacks it.

use std::collections::BTreeSet;
use std::fs::{self, File, FileTimes};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};

/// Sentinel file name marking a directory tree as an emulation corpus.
pub const CORPUS_MARKER: &str = ".trapkit-corpus";

/// Law for the files-per-directory draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountLaw {
    /// Every directory gets exactly `mean` files.
    Fixed,
    /// Uniform over `[mean - spread, mean + spread]`.
    Uniform,
}

/// Law for file size draws over `[size_min, size_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeLaw {
    Uniform,
    /// Uniform in log-space; skews toward small files like real shares.
    LogUniform,
}

/// Parameters for a synthetic corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub directories: usize,
    pub files_per_directory_mean: f64,
    pub files_per_directory_spread: f64,
    pub count_law: CountLaw,
    pub size_min: u64,
    pub size_max: u64,
    pub size_law: SizeLaw,
    /// Extension (with dot) and relative weight.
    pub type_mix: Vec<(String, f64)>,
    /// Modification timestamps are drawn from this unix-seconds range.
    pub modified_range: (u64, u64),
    /// Name-prefix/type/size/time groups per directory, giving each
    /// directory multi-modal structure for the clustering stages.
    pub groups_per_directory: (usize, usize),
    /// Share of files per directory drawn uniformly over the full size
    /// and date ranges — stragglers that belong to no group.
    #[serde(default)]
    pub noise_fraction: f64,
    pub seed: u64,
}

impl CorpusSpec {
    fn default_type_mix() -> Vec<(String, f64)> {
        vec![
            (".pdf".into(), 0.22),
            (".docx".into(), 0.18),
            (".xlsx".into(), 0.14),
            (".txt".into(), 0.12),
            (".jpg".into(), 0.12),
            (".png".into(), 0.08),
            (".csv".into(), 0.08),
            (".zip".into(), 0.06),
        ]
    }

    /// Reference corpus: 46 directories, ~450 files each, mirroring the
    /// scale of a small office endpoint.
    pub fn reference(seed: u64) -> Self {
        Self {
            directories: 46,
            files_per_directory_mean: 450.0,
            files_per_directory_spread: 60.0,
            count_law: CountLaw::Uniform,
            size_min: 64,
            size_max: 64 * 1024,
            size_law: SizeLaw::LogUniform,
            type_mix: Self::default_type_mix(),
            modified_range: (1_500_000_000, 1_700_000_000),
            groups_per_directory: (3, 6),
            noise_fraction: 0.0,
            seed,
        }
    }

    /// EP-1-like endpoint: many directories of ~450 files.
    pub fn endpoint_small(seed: u64) -> Self {
        Self {
            directories: 12,
            files_per_directory_mean: 450.0,
            files_per_directory_spread: 60.0,
            ..Self::reference(seed)
        }
    }

    /// EP-2-like endpoint: fewer, larger directories of ~1000 files.
    pub fn endpoint_large(seed: u64) -> Self {
        Self {
            directories: 5,
            files_per_directory_mean: 1000.0,
            files_per_directory_spread: 120.0,
            ..Self::reference(seed)
        }
    }

    /// Tiny corpus for fast functional tests.
    pub fn small(seed: u64) -> Self {
        Self {
            directories: 4,
            files_per_directory_mean: 25.0,
            files_per_directory_spread: 8.0,
            size_min: 16,
            size_max: 4096,
            ..Self::reference(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.directories == 0 {
            return Err(Error::invalid("directories", "must be > 0"));
        }
        if self.files_per_directory_mean < 1.0 {
            return Err(Error::invalid("files_per_directory_mean", "must be >= 1"));
        }
        if self.size_min == 0 || self.size_max < self.size_min {
            return Err(Error::invalid("size", "need 0 < size_min <= size_max"));
        }
        if self.type_mix.is_empty() || self.type_mix.iter().any(|(_, w)| *w <= 0.0) {
            return Err(Error::invalid("type_mix", "need positive weights"));
        }
        if self.modified_range.1 < self.modified_range.0 {
            return Err(Error::invalid("modified_range", "end before start"));
        }
        let (lo, hi) = self.groups_per_directory;
        if lo == 0 || hi < lo {
            return Err(Error::invalid("groups_per_directory", "need 0 < lo <= hi"));
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return Err(Error::invalid("noise_fraction", "must be in [0, 1)"));
        }
        Ok(())
    }
}

/// One generated file: everything needed to recreate it bit-exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Slash-separated path relative to the corpus root.
    pub rel_path: String,
    pub size: u64,
    pub modified: u64,
    pub content_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub spec: CorpusSpec,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn total_files(&self) -> usize {
        self.entries.len()
    }
}

const NAME_PREFIXES: &[&str] = &[
    "archive", "backup", "budget", "contract", "draft", "invoice", "memo", "notes", "photo",
    "plan", "report", "scan", "summary", "survey",
];

fn weighted_extension(rng: &mut ChaCha8Rng, mix: &[(String, f64)]) -> String {
    let total: f64 = mix.iter().map(|(_, w)| w).sum();
    let mut roll = rng.gen::<f64>() * total;
    for (ext, w) in mix {
        roll -= w;
        if roll <= 0.0 {
            return ext.clone();
        }
    }
    mix.last().unwrap().0.clone()
}

fn draw_count(rng: &mut ChaCha8Rng, spec: &CorpusSpec) -> usize {
    let n = match spec.count_law {
        CountLaw::Fixed => spec.files_per_directory_mean,
        CountLaw::Uniform => {
            let lo = (spec.files_per_directory_mean - spec.files_per_directory_spread).max(1.0);
            let hi = spec.files_per_directory_mean + spec.files_per_directory_spread;
            rng.gen_range(lo..=hi)
        }
    };
    (n.round() as usize).max(1)
}

fn draw_size(rng: &mut ChaCha8Rng, lo: u64, hi: u64, law: SizeLaw) -> u64 {
    if lo == hi {
        return lo;
    }
    match law {
        SizeLaw::Uniform => rng.gen_range(lo..=hi),
        SizeLaw::LogUniform => {
            let v = rng.gen_range((lo as f64).ln()..=(hi as f64).ln()).exp();
            (v.round() as u64).clamp(lo, hi)
        }
    }
}

/// Stream the pseudo-random content for `content_seed` into `writer`.
fn write_content<W: Write>(content_seed: u64, size: u64, writer: W) -> std::io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(content_seed);
    write_content_from_rng(&mut rng, size, writer)
}

/// Stream `size` pseudo-random bytes from an existing generator.
pub(crate) fn write_content_from_rng<W: Write>(
    rng: &mut ChaCha8Rng,
    size: u64,
    mut writer: W,
) -> std::io::Result<()> {
    let mut buf = [0u8; 8192];
    let mut remaining = size as usize;
    while remaining > 0 {
        let n = remaining.min(buf.len());
        rng.fill_bytes(&mut buf[..n]);
        writer.write_all(&buf[..n])?;
        remaining -= n;
    }
    Ok(())
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn set_modified(path: &Path, unix_secs: u64) -> Result<()> {
    let file = File::options()
        .write(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let when = SystemTime::UNIX_EPOCH + Duration::from_secs(unix_secs);
    file.set_times(FileTimes::new().set_modified(when))
        .map_err(|e| io_err(path, e))
}

fn materialize(root: &Path, entry: &ManifestEntry) -> Result<()> {
    let path = root.join(&entry.rel_path);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    write_content(entry.content_seed, entry.size, std::io::BufWriter::new(file))
        .map_err(|e| io_err(&path, e))?;
    set_modified(&path, entry.modified)
}

/// Generate a corpus under `root` (which must be empty or absent) and
/// return the manifest. The same spec and seed always produce identical
/// trees and identical manifests.
pub fn generate_corpus(spec: &CorpusSpec, root: &Path) -> Result<CorpusManifest> {
    spec.validate()?;
    fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    let existing = fs::read_dir(root).map_err(|e| io_err(root, e))?.count();
    if existing > 0 {
        return Err(Error::invalid(
            "root",
            format!("{} is not empty", root.display()),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut entries = Vec::new();
    let (time_lo, time_hi) = spec.modified_range;
    let time_span = (time_hi - time_lo).max(1);

    let log_lo = (spec.size_min as f64).ln();
    let log_hi = (spec.size_max as f64).ln();
    for d in 0..spec.directories {
        let dir_name = format!("dir{d:03}");
        let total = draw_count(&mut rng, spec);
        let noise = (total as f64 * spec.noise_fraction).round() as usize;
        let count = total - noise;
        let (g_lo, g_hi) = spec.groups_per_directory;
        let groups = rng.gen_range(g_lo..=g_hi).min(count.max(1));

        // Each group models one kind of content: a name prefix, one
        // extension, a tight date window at a characteristic hour of day,
        // and a pair of narrow size bands (e.g. thumbnails vs originals).
        // Directories therefore carry real hierarchical cluster
        // structure: well-separated groups, each with finer sub-bands.
        let mut bands: Vec<(f64, f64, String)> = Vec::new();
        for g in 0..groups {
            let group_files = count / groups + usize::from(g < count % groups);
            let prefix = NAME_PREFIXES[rng.gen_range(0..NAME_PREFIXES.len())];
            let ext = weighted_extension(&mut rng, &spec.type_mix);

            // Two size sub-bands in log space, each narrow.
            let band_gap = ((log_hi - log_lo) * 0.25).min(1.2);
            let band_width = band_gap * 0.1;
            let c1 = rng.gen_range(log_lo + band_width..(log_hi - band_gap - band_width));
            let c2 = c1 + band_gap;
            bands.push((c1, band_width, ext.to_string()));

            // A ~3-week date window away from the range edges, with
            // modifications landing near one characteristic hour.
            let margin = (time_span / 20).max(12 * 86_400);
            let center_day =
                rng.gen_range((time_lo + margin) / 86_400..=(time_hi - margin) / 86_400) as i64;
            let hour: i64 = rng.gen_range(6..22);

            for i in 0..group_files {
                let c = if rng.gen::<bool>() { c1 } else { c2 };
                let clamp_size = |x: f64| {
                    (x.exp().round() as u64).clamp(spec.size_min, spec.size_max)
                };
                let (b_lo, b_hi) = (clamp_size(c - band_width), clamp_size(c + band_width));
                let day = center_day + rng.gen_range(-10i64..=10);
                let second_of_day = hour * 3600 + rng.gen_range(-1800i64..1800);
                let modified = (day * 86_400 + second_of_day)
                    .clamp(time_lo as i64, time_hi as i64) as u64;
                entries.push(ManifestEntry {
                    rel_path: format!("{dir_name}/{prefix}_{g}{i:04}{ext}"),
                    size: draw_size(&mut rng, b_lo.min(b_hi), b_hi.max(b_lo), spec.size_law),
                    modified,
                    content_seed: rng.gen(),
                });
            }
        }

        // Stragglers: files that look like one of the groups (same size
        // band and extension) but were modified at an arbitrary moment,
        // far from every group's date window.
        for i in 0..noise {
            let (c, band_width, ext) = &bands[rng.gen_range(0..bands.len())];
            let clamp_size =
                |x: f64| (x.exp().round() as u64).clamp(spec.size_min, spec.size_max);
            let (b_lo, b_hi) = (clamp_size(c - band_width), clamp_size(c + band_width));
            entries.push(ManifestEntry {
                rel_path: format!("{dir_name}/misc{i:04}{ext}"),
                size: draw_size(&mut rng, b_lo.min(b_hi), b_hi.max(b_lo), spec.size_law),
                modified: rng.gen_range(time_lo..=time_hi),
                content_seed: rng.gen(),
            });
        }
    }
    entries.sort_by(|a, b| a.rel_path.cmp(&b.rel_path));

    for entry in &entries {
        materialize(root, entry)?;
    }
    File::create(root.join(CORPUS_MARKER)).map_err(|e| io_err(root, e))?;

    Ok(CorpusManifest {
        spec: spec.clone(),
        entries,
    })
}

/// Bring `root` back to the manifest state: remove files the manifest
/// does not know (encrypted copies, renamed traps, ransom notes) and
/// regenerate entries that are missing or visibly changed. An entry whose
/// size and mtime both still match is left alone — the emulator always
/// renames what it touches, so an unchanged name+size+mtime means
/// unchanged content (`verify_corpus` checks bytes when that assumption
/// must be proven).
pub fn restore_corpus(manifest: &CorpusManifest, root: &Path) -> Result<()> {
    if !root.is_dir() {
        return Err(Error::UnreadableRoot {
            root: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory"),
        });
    }
    let keep: BTreeSet<PathBuf> = manifest
        .entries
        .iter()
        .map(|e| root.join(&e.rel_path))
        .collect();
    let mut dirs = Vec::new();
    for item in WalkDir::new(root).into_iter().filter_map(|e| e.ok()) {
        let path = item.path();
        if item.file_type().is_dir() {
            if path != root {
                dirs.push(path.to_path_buf());
            }
        } else if path.file_name().map(|n| n != CORPUS_MARKER).unwrap_or(true)
            && !keep.contains(path)
        {
            fs::remove_file(path).map_err(|e| io_err(path, e))?;
        }
    }
    for entry in &manifest.entries {
        let path = root.join(&entry.rel_path);
        let intact = fs::metadata(&path)
            .map(|m| {
                m.len() == entry.size
                    && m.modified()
                        .ok()
                        .and_then(|t| t.duration_since(SystemTime::UNIX_EPOCH).ok())
                        .map(|d| d.as_secs())
                        == Some(entry.modified)
            })
            .unwrap_or(false);
        if !intact {
            materialize(root, entry)?;
        }
    }
    // Drop directories the attack may have left behind that hold nothing.
    dirs.sort_by_key(|d| std::cmp::Reverse(d.components().count()));
    for dir in dirs {
        let _ = fs::remove_dir(&dir); // fails (harmlessly) when non-empty
    }
    File::create(root.join(CORPUS_MARKER)).map_err(|e| io_err(root, e))?;
    Ok(())
}

/// Compare the on-disk tree against the manifest. Returns a list of
/// human-readable mismatches; empty means bit-exact (content included).
pub fn verify_corpus(manifest: &CorpusManifest, root: &Path) -> Result<Vec<String>> {
    let mut mismatches = Vec::new();
    let mut expected: BTreeSet<PathBuf> = BTreeSet::new();
    for entry in &manifest.entries {
        let path = root.join(&entry.rel_path);
        expected.insert(path.clone());
        let meta = match fs::metadata(&path) {
            Ok(m) => m,
            Err(_) => {
                mismatches.push(format!("missing: {}", entry.rel_path));
                continue;
            }
        };
        if meta.len() != entry.size {
            mismatches.push(format!(
                "size: {} is {} want {}",
                entry.rel_path,
                meta.len(),
                entry.size
            ));
            continue;
        }
        if !content_matches(&path, entry)? {
            mismatches.push(format!("content: {}", entry.rel_path));
        }
        let modified = meta
            .modified()
            .ok()
            .and_then(|t| t.duration_since(SystemTime::UNIX_EPOCH).ok())
            .map(|d| d.as_secs());
        if modified != Some(entry.modified) {
            mismatches.push(format!("mtime: {}", entry.rel_path));
        }
    }
    for item in WalkDir::new(root).into_iter().filter_map(|e| e.ok()) {
        let path = item.path();
        if item.file_type().is_file()
            && path.file_name().map(|n| n != CORPUS_MARKER).unwrap_or(true)
            && !expected.contains(path)
        {
            mismatches.push(format!("unexpected: {}", path.display()));
        }
    }
    Ok(mismatches)
}

fn content_matches(path: &Path, entry: &ManifestEntry) -> Result<bool> {
    let mut file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(entry.content_seed);
    let mut want = [0u8; 8192];
    let mut got = [0u8; 8192];
    let mut remaining = entry.size as usize;
    while remaining > 0 {
        let n = remaining.min(want.len());
        rng.fill_bytes(&mut want[..n]);
        file.read_exact(&mut got[..n]).map_err(|e| io_err(path, e))?;
        if want[..n] != got[..n] {
            return Ok(false);
        }
        remaining -= n;
    }
    Ok(true)
}

pub fn save_manifest(manifest: &CorpusManifest, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Other(format!("manifest serialization: {e}")))?;
    fs::write(path, json).map_err(|e| io_err(path, e))
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        context: "corpus manifest".into(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generate_then_verify_clean() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = generate_corpus(&CorpusSpec::small(7), tmp.path()).unwrap();
        assert!(manifest.total_files() >= 4 * 17);
        assert!(tmp.path().join(CORPUS_MARKER).is_file());
        let mismatches = verify_corpus(&manifest, tmp.path()).unwrap();
        assert!(mismatches.is_empty(), "{mismatches:?}");
    }

    #[test]
    fn same_seed_identical_manifests() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = CorpusSpec::small(42);
        let ma = generate_corpus(&spec, a.path()).unwrap();
        let mb = generate_corpus(&spec, b.path()).unwrap();
        assert_eq!(ma.entries, mb.entries);
        assert_eq!(
            serde_json::to_string(&ma).unwrap(),
            serde_json::to_string(&mb).unwrap()
        );
    }

    #[test]
    fn different_seeds_differ() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = generate_corpus(&CorpusSpec::small(1), a.path()).unwrap();
        let mb = generate_corpus(&CorpusSpec::small(2), b.path()).unwrap();
        assert_ne!(ma.entries, mb.entries);
    }

    #[test]
    fn refuses_nonempty_root() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("existing.txt"), b"hello").unwrap();
        assert!(generate_corpus(&CorpusSpec::small(3), tmp.path()).is_err());
    }

    #[test]
    fn restore_recovers_tampering() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = generate_corpus(&CorpusSpec::small(9), tmp.path()).unwrap();

        // Tamper: delete one file, scribble another, rename a third, add junk.
        let first = tmp.path().join(&manifest.entries[0].rel_path);
        let second = tmp.path().join(&manifest.entries[1].rel_path);
        let third = tmp.path().join(&manifest.entries[2].rel_path);
        fs::remove_file(&first).unwrap();
        fs::write(&second, b"scribbled over").unwrap();
        fs::rename(&third, third.with_extension("locked")).unwrap();
        fs::write(tmp.path().join("dir000/ransom_note.txt"), b"pay up").unwrap();

        assert!(!verify_corpus(&manifest, tmp.path()).unwrap().is_empty());
        restore_corpus(&manifest, tmp.path()).unwrap();
        let mismatches = verify_corpus(&manifest, tmp.path()).unwrap();
        assert!(mismatches.is_empty(), "{mismatches:?}");
    }

    #[test]
    fn manifest_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = generate_corpus(&CorpusSpec::small(5), tmp.path()).unwrap();
        let path = tmp.path().join("manifest.json");
        save_manifest(&manifest, &path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.entries, manifest.entries);
    }

    #[test]
    fn mtimes_are_applied() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = generate_corpus(&CorpusSpec::small(11), tmp.path()).unwrap();
        let entry = &manifest.entries[0];
        let meta = fs::metadata(tmp.path().join(&entry.rel_path)).unwrap();
        let secs = meta
            .modified()
            .unwrap()
            .duration_since(SystemTime::UNIX_EPOCH)
            .unwrap()
            .as_secs();
        assert_eq!(secs, entry.modified);
    }

    #[test]
    fn sizes_respect_spec_bounds() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = CorpusSpec::small(13);
        let manifest = generate_corpus(&spec, tmp.path()).unwrap();
        for entry in &manifest.entries {
            assert!(entry.size >= spec.size_min && entry.size <= spec.size_max);
        }
    }

    #[test]
    fn endpoint_presets_ordered() {
        let small = CorpusSpec::endpoint_small(1);
        let large = CorpusSpec::endpoint_large(1);
        assert!(large.files_per_directory_mean > small.files_per_directory_mean);
        small.validate().unwrap();
        large.validate().unwrap();
        CorpusSpec::reference(1).validate().unwrap();
    }

    #[test]
    fn validate_rejects_bad_specs() {
        let mut spec = CorpusSpec::small(1);
        spec.size_max = spec.size_min - 1;
        assert!(spec.validate().is_err());
        let mut spec = CorpusSpec::small(1);
        spec.type_mix.clear();
        assert!(spec.validate().is_err());
        let mut spec = CorpusSpec::small(1);
        spec.directories = 0;
        assert!(spec.validate().is_err());
    }
}
