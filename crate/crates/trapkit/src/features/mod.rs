//! Directory scanning and feature extraction: turns a directory of files
//! into a standardized numeric matrix ready for clustering.

pub mod pca;
pub mod transform;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};

pub use pca::apply_pca;
pub use transform::{encode_datetime, encode_types, name_order_features, standardize_column};

/// Metadata of one candidate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    /// Size in bytes.
    pub size: u64,
    /// Lowercase extension, empty when the file has none.
    pub type_tag: String,
    /// Creation time, seconds since epoch (mtime fallback where btime is
    /// unavailable).
    pub created: f64,
    /// Modification time, seconds since epoch.
    pub modified: f64,
}

/// What produced a pre-PCA feature column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    ScaledSize,
    ScaledTypeCode,
    CreatedDaySin,
    CreatedDayCos,
    CreatedYearSin,
    CreatedYearCos,
    ModifiedDaySin,
    ModifiedDayCos,
    ModifiedYearSin,
    ModifiedYearCos,
    NameOrderAlpha,
    NameOrderReverse,
}

/// Per-directory feature matrix plus column provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectoryDataset {
    pub directory: PathBuf,
    /// Records sorted ascending by path.
    pub records: Vec<FileRecord>,
    /// Pre-PCA standardized feature matrix, row per record.
    pub features: Vec<Vec<f64>>,
    /// Descriptors for `features` columns.
    pub columns: Vec<ColumnKind>,
    /// PCA-reduced matrix handed to the clustering algorithms.
    pub matrix: Vec<Vec<f64>>,
}

/// Scan configuration, read from the toolkit config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanConfig {
    pub roots: Vec<PathBuf>,
    /// Path prefixes to skip (OS directories and the like).
    #[serde(default)]
    pub exclusions: Vec<PathBuf>,
    /// Minimum direct regular-file count for a directory to be eligible.
    #[serde(default = "default_min_files")]
    pub min_files: usize,
}

fn default_min_files() -> usize {
    3
}

impl ScanConfig {
    pub fn new(roots: Vec<PathBuf>) -> Self {
        Self {
            roots,
            exclusions: Vec::new(),
            min_files: default_min_files(),
        }
    }
}

/// Options for [`build_dataset`].
#[derive(Debug, Clone, Copy)]
pub struct DatasetOptions {
    pub include_name_order: bool,
    pub variance_retained: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            include_name_order: false,
            variance_retained: 0.95,
        }
    }
}

/// List eligible directories under the configured roots: at least
/// `min_files` regular files directly inside, not under any exclusion
/// prefix. Output sorted ascending by path.
///
/// Unreadable subdirectories are skipped with a warning pushed to
/// `warnings`; an unreadable root is an error.
pub fn scan_endpoint(config: &ScanConfig, warnings: &mut Vec<String>) -> Result<Vec<PathBuf>> {
    if config.min_files < 1 {
        return Err(Error::invalid("min_files", "must be >= 1"));
    }
    let mut out = Vec::new();
    for root in &config.roots {
        fs::read_dir(root).map_err(|source| Error::UnreadableRoot {
            root: root.clone(),
            source,
        })?;
        for entry in WalkDir::new(root).follow_links(false) {
            let entry = match entry {
                Ok(e) => e,
                Err(err) => {
                    warnings.push(format!("skipping unreadable entry: {err}"));
                    continue;
                }
            };
            if !entry.file_type().is_dir() {
                continue;
            }
            let dir = entry.path();
            if config.exclusions.iter().any(|ex| dir.starts_with(ex)) {
                continue;
            }
            match count_regular_files(dir) {
                Ok(count) if count >= config.min_files => out.push(dir.to_path_buf()),
                Ok(_) => {}
                Err(err) => warnings.push(format!("skipping {}: {err}", dir.display())),
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn count_regular_files(dir: &Path) -> std::io::Result<usize> {
    let mut count = 0;
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            count += 1;
        }
    }
    Ok(count)
}

/// One FileRecord per regular file directly inside `directory`, sorted
/// ascending by path. Symlinks and subdirectories are skipped; files that
/// vanish mid-scan are skipped with a warning.
pub fn extract_records(directory: &Path, warnings: &mut Vec<String>) -> Result<Vec<FileRecord>> {
    let entries = fs::read_dir(directory).map_err(|source| Error::Io {
        path: directory.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    for entry in entries {
        let entry = match entry {
            Ok(e) => e,
            Err(err) => {
                warnings.push(format!("skipping entry in {}: {err}", directory.display()));
                continue;
            }
        };
        let path = entry.path();
        let meta = match fs::symlink_metadata(&path) {
            Ok(m) => m,
            Err(err) => {
                warnings.push(format!("file vanished mid-scan: {}: {err}", path.display()));
                continue;
            }
        };
        if !meta.is_file() {
            continue;
        }
        let modified = meta
            .modified()
            .ok()
            .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let created = meta
            .created()
            .ok()
            .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
            .map(|d| d.as_secs_f64())
            .unwrap_or(modified);
        records.push(FileRecord {
            type_tag: extension_tag(&path),
            size: meta.len(),
            created,
            modified,
            path,
        });
    }
    records.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(records)
}

/// Lowercase extension of a path, empty string when absent.
pub fn extension_tag(path: &Path) -> String {
    path.extension()
        .map(|e| e.to_string_lossy().to_lowercase())
        .unwrap_or_default()
}

/// Build the standardized, PCA-reduced dataset for one eligible directory.
pub fn build_dataset(
    directory: &Path,
    options: &DatasetOptions,
    warnings: &mut Vec<String>,
) -> Result<DirectoryDataset> {
    let records = extract_records(directory, warnings)?;
    build_dataset_from_records(directory, records, options)
}

/// Same as [`build_dataset`] but over records already in hand (sorted by
/// path). Useful when the caller has a manifest instead of a live tree.
pub fn build_dataset_from_records(
    directory: &Path,
    records: Vec<FileRecord>,
    options: &DatasetOptions,
) -> Result<DirectoryDataset> {
    let m = records.len();
    if m < 3 {
        return Err(Error::NotEnoughRows { need: 3, got: m });
    }

    let sizes: Vec<f64> = records.iter().map(|r| r.size as f64).collect();
    let scaled_size = standardize_column(&sizes)?;

    let tags: Vec<&str> = records.iter().map(|r| r.type_tag.as_str()).collect();
    let codes: Vec<f64> = encode_types(&tags).into_iter().map(|c| c as f64).collect();
    let scaled_type = standardize_column(&codes)?;

    let mut columns = vec![
        ColumnKind::ScaledSize,
        ColumnKind::ScaledTypeCode,
        ColumnKind::CreatedDaySin,
        ColumnKind::CreatedDayCos,
        ColumnKind::CreatedYearSin,
        ColumnKind::CreatedYearCos,
        ColumnKind::ModifiedDaySin,
        ColumnKind::ModifiedDayCos,
        ColumnKind::ModifiedYearSin,
        ColumnKind::ModifiedYearCos,
    ];

    let mut features: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (i, record) in records.iter().enumerate() {
        let created = encode_datetime(record.created);
        let modified = encode_datetime(record.modified);
        let mut row = vec![scaled_size[i], scaled_type[i]];
        row.extend_from_slice(&created);
        row.extend_from_slice(&modified);
        features.push(row);
    }

    if options.include_name_order {
        let names: Vec<String> = records
            .iter()
            .map(|r| {
                r.path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect();
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let (alpha, rev) = name_order_features(&name_refs);
        for (i, row) in features.iter_mut().enumerate() {
            row.push(alpha[i]);
            row.push(rev[i]);
        }
        columns.push(ColumnKind::NameOrderAlpha);
        columns.push(ColumnKind::NameOrderReverse);
    }

    let matrix = apply_pca(&features, options.variance_retained)?;

    Ok(DirectoryDataset {
        directory: directory.to_path_buf(),
        records,
        features,
        columns,
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs::File;
    use std::io::Write;

    fn touch(path: &Path, bytes: &[u8]) {
        let mut f = File::create(path).unwrap();
        f.write_all(bytes).unwrap();
    }

    #[test]
    fn scan_filters_by_file_count() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("A");
        let b = tmp.path().join("B");
        let c = tmp.path().join("C");
        for d in [&a, &b, &c] {
            fs::create_dir(d).unwrap();
        }
        for i in 0..5 {
            touch(&a.join(format!("f{i}.txt")), b"x");
        }
        for i in 0..2 {
            touch(&b.join(format!("f{i}.txt")), b"x");
        }
        let config = ScanConfig::new(vec![tmp.path().to_path_buf()]);
        let mut warnings = Vec::new();
        let dirs = scan_endpoint(&config, &mut warnings).unwrap();
        assert_eq!(dirs, vec![a]);
    }

    #[test]
    fn scan_empty_root() {
        let tmp = tempfile::tempdir().unwrap();
        let config = ScanConfig::new(vec![tmp.path().to_path_buf()]);
        let dirs = scan_endpoint(&config, &mut Vec::new()).unwrap();
        assert!(dirs.is_empty());
    }

    #[test]
    fn scan_honors_exclusions() {
        let tmp = tempfile::tempdir().unwrap();
        let windows = tmp.path().join("Windows");
        fs::create_dir(&windows).unwrap();
        for i in 0..100 {
            touch(&windows.join(format!("f{i}")), b"x");
        }
        let mut config = ScanConfig::new(vec![tmp.path().to_path_buf()]);
        config.exclusions = vec![windows.clone()];
        let dirs = scan_endpoint(&config, &mut Vec::new()).unwrap();
        assert!(dirs.is_empty());
    }

    #[test]
    fn scan_missing_root_errors() {
        let config = ScanConfig::new(vec![PathBuf::from("/nonexistent-trapkit-root")]);
        assert!(matches!(
            scan_endpoint(&config, &mut Vec::new()),
            Err(Error::UnreadableRoot { .. })
        ));
    }

    #[test]
    fn extract_skips_subdirectories() {
        let tmp = tempfile::tempdir().unwrap();
        fs::create_dir(tmp.path().join("sub")).unwrap();
        for i in 0..4 {
            touch(&tmp.path().join(format!("f{i}.dat")), b"abc");
        }
        let records = extract_records(tmp.path(), &mut Vec::new()).unwrap();
        assert_eq!(records.len(), 4);
        let mut sorted = records.clone();
        sorted.sort_by(|a, b| a.path.cmp(&b.path));
        assert_eq!(records, sorted);
    }

    #[test]
    fn extension_tag_handles_missing_extension() {
        assert_eq!(extension_tag(Path::new("/x/noext")), "");
        assert_eq!(extension_tag(Path::new("/x/a.PDF")), "pdf");
        // distinct code for the empty tag, per the encoder
        assert_eq!(encode_types(&["", "pdf"]), vec![0, 1]);
    }

    #[test]
    fn dataset_column_counts() {
        let tmp = tempfile::tempdir().unwrap();
        touch(&tmp.path().join("a.txt"), b"1");
        touch(&tmp.path().join("b.pdf"), b"22");
        touch(&tmp.path().join("c.mp3"), b"333");

        let mut warnings = Vec::new();
        let off = build_dataset(tmp.path(), &DatasetOptions::default(), &mut warnings).unwrap();
        assert_eq!(off.features[0].len(), 10);

        let opts = DatasetOptions {
            include_name_order: true,
            ..Default::default()
        };
        let on = build_dataset(tmp.path(), &opts, &mut warnings).unwrap();
        assert_eq!(on.features[0].len(), 12);
    }

    #[test]
    fn dataset_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        for (name, content) in [("a.txt", "one"), ("b.txt", "two2"), ("c.pdf", "three33")] {
            touch(&tmp.path().join(name), content.as_bytes());
        }
        let opts = DatasetOptions::default();
        let d1 = build_dataset(tmp.path(), &opts, &mut Vec::new()).unwrap();
        let d2 = build_dataset(tmp.path(), &opts, &mut Vec::new()).unwrap();
        assert_eq!(d1.matrix, d2.matrix);
        assert_eq!(d1.features, d2.features);
    }

    #[test]
    fn degenerate_directory_reduces_to_zero_column() {
        // Identical sizes, types, and timestamps: every column constant.
        let records: Vec<FileRecord> = (0..3)
            .map(|i| FileRecord {
                path: PathBuf::from(format!("/d/f{i}.txt")),
                size: 10,
                type_tag: "txt".to_string(),
                created: 1_700_000_000.0,
                modified: 1_700_000_000.0,
            })
            .collect();
        let ds = build_dataset_from_records(
            Path::new("/d"),
            records,
            &DatasetOptions::default(),
        )
        .unwrap();
        assert_eq!(ds.matrix, vec![vec![0.0]; 3]);
    }

    #[test]
    fn scaled_columns_standardized() {
        let records: Vec<FileRecord> = (0..5)
            .map(|i| FileRecord {
                path: PathBuf::from(format!("/d/f{i}.txt")),
                size: (i * i * 100 + 5) as u64,
                type_tag: if i % 2 == 0 { "txt" } else { "pdf" }.to_string(),
                created: 1_700_000_000.0 + i as f64 * 3600.0,
                modified: 1_700_050_000.0 + i as f64 * 7200.0,
            })
            .collect();
        let ds = build_dataset_from_records(
            Path::new("/d"),
            records,
            &DatasetOptions::default(),
        )
        .unwrap();
        let m = ds.features.len() as f64;
        for col in 0..2 {
            let mean: f64 = ds.features.iter().map(|r| r[col]).sum::<f64>() / m;
            let var: f64 = ds.features.iter().map(|r| (r[col] - mean).powi(2)).sum::<f64>() / m;
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }
}
