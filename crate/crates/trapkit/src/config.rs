//! TOML configuration shared by the CLI subcommands. Every knob has a
//! default, so an empty file is a valid config; unknown keys are rejected
//! so typos fail loudly instead of silently using defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::cluster::{ApOptions, Criterion, GmmOptions};
use crate::error::{Error, Result};
use crate::features::ScanConfig;
use crate::traps::{SelectionMethod, SelectionOptions};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub roots: Vec<PathBuf>,
    pub exclusions: Vec<PathBuf>,
    pub min_files: usize,
    pub method: String,
    pub suffix: String,
    pub seed: u64,
    pub include_name_order: bool,
    pub variance_retained: f64,
    pub rescan_interval_s: u64,
    pub ap: ApConfig,
    pub gmm: GmmConfig,
    pub meanshift: MeanShiftConfig,
    pub optics: OpticsConfig,
    pub emulator: EmulatorConfig,
}

impl Default for Config {
    fn default() -> Self {
        let selection = SelectionOptions::default();
        Self {
            roots: Vec::new(),
            exclusions: Vec::new(),
            min_files: 3,
            method: "apfo".to_string(),
            suffix: "_tp".to_string(),
            seed: 0,
            include_name_order: false,
            variance_retained: selection.variance_retained,
            rescan_interval_s: 3600,
            ap: ApConfig::default(),
            gmm: GmmConfig::default(),
            meanshift: MeanShiftConfig::default(),
            optics: OpticsConfig::default(),
            emulator: EmulatorConfig::default(),
        }
    }
}

/// Per-family overrides for the built-in attack profiles.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmulatorConfig {
    pub profiles: Vec<ProfileOverride>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOverride {
    pub name: String,
    pub order: Option<String>,
    pub threads: Option<usize>,
    pub pre_encryption_delay_s: Option<f64>,
    pub extension: Option<String>,
    pub min_size_filter: Option<u64>,
    pub throughput_files_per_s: Option<f64>,
}

impl EmulatorConfig {
    /// Apply overrides in place; an override naming an unknown family is
    /// an error.
    pub fn apply(&self, profiles: &mut [crate::emulator::AttackProfile]) -> Result<()> {
        for o in &self.profiles {
            let profile = profiles
                .iter_mut()
                .find(|p| p.name.eq_ignore_ascii_case(&o.name))
                .ok_or_else(|| {
                    Error::invalid("emulator.profiles", format!("unknown family {}", o.name))
                })?;
            if let Some(order) = &o.order {
                profile.order = crate::emulator::TraversalOrder::from_str(order)?;
            }
            if let Some(threads) = o.threads {
                profile.threads = threads;
            }
            if let Some(delay) = o.pre_encryption_delay_s {
                profile.pre_encryption_delay_s = delay;
            }
            if let Some(extension) = &o.extension {
                profile.extension = extension.clone();
            }
            if let Some(min_size) = o.min_size_filter {
                profile.min_size_filter = min_size;
            }
            if let Some(tp) = o.throughput_files_per_s {
                profile.throughput_files_per_s = tp;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApConfig {
    pub damping: f64,
    pub max_iter: usize,
    pub convergence_iter: usize,
}

impl Default for ApConfig {
    fn default() -> Self {
        let o = ApOptions::default();
        Self {
            damping: o.damping,
            max_iter: o.max_iter,
            convergence_iter: o.convergence_iter,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmmConfig {
    /// "aic" or "bic".
    pub criterion: String,
    pub k_max: usize,
    pub restarts: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            criterion: "bic".to_string(),
            k_max: 10,
            restarts: 5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanShiftConfig {
    pub quantile: f64,
}

impl Default for MeanShiftConfig {
    fn default() -> Self {
        Self { quantile: 0.3 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticsConfig {
    /// Empty means the built-in candidate set derived from directory size.
    pub minpts_candidates: Vec<usize>,
    pub threshold_quantile: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            minpts_candidates: Vec::new(),
            threshold_quantile: 0.75,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: Config = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            context: "config".to_string(),
            reason: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.selection_method()?;
        if !(0.5..1.0).contains(&self.ap.damping) {
            return Err(Error::invalid("ap.damping", "must be in [0.5, 1)"));
        }
        if !(self.variance_retained > 0.0 && self.variance_retained <= 1.0) {
            return Err(Error::invalid("variance_retained", "must be in (0, 1]"));
        }
        if !(self.meanshift.quantile > 0.0 && self.meanshift.quantile <= 1.0) {
            return Err(Error::invalid("meanshift.quantile", "must be in (0, 1]"));
        }
        match self.gmm.criterion.to_lowercase().as_str() {
            "aic" | "bic" => {}
            other => {
                return Err(Error::invalid(
                    "gmm.criterion",
                    format!("expected aic or bic, got {other}"),
                ))
            }
        }
        if self.suffix.is_empty() {
            return Err(Error::invalid("suffix", "must be nonempty"));
        }
        Ok(())
    }

    pub fn selection_method(&self) -> Result<SelectionMethod> {
        SelectionMethod::from_str(&self.method)
    }

    pub fn scan_config(&self) -> ScanConfig {
        ScanConfig {
            roots: self.roots.clone(),
            exclusions: self.exclusions.clone(),
            min_files: self.min_files,
        }
    }

    pub fn selection_options(&self) -> SelectionOptions {
        SelectionOptions {
            seed: self.seed,
            include_name_order: self.include_name_order,
            variance_retained: self.variance_retained,
            ap: ApOptions {
                damping: self.ap.damping,
                max_iter: self.ap.max_iter,
                convergence_iter: self.ap.convergence_iter,
            },
            gmm_criterion: if self.gmm.criterion.eq_ignore_ascii_case("aic") {
                Criterion::Aic
            } else {
                Criterion::Bic
            },
            gmm_k_max: self.gmm.k_max,
            gmm_restarts: self.gmm.restarts,
            gmm: GmmOptions::default(),
            ms_quantile: self.meanshift.quantile,
            optics_minpts_candidates: if self.optics.minpts_candidates.is_empty() {
                None
            } else {
                Some(self.optics.minpts_candidates.clone())
            },
            optics_threshold_quantile: self.optics.threshold_quantile,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let path = dir.join("config.toml");
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn empty_config_uses_defaults() {
        let tmp = tempfile::tempdir().unwrap();
        let config = Config::load(&write(tmp.path(), "")).unwrap();
        assert_eq!(config.selection_method().unwrap(), SelectionMethod::Apfo);
        assert_eq!(config.suffix, "_tp");
        let options = config.selection_options();
        assert_eq!(options.variance_retained, 0.95);
        assert_eq!(options.gmm_criterion, Criterion::Bic);
        assert_eq!(options.ms_quantile, 0.3);
        assert!(options.optics_minpts_candidates.is_none());
    }

    #[test]
    fn full_config_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let path = write(
            tmp.path(),
            r#"
roots = ["/data/share"]
exclusions = ["/data/share/tmp"]
method = "optics"
suffix = "_decoy"
seed = 99
include_name_order = true

[ap]
damping = 0.85

[gmm]
criterion = "aic"
k_max = 6

[optics]
minpts_candidates = [2, 4]
"#,
        );
        let config = Config::load(&path).unwrap();
        assert_eq!(config.selection_method().unwrap(), SelectionMethod::Optics);
        assert_eq!(config.scan_config().roots, vec![PathBuf::from("/data/share")]);
        let options = config.selection_options();
        assert_eq!(options.ap.damping, 0.85);
        assert_eq!(options.gmm_criterion, Criterion::Aic);
        assert_eq!(options.gmm_k_max, 6);
        assert_eq!(options.optics_minpts_candidates, Some(vec![2, 4]));
        assert!(options.include_name_order);
        assert_eq!(options.seed, 99);
    }

    #[test]
    fn emulator_overrides_apply() {
        let tmp = tempfile::tempdir().unwrap();
        let path = write(
            tmp.path(),
            r#"
[[emulator.profiles]]
name = "lockbit"
threads = 4
throughput_files_per_s = 200.0
"#,
        );
        let config = Config::load(&path).unwrap();
        let mut profiles = crate::emulator::builtin_profiles();
        config.emulator.apply(&mut profiles).unwrap();
        let lockbit = profiles.iter().find(|p| p.name == "lockbit").unwrap();
        assert_eq!(lockbit.threads, 4);
        assert_eq!(lockbit.throughput_files_per_s, 200.0);
        // Untouched fields keep their builtin values.
        assert_eq!(lockbit.extension, ".lockbit");
    }

    #[test]
    fn emulator_override_unknown_family_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let path = write(tmp.path(), "[[emulator.profiles]]\nname = \"wannacry\"\n");
        let config = Config::load(&path).unwrap();
        let mut profiles = crate::emulator::builtin_profiles();
        assert!(config.emulator.apply(&mut profiles).is_err());
    }

    #[test]
    fn unknown_key_is_parse_error() {
        let tmp = tempfile::tempdir().unwrap();
        let path = write(tmp.path(), "methodd = \"ap\"\n");
        assert!(matches!(Config::load(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_toml_is_parse_error() {
        let tmp = tempfile::tempdir().unwrap();
        let path = write(tmp.path(), "roots = [\"unclosed\n");
        assert!(matches!(Config::load(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn out_of_range_damping_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let path = write(tmp.path(), "[ap]\ndamping = 1.5\n");
        assert!(Config::load(&path).is_err());
    }

    #[test]
    fn unknown_method_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let path = write(tmp.path(), "method = \"kmeans\"\n");
        assert!(Config::load(&path).is_err());
    }
}
