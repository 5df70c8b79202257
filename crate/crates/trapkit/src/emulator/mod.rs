//! The test adversary: synthetic corpus generation and a safe ransomware
//! behavior emulator (traversal order, threading, pre-encryption delay,
//! extension tagging). "Encryption" is a seeded pseudo-random overwrite
//! plus rename; the manifest and seed restore the corpus bit-exactly.

pub mod attack;
pub mod corpus;

use serde::{Deserialize, Serialize};

pub use attack::{run_attack, AttackLog, AttackRecord, StopCause};
pub use corpus::{
    generate_corpus, load_manifest, restore_corpus, save_manifest, verify_corpus, CorpusManifest,
    CorpusSpec, CountLaw, ManifestEntry, SizeLaw, CORPUS_MARKER,
};

/// File visitation order during an emulated attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraversalOrder {
    Alphabetical,
    ReverseAlphabetical,
    DepthFirst,
    BreadthFirst,
    Random,
}

impl std::str::FromStr for TraversalOrder {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.to_lowercase().as_str() {
            "alphabetical" | "alpha" => Ok(TraversalOrder::Alphabetical),
            "reverse-alphabetical" | "revalpha" => Ok(TraversalOrder::ReverseAlphabetical),
            "depth-first" | "dfs" => Ok(TraversalOrder::DepthFirst),
            "breadth-first" | "bfs" => Ok(TraversalOrder::BreadthFirst),
            "random" => Ok(TraversalOrder::Random),
            other => Err(crate::error::Error::invalid(
                "order",
                format!("unknown traversal order {other}"),
            )),
        }
    }
}

/// One emulated ransomware family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackProfile {
    pub name: String,
    pub order: TraversalOrder,
    pub threads: usize,
    pub pre_encryption_delay_s: f64,
    /// Extension appended to encrypted files, e.g. ".lockbit".
    pub extension: String,
    /// Files below this size are skipped (0 = no filter).
    pub min_size_filter: u64,
    /// Pacing, files per second per thread.
    pub throughput_files_per_s: f64,
}

impl AttackProfile {
    /// Category 1 launches more than 10 threads, category 2 fewer.
    pub fn category(&self) -> u8 {
        if self.threads > 10 {
            1
        } else {
            2
        }
    }
}

/// The 18 built-in family profiles. Thread counts follow the >10 / <10
/// category split; traversal orders are fixed for the six families with
/// known ordering behavior and random for the rest. Delays and throughput
/// are synthetic calibration knobs, not measurements.
pub fn builtin_profiles() -> Vec<AttackProfile> {
    let profile = |name: &str,
                   order: TraversalOrder,
                   threads: usize,
                   delay: f64,
                   extension: &str,
                   min_size: u64| AttackProfile {
        name: name.to_string(),
        order,
        threads,
        pre_encryption_delay_s: delay,
        extension: extension.to_string(),
        min_size_filter: min_size,
        throughput_files_per_s: 50.0,
    };
    use TraversalOrder::*;
    vec![
        // Category 1: more than 10 threads.
        profile("atomsilo", Alphabetical, 12, 0.10, ".atomsilo", 0),
        profile("avoslocker", ReverseAlphabetical, 20, 0.05, ".avos2", 0),
        profile("babuk", Alphabetical, 24, 0.05, ".babyk", 0),
        profile("blackmatter", ReverseAlphabetical, 16, 0.10, ".blackmatter", 0),
        profile("cerber", Random, 14, 0.10, ".cerber", 1024),
        profile("lockbit", Alphabetical, 22, 0.05, ".lockbit", 0),
        profile("lorenz", Random, 11, 0.15, ".lorenz", 0),
        profile("surtr", Random, 13, 0.10, ".surtr", 0),
        // Category 2: fewer than 10 threads.
        profile("conti", ReverseAlphabetical, 8, 0.40, ".conti", 0),
        profile("cuba", Random, 6, 0.05, ".cuba", 0),
        profile("demonware", Random, 2, 0.40, ".demonware", 0),
        profile("globeimposter", Random, 3, 0.35, ".globeimposter", 0),
        profile("intercobros", Random, 5, 0.05, ".intercobros", 0),
        profile("karma", Random, 4, 0.20, ".karma", 0),
        profile("magniber", Random, 7, 0.15, ".magniber", 0),
        profile("makop", Random, 5, 0.20, ".makop", 0),
        profile("mespinoza", Random, 3, 0.25, ".pysa", 0),
        profile("mountlocker", Random, 9, 0.15, ".mountlocker", 0),
    ]
}

pub fn profile_by_name(name: &str) -> Option<AttackProfile> {
    builtin_profiles()
        .into_iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eighteen_profiles_with_category_split() {
        let profiles = builtin_profiles();
        assert_eq!(profiles.len(), 18);
        let cat1: Vec<_> = profiles.iter().filter(|p| p.category() == 1).collect();
        let cat2: Vec<_> = profiles.iter().filter(|p| p.category() == 2).collect();
        assert_eq!(cat1.len(), 8);
        assert_eq!(cat2.len(), 10);
        assert!(cat1.iter().all(|p| (11..=24).contains(&p.threads)));
        assert!(cat2.iter().all(|p| (1..=9).contains(&p.threads)));
    }

    #[test]
    fn lockbit_profile() {
        let p = profile_by_name("lockbit").unwrap();
        assert_eq!(p.order, TraversalOrder::Alphabetical);
        assert!(p.threads > 10);
        assert_eq!(p.extension, ".lockbit");
    }

    #[test]
    fn conti_profile() {
        let p = profile_by_name("conti").unwrap();
        assert_eq!(p.order, TraversalOrder::ReverseAlphabetical);
        assert!(p.threads < 10);
    }

    #[test]
    fn cerber_has_size_filter() {
        assert!(profile_by_name("cerber").unwrap().min_size_filter > 0);
    }

    #[test]
    fn known_orders_assigned() {
        for name in ["avoslocker", "conti", "blackmatter"] {
            assert_eq!(
                profile_by_name(name).unwrap().order,
                TraversalOrder::ReverseAlphabetical
            );
        }
        for name in ["babuk", "atomsilo", "lockbit"] {
            assert_eq!(
                profile_by_name(name).unwrap().order,
                TraversalOrder::Alphabetical
            );
        }
    }
}
