//! Non-parametric clustering: affinity propagation, mean shift, Gaussian
//! mixtures with information-criterion model selection, and OPTICS with
//! DBCV-driven minPts selection. All deterministic given (input, seed).

pub mod affinity;
pub mod dbcv;
pub mod gmm;
pub mod meanshift;
pub mod optics;

use serde::{Deserialize, Serialize};

pub use affinity::{affinity_propagation, similarity_matrix, ApOptions, SimilarityMatrix};
pub use dbcv::{dbcv, select_minpts};
pub use gmm::{gmm_em, gmm_select, Criterion, GmmModel, GmmOptions};
pub use meanshift::{estimate_bandwidth, mean_shift, MeanShiftOptions};
pub use optics::{extract_clusters, optics, ReachabilityOrdering};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClusterMethod {
    #[serde(rename = "ap")]
    AffinityPropagation,
    #[serde(rename = "meanshift")]
    MeanShift,
    #[serde(rename = "gmm")]
    Gmm,
    #[serde(rename = "optics")]
    Optics,
}

impl std::fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ClusterMethod::AffinityPropagation => "ap",
            ClusterMethod::MeanShift => "meanshift",
            ClusterMethod::Gmm => "gmm",
            ClusterMethod::Optics => "optics",
        };
        f.write_str(s)
    }
}

/// Method-specific scalars surfaced alongside the labeling.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    /// Set when the method fell back to a degenerate single-exemplar result.
    pub fallback: Option<bool>,
    pub log_likelihood: Option<f64>,
    pub chosen_k: Option<usize>,
    pub chosen_min_pts: Option<usize>,
    pub dbcv_score: Option<f64>,
    pub bandwidth: Option<f64>,
    /// Set when an emptied GMM component was re-seeded or a singleton
    /// cluster contributed zero validity to DBCV.
    pub degenerate: Option<bool>,
}

/// Labels plus exemplar indices for one directory's matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Per-point cluster label in `[0, k)`.
    pub labels: Vec<usize>,
    /// One dataset index per cluster; `labels[exemplars[c]] == c`.
    pub exemplars: Vec<usize>,
    pub method: ClusterMethod,
    pub diagnostics: Diagnostics,
}

impl ClusterResult {
    pub fn k(&self) -> usize {
        self.exemplars.len()
    }

    /// Check the structural invariants shared by every method.
    pub fn validate(&self) -> Result<(), String> {
        let m = self.labels.len();
        let k = self.exemplars.len();
        if k == 0 || k > m {
            return Err(format!("bad cluster count k={k} for m={m}"));
        }
        let mut seen = std::collections::HashSet::new();
        for (c, &e) in self.exemplars.iter().enumerate() {
            if e >= m {
                return Err(format!("exemplar {e} out of range"));
            }
            if !seen.insert(e) {
                return Err(format!("duplicate exemplar {e}"));
            }
            if self.labels[e] != c {
                return Err(format!("exemplar {e} not labeled with its own cluster"));
            }
        }
        if self.labels.iter().any(|&l| l >= k) {
            return Err("label out of range".to_string());
        }
        Ok(())
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Index of the point minimizing summed distance to `members`, ties broken
/// by lowest index.
pub(crate) fn medoid(points: &[Vec<f64>], members: &[usize]) -> usize {
    let mut best = members[0];
    let mut best_cost = f64::INFINITY;
    for &i in members {
        let cost: f64 = members
            .iter()
            .map(|&j| euclidean(&points[i], &points[j]))
            .sum();
        if cost < best_cost {
            best_cost = cost;
            best = i;
        }
    }
    best
}
