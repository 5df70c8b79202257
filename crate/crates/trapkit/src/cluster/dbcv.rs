//! Density-based clustering validation (DBCV): density sparseness within
//! clusters against density separation between them, used to pick minPts
//! for OPTICS.

use super::{extract_clusters, optics, ClusterResult};
use crate::error::{Error, Result};

const MIN_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct DbcvScore {
    /// Index in [-1, 1]; -1 sentinel for fewer than two clusters.
    pub score: f64,
    /// Set when a singleton cluster contributed zero validity.
    pub singleton_flag: bool,
}

/// Compute the DBCV index for a labeling. Labels must be in `[0, k)`.
pub fn dbcv(points: &[Vec<f64>], labels: &[usize]) -> Result<DbcvScore> {
    let n = points.len();
    if n == 0 || labels.len() != n {
        return Err(Error::invalid("labels", "length mismatch"));
    }
    let k = labels.iter().max().map(|&l| l + 1).unwrap_or(0);
    if k < 2 {
        return Ok(DbcvScore {
            score: -1.0,
            singleton_flag: false,
        });
    }
    let dim = points[0].len() as f64;

    let clusters: Vec<Vec<usize>> = (0..k)
        .map(|c| (0..n).filter(|&i| labels[i] == c).collect())
        .collect();
    if clusters.iter().any(|c| c.is_empty()) {
        return Err(Error::invalid("labels", "empty cluster"));
    }

    // All-points core distance per point, within its own cluster.
    let mut apts = vec![0.0; n];
    for members in &clusters {
        if members.len() < 2 {
            continue;
        }
        for &p in members {
            let mut acc = 0.0;
            for &q in members {
                if p == q {
                    continue;
                }
                let d = dist(points, p, q).max(MIN_DISTANCE);
                acc += (1.0 / d).powf(dim);
            }
            apts[p] = (acc / (members.len() - 1) as f64).powf(-1.0 / dim);
        }
    }

    let mrd = |p: usize, q: usize| -> f64 { apts[p].max(apts[q]).max(dist(points, p, q)) };

    // Per cluster: MST over mutual reachability, density sparseness from
    // internal edges, and the set of internal nodes.
    let mut sparseness = vec![0.0; k];
    let mut internal_nodes: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut singleton_flag = false;
    for (c, members) in clusters.iter().enumerate() {
        if members.len() < 2 {
            singleton_flag = true;
            internal_nodes[c] = members.clone();
            continue;
        }
        let edges = mst_edges(members, &mrd);
        let mut degree = vec![0usize; members.len()];
        for &(a, b, _) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let internal: Vec<usize> = (0..members.len()).filter(|&i| degree[i] > 1).collect();
        let internal_edge_max = edges
            .iter()
            .filter(|&&(a, b, _)| degree[a] > 1 && degree[b] > 1)
            .map(|&(_, _, w)| w)
            .fold(f64::NEG_INFINITY, f64::max);
        sparseness[c] = if internal_edge_max.is_finite() {
            internal_edge_max
        } else {
            edges.iter().map(|&(_, _, w)| w).fold(0.0, f64::max)
        };
        internal_nodes[c] = if internal.is_empty() {
            members.clone()
        } else {
            internal.iter().map(|&i| members[i]).collect()
        };
    }

    // Validity per cluster against its closest neighbor cluster.
    let mut score = 0.0;
    for c in 0..k {
        if clusters[c].len() < 2 {
            continue; // singleton contributes validity 0
        }
        let mut min_sep = f64::INFINITY;
        for other in 0..k {
            if other == c {
                continue;
            }
            for &p in &internal_nodes[c] {
                for &q in &internal_nodes[other] {
                    min_sep = min_sep.min(mrd(p, q));
                }
            }
        }
        let denom = min_sep.max(sparseness[c]);
        let validity = if denom > 0.0 && min_sep.is_finite() {
            (min_sep - sparseness[c]) / denom
        } else {
            0.0
        };
        score += clusters[c].len() as f64 / n as f64 * validity;
    }

    Ok(DbcvScore {
        score,
        singleton_flag,
    })
}

fn dist(points: &[Vec<f64>], a: usize, b: usize) -> f64 {
    super::euclidean(&points[a], &points[b])
}

/// Prim's MST over the complete graph on `members` with weights from `w`.
/// Returned edges use member-local indices.
fn mst_edges(members: &[usize], w: &dyn Fn(usize, usize) -> f64) -> Vec<(usize, usize, f64)> {
    let n = members.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    in_tree[0] = true;
    for i in 1..n {
        best[i] = w(members[0], members[i]);
        parent[i] = 0;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let next = (0..n)
            .filter(|&i| !in_tree[i])
            .min_by(|&a, &b| best[a].partial_cmp(&best[b]).unwrap())
            .unwrap();
        in_tree[next] = true;
        edges.push((parent[next], next, best[next]));
        for i in 0..n {
            if !in_tree[i] {
                let cand = w(members[next], members[i]);
                if cand < best[i] {
                    best[i] = cand;
                    parent[i] = next;
                }
            }
        }
    }
    edges
}

/// Run OPTICS + cluster extraction for each candidate minPts, score with
/// DBCV, and keep the best score (ties favor the smaller minPts).
pub fn select_minpts(
    points: &[Vec<f64>],
    candidates: &[usize],
    threshold_quantile: f64,
) -> Result<(usize, ClusterResult)> {
    let m = points.len();
    let valid: Vec<usize> = candidates
        .iter()
        .cloned()
        .filter(|&c| (2..=m).contains(&c))
        .collect();
    if valid.is_empty() {
        return Err(Error::invalid(
            "candidates",
            "no candidate minPts in [2, M]",
        ));
    }
    let mut best: Option<(usize, f64, ClusterResult)> = None;
    for &min_pts in &valid {
        let ordering = optics(points, min_pts)?;
        let mut result = extract_clusters(points, &ordering, threshold_quantile)?;
        let score = dbcv(points, &result.labels)?;
        result.diagnostics.dbcv_score = Some(score.score);
        result.diagnostics.chosen_min_pts = Some(min_pts);
        if score.singleton_flag {
            result.diagnostics.degenerate = Some(true);
        }
        let better = match &best {
            None => true,
            Some((best_pts, best_score, _)) => {
                score.score > *best_score || (score.score == *best_score && min_pts < *best_pts)
            }
        };
        if better {
            best = Some((min_pts, score.score, result));
        }
    }
    let (min_pts, _, result) = best.unwrap();
    Ok((min_pts, result))
}

/// Default candidate set: {2, 3, 5, max(5, ceil(ln M))} clipped to [2, M].
pub fn default_minpts_candidates(m: usize) -> Vec<usize> {
    let ln_m = (m as f64).ln().ceil() as usize;
    let mut cands = vec![2, 3, 5, ln_m.max(5)];
    cands.retain(|&c| (2..=m).contains(&c));
    cands.sort_unstable();
    cands.dedup();
    cands
}
