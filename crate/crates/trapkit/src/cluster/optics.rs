//! OPTICS reachability ordering with an infinite generating radius, plus
//! cluster extraction by a quantile cut of the reachability plot.

use serde::{Deserialize, Serialize};

use super::{euclidean, medoid, ClusterMethod, ClusterResult, Diagnostics};
use crate::error::{Error, Result};

/// The reachability ordering produced by one OPTICS run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReachabilityOrdering {
    /// Permutation of point indices in processing order.
    pub order: Vec<usize>,
    /// Reachability per point, indexed by dataset index; seeds carry the
    /// infinity sentinel.
    pub reachability: Vec<f64>,
    /// Core distance per point (distance to the minPts-th nearest
    /// neighbor, the point itself included).
    pub core_distance: Vec<f64>,
    pub min_pts: usize,
}

/// Standard OPTICS expansion with an unbounded radius. Seeds start from
/// the unprocessed point of lowest index; the next point is always the
/// unprocessed one with the smallest reachability, ties broken by lower
/// index.
pub fn optics(points: &[Vec<f64>], min_pts: usize) -> Result<ReachabilityOrdering> {
    let m = points.len();
    if min_pts < 2 {
        return Err(Error::invalid("min_pts", "must be >= 2"));
    }
    if min_pts > m {
        return Err(Error::invalid(
            "min_pts",
            format!("min_pts={min_pts} exceeds point count {m}"),
        ));
    }

    let core_distance: Vec<f64> = (0..m).map(|i| core_distance(points, i, min_pts)).collect();

    let mut processed = vec![false; m];
    let mut reachability = vec![f64::INFINITY; m];
    let mut order = Vec::with_capacity(m);

    while order.len() < m {
        // Next point: smallest reachability among unprocessed, ties by
        // lower index. Fresh seeds (all reachabilities infinite) resolve to
        // the lowest unprocessed index.
        let mut next = usize::MAX;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if processed[i] {
                continue;
            }
            if reachability[i] < best || next == usize::MAX {
                best = reachability[i];
                next = i;
            }
        }
        processed[next] = true;
        order.push(next);

        for q in 0..m {
            if processed[q] {
                continue;
            }
            let reach = core_distance[next].max(euclidean(&points[next], &points[q]));
            if reach < reachability[q] {
                reachability[q] = reach;
            }
        }
    }

    Ok(ReachabilityOrdering {
        order,
        reachability,
        core_distance,
        min_pts,
    })
}

fn core_distance(points: &[Vec<f64>], i: usize, min_pts: usize) -> f64 {
    let mut dists: Vec<f64> = points.iter().map(|p| euclidean(&points[i], p)).collect();
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dists[min_pts - 1]
}

/// Cut the reachability plot at a quantile of its finite values.
///
/// Runs of points at or below the cut form clusters; a point above the cut
/// joins the run it opens, and any remaining above-cut point is attached
/// to the nearest exemplar. Every point ends up in a cluster. The exemplar
/// of each cluster is its medoid.
pub fn extract_clusters(
    points: &[Vec<f64>],
    ordering: &ReachabilityOrdering,
    threshold_quantile: f64,
) -> Result<ClusterResult> {
    let m = ordering.order.len();
    if m == 0 {
        return Err(Error::NotEnoughRows { need: 1, got: 0 });
    }
    if !(0.0..=1.0).contains(&threshold_quantile) {
        return Err(Error::invalid("threshold_quantile", "must be in [0, 1]"));
    }

    let mut finite: Vec<f64> = ordering
        .reachability
        .iter()
        .cloned()
        .filter(|r| r.is_finite())
        .collect();

    let single_cluster = |points: &[Vec<f64>]| {
        let members: Vec<usize> = (0..m).collect();
        let e = medoid(points, &members);
        ClusterResult {
            labels: vec![0; m],
            exemplars: vec![e],
            method: ClusterMethod::Optics,
            diagnostics: Diagnostics {
                chosen_min_pts: Some(ordering.min_pts),
                ..Default::default()
            },
        }
    };

    if finite.is_empty() {
        return Ok(single_cluster(points));
    }
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((threshold_quantile * finite.len() as f64).ceil() as usize)
        .max(1)
        .min(finite.len())
        - 1;
    let cut = finite[rank];

    // Runs of below-cut points in processing order; an above-cut point that
    // immediately precedes a run is merged into it.
    let mut cluster_members: Vec<Vec<usize>> = Vec::new();
    let mut leftovers: Vec<usize> = Vec::new();
    let mut pending_above: Option<usize> = None;
    let mut current: Option<usize> = None;
    for &idx in &ordering.order {
        if ordering.reachability[idx] > cut {
            if let Some(p) = pending_above.take() {
                leftovers.push(p);
            }
            pending_above = Some(idx);
            current = None;
        } else {
            let c = match current {
                Some(c) => c,
                None => {
                    cluster_members.push(Vec::new());
                    let c = cluster_members.len() - 1;
                    current = Some(c);
                    c
                }
            };
            if let Some(p) = pending_above.take() {
                cluster_members[c].push(p);
            }
            cluster_members[c].push(idx);
        }
    }
    if let Some(p) = pending_above.take() {
        leftovers.push(p);
    }

    if cluster_members.is_empty() {
        return Ok(single_cluster(points));
    }

    let exemplars: Vec<usize> = cluster_members
        .iter()
        .map(|members| medoid(points, members))
        .collect();

    let mut labels = vec![0; m];
    for (c, members) in cluster_members.iter().enumerate() {
        for &i in members {
            labels[i] = c;
        }
    }
    for &i in &leftovers {
        let nearest = exemplars
            .iter()
            .enumerate()
            .min_by(|(_, &a), (_, &b)| {
                euclidean(&points[i], &points[a])
                    .partial_cmp(&euclidean(&points[i], &points[b]))
                    .unwrap()
            })
            .map(|(c, _)| c)
            .unwrap();
        labels[i] = nearest;
    }

    let result = ClusterResult {
        labels,
        exemplars,
        method: ClusterMethod::Optics,
        diagnostics: Diagnostics {
            chosen_min_pts: Some(ordering.min_pts),
            ..Default::default()
        },
    };
    debug_assert!(result.validate().is_ok(), "{:?}", result.validate());
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_distance_is_nearest_neighbor_at_minpts_2() {
        let points = vec![vec![0.0], vec![1.0], vec![5.0]];
        let ordering = optics(&points, 2).unwrap();
        assert_eq!(ordering.core_distance[0], 1.0);
        assert_eq!(ordering.core_distance[1], 1.0);
        assert_eq!(ordering.core_distance[2], 4.0);
    }

    #[test]
    fn reachability_max_rule() {
        // max(core(p), dist(p, q)) in both regimes.
        assert_eq!(2.0f64.max(5.0), 5.0);
        assert_eq!(2.0f64.max(1.0), 2.0);
        // Exercised through the algorithm: from the seed at 0.0, the point
        // at 0.5 is closer than core(0)=1.0 so its reachability is clamped
        // up to the core distance.
        let points = vec![vec![0.0], vec![0.5], vec![1.0], vec![9.0]];
        let ordering = optics(&points, 3).unwrap();
        // core(0) = distance to 3rd nearest including self = 1.0
        assert_eq!(ordering.core_distance[0], 1.0);
        assert_eq!(ordering.reachability[1], 1.0);
    }

    #[test]
    fn rejects_minpts_out_of_range() {
        let points = vec![vec![0.0], vec![1.0]];
        assert!(optics(&points, 1).is_err());
        assert!(optics(&points, 3).is_err());
    }

    #[test]
    fn ordering_is_permutation() {
        let points: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64 * 0.37).sin() * 5.0, (i as f64 * 0.61).cos() * 3.0])
            .collect();
        let ordering = optics(&points, 3).unwrap();
        let mut seen = ordering.order.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
        assert!(ordering.reachability[ordering.order[0]].is_infinite());
    }

    #[test]
    fn two_blobs_split_by_spike() {
        let mut points = Vec::new();
        for i in 0..8 {
            points.push(vec![i as f64 * 0.1]);
        }
        for i in 0..8 {
            points.push(vec![50.0 + i as f64 * 0.1]);
        }
        let ordering = optics(&points, 2).unwrap();
        // Oracle: the cross-blob jump dominates the 0.75 quantile, computed
        // by enumeration of the finite reachabilities.
        let mut finite: Vec<f64> = ordering
            .reachability
            .iter()
            .cloned()
            .filter(|r| r.is_finite())
            .collect();
        finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cut = finite[((0.75 * finite.len() as f64).ceil() as usize) - 1];
        assert!(finite.last().unwrap() > &cut);

        let result = extract_clusters(&points, &ordering, 0.75).unwrap();
        assert_eq!(result.k(), 2);
    }

    #[test]
    fn uniform_spacing_single_cluster() {
        let points: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64]).collect();
        let ordering = optics(&points, 2).unwrap();
        let result = extract_clusters(&points, &ordering, 0.75).unwrap();
        assert_eq!(result.k(), 1);
    }

    #[test]
    fn identical_points_single_cluster_lowest_medoid() {
        let points = vec![vec![7.0]; 4];
        let ordering = optics(&points, 4).unwrap();
        let result = extract_clusters(&points, &ordering, 0.75).unwrap();
        assert_eq!(result.k(), 1);
        assert_eq!(result.exemplars, vec![0]);
    }
}
