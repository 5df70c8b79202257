//! Mean shift: Gaussian-kernel mode seeking with pairwise-distance
//! quantile bandwidth estimation.

use super::{euclidean, ClusterMethod, ClusterResult, Diagnostics};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct MeanShiftOptions {
    pub bandwidth: f64,
    pub max_iter: usize,
    /// Stop shifting a point once its mean-shift vector is shorter than
    /// this.
    pub tol: f64,
}

impl MeanShiftOptions {
    pub fn with_bandwidth(bandwidth: f64) -> Self {
        Self {
            bandwidth,
            max_iter: 300,
            tol: 1e-5,
        }
    }
}

/// Quantile of the pairwise Euclidean distance distribution (nearest-rank).
/// Falls back to a 1e-6 floor when every point coincides.
pub fn estimate_bandwidth(points: &[Vec<f64>], quantile: f64) -> Result<f64> {
    let m = points.len();
    if m < 2 {
        return Err(Error::NotEnoughRows { need: 2, got: m });
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::invalid("quantile", "must be in (0, 1]"));
    }
    let mut distances = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            distances.push(euclidean(&points[i], &points[j]));
        }
    }
    distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((quantile * distances.len() as f64).ceil() as usize).max(1) - 1;
    let value = distances[rank];
    if value <= 0.0 {
        Ok(1e-6)
    } else {
        Ok(value)
    }
}

/// Shift every point along its mean-shift vector until convergence, then
/// group points whose modes fall within `bandwidth / 2` of each other. The
/// exemplar of each cluster is the dataset point nearest its mode.
pub fn mean_shift(points: &[Vec<f64>], options: &MeanShiftOptions) -> Result<ClusterResult> {
    let m = points.len();
    if m == 0 {
        return Err(Error::NotEnoughRows { need: 1, got: 0 });
    }
    if options.bandwidth <= 0.0 {
        return Err(Error::invalid("bandwidth", "must be > 0"));
    }
    let h = options.bandwidth;

    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut total_iters = 0;
    for start in points {
        let mut x = start.clone();
        for _ in 0..options.max_iter {
            let shift = mean_shift_vector(points, &x, h);
            let norm = shift.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (xi, si) in x.iter_mut().zip(shift.iter()) {
                *xi += si;
            }
            total_iters += 1;
            if norm < options.tol {
                break;
            }
        }
        modes.push(x);
    }

    // Group converged points: a mode joins the first existing group within
    // the merge radius, in index order, so grouping is deterministic.
    let merge_radius = h / 2.0;
    let mut group_modes: Vec<Vec<f64>> = Vec::new();
    let mut labels = vec![0; m];
    for (i, mode) in modes.iter().enumerate() {
        match group_modes
            .iter()
            .position(|g| euclidean(g, mode) <= merge_radius)
        {
            Some(c) => labels[i] = c,
            None => {
                labels[i] = group_modes.len();
                group_modes.push(mode.clone());
            }
        }
    }

    // Exemplar per cluster: nearest dataset point to the cluster's mode.
    let k = group_modes.len();
    let mut exemplars = Vec::with_capacity(k);
    let mut taken = vec![false; m];
    for g in group_modes.iter() {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for i in 0..m {
            if taken[i] {
                continue;
            }
            let d = euclidean(&points[i], g);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        taken[best] = true;
        exemplars.push(best);
    }
    // Keep the exemplar inside its own cluster even if the nearest point
    // to the mode was grouped elsewhere.
    for (c, &e) in exemplars.iter().enumerate() {
        labels[e] = c;
    }

    let result = ClusterResult {
        labels,
        exemplars,
        method: ClusterMethod::MeanShift,
        diagnostics: Diagnostics {
            iterations: Some(total_iters),
            bandwidth: Some(h),
            ..Default::default()
        },
    };
    debug_assert!(result.validate().is_ok(), "{:?}", result.validate());
    Ok(result)
}

/// m(x): kernel-weighted average of all points minus x.
pub fn mean_shift_vector(points: &[Vec<f64>], x: &[f64], bandwidth: f64) -> Vec<f64> {
    let dim = x.len();
    let mut weighted = vec![0.0; dim];
    let mut weight_sum = 0.0;
    for p in points {
        let d2: f64 = p
            .iter()
            .zip(x.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let w = (-d2 / (2.0 * bandwidth * bandwidth)).exp();
        weight_sum += w;
        for (acc, v) in weighted.iter_mut().zip(p.iter()) {
            *acc += w * v;
        }
    }
    if weight_sum <= 0.0 {
        return vec![0.0; dim];
    }
    weighted
        .iter()
        .zip(x.iter())
        .map(|(acc, xi)| acc / weight_sum - xi)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandwidth_single_pair() {
        let b = estimate_bandwidth(&[vec![0.0], vec![10.0]], 0.5).unwrap();
        assert_eq!(b, 10.0);
    }

    #[test]
    fn bandwidth_identical_points_floor() {
        let b = estimate_bandwidth(&[vec![1.0], vec![1.0], vec![1.0]], 0.3).unwrap();
        assert_eq!(b, 1e-6);
    }

    #[test]
    fn bandwidth_matches_enumeration() {
        let points: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        // Oracle: enumerate all 45 pairwise distances, nearest-rank 30th
        // percentile.
        let mut all = Vec::new();
        for i in 0..10usize {
            for j in (i + 1)..10 {
                all.push((j - i) as f64);
            }
        }
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all.len(), 45);
        let expected = all[(0.3f64 * 45.0).ceil() as usize - 1];
        assert_eq!(estimate_bandwidth(&points, 0.3).unwrap(), expected);
    }

    #[test]
    fn bandwidth_needs_two_points() {
        assert!(estimate_bandwidth(&[vec![0.0]], 0.3).is_err());
    }

    #[test]
    fn identical_points_single_cluster() {
        let points = vec![vec![4.0, 4.0]; 6];
        let result = mean_shift(&points, &MeanShiftOptions::with_bandwidth(1.0)).unwrap();
        assert_eq!(result.k(), 1);
        assert_eq!(result.exemplars, vec![0]);
    }

    #[test]
    fn wide_bandwidth_merges_two_points() {
        let points = vec![vec![0.0], vec![1.0]];
        let options = MeanShiftOptions::with_bandwidth(10.0);
        let result = mean_shift(&points, &options).unwrap();
        assert_eq!(result.k(), 1);

        // Oracle: iterate the fixed point numerically from both starts and
        // confirm the trajectories merge within bandwidth / 2.
        let mut a = vec![0.0];
        let mut b = vec![1.0];
        for _ in 0..200 {
            let sa = mean_shift_vector(&points, &a, 10.0);
            let sb = mean_shift_vector(&points, &b, 10.0);
            a[0] += sa[0];
            b[0] += sb[0];
        }
        assert!((a[0] - b[0]).abs() <= 5.0);
        assert!((a[0] - 0.5).abs() < 0.01, "mode near the midpoint, got {}", a[0]);
    }

    #[test]
    fn far_separated_clouds_stay_apart() {
        let bandwidth = 0.5;
        let mut points = Vec::new();
        for d in [-0.1, 0.0, 0.1] {
            points.push(vec![d]);
        }
        let separation = 100.0 * bandwidth;
        for d in [-0.1, 0.0, 0.1] {
            points.push(vec![separation + d]);
        }
        // Oracle: cross-cloud kernel weights are vanishingly small, so each
        // cloud's mode is internal.
        let cross = (-(separation - 0.2_f64).powi(2) / (2.0 * bandwidth * bandwidth)).exp();
        assert!(cross < 1e-30);

        let result = mean_shift(&points, &MeanShiftOptions::with_bandwidth(bandwidth)).unwrap();
        assert_eq!(result.k(), 2);
    }

    #[test]
    fn modes_are_stationary() {
        let points = vec![
            vec![0.0, 0.0],
            vec![0.3, -0.1],
            vec![-0.2, 0.2],
            vec![8.0, 8.0],
            vec![8.1, 7.9],
        ];
        let options = MeanShiftOptions::with_bandwidth(1.0);
        let result = mean_shift(&points, &options).unwrap();
        for &e in &result.exemplars {
            // Re-run the iteration from the exemplar and check the final
            // shift vector is below tolerance.
            let mut x = points[e].clone();
            for _ in 0..options.max_iter {
                let s = mean_shift_vector(&points, &x, options.bandwidth);
                let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                for (xi, si) in x.iter_mut().zip(s.iter()) {
                    *xi += si;
                }
                if norm < options.tol {
                    break;
                }
            }
            let s = mean_shift_vector(&points, &x, options.bandwidth);
            let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < options.tol);
        }
    }

    #[test]
    fn rejects_nonpositive_bandwidth() {
        assert!(mean_shift(&[vec![0.0]], &MeanShiftOptions::with_bandwidth(0.0)).is_err());
    }
}
