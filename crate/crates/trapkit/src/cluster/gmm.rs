//! Gaussian mixture fitting by EM with k-means++ seeding, plus AIC/BIC
//! model selection over the component count.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClusterMethod, ClusterResult, Diagnostics};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    Aic,
    Bic,
}

#[derive(Debug, Clone, Copy)]
pub struct GmmOptions {
    pub reg_floor: f64,
    pub max_iter: usize,
    /// Stop when the log-likelihood improves by less than this.
    pub tol: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            reg_floor: 1e-6,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

/// A fitted mixture: weights, means, regularized covariances, and the
/// information criteria computed from the final log-likelihood.
#[derive(Debug, Clone)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    /// Set when an emptied component had to be re-seeded.
    pub reseeded: bool,
    /// Log-likelihood after each iteration, for monotonicity checks.
    pub ll_trace: Vec<f64>,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Free parameter count: means, covariances, and K-1 mixing weights.
    pub fn free_parameters(&self) -> usize {
        let d = self.means[0].len();
        free_parameters(self.k(), d)
    }

    /// Mixture density at a point.
    pub fn density(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let mut p = 0.0;
        for k in 0..self.k() {
            p += self.weights[k] * gaussian_logpdf(&xv, &self.means[k], &self.covariances[k]).exp();
        }
        p
    }

    /// Posterior responsibilities for every point, rows summing to 1.
    pub fn responsibilities(&self, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        points
            .iter()
            .map(|p| {
                let xv = DVector::from_column_slice(p);
                let logs: Vec<f64> = (0..self.k())
                    .map(|k| {
                        self.weights[k].max(1e-300).ln()
                            + gaussian_logpdf(&xv, &self.means[k], &self.covariances[k])
                    })
                    .collect();
                let lse = log_sum_exp(&logs);
                logs.iter().map(|l| (l - lse).exp()).collect()
            })
            .collect()
    }
}

pub fn free_parameters(k: usize, d: usize) -> usize {
    k * (d + d * (d + 1) / 2) + (k - 1)
}

pub fn aic(free_params: usize, log_likelihood: f64) -> f64 {
    2.0 * free_params as f64 - 2.0 * log_likelihood
}

pub fn bic(free_params: usize, n: usize, log_likelihood: f64) -> f64 {
    free_params as f64 * (n as f64).ln() - 2.0 * log_likelihood
}

/// Fit a K-component mixture by EM from a k-means++ style seeding.
pub fn gmm_em(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    options: &GmmOptions,
) -> Result<GmmModel> {
    let m = points.len();
    if k == 0 {
        return Err(Error::invalid("k", "must be >= 1"));
    }
    if k > m {
        return Err(Error::invalid("k", format!("k={k} exceeds point count {m}")));
    }
    let d = points[0].len();
    let data: Vec<DVector<f64>> = points
        .iter()
        .map(|p| DVector::from_column_slice(p))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = kmeanspp_seeds(&data, k, &mut rng);
    let base_cov = sample_covariance(&data) + DMatrix::identity(d, d) * options.reg_floor;
    let mut covariances = vec![base_cov.clone(); k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut ll_trace = Vec::new();
    let mut reseeded = false;
    let mut resp = vec![vec![0.0; k]; m];

    for _ in 0..options.max_iter {
        // E-step.
        let mut ll = 0.0;
        for (i, x) in data.iter().enumerate() {
            let logs: Vec<f64> = (0..k)
                .map(|c| weights[c].max(1e-300).ln() + gaussian_logpdf(x, &means[c], &covariances[c]))
                .collect();
            let lse = log_sum_exp(&logs);
            ll += lse;
            for c in 0..k {
                resp[i][c] = (logs[c] - lse).exp();
            }
        }
        let improved = ll_trace
            .last()
            .map(|prev| ll - prev < options.tol)
            .unwrap_or(false);
        ll_trace.push(ll);
        if improved {
            break;
        }

        // M-step.
        for c in 0..k {
            let nk: f64 = (0..m).map(|i| resp[i][c]).sum();
            if nk < 1e-8 {
                // Re-seed the emptied component at the worst-explained point.
                let worst = (0..m)
                    .min_by(|&a, &b| {
                        let la = log_sum_exp(
                            &(0..k)
                                .map(|cc| {
                                    weights[cc].max(1e-300).ln()
                                        + gaussian_logpdf(&data[a], &means[cc], &covariances[cc])
                                })
                                .collect::<Vec<_>>(),
                        );
                        let lb = log_sum_exp(
                            &(0..k)
                                .map(|cc| {
                                    weights[cc].max(1e-300).ln()
                                        + gaussian_logpdf(&data[b], &means[cc], &covariances[cc])
                                })
                                .collect::<Vec<_>>(),
                        );
                        la.partial_cmp(&lb).unwrap()
                    })
                    .unwrap();
                means[c] = data[worst].clone();
                covariances[c] = base_cov.clone();
                weights[c] = 1.0 / m as f64;
                reseeded = true;
                continue;
            }
            weights[c] = nk / m as f64;
            let mut mean = DVector::zeros(d);
            for i in 0..m {
                mean += &data[i] * resp[i][c];
            }
            mean /= nk;
            let mut cov = DMatrix::zeros(d, d);
            for i in 0..m {
                let diff = &data[i] - &mean;
                cov += &diff * diff.transpose() * resp[i][c];
            }
            cov /= nk;
            cov += DMatrix::identity(d, d) * options.reg_floor;
            means[c] = mean;
            covariances[c] = cov;
        }
        let wsum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= wsum;
        }
    }

    let log_likelihood = *ll_trace.last().unwrap_or(&f64::NEG_INFINITY);
    let params = free_parameters(k, d);
    Ok(GmmModel {
        weights,
        means,
        covariances,
        log_likelihood,
        aic: aic(params, log_likelihood),
        bic: bic(params, m, log_likelihood),
        reseeded,
        ll_trace,
    })
}

/// Fit K = 1..min(k_max, M) with several restarts each, keep the best
/// likelihood per K, and return the labeling of the K minimizing the
/// criterion. Exemplars are the highest-responsibility point per surviving
/// component.
pub fn gmm_select(
    points: &[Vec<f64>],
    k_max: usize,
    criterion: Criterion,
    restarts: usize,
    seed: u64,
    options: &GmmOptions,
) -> Result<(ClusterResult, GmmModel)> {
    let m = points.len();
    if k_max == 0 {
        return Err(Error::invalid("k_max", "must be >= 1"));
    }
    if m == 0 {
        return Err(Error::NotEnoughRows { need: 1, got: 0 });
    }
    let restarts = restarts.max(1);
    let cap = k_max.min(m);

    let mut best: Option<GmmModel> = None;
    for k in 1..=cap {
        let mut best_for_k: Option<GmmModel> = None;
        for r in 0..restarts {
            let model = gmm_em(points, k, seed.wrapping_add((k * 1000 + r) as u64), options)?;
            if best_for_k
                .as_ref()
                .map(|b| model.log_likelihood > b.log_likelihood)
                .unwrap_or(true)
            {
                best_for_k = Some(model);
            }
        }
        let model = best_for_k.unwrap();
        let score = match criterion {
            Criterion::Aic => model.aic,
            Criterion::Bic => model.bic,
        };
        let best_score = best.as_ref().map(|b| match criterion {
            Criterion::Aic => b.aic,
            Criterion::Bic => b.bic,
        });
        if best_score.map(|s| score < s).unwrap_or(true) {
            best = Some(model);
        }
    }
    let model = best.unwrap();

    let resp = model.responsibilities(points);
    let raw_labels: Vec<usize> = resp
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(c, _)| c)
                .unwrap()
        })
        .collect();

    // Compact to components that own at least one point.
    let mut remap = vec![usize::MAX; model.k()];
    let mut next = 0;
    for &l in &raw_labels {
        if remap[l] == usize::MAX {
            remap[l] = next;
            next += 1;
        }
    }
    let labels: Vec<usize> = raw_labels.iter().map(|&l| remap[l]).collect();

    // Exemplar per surviving component: highest responsibility among its
    // own points, ties by lower index.
    let mut exemplars = vec![usize::MAX; next];
    for (orig, &new) in remap.iter().enumerate() {
        if new == usize::MAX {
            continue;
        }
        let mut best_i = usize::MAX;
        let mut best_r = f64::NEG_INFINITY;
        for i in 0..m {
            if labels[i] == new && resp[i][orig] > best_r {
                best_r = resp[i][orig];
                best_i = i;
            }
        }
        exemplars[new] = best_i;
    }

    let result = ClusterResult {
        labels,
        exemplars,
        method: ClusterMethod::Gmm,
        diagnostics: Diagnostics {
            log_likelihood: Some(model.log_likelihood),
            chosen_k: Some(model.k()),
            degenerate: if model.reseeded { Some(true) } else { None },
            iterations: Some(model.ll_trace.len()),
            ..Default::default()
        },
    };
    debug_assert!(result.validate().is_ok(), "{:?}", result.validate());
    Ok((result, model))
}

fn kmeanspp_seeds(data: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let m = data.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(data[rng.gen_range(0..m)].clone());
    while centers.len() < k {
        let d2: Vec<f64> = data
            .iter()
            .map(|x| {
                centers
                    .iter()
                    .map(|c| (x - c).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..m)
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        };
        centers.push(data[next].clone());
    }
    centers
}

fn sample_covariance(data: &[DVector<f64>]) -> DMatrix<f64> {
    let m = data.len();
    let d = data[0].len();
    let mut mean = DVector::zeros(d);
    for x in data {
        mean += x;
    }
    mean /= m as f64;
    let mut cov = DMatrix::zeros(d, d);
    for x in data {
        let diff = x - &mean;
        cov += &diff * diff.transpose();
    }
    cov / m as f64
}

fn gaussian_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    // Retry with growing regularization if the covariance lost positive
    // definiteness to rounding.
    let mut reg = 0.0;
    for _ in 0..6 {
        let candidate = if reg == 0.0 {
            cov.clone()
        } else {
            cov + DMatrix::identity(cov.nrows(), cov.ncols()) * reg
        };
        if let Some(chol) = Cholesky::new(candidate) {
            let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let diff = x - mean;
            let solved = chol.solve(&diff);
            let mahalanobis = diff.dot(&solved);
            return -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det + mahalanobis);
        }
        reg = if reg == 0.0 { 1e-10 } else { reg * 100.0 };
    }
    f64::NEG_INFINITY
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_points(seed: u64, n: usize, mean: f64, std: f64) -> Vec<Vec<f64>> {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(mean, std).unwrap();
        (0..n).map(|_| vec![normal.sample(&mut rng)]).collect()
    }

    #[test]
    fn aic_spot_check() {
        assert_eq!(aic(3, -10.0), 26.0);
    }

    #[test]
    fn bic_spot_check() {
        assert!((bic(3, 100, -10.0) - 33.8155).abs() < 1e-3);
    }

    #[test]
    fn single_component_closed_form() {
        let points = vec![vec![1.0, 2.0], vec![3.0, 0.0], vec![5.0, 4.0], vec![7.0, 2.0]];
        let options = GmmOptions::default();
        let model = gmm_em(&points, 1, 7, &options).unwrap();
        assert!((model.means[0][0] - 4.0).abs() < 1e-9);
        assert!((model.means[0][1] - 2.0).abs() < 1e-9);

        let data: Vec<DVector<f64>> = points
            .iter()
            .map(|p| DVector::from_column_slice(p))
            .collect();
        let expect = sample_covariance(&data) + DMatrix::identity(2, 2) * options.reg_floor;
        assert!((&model.covariances[0] - &expect).abs().max() < 1e-9);
    }

    #[test]
    fn log_likelihood_monotone() {
        let mut points = gaussian_points(1, 60, 0.0, 1.0);
        points.extend(gaussian_points(2, 60, 6.0, 0.5));
        for seed in 0..5 {
            let model = gmm_em(&points, 3, seed, &GmmOptions::default()).unwrap();
            for pair in model.ll_trace.windows(2) {
                assert!(
                    pair[1] >= pair[0] - 1e-8,
                    "log-likelihood decreased: {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn bic_prefers_one_component_on_single_gaussian() {
        let mut hits = 0;
        for seed in 0..20 {
            let points = gaussian_points(seed * 7 + 11, 200, 0.0, 1.0);
            let (result, _) =
                gmm_select(&points, 3, Criterion::Bic, 5, seed, &GmmOptions::default()).unwrap();
            if result.diagnostics.chosen_k == Some(1) {
                hits += 1;
            }
        }
        assert!(hits >= 18, "K=1 chosen only {hits}/20 times");
    }

    #[test]
    fn bic_separates_two_gaussians() {
        let mut points = gaussian_points(21, 100, 0.0, 1.0);
        points.extend(gaussian_points(22, 100, 100.0, 1.0));
        let (result, model) =
            gmm_select(&points, 4, Criterion::Bic, 5, 3, &GmmOptions::default()).unwrap();
        assert_eq!(result.diagnostics.chosen_k, Some(2));

        // Oracle: compare BIC(1) vs BIC(2) from independently fitted models.
        let m1 = gmm_em(&points, 1, 3, &GmmOptions::default()).unwrap();
        assert!(model.bic < m1.bic);
    }

    #[test]
    fn identical_points_select_k1() {
        let points = vec![vec![3.0]; 3];
        let (result, _) =
            gmm_select(&points, 5, Criterion::Bic, 3, 0, &GmmOptions::default()).unwrap();
        assert_eq!(result.diagnostics.chosen_k, Some(1));
        assert_eq!(result.k(), 1);
    }

    #[test]
    fn k_exceeding_m_rejected() {
        assert!(gmm_em(&[vec![0.0], vec![1.0]], 3, 0, &GmmOptions::default()).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        let mut points = gaussian_points(31, 80, 0.0, 1.0);
        points.extend(gaussian_points(32, 80, 8.0, 2.0));
        let model = gmm_em(&points, 2, 5, &GmmOptions::default()).unwrap();

        // Monte Carlo integral over a box covering >= 6 sigma of every
        // component.
        let lo = -10.0;
        let hi = 25.0;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let samples = 400_000;
        let mut acc = 0.0;
        for _ in 0..samples {
            let x = rng.gen_range(lo..hi);
            acc += model.density(&[x]);
        }
        let integral = acc / samples as f64 * (hi - lo);
        assert!((integral - 1.0).abs() < 0.02, "integral {integral}");
    }
}
