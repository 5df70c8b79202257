//! Principal component analysis over the pre-processed feature matrix,
//! keeping the smallest component count that explains the requested variance.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Project a row-major M×N matrix onto its leading principal components.
///
/// Columns are centered first. K is the smallest count whose cumulative
/// explained variance reaches `variance_retained`. Each component's
/// largest-magnitude loading is made positive so the projection is
/// deterministic. A matrix with no variance at all reduces to a single
/// zero column.
pub fn apply_pca(matrix: &[Vec<f64>], variance_retained: f64) -> Result<Vec<Vec<f64>>> {
    let m = matrix.len();
    if m < 2 {
        return Err(Error::NotEnoughRows { need: 2, got: m });
    }
    if !(variance_retained > 0.0 && variance_retained <= 1.0) {
        return Err(Error::invalid("variance_retained", "must be in (0, 1]"));
    }
    let n = matrix[0].len();
    if matrix.iter().any(|row| row.len() != n) {
        return Err(Error::invalid("matrix", "ragged rows"));
    }
    if matrix.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            column: "pca input".to_string(),
        });
    }

    // Center columns.
    let mut centered = DMatrix::<f64>::zeros(m, n);
    for j in 0..n {
        let mean = matrix.iter().map(|r| r[j]).sum::<f64>() / m as f64;
        for i in 0..m {
            centered[(i, j)] = matrix[i][j] - mean;
        }
    }

    let cov = &centered.transpose() * &centered / (m as f64 - 1.0);
    let total_var: f64 = cov.diagonal().iter().sum();
    if total_var <= 0.0 {
        return Ok(vec![vec![0.0]; m]);
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut cumulative = 0.0;
    let mut k = 0;
    for &idx in &order {
        cumulative += eig.eigenvalues[idx].max(0.0);
        k += 1;
        if cumulative / total_var >= variance_retained {
            break;
        }
    }

    // Loadings with deterministic sign: flip so the largest-magnitude entry
    // of each component is positive.
    let mut components = DMatrix::<f64>::zeros(n, k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(idx);
        let lead = col
            .iter()
            .cloned()
            .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap_or(1.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            components[(r, c)] = sign * col[r];
        }
    }

    let projected = &centered * &components;
    Ok((0..m)
        .map(|i| (0..k).map(|j| projected[(i, j)]).collect())
        .collect())
}
