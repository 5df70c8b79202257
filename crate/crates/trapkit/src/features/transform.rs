//! Column transforms applied before clustering: standard scaling, type
//! encoding, cyclic datetime encoding, and name-order features.

use chrono::{DateTime, Datelike, Timelike};

use crate::error::{Error, Result};

const SECONDS_PER_DAY: f64 = 86_400.0;
const DAYS_PER_YEAR: f64 = 365.25;

/// Scale to zero mean and unit variance (population std). A zero-variance
/// column maps to all zeros so degenerate directories stay clusterable.
pub fn standardize_column(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::NotEnoughRows { need: 1, got: 0 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            column: "standardize input".to_string(),
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|v| (v - mean) / std).collect())
}

/// Map type tags to integer codes by first appearance. Identical tags share
/// a code; the empty tag is a class of its own.
pub fn encode_types(tags: &[&str]) -> Vec<i64> {
    let mut seen: Vec<&str> = Vec::new();
    tags.iter()
        .map(|tag| {
            if let Some(pos) = seen.iter().position(|s| s == tag) {
                pos as i64
            } else {
                seen.push(tag);
                (seen.len() - 1) as i64
            }
        })
        .collect()
}

/// Cyclic encoding of a unix timestamp: (sin, cos) on a daily cycle and a
/// yearly cycle, four features per timestamp.
pub fn encode_datetime(t: f64) -> [f64; 4] {
    let seconds_into_day = t.rem_euclid(SECONDS_PER_DAY);
    let theta_day = 2.0 * std::f64::consts::PI * seconds_into_day / SECONDS_PER_DAY;

    let days_into_year = match DateTime::from_timestamp(t.floor() as i64, 0) {
        Some(dt) => {
            let frac = (dt.num_seconds_from_midnight() as f64 + t.fract().abs()) / SECONDS_PER_DAY;
            dt.ordinal0() as f64 + frac
        }
        None => 0.0,
    };
    let theta_year = 2.0 * std::f64::consts::PI * days_into_year / DAYS_PER_YEAR;

    [
        theta_day.sin(),
        theta_day.cos(),
        theta_year.sin(),
        theta_year.cos(),
    ]
}

/// Name-order columns: files ranked by case-insensitive base name, the rank
/// mapped linearly onto [1, -1]. Column A is alphabetical, column B reverse
/// alphabetical; B is always the negation of A.
pub fn name_order_features(names: &[&str]) -> (Vec<f64>, Vec<f64>) {
    let m = names.len();
    if m <= 1 {
        return (vec![0.0; m], vec![0.0; m]);
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        sort_key(names[a])
            .cmp(&sort_key(names[b]))
            .then(a.cmp(&b))
    });

    let mut alpha = vec![0.0; m];
    for (rank, &idx) in order.iter().enumerate() {
        alpha[idx] = 1.0 - 2.0 * rank as f64 / (m - 1) as f64;
    }
    let rev = alpha.iter().map(|v| -v).collect();
    (alpha, rev)
}

fn sort_key(name: &str) -> Vec<u8> {
    name.bytes().map(|b| b.to_ascii_lowercase()).collect()
}
