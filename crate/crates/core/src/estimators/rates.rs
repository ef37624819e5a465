//! Least-squares rate fits over a level ladder.

use super::records::{LevelRecord, RatesFit};
use crate::{Error, Result};

/// Slope and standard error of a least-squares line `y = a + b x` through
/// arbitrary points (used by the harness for log-log slope fits).
/// The standard error is infinite when there are no residual degrees of
/// freedom (two points).
pub fn least_squares_slope(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    if points.len() > 2 {
        let rss: f64 = points
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        let se = (rss / (n - 2.0) / sxx).sqrt();
        (slope, se)
    } else {
        (slope, f64::INFINITY)
    }
}

/// Fits the decay/cost exponents from per-level means, variances and costs:
/// regressions of `log2 |mean Y_l|`, `log2 V_l` and `log2 C_l` against the
/// level index, excluding level 0 (whose `Y` is not a difference).
pub fn fit_rates(levels: &[LevelRecord]) -> Result<RatesFit> {
    if levels.len() < 3 {
        return Err(Error::domain("rate fit needs at least 3 levels"));
    }
    if levels.iter().any(|l| l.samples < 2) {
        return Err(Error::domain("rate fit needs >= 2 samples per level"));
    }
    let mut pts_alpha = Vec::new();
    let mut pts_beta = Vec::new();
    let mut pts_gamma = Vec::new();
    for rec in levels.iter().filter(|l| l.level >= 1) {
        let x = rec.level as f64;
        let mean = rec.mean_y().abs();
        if mean > 0.0 {
            pts_alpha.push((x, mean.log2()));
        }
        let var = rec.var_y()?;
        if var > 0.0 {
            pts_beta.push((x, var.log2()));
        }
        pts_gamma.push((x, rec.mean_cost().log2()));
    }
    if pts_alpha.len() < 2 || pts_beta.len() < 2 || pts_gamma.len() < 2 {
        return Err(Error::domain(
            "rate fit needs at least two usable difference levels",
        ));
    }
    let (sa, se_a) = least_squares_slope(&pts_alpha);
    let (sb, se_b) = least_squares_slope(&pts_beta);
    let (sg, se_g) = least_squares_slope(&pts_gamma);
    Ok(RatesFit {
        alpha: -sa,
        alpha_se: se_a,
        beta: -sb,
        beta_se: se_b,
        gamma: sg,
        gamma_se: se_g,
    })
}
