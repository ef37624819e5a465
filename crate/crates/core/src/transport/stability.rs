//! Coefficient-dependent stability constants and the path-dependent mesh
//! resolution rule.
//!
//! The discrete system is provably invertible only when the mesh is fine
//! enough relative to a coefficient functional `R3`; for rough samples the
//! width must shrink until `(h^eta + h log N(h) + N(h)^{-1})^{-1} >= R3`
//! (together with `h log N <= 1`). The search is restricted to dyadic
//! refinements so that level meshes stay nested.

use super::mesh::CoefficientSample;
use crate::{Error, Result};

/// How the angular half-order `N` is coupled to the mesh width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingPolicy {
    /// `N = 2 ceil(2 h^{-1/2})` (rough-field runs).
    Sqrt,
    /// `N = ceil((2h)^{-1})` (smooth-field runs).
    Linear,
    /// `N = ceil(c0 h^{-eta})`.
    Power { c0: f64, eta: f64 },
}

impl CouplingPolicy {
    /// Half-order `N(h)`, always at least 1.
    pub fn half_order(&self, h: f64) -> usize {
        let n = match *self {
            CouplingPolicy::Sqrt => 2.0 * (2.0 / h.sqrt()).ceil(),
            CouplingPolicy::Linear => (0.5 / h).ceil(),
            CouplingPolicy::Power { c0, eta } => (c0 * h.powf(-eta)).ceil(),
        };
        (n as usize).max(1)
    }
}

/// Stability constants evaluated from the midpoint samples of one
/// coefficient realisation.
#[derive(Debug, Clone, Copy)]
pub struct StabilityParams {
    pub eta: f64,
    pub k_const: f64,
    /// Discrete proxy for the piecewise Hoelder norm of sigma.
    pub holder_norm_sigma: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
}

#[inline]
fn bar_max(a: f64) -> f64 {
    a.max(1.0)
}

#[inline]
fn bar_min(a: f64) -> f64 {
    a.min(1.0)
}

/// Evaluates the four stability constants: `R1` bounds the continuous
/// resolvent, `R2` the Hoelder bound of the flux, `R3` scales the mesh
/// resolution condition (multiplied by the configurable `K`), `R4` bounds
/// the discrete resolvent.
pub fn stability_constants(
    coeffs: &CoefficientSample,
    eta: f64,
    k_const: f64,
) -> Result<StabilityParams> {
    if !(0.0 < eta && eta < 1.0) {
        return Err(Error::domain(format!("eta must lie in (0, 1), got {eta}")));
    }
    if !(k_const > 0.0) {
        return Err(Error::domain("stability constant K must be positive"));
    }
    let ratio = coeffs.scattering_ratio_sup();
    if !(ratio < 1.0) {
        return Err(Error::domain(
            "scattering ratio >= 1: R1 is undefined (no positive absorption)",
        ));
    }
    let s_min = coeffs.sigma_min();
    let s_max = coeffs.sigma_max();
    let ss_min = coeffs.sigma_s_min();
    let ss_max = coeffs.sigma_s_max();

    let holder = holder_norm_proxy(coeffs, eta);

    let r1 = 2.0 * bar_max(s_max).sqrt() * (s_max / s_min) / (1.0 - ratio);
    let r2 = bar_max(s_max).sqrt() * (bar_max(s_max) / bar_min(s_min)).powf(1.5) * r1;
    let r3 = k_const
        * (ss_max / ss_min)
        * (bar_max(s_max) / bar_min(s_min)).powi(3)
        * bar_max(holder)
        * r1;
    let r4 = coeffs.mesh().rho()
        * (bar_max(s_max) / s_min)
        * (ss_max / ss_min)
        * bar_max(ss_max)
        * r1;

    Ok(StabilityParams {
        eta,
        k_const,
        holder_norm_sigma: holder,
        r1,
        r2,
        r3,
        r4,
    })
}

/// Grid proxy for `max` over breakpoint pieces of
/// `sup|sigma| + sup_{x != y} |sigma(x) - sigma(y)| / |x - y|^eta`,
/// taking the sup over midpoint pairs of the solver mesh.
fn holder_norm_proxy(coeffs: &CoefficientSample, eta: f64) -> f64 {
    let mesh = coeffs.mesh();
    let mids: Vec<f64> = mesh.midpoints().collect();
    let sigma = coeffs.sigma_mid();
    let mut pieces: Vec<(f64, f64)> = mesh
        .breakpoints()
        .windows(2)
        .map(|w| (w[0], w[1]))
        .collect();
    if pieces.is_empty() {
        pieces.push((0.0, 1.0));
    }
    let mut norm: f64 = 0.0;
    for (a, b) in pieces {
        let idx: Vec<usize> = (0..mids.len())
            .filter(|&j| mids[j] > a && mids[j] < b)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let mut sup = 0.0f64;
        let mut seminorm = 0.0f64;
        for (pos, &j) in idx.iter().enumerate() {
            sup = sup.max(sigma[j].abs());
            for &k in &idx[pos + 1..] {
                let d = (sigma[j] - sigma[k]).abs() / (mids[j] - mids[k]).abs().powf(eta);
                seminorm = seminorm.max(d);
            }
        }
        norm = norm.max(sup + seminorm);
    }
    norm
}

/// Left-hand side of the mesh resolution condition at width `h`.
fn resolution_lhs(h: f64, eta: f64, coupling: &CouplingPolicy) -> (f64, f64) {
    let n = coupling.half_order(h) as f64;
    let h_log_n = h * n.ln();
    let denom = h.powf(eta) + h_log_n + 1.0 / n;
    (1.0 / denom, h_log_n)
}

/// Largest dyadic refinement `h' = h 2^{-m}` of `h` that satisfies the
/// stability condition `(h'^eta + h' log N(h') + N(h')^{-1})^{-1} >= R3`
/// together with `h' log N(h') <= 1`; returns `h_omega = min(h, h'_max)`.
///
/// Fails with a refinement-exhausted error when no width above `h_floor`
/// works.
pub fn stable_mesh_width(
    params: &StabilityParams,
    h: f64,
    coupling: &CouplingPolicy,
    h_floor: f64,
) -> Result<f64> {
    if !(0.0 < h && h < 1.0) {
        return Err(Error::domain(format!("h must lie in (0, 1), got {h}")));
    }
    let mut h_curr = h;
    loop {
        let (lhs, h_log_n) = resolution_lhs(h_curr, params.eta, coupling);
        if lhs >= params.r3 && h_log_n <= 1.0 {
            return Ok(h_curr);
        }
        h_curr *= 0.5;
        if h_curr < h_floor {
            return Err(Error::RefinementExhausted {
                r3: params.r3,
                floor: h_floor,
            });
        }
    }
}
