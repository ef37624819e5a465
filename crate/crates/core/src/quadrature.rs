//! Gauss-Legendre rules and the composite double Gauss angular rule.
//!
//! The discrete-ordinates scheme integrates over direction cosines
//! `mu in [-1, 1] \ {0}` with an N-point Gauss-Legendre rule applied
//! separately on each half interval, mirrored so that `mu_{-k} = -mu_k` and
//! `w_{-k} = w_k`. Rules are deterministic (Newton iteration from Chebyshev
//! initial guesses) and cached per order within a run.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// An n-point Gauss-Legendre rule on the unit interval (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct HalfRule {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl HalfRule {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Strictly increasing nodes in (0, 1).
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Positive weights summing to 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Quadrature of `f` over (0, 1).
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// The n-point Gauss-Legendre rule mapped to `[0, 1]`.
///
/// Nodes are the roots of the shifted Legendre polynomial, located by Newton
/// iteration from Chebyshev initial guesses and converged to 1e-15 absolute.
pub fn gauss_legendre_unit(n: usize) -> HalfRule {
    assert!(n >= 1, "quadrature order must be >= 1");
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    // Work on [-1, 1]; by symmetry only the first half must be solved.
    for i in 0..n {
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            // Deterministic initial guesses make this unreachable for any
            // practical order; treat it as a hard internal error.
            panic!("Gauss-Legendre Newton iteration failed to converge for n = {n}");
        }
        // Re-evaluate the derivative at the converged node for the weight.
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes.push(0.5 * (x + 1.0));
        weights.push(0.5 * w);
    }
    HalfRule {
        order: n,
        nodes,
        weights,
    }
}

/// Legendre polynomial `P_n(x)` and its derivative via the three-term
/// recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Double Gauss angular rule: `gauss_legendre_unit(N)` on (0, 1], mirrored to
/// [-1, 0) with `mu_{-k} = -mu_k`, `w_{-k} = w_k`.
///
/// Signed indices `k in {-N..-1, 1..N}` address the angles; iteration order
/// over [`QuadratureRule::angles`] is fixed (k = -N..-1 then 1..N) so that
/// reductions over angles are bit-reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    half: HalfRule,
}

impl QuadratureRule {
    pub fn new(half_order: usize) -> Self {
        QuadratureRule {
            half: gauss_legendre_unit(half_order),
        }
    }

    /// Cached rule shared across samplers; `N` changes across MLMC levels so
    /// recomputation would be wasteful.
    pub fn cached(half_order: usize) -> Arc<QuadratureRule> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("quadrature cache poisoned");
        Arc::clone(
            map.entry(half_order)
                .or_insert_with(|| Arc::new(QuadratureRule::new(half_order))),
        )
    }

    pub fn half_order(&self) -> usize {
        self.half.order
    }

    pub fn half(&self) -> &HalfRule {
        &self.half
    }

    /// Node for signed index `k` (`|k|` in `1..=N`, `k != 0`).
    pub fn mu(&self, k: i64) -> f64 {
        let idx = k.unsigned_abs() as usize - 1;
        let m = self.half.nodes[idx];
        if k > 0 {
            m
        } else {
            -m
        }
    }

    /// Weight for signed index `k`; symmetric in `k`.
    pub fn weight(&self, k: i64) -> f64 {
        self.half.weights[k.unsigned_abs() as usize - 1]
    }

    /// All `2N` angles `(k, mu_k, w_k)` in the fixed order
    /// `k = -N, ..., -1, 1, ..., N`.
    pub fn angles(&self) -> impl Iterator<Item = (i64, f64, f64)> + '_ {
        let n = self.half.order as i64;
        (-n..=n).filter(|&k| k != 0).map(move |k| {
            (k, self.mu(k), self.weight(k))
        })
    }

    /// Position of signed index `k` in the fixed angle ordering.
    pub fn angle_index(&self, k: i64) -> usize {
        let n = self.half.order as i64;
        debug_assert!(k != 0 && k.abs() <= n);
        if k < 0 {
            (k + n) as usize
        } else {
            (k + n - 1) as usize
        }
    }

    /// Total number of angles, `2N`.
    pub fn num_angles(&self) -> usize {
        2 * self.half.order
    }

    pub fn sum_weights(&self) -> f64 {
        2.0 * self.half.weights.iter().sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn one_point_rule_is_midpoint() {
        let r = gauss_legendre_unit(1);
        assert_relative_eq!(r.nodes()[0], 0.5, max_relative = 1e-15);
        assert_relative_eq!(r.weights()[0], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn two_point_rule_matches_analytic_roots() {
        // Roots of the degree-2 shifted Legendre polynomial: (3 -+ sqrt 3)/6.
        let r = gauss_legendre_unit(2);
        let s3 = 3f64.sqrt();
        assert_relative_eq!(r.nodes()[0], (3.0 - s3) / 6.0, epsilon = 1e-15);
        assert_relative_eq!(r.nodes()[1], (3.0 + s3) / 6.0, epsilon = 1e-15);
        assert_relative_eq!(r.weights()[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.weights()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn exactness_to_degree_2n_minus_1() {
        // Compare against the exact monomial integrals 1/(j+1).
        for n in 1..=16 {
            let r = gauss_legendre_unit(n);
            for j in 0..=(2 * n - 1) {
                let q = r.integrate(|x| x.powi(j as i32));
                let exact = 1.0 / (j as f64 + 1.0);
                assert!(
                    (q - exact).abs() <= 1e-12,
                    "n = {n}, j = {j}: {q} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn eight_point_monomials() {
        let r = gauss_legendre_unit(8);
        for j in 0..=15 {
            let q = r.integrate(|x| x.powi(j));
            assert!((q - 1.0 / (j as f64 + 1.0)).abs() <= 1e-13, "j = {j}");
        }
    }

    #[test]
    fn nodes_increasing_weights_positive() {
        for n in [1, 2, 3, 5, 8, 16, 33, 64] {
            let r = gauss_legendre_unit(n);
            assert!(r.nodes().windows(2).all(|w| w[0] < w[1]));
            assert!(r.nodes().iter().all(|&x| x > 0.0 && x < 1.0));
            assert!(r.weights().iter().all(|&w| w > 0.0));
            assert!((r.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn double_gauss_one_point() {
        let r = QuadratureRule::new(1);
        assert_eq!(r.mu(-1), -0.5);
        assert_eq!(r.mu(1), 0.5);
        assert_eq!(r.weight(-1), 1.0);
        assert_eq!(r.weight(1), 1.0);
    }

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 4, 8, 16, 32] {
            let r = QuadratureRule::new(n);
            assert!((r.sum_weights() - 2.0).abs() <= 1e-14, "N = {n}");
        }
    }

    #[test]
    fn mirror_symmetry_bit_exact() {
        for n in 1..=64usize {
            let r = QuadratureRule::new(n);
            for k in 1..=(n as i64) {
                assert_eq!(r.mu(-k).to_bits(), (-r.mu(k)).to_bits());
                assert_eq!(r.weight(-k).to_bits(), r.weight(k).to_bits());
            }
        }
    }

    #[test]
    fn singular_sum_grows_logarithmically() {
        // sum w_k / |mu_k| <= c (1 + log N); check the ratio stays bounded as
        // N doubles, and that the smallest node scales like N^{-2}.
        let mut ratios = Vec::new();
        for n in [2usize, 4, 8, 16, 32] {
            let r = QuadratureRule::new(n);
            let s: f64 = r.angles().map(|(_, mu, w)| w / mu.abs()).sum();
            ratios.push(s / (1.0 + (n as f64).ln()));
        }
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            max / min < 1.6,
            "sum w/|mu| not proportional to 1 + log N: ratios {ratios:?}"
        );
        for n in [4usize, 8, 16, 32, 64] {
            let r = QuadratureRule::new(n);
            let scaled = r.mu(1) * (n * n) as f64;
            assert!(
                (1.0..1.6).contains(&scaled),
                "mu_1 N^2 = {scaled} outside empirical window for N = {n}"
            );
        }
    }

    #[test]
    fn cache_returns_identical_rule() {
        let a = QuadratureRule::cached(12);
        let b = QuadratureRule::cached(12);
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn angle_indexing_round_trips() {
        let r = QuadratureRule::new(5);
        let mut seen = vec![false; r.num_angles()];
        for (pos, (k, mu, w)) in r.angles().enumerate() {
            assert_eq!(pos, r.angle_index(k));
            assert_eq!(mu, r.mu(k));
            assert_eq!(w, r.weight(k));
            seen[pos] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    proptest! {
        #[test]
        fn quadrature_integrates_smooth_functions(n in 5usize..24, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let r = gauss_legendre_unit(n);
            // exp(a x + b) has exact integral e^b expm1(a) / a; the expm1
            // form stays accurate for small |a|.
            let q = r.integrate(|x| (a * x + b).exp());
            let exact = if a == 0.0 {
                b.exp()
            } else {
                b.exp() * a.exp_m1() / a
            };
            prop_assert!((q - exact).abs() <= 1e-7 * exact.abs().max(1.0));
        }
    }
}
