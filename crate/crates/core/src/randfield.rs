//! Lognormal scattering cross-sections via Karhunen-Loeve expansion of a
//! Matern-covariance Gaussian field on [0, 1].
//!
//! `log sigma_S(x) = sum_i sqrt(xi_i) eta_i(x) Z_i` with `Z_i ~ N(0,1)`.
//! For the exponential kernel (`nu = 1/2`) the eigenpairs are analytic; any
//! other smoothness goes through a Nystrom discretisation of the covariance
//! operator. Gaussian coefficients come from counter-based streams keyed by
//! (seed, level, sample, mode), so samples are reproducible under any
//! execution order, and an MLMC coarse sample reuses the leading
//! coefficients of its fine partner.

use std::sync::Arc;

use crate::linalg::{jacobi_eigen_symmetric, DenseMatrix};
use crate::quadrature::gauss_legendre_unit;
use crate::rng::Stream;
use crate::specfun::{matern_cov, MaternParams};
use crate::transport::{CoefficientSample, Mesh};
use crate::{Error, Result};

/// Bisection tolerance for the transcendental frequency equations.
const ROOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone)]
struct ExpMode {
    omega: f64,
    parity: Parity,
    norm: f64,
}

#[derive(Debug, Clone)]
enum KlBasis {
    /// Closed-form eigenfunctions of `sigma^2 exp(-r / l)`:
    /// interleaved cosine/sine modes about the interval midpoint.
    AnalyticExponential { modes: Vec<ExpMode> },
    /// Nystrom interpolants through a Gauss-Legendre grid.
    Nystrom {
        quad_x: Vec<f64>,
        quad_w: Vec<f64>,
        /// `vecs[i][m] = v_i(y_m)`, L2-normalised under the quadrature.
        vecs: Vec<Vec<f64>>,
    },
}

/// Truncated KL expansion: eigenvalues (nonincreasing, positive) and an
/// eigenfunction evaluator. Immutable after construction and shared
/// read-only across samplers.
#[derive(Debug, Clone)]
pub struct KlExpansion {
    params: MaternParams,
    eigenvalues: Vec<f64>,
    sqrt_eigenvalues: Vec<f64>,
    basis: KlBasis,
}

impl KlExpansion {
    pub fn params(&self) -> &MaternParams {
        &self.params
    }

    pub fn truncation(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Evaluates the `i`-th orthonormal eigenfunction at `x`.
    pub fn eval_eigenfunction(&self, i: usize, x: f64) -> f64 {
        match &self.basis {
            KlBasis::AnalyticExponential { modes } => eval_exp_mode(&modes[i], x),
            KlBasis::Nystrom {
                quad_x,
                quad_w,
                vecs,
            } => {
                let mut acc = 0.0;
                for m in 0..quad_x.len() {
                    let c = matern_cov(&self.params, (x - quad_x[m]).abs())
                        .expect("kernel evaluation cannot fail for r >= 0");
                    acc += quad_w[m] * c * vecs[i][m];
                }
                acc / self.eigenvalues[i]
            }
        }
    }

    /// Scaled basis row `[sqrt(xi_i) eta_i(x)]_i`, the per-point weights of
    /// the log-field.
    pub fn scaled_row(&self, x: f64, out: &mut [f64]) {
        debug_assert!(out.len() <= self.truncation());
        match &self.basis {
            KlBasis::AnalyticExponential { modes } => {
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = self.sqrt_eigenvalues[i] * eval_exp_mode(&modes[i], x);
                }
            }
            KlBasis::Nystrom {
                quad_x,
                quad_w,
                vecs,
            } => {
                // One kernel row serves every mode at this point.
                let weighted: Vec<f64> = quad_x
                    .iter()
                    .zip(quad_w)
                    .map(|(&y, &w)| {
                        w * matern_cov(&self.params, (x - y).abs())
                            .expect("kernel evaluation cannot fail for r >= 0")
                    })
                    .collect();
                for (i, slot) in out.iter_mut().enumerate() {
                    let dot: f64 = weighted.iter().zip(&vecs[i]).map(|(a, b)| a * b).sum();
                    *slot = dot / self.sqrt_eigenvalues[i];
                }
            }
        }
    }

    /// Precomputes the scaled basis at every cell midpoint of `mesh`.
    pub fn basis_for_mesh(&self, mesh: &Mesh) -> BasisMatrix {
        let cols = self.truncation();
        let rows = mesh.num_cells();
        let mut data = vec![0.0; rows * cols];
        for (r, x) in mesh.midpoints().enumerate() {
            self.scaled_row(x, &mut data[r * cols..(r + 1) * cols]);
        }
        BasisMatrix { rows, cols, data }
    }
}

fn eval_exp_mode(mode: &ExpMode, x: f64) -> f64 {
    let arg = mode.omega * (x - 0.5);
    match mode.parity {
        Parity::Even => mode.norm * arg.cos(),
        Parity::Odd => mode.norm * arg.sin(),
    }
}

/// Scaled eigenfunction values at the midpoints of one mesh; row `r` holds
/// `sqrt(xi_i) eta_i(x_r)` so a log-field evaluation is a prefix dot product
/// with the Gaussian vector.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl BasisMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Analytic KL expansion of the exponential kernel (`nu = 1/2`), with
/// effective length `l = lambda_C / sqrt(2)` so that the kernel equals the
/// Matern covariance at that smoothness.
///
/// Frequencies solve `c = w tan(w/2)` (cosine modes) and
/// `w = -c tan(w/2)` (sine modes), interleaved one root per interval
/// `((i-1) pi, i pi)`; eigenvalues are `2 c sigma^2 / (w_i^2 + c^2)`.
pub fn kl_analytic_exponential(params: &MaternParams, truncation: usize) -> Result<KlExpansion> {
    if params.nu != 0.5 {
        return Err(Error::config(format!(
            "analytic KL eigenpairs require nu = 0.5, got {}",
            params.nu
        )));
    }
    if truncation < 1 {
        return Err(Error::domain("KL truncation must be at least 1"));
    }
    let c = 2.0 * params.nu.sqrt() / params.lambda_c; // inverse effective length
    let mut modes = Vec::with_capacity(truncation);
    let mut eigenvalues = Vec::with_capacity(truncation);
    for i in 1..=truncation {
        let parity = if i % 2 == 1 { Parity::Even } else { Parity::Odd };
        let lo = (i - 1) as f64 * std::f64::consts::PI;
        let hi = i as f64 * std::f64::consts::PI;
        let omega = bisect_frequency(parity, c, lo, hi);
        let s = omega.sin() / (2.0 * omega);
        let norm = match parity {
            Parity::Even => 1.0 / (0.5 + s).sqrt(),
            Parity::Odd => 1.0 / (0.5 - s).sqrt(),
        };
        eigenvalues.push(2.0 * c * params.sigma_var2 / (omega * omega + c * c));
        modes.push(ExpMode {
            omega,
            parity,
            norm,
        });
    }
    let sqrt_eigenvalues = eigenvalues.iter().map(|v| v.sqrt()).collect();
    Ok(KlExpansion {
        params: *params,
        eigenvalues,
        sqrt_eigenvalues,
        basis: KlBasis::AnalyticExponential { modes },
    })
}

/// Root of the frequency equation in `(lo, hi)`. Both equations change sign
/// exactly once on their bracket; plain bisection is immune to the tangent
/// blow-up at the bracket ends.
fn bisect_frequency(parity: Parity, c: f64, lo: f64, hi: f64) -> f64 {
    let f = |w: f64| -> f64 {
        match parity {
            Parity::Even => c - w * (0.5 * w).tan(),
            Parity::Odd => w + c * (0.5 * w).tan(),
        }
    };
    let inset = (hi - lo) * 1e-12;
    let mut a = lo + inset;
    let mut b = hi - inset;
    let mut fa = f(a);
    debug_assert!(fa.is_finite());
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if (b - a) <= ROOT_TOL * hi.max(1.0) {
            return mid;
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Nystrom discretisation of the covariance operator: the kernel is sampled
/// on a Gauss-Legendre grid, symmetrised to `W^{1/2} C W^{1/2}`, decomposed
/// with the cyclic Jacobi algorithm, and the weighted eigenvectors define
/// interpolants `eta_i(x) = (1/xi_i) sum_m w_m C(x, y_m) v_i(y_m)`.
pub fn kl_nystrom(
    params: &MaternParams,
    quad_points: usize,
    truncation: usize,
) -> Result<KlExpansion> {
    if truncation < 1 {
        return Err(Error::domain("KL truncation must be at least 1"));
    }
    if quad_points < 4 * truncation {
        return Err(Error::config(format!(
            "Nystrom needs quad_points >= 4 * truncation ({quad_points} < {})",
            4 * truncation
        )));
    }
    let rule = gauss_legendre_unit(quad_points);
    let quad_x = rule.nodes().to_vec();
    let quad_w = rule.weights().to_vec();
    let sqrt_w: Vec<f64> = quad_w.iter().map(|w| w.sqrt()).collect();

    let n = quad_points;
    let mut b = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let c = matern_cov(params, (quad_x[i] - quad_x[j]).abs())?;
            let v = sqrt_w[i] * c * sqrt_w[j];
            b.set(i, j, v);
            b.set(j, i, v);
        }
    }
    let (vals, vecs) = jacobi_eigen_symmetric(b)?;

    let scale = vals[0].abs().max(f64::MIN_POSITIVE);
    if let Some(bad) = vals.iter().find(|&&v| v < -1e-10 * scale) {
        return Err(Error::Kernel(format!(
            "covariance discretisation produced negative eigenvalue {bad:.3e}"
        )));
    }
    if !(vals[truncation - 1] > 0.0) {
        return Err(Error::Kernel(format!(
            "requested {truncation} modes but the spectrum is not positive there"
        )));
    }

    let mut kept_vals = Vec::with_capacity(truncation);
    let mut kept_vecs = Vec::with_capacity(truncation);
    for i in 0..truncation {
        kept_vals.push(vals[i]);
        let mut v: Vec<f64> = (0..n).map(|m| vecs.get(i, m) / sqrt_w[m]).collect();
        // Deterministic sign: largest-magnitude entry positive.
        let mut anchor = 0;
        for (m, val) in v.iter().enumerate() {
            if val.abs() > v[anchor].abs() {
                anchor = m;
            }
        }
        if v[anchor] < 0.0 {
            for val in v.iter_mut() {
                *val = -*val;
            }
        }
        kept_vecs.push(v);
    }
    let sqrt_eigenvalues = kept_vals.iter().map(|v: &f64| v.sqrt()).collect();
    Ok(KlExpansion {
        params: *params,
        eigenvalues: kept_vals,
        sqrt_eigenvalues,
        basis: KlBasis::Nystrom {
            quad_x,
            quad_w,
            vecs: kept_vecs,
        },
    })
}

/// A deterministic coefficient field (absorption cross-section or source).
#[derive(Debug, Clone, PartialEq)]
pub enum DeterministicField {
    Constant(f64),
    /// Piecewise constant over consecutive breakpoint intervals; values has
    /// one entry per interval.
    PiecewiseConstant { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl DeterministicField {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DeterministicField::Constant(v) => *v,
            DeterministicField::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                let mut idx = 0;
                for (i, w) in breakpoints.windows(2).enumerate() {
                    if x >= w[0] {
                        idx = i;
                    }
                }
                values[idx.min(values.len() - 1)]
            }
        }
    }

    /// Interior discontinuity locations that a mesh must resolve.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            DeterministicField::Constant(_) => &[],
            DeterministicField::PiecewiseConstant { breakpoints, .. } => breakpoints,
        }
    }
}

/// One realisation of the random field: Gaussian coefficients plus the
/// deterministic absorption, evaluating `sigma_S(x) = exp(sum_i sqrt(xi_i)
/// eta_i(x) Z_i)`.
#[derive(Debug, Clone)]
pub struct FieldSample {
    kl: Arc<KlExpansion>,
    z: Vec<f64>,
    sigma_a: DeterministicField,
}

/// Draws `kl.truncation()` standard normals from the stream (indices
/// `0..truncation`) and wraps them into a field sample. Calls with the same
/// stream key are bit-identical.
pub fn draw_field(
    kl: &Arc<KlExpansion>,
    sigma_a: &DeterministicField,
    stream: &Stream,
) -> FieldSample {
    let mut z = vec![0.0; kl.truncation()];
    stream.fill_normals(&mut z);
    FieldSample {
        kl: Arc::clone(kl),
        z,
        sigma_a: sigma_a.clone(),
    }
}

/// Leading prefix of a fine-level Gaussian vector: the coarse member of an
/// MLMC pair reuses exactly these coefficients so both levels see the same
/// randomness.
pub fn coarsen_coefficients(z_fine: &[f64], truncation_coarse: usize) -> Vec<f64> {
    assert!(
        truncation_coarse <= z_fine.len(),
        "coarse truncation exceeds fine vector"
    );
    z_fine[..truncation_coarse].to_vec()
}

impl FieldSample {
    /// Builds a sample from explicit coefficients (used by the MLMC
    /// coupling and by degenerate-randomness tests).
    pub fn from_coefficients(
        kl: &Arc<KlExpansion>,
        z: Vec<f64>,
        sigma_a: &DeterministicField,
    ) -> Self {
        assert!(z.len() <= kl.truncation());
        FieldSample {
            kl: Arc::clone(kl),
            z,
            sigma_a: sigma_a.clone(),
        }
    }

    pub fn coefficients_vec(&self) -> &[f64] {
        &self.z
    }

    /// Coarse partner sharing the leading `truncation_coarse` coefficients.
    pub fn restrict(&self, truncation_coarse: usize) -> FieldSample {
        FieldSample {
            kl: Arc::clone(&self.kl),
            z: coarsen_coefficients(&self.z, truncation_coarse),
            sigma_a: self.sigma_a.clone(),
        }
    }

    pub fn log_sigma_s(&self, x: f64) -> f64 {
        let mut row = vec![0.0; self.z.len()];
        self.kl.scaled_row(x, &mut row);
        row.iter().zip(&self.z).map(|(a, b)| a * b).sum()
    }

    pub fn sigma_s(&self, x: f64) -> f64 {
        self.log_sigma_s(x).exp()
    }

    pub fn sigma_a(&self, x: f64) -> f64 {
        self.sigma_a.eval(x)
    }

    /// Midpoint coefficient sample on `mesh`, evaluating eigenfunctions
    /// directly (used for meshes outside any precomputed basis cache).
    pub fn coefficients(&self, mesh: &Mesh, source: &DeterministicField) -> Result<CoefficientSample> {
        let basis = self.kl.basis_for_mesh(mesh);
        self.coefficients_with_basis(mesh, &basis, source)
    }

    /// Midpoint coefficient sample using a precomputed basis matrix for the
    /// same mesh.
    pub fn coefficients_with_basis(
        &self,
        mesh: &Mesh,
        basis: &BasisMatrix,
        source: &DeterministicField,
    ) -> Result<CoefficientSample> {
        assert_eq!(basis.rows(), mesh.num_cells(), "basis/mesh mismatch");
        let m = mesh.num_cells();
        let n = self.z.len();
        let mut sigma_s_mid = Vec::with_capacity(m);
        for r in 0..m {
            let row = &basis.row(r)[..n];
            let dot: f64 = row.iter().zip(&self.z).map(|(a, b)| a * b).sum();
            sigma_s_mid.push(dot.exp());
        }
        let mut sigma_mid = Vec::with_capacity(m);
        let mut f_mid = Vec::with_capacity(m);
        for (j, x) in mesh.midpoints().enumerate() {
            sigma_mid.push(sigma_s_mid[j] + self.sigma_a.eval(x));
            f_mid.push(source.eval(x));
        }
        CoefficientSample::new(mesh.clone(), sigma_mid, sigma_s_mid, f_mid)
    }
}
