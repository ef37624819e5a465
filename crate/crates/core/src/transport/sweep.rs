//! Diamond-difference transport sweeps and the discrete angular average.

use std::sync::Arc;

use super::mesh::Mesh;
use crate::quadrature::QuadratureRule;
use crate::{Error, Result};

/// Per-angle nodal values `psi_{k,j}` for all `|k| = 1..N`, `j = 0..M`,
/// stored angle-major in the fixed angle order of [`QuadratureRule::angles`].
#[derive(Debug, Clone)]
pub struct AngularFlux {
    rule: Arc<QuadratureRule>,
    num_nodes: usize,
    psi: Vec<f64>,
}

impl AngularFlux {
    fn zeros(rule: Arc<QuadratureRule>, num_nodes: usize) -> Self {
        let len = rule.num_angles() * num_nodes;
        AngularFlux {
            rule,
            num_nodes,
            psi: vec![0.0; len],
        }
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Nodal value for signed angle index `k`.
    pub fn psi(&self, k: i64, j: usize) -> f64 {
        self.psi[self.rule.angle_index(k) * self.num_nodes + j]
    }

    fn angle_slice_mut(&mut self, pos: usize) -> &mut [f64] {
        &mut self.psi[pos * self.num_nodes..(pos + 1) * self.num_nodes]
    }

    fn angle_slice(&self, pos: usize) -> &[f64] {
        &self.psi[pos * self.num_nodes..(pos + 1) * self.num_nodes]
    }

    /// Checks the zero incoming-flux conditions exactly: `psi_{k,0} = 0` for
    /// `k > 0` and `psi_{k,M} = 0` for `k < 0`.
    pub fn boundary_conditions_exact(&self) -> bool {
        let n = self.rule.half_order() as i64;
        (1..=n).all(|k| self.psi(k, 0) == 0.0) && (1..=n).all(|k| self.psi(-k, self.num_nodes - 1) == 0.0)
    }
}

/// Continuous piecewise-linear scalar flux: nodal values plus the midpoint
/// values used by the scheme (`phi_{j-1/2} = (phi_j + phi_{j-1}) / 2`).
#[derive(Debug, Clone)]
pub struct ScalarFlux {
    mesh: Mesh,
    nodal: Vec<f64>,
    mid: Vec<f64>,
}

impl ScalarFlux {
    pub fn from_nodal(mesh: Mesh, nodal: Vec<f64>) -> Self {
        assert_eq!(nodal.len(), mesh.num_nodes());
        let mid = nodal.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        ScalarFlux { mesh, nodal, mid }
    }

    pub fn zeros(mesh: Mesh) -> Self {
        let n = mesh.num_nodes();
        ScalarFlux::from_nodal(mesh, vec![0.0; n])
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn nodal(&self) -> &[f64] {
        &self.nodal
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.mid
    }

    pub fn sup_norm(&self) -> f64 {
        self.nodal.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Piecewise-linear evaluation at `x in [0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let j = self.mesh.locate(x);
        let x0 = self.mesh.nodes()[j];
        let w = self.mesh.widths()[j];
        let t = ((x - x0) / w).clamp(0.0, 1.0);
        self.nodal[j] * (1.0 - t) + self.nodal[j + 1] * t
    }

    /// `max_j |phi(x_j) - other(x_j)|` over this flux's nodes.
    pub fn sup_diff_at_nodes(&self, other: &ScalarFlux) -> f64 {
        self.mesh
            .nodes()
            .iter()
            .zip(&self.nodal)
            .fold(0.0, |acc, (&x, &v)| acc.max((v - other.eval(x)).abs()))
    }
}

/// Single diamond-difference sweep for direction cosine `mu != 0`:
/// `mu (U_j - U_{j-1}) / h_j + sigma_{j-1/2} (U_j + U_{j-1}) / 2 = s_{j-1/2}`
/// solved by forward recursion from `U_0 = 0` for `mu > 0`, backward from
/// `U_M = 0` for `mu < 0`.
pub fn sweep(mesh: &Mesh, sigma_mid: &[f64], source_mid: &[f64], mu: f64) -> Result<Vec<f64>> {
    let m = mesh.num_cells();
    if sigma_mid.len() != m || source_mid.len() != m {
        return Err(Error::domain("sweep arrays must match the mesh"));
    }
    let mut u = vec![0.0; m + 1];
    sweep_into(mesh, sigma_mid, source_mid, mu, &mut u)?;
    Ok(u)
}

fn sweep_into(
    mesh: &Mesh,
    sigma_mid: &[f64],
    source_mid: &[f64],
    mu: f64,
    u: &mut [f64],
) -> Result<()> {
    let m = mesh.num_cells();
    let widths = mesh.widths();
    if mu == 0.0 {
        return Err(Error::domain("sweep requires a nonzero direction cosine"));
    }
    if mu > 0.0 {
        u[0] = 0.0;
        for j in 0..m {
            let a = mu / widths[j];
            let half_sigma = 0.5 * sigma_mid[j];
            u[j + 1] = ((a - half_sigma) * u[j] + source_mid[j]) / (a + half_sigma);
        }
    } else {
        u[m] = 0.0;
        for j in (0..m).rev() {
            let a = -mu / widths[j];
            let half_sigma = 0.5 * sigma_mid[j];
            u[j] = ((a - half_sigma) * u[j + 1] + source_mid[j]) / (a + half_sigma);
        }
    }
    Ok(())
}

/// Applies the discrete averaged solution operator: sweeps every angle of the
/// rule and accumulates `phi_j = 1/2 sum_k w_k psi_{k,j}` in the fixed angle
/// order (bit-reproducible reduction).
pub fn apply_discrete_k(
    mesh: &Mesh,
    sigma_mid: &[f64],
    rule: &QuadratureRule,
    source_mid: &[f64],
) -> Result<ScalarFlux> {
    let mut nodal = vec![0.0; mesh.num_nodes()];
    let mut buf = vec![0.0; mesh.num_nodes()];
    for (_, mu, w) in rule.angles() {
        sweep_into(mesh, sigma_mid, source_mid, mu, &mut buf)?;
        for (acc, &v) in nodal.iter_mut().zip(buf.iter()) {
            *acc += 0.5 * w * v;
        }
    }
    Ok(ScalarFlux::from_nodal(mesh.clone(), nodal))
}

/// Like [`apply_discrete_k`] but also returns all per-angle fluxes.
pub fn apply_discrete_k_with_angular(
    mesh: &Mesh,
    sigma_mid: &[f64],
    rule: &Arc<QuadratureRule>,
    source_mid: &[f64],
) -> Result<(ScalarFlux, AngularFlux)> {
    let mut angular = AngularFlux::zeros(Arc::clone(rule), mesh.num_nodes());
    let mut nodal = vec![0.0; mesh.num_nodes()];
    for (pos, (_, mu, w)) in rule.angles().enumerate() {
        sweep_into(mesh, sigma_mid, source_mid, mu, angular.angle_slice_mut(pos))?;
        for (acc, &v) in nodal.iter_mut().zip(angular.angle_slice(pos).iter()) {
            *acc += 0.5 * w * v;
        }
    }
    Ok((ScalarFlux::from_nodal(mesh.clone(), nodal), angular))
}

/// Sup norm of the cell-equation residual of the full discrete system for a
/// given angular flux and the scalar flux derived from it.
pub fn discrete_residual(
    mesh: &Mesh,
    sigma_mid: &[f64],
    sigma_s_mid: &[f64],
    f_mid: &[f64],
    angular: &AngularFlux,
    scalar: &ScalarFlux,
) -> f64 {
    let widths = mesh.widths();
    let mut sup: f64 = 0.0;
    for (pos, (_, mu, _)) in angular.rule().angles().enumerate() {
        let psi = angular.angle_slice(pos);
        for j in 0..mesh.num_cells() {
            let streaming = mu * (psi[j + 1] - psi[j]) / widths[j];
            let collision = sigma_mid[j] * 0.5 * (psi[j + 1] + psi[j]);
            let source = sigma_s_mid[j] * scalar.midpoints()[j] + f_mid[j];
            sup = sup.max((streaming + collision - source).abs());
        }
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, Stream};

    #[test]
    fn zero_source_gives_zero() {
        let mesh = Mesh::uniform(16);
        let u = sweep(&mesh, &vec![1.0; 16], &vec![0.0; 16], 0.7).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
        let phi = apply_discrete_k(&mesh, &vec![1.0; 16], &QuadratureRule::new(4), &vec![0.0; 16])
            .unwrap();
        assert!(phi.nodal().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_mu_is_domain_error() {
        let mesh = Mesh::uniform(4);
        assert!(sweep(&mesh, &vec![1.0; 4], &vec![1.0; 4], 0.0).is_err());
    }

    #[test]
    fn sweep_second_order_against_analytic_solution() {
        // sigma = 1, f = 1, mu = 1: u(x) = 1 - exp(-x).
        let err = |cells: usize| -> f64 {
            let mesh = Mesh::uniform(cells);
            let u = sweep(&mesh, &vec![1.0; cells], &vec![1.0; cells], 1.0).unwrap();
            mesh.nodes()
                .iter()
                .zip(&u)
                .fold(0.0f64, |acc, (&x, &v)| acc.max((v - (1.0 - (-x).exp())).abs()))
        };
        let e64 = err(64);
        let e128 = err(128);
        assert!(e64 < 2e-5, "h = 1/64 error {e64}");
        let ratio = e64 / e128;
        assert!(
            (3.5..4.5).contains(&ratio),
            "expected second-order decay, got ratio {ratio}"
        );
    }

    #[test]
    fn negative_mu_sweep_is_reflection_of_positive() {
        // Power-of-two cell count keeps every width bit-identical, so the
        // mirrored recursion performs exactly the same operations.
        let cells = 32;
        let mesh = Mesh::uniform(cells);
        let s = Stream::new(5, domain::AUX, 0, 0);
        let sigma: Vec<f64> = (0..cells).map(|j| 0.5 + s.uniform(j as u64)).collect();
        let source: Vec<f64> = (0..cells).map(|j| s.uniform(1000 + j as u64) - 0.3).collect();
        let mu = 0.37;
        let fwd = sweep(&mesh, &sigma, &source, mu).unwrap();
        let sigma_rev: Vec<f64> = sigma.iter().rev().cloned().collect();
        let source_rev: Vec<f64> = source.iter().rev().cloned().collect();
        let bwd = sweep(&mesh, &sigma_rev, &source_rev, -mu).unwrap();
        for j in 0..=cells {
            assert_eq!(fwd[j].to_bits(), bwd[cells - j].to_bits(), "node {j}");
        }
    }

    #[test]
    fn discrete_stability_bound_randomised() {
        // |S_mu^h g| <= 2 rho sigma_min^{-1} (1 + sigma_max h / |mu|) sup|g|
        // for nonnegative data, over 100 randomised trials.
        let s = Stream::new(77, domain::AUX, 0, 0);
        for trial in 0..100u64 {
            let cells = 8 + (s.word(trial * 7) % 56) as usize;
            // Mildly graded mesh.
            let mut nodes: Vec<f64> = (0..=cells)
                .map(|j| {
                    let t = j as f64 / cells as f64;
                    t + 0.3 * (1.0 / cells as f64) * (std::f64::consts::TAU * t).sin()
                })
                .collect();
            nodes[0] = 0.0;
            nodes[cells] = 1.0;
            let mesh = Mesh::from_nodes(nodes, &[]).unwrap();
            let sigma: Vec<f64> = (0..cells)
                .map(|j| 0.2 + 3.0 * s.uniform(trial * 1000 + j as u64))
                .collect();
            let g: Vec<f64> = (0..cells)
                .map(|j| s.uniform(trial * 2000 + j as u64))
                .collect();
            let mu_raw = s.uniform(trial * 3000 + 1) * 2.0 - 1.0;
            let mu = if mu_raw.abs() < 1e-3 { 0.5 } else { mu_raw };
            let u = sweep(&mesh, &sigma, &g, mu).unwrap();
            let sup_u = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let sup_g = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let smin = sigma.iter().cloned().fold(f64::INFINITY, f64::min);
            let smax = sigma.iter().cloned().fold(0.0, f64::max);
            let bound = 2.0 * mesh.rho() / smin * (1.0 + smax * mesh.h() / mu.abs()) * sup_g;
            assert!(sup_u <= bound, "trial {trial}: {sup_u} > {bound}");
        }
    }

    #[test]
    fn sweep_cell_equations_hold_to_roundoff() {
        let cells = 40;
        let mesh = Mesh::uniform(cells);
        let s = Stream::new(11, domain::AUX, 0, 0);
        let sigma: Vec<f64> = (0..cells).map(|j| 0.3 + 2.0 * s.uniform(j as u64)).collect();
        let source: Vec<f64> = (0..cells)
            .map(|j| 4.0 * s.uniform(500 + j as u64) - 1.0)
            .collect();
        let scale = source.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for &mu in &[0.9, 0.05, -0.4] {
            let u = sweep(&mesh, &sigma, &source, mu).unwrap();
            for j in 0..cells {
                let r = mu * (u[j + 1] - u[j]) / mesh.widths()[j]
                    + sigma[j] * 0.5 * (u[j + 1] + u[j])
                    - source[j];
                assert!(r.abs() <= 1e-12 * scale, "mu = {mu}, cell {j}: {r}");
            }
        }
    }

    #[test]
    fn scalar_flux_midpoint_consistency() {
        let mesh = Mesh::uniform(8);
        let rule = QuadratureRule::new(3);
        let phi = apply_discrete_k(&mesh, &vec![1.5; 8], &rule, &vec![2.0; 8]).unwrap();
        for j in 0..8 {
            let avg = 0.5 * (phi.nodal()[j] + phi.nodal()[j + 1]);
            assert!((phi.midpoints()[j] - avg).abs() <= 1e-14);
        }
    }

    #[test]
    fn angular_accessors_and_bcs() {
        let mesh = Mesh::uniform(6);
        let rule = QuadratureRule::cached(2);
        let (_, ang) =
            apply_discrete_k_with_angular(&mesh, &vec![1.0; 6], &rule, &vec![1.0; 6]).unwrap();
        assert!(ang.boundary_conditions_exact());
        assert!(ang.psi(1, 3) > 0.0);
        assert_eq!(ang.psi(1, 0), 0.0);
        assert_eq!(ang.psi(-1, 6), 0.0);
    }

    #[test]
    fn eval_interpolates_linearly() {
        let mesh = Mesh::uniform(2);
        let phi = ScalarFlux::from_nodal(mesh, vec![0.0, 1.0, 0.0]);
        assert!((phi.eval(0.25) - 0.5).abs() < 1e-15);
        assert!((phi.eval(0.75) - 0.5).abs() < 1e-15);
        assert_eq!(phi.eval(0.0), 0.0);
        assert_eq!(phi.eval(1.0), 0.0);
    }
}
