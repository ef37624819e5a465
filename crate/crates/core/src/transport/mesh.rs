//! Spatial meshes on [0, 1] and per-cell midpoint coefficient samples.

use crate::{Error, Result};

const BREAKPOINT_TOL: f64 = 1e-14;

/// A strictly increasing mesh `0 = x_0 < ... < x_M = 1` that resolves a
/// declared list of material breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<f64>,
    widths: Vec<f64>,
    breakpoints: Vec<f64>,
    h_max: f64,
    rho: f64,
}

impl Mesh {
    /// Builds a mesh from explicit nodes, checking endpoints, monotonicity
    /// and that every breakpoint coincides with some node.
    pub fn from_nodes(nodes: Vec<f64>, breakpoints: &[f64]) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::domain("mesh needs at least two nodes"));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(Error::domain("mesh endpoints must be exactly 0 and 1"));
        }
        if !nodes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::domain("mesh nodes must be strictly increasing"));
        }
        for &c in breakpoints {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::domain(format!("breakpoint {c} outside [0, 1]")));
            }
            if !nodes.iter().any(|&x| (x - c).abs() <= BREAKPOINT_TOL) {
                return Err(Error::domain(format!(
                    "breakpoint {c} is not resolved by the mesh"
                )));
            }
        }
        let widths: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let h_max = widths.iter().cloned().fold(0.0, f64::max);
        let h_min = widths.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut bp = breakpoints.to_vec();
        bp.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bp.dedup();
        Ok(Mesh {
            nodes,
            widths,
            breakpoints: bp,
            h_max,
            rho: h_max / h_min,
        })
    }

    /// Uniform mesh with `cells` cells and the trivial breakpoints {0, 1}.
    pub fn uniform(cells: usize) -> Self {
        Mesh::uniform_resolving(cells, &[0.0, 1.0]).expect("uniform mesh is always valid")
    }

    /// Uniform mesh that must resolve the given breakpoints.
    pub fn uniform_resolving(cells: usize, breakpoints: &[f64]) -> Result<Self> {
        if cells == 0 {
            return Err(Error::domain("mesh needs at least one cell"));
        }
        let nodes: Vec<f64> = (0..=cells).map(|j| j as f64 / cells as f64).collect();
        Mesh::from_nodes(nodes, breakpoints)
    }

    pub fn num_cells(&self) -> usize {
        self.widths.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Global mesh width `h = max_j h_j`.
    pub fn h(&self) -> f64 {
        self.h_max
    }

    /// Quasi-uniformity ratio `h / min_j h_j >= 1`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Midpoint of cell `j` (0-based).
    pub fn midpoint(&self, j: usize) -> f64 {
        0.5 * (self.nodes[j] + self.nodes[j + 1])
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_cells()).map(|j| self.midpoint(j))
    }

    /// Index of the cell containing `x` (clamped to the boundary cells).
    pub fn locate(&self, x: f64) -> usize {
        match self
            .nodes
            .binary_search_by(|n| n.partial_cmp(&x).unwrap())
        {
            Ok(j) => j.min(self.num_cells() - 1),
            Err(j) => j.saturating_sub(1).min(self.num_cells() - 1),
        }
    }

    /// 2:1 coarsening (keeps every other node). Requires an even cell count
    /// and that the coarse mesh still resolves the breakpoints.
    pub fn coarsen_2to1(&self) -> Result<Mesh> {
        if self.num_cells() % 2 != 0 {
            return Err(Error::domain(
                "2:1 coarsening requires an even number of cells",
            ));
        }
        let nodes: Vec<f64> = self.nodes.iter().cloned().step_by(2).collect();
        Mesh::from_nodes(nodes, &self.breakpoints)
    }

    /// Splits every cell into `factor` equal parts.
    pub fn refine(&self, factor: usize) -> Mesh {
        assert!(factor >= 1);
        if factor == 1 {
            return self.clone();
        }
        let mut nodes = Vec::with_capacity(self.num_cells() * factor + 1);
        for j in 0..self.num_cells() {
            let a = self.nodes[j];
            let w = self.widths[j];
            for s in 0..factor {
                nodes.push(a + w * s as f64 / factor as f64);
            }
        }
        nodes.push(1.0);
        nodes[0] = 0.0;
        Mesh::from_nodes(nodes, &self.breakpoints).expect("refinement preserves validity")
    }
}

/// Per-cell midpoint values of the cross-sections and the source: the
/// midpoint interpolation of the coefficient fields on a given mesh.
#[derive(Debug, Clone)]
pub struct CoefficientSample {
    mesh: Mesh,
    sigma_mid: Vec<f64>,
    sigma_s_mid: Vec<f64>,
    f_mid: Vec<f64>,
    scattering_ratio_sup: f64,
}

impl CoefficientSample {
    /// Validates positivity of both cross-sections and positive absorption
    /// (`sigma_S < sigma` everywhere).
    pub fn new(
        mesh: Mesh,
        sigma_mid: Vec<f64>,
        sigma_s_mid: Vec<f64>,
        f_mid: Vec<f64>,
    ) -> Result<Self> {
        let m = mesh.num_cells();
        if sigma_mid.len() != m || sigma_s_mid.len() != m || f_mid.len() != m {
            return Err(Error::domain(format!(
                "coefficient arrays must have length {m}"
            )));
        }
        let mut ratio_sup: f64 = 0.0;
        for j in 0..m {
            if !(sigma_s_mid[j] > 0.0) {
                return Err(Error::domain(format!(
                    "sigma_S must be positive (cell {j}: {})",
                    sigma_s_mid[j]
                )));
            }
            if !(sigma_mid[j] > sigma_s_mid[j]) {
                return Err(Error::domain(format!(
                    "positive absorption requires sigma_S < sigma (cell {j}: {} vs {})",
                    sigma_s_mid[j], sigma_mid[j]
                )));
            }
            ratio_sup = ratio_sup.max(sigma_s_mid[j] / sigma_mid[j]);
        }
        Ok(CoefficientSample {
            mesh,
            sigma_mid,
            sigma_s_mid,
            f_mid,
            scattering_ratio_sup: ratio_sup,
        })
    }

    /// Samples coefficient fields at the cell midpoints.
    pub fn from_fields(
        mesh: Mesh,
        sigma_s: impl Fn(f64) -> f64,
        sigma_a: impl Fn(f64) -> f64,
        source: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let mids: Vec<f64> = mesh.midpoints().collect();
        let sigma_s_mid: Vec<f64> = mids.iter().map(|&x| sigma_s(x)).collect();
        let sigma_mid: Vec<f64> = mids
            .iter()
            .zip(&sigma_s_mid)
            .map(|(&x, &ss)| ss + sigma_a(x))
            .collect();
        let f_mid: Vec<f64> = mids.iter().map(|&x| source(x)).collect();
        CoefficientSample::new(mesh, sigma_mid, sigma_s_mid, f_mid)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn sigma_mid(&self) -> &[f64] {
        &self.sigma_mid
    }

    pub fn sigma_s_mid(&self) -> &[f64] {
        &self.sigma_s_mid
    }

    pub fn f_mid(&self) -> &[f64] {
        &self.f_mid
    }

    /// `max_j sigma_{S,j-1/2} / sigma_{j-1/2} < 1`.
    pub fn scattering_ratio_sup(&self) -> f64 {
        self.scattering_ratio_sup
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_mid.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_mid.iter().cloned().fold(0.0, f64::max)
    }

    pub fn sigma_s_min(&self) -> f64 {
        self.sigma_s_mid
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn sigma_s_max(&self) -> f64 {
        self.sigma_s_mid.iter().cloned().fold(0.0, f64::max)
    }
}
