//! Quantities of interest evaluated on scalar fluxes.

use crate::transport::ScalarFlux;
use crate::{Error, Result};

/// Which functional of the flux an estimator targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QoiSpec {
    /// `(int_0^1 |phi|)^q` with integer `q >= 1`; the integral of the
    /// piecewise-linear flux is computed exactly, splitting cells at sign
    /// changes.
    L1NormPower { q: u32 },
    /// `max_j |phi(x_j) - reference(x_j)|` over the flux's own nodes, with
    /// the reference restricted by nodal evaluation.
    SupNormErrorVsReference,
    /// Point evaluation `phi(x)`.
    PointValue { x: f64 },
}

impl QoiSpec {
    pub fn needs_reference(&self) -> bool {
        matches!(self, QoiSpec::SupNormErrorVsReference)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            QoiSpec::L1NormPower { q } if *q < 1 => {
                Err(Error::domain("L1 norm power requires q >= 1"))
            }
            QoiSpec::PointValue { x } if !(0.0..=1.0).contains(x) => {
                Err(Error::domain("point evaluation requires x in [0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

/// Exact integral of `|phi|` for a piecewise-linear `phi`.
fn l1_norm_exact(flux: &ScalarFlux) -> f64 {
    let nodes = flux.mesh().nodes();
    let vals = flux.nodal();
    let mut acc = 0.0;
    for j in 0..flux.mesh().num_cells() {
        let (a, b) = (vals[j], vals[j + 1]);
        let w = nodes[j + 1] - nodes[j];
        acc += if a * b >= 0.0 {
            0.5 * w * (a.abs() + b.abs())
        } else {
            // Sign change: the two triangles on either side of the root.
            0.5 * w * (a * a + b * b) / (a.abs() + b.abs())
        };
    }
    acc
}

pub fn evaluate_qoi(
    spec: &QoiSpec,
    flux: &ScalarFlux,
    reference: Option<&ScalarFlux>,
) -> Result<f64> {
    spec.validate()?;
    match spec {
        QoiSpec::L1NormPower { q } => Ok(l1_norm_exact(flux).powi(*q as i32)),
        QoiSpec::SupNormErrorVsReference => {
            let reference = reference.ok_or_else(|| {
                Error::domain("sup-norm error functional requires a reference flux")
            })?;
            if reference.mesh().h() > flux.mesh().h() {
                return Err(Error::domain(
                    "reference mesh must be at least as fine as the flux mesh",
                ));
            }
            // The reference mesh must refine the flux mesh: every coarse
            // node coincides with a reference node.
            let nested = flux.mesh().nodes().iter().all(|&x| {
                let j = reference.mesh().locate(x);
                let nodes = reference.mesh().nodes();
                (nodes[j] - x).abs() <= 1e-14 || (nodes[j + 1] - x).abs() <= 1e-14
            });
            if !nested {
                return Err(Error::domain(
                    "meshes have no common refinement (coarse nodes must lie on the reference mesh)",
                ));
            }
            Ok(flux.sup_diff_at_nodes(reference))
        }
        QoiSpec::PointValue { x } => Ok(flux.eval(*x)),
    }
}
