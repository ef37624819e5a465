//! Per-level sample statistics and estimator reports.

use crate::{Error, Result};

/// Outcome of one sample evaluation at a level: the level value (or coupled
/// difference), the fine-level functional, and its work.
#[derive(Debug, Clone, Copy)]
pub struct SampleOutcome {
    /// `Y_l = Q_{h_l} - Q_{h_{l-1}}` for coupled pairs, `Q_{h_0}` at level 0.
    pub y: f64,
    pub q_fine: f64,
    pub q_coarse: Option<f64>,
    pub work: f64,
    pub wall_time: f64,
    /// True when the stability rule refined the sample below the level mesh.
    pub refined: bool,
}

/// Running statistics of one MLMC level (or of a plain MC run).
///
/// Means and variances accumulate with Welford's recurrence in sample-index
/// order: deterministic under any worker count, and exactly zero variance
/// for degenerate (identical) samples.
#[derive(Debug, Clone)]
pub struct LevelRecord {
    pub level: usize,
    pub h: f64,
    pub half_order: usize,
    pub samples: u64,
    mean_y: f64,
    m2_y: f64,
    mean_q: f64,
    m2_q: f64,
    pub work_units: f64,
    pub wall_time: f64,
    pub refined_samples: u64,
}

impl LevelRecord {
    pub fn new(level: usize, h: f64, half_order: usize) -> Self {
        LevelRecord {
            level,
            h,
            half_order,
            samples: 0,
            mean_y: 0.0,
            m2_y: 0.0,
            mean_q: 0.0,
            m2_q: 0.0,
            work_units: 0.0,
            wall_time: 0.0,
            refined_samples: 0,
        }
    }

    /// Folds a batch in sample-index order (deterministic reduction).
    pub fn accumulate(&mut self, outcomes: &[SampleOutcome]) {
        for o in outcomes {
            self.samples += 1;
            let n = self.samples as f64;
            let dy = o.y - self.mean_y;
            self.mean_y += dy / n;
            self.m2_y += dy * (o.y - self.mean_y);
            let dq = o.q_fine - self.mean_q;
            self.mean_q += dq / n;
            self.m2_q += dq * (o.q_fine - self.mean_q);
            self.work_units += o.work;
            self.wall_time += o.wall_time;
            if o.refined {
                self.refined_samples += 1;
            }
        }
    }

    pub fn mean_y(&self) -> f64 {
        self.mean_y
    }

    /// Unbiased sample variance of `Y`; requires at least two samples.
    pub fn var_y(&self) -> Result<f64> {
        if self.samples < 2 {
            return Err(Error::domain(
                "variance needs at least two samples per level",
            ));
        }
        Ok((self.m2_y / (self.samples as f64 - 1.0)).max(0.0))
    }

    pub fn mean_q(&self) -> f64 {
        self.mean_q
    }

    pub fn var_q(&self) -> Result<f64> {
        if self.samples < 2 {
            return Err(Error::domain(
                "variance needs at least two samples per level",
            ));
        }
        Ok((self.m2_q / (self.samples as f64 - 1.0)).max(0.0))
    }

    /// Mean work units per sample.
    pub fn mean_cost(&self) -> f64 {
        self.work_units / self.samples as f64
    }
}

/// Fitted decay/cost rates with least-squares standard errors.
#[derive(Debug, Clone, Copy)]
pub struct RatesFit {
    /// Bias decay: `|E[Y_l]| = O(h_l^alpha)`.
    pub alpha: f64,
    pub alpha_se: f64,
    /// Variance decay: `V[Y_l] = O(h_l^beta)`.
    pub beta: f64,
    pub beta_se: f64,
    /// Cost growth: `C_l = O(h_l^{-gamma})`.
    pub gamma: f64,
    pub gamma_se: f64,
}

/// Final output of one estimator run.
#[derive(Debug, Clone)]
pub struct EstimatorReport {
    pub method: &'static str,
    pub estimate: f64,
    pub epsilon: Option<f64>,
    pub levels: Vec<LevelRecord>,
    pub total_work: f64,
    pub total_time: f64,
    /// `sum_l V_l / N_l`, the variance of the estimator.
    pub sampling_error_sq: f64,
    /// Bias proxy carried into the MSE split.
    pub bias_bound: f64,
    pub rates: Option<RatesFit>,
    pub success: bool,
    pub warnings: Vec<String>,
    pub failure: Option<String>,
}

impl EstimatorReport {
    /// The MSE split both terms must satisfy for a successful run.
    pub fn mse_split_ok(&self, epsilon: f64) -> bool {
        let half = 0.5 * epsilon * epsilon;
        self.bias_bound * self.bias_bound <= half && self.sampling_error_sq <= half
    }
}
