//! Sample generation over a level ladder and the MC / MLMC drivers.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::qoi::{evaluate_qoi, QoiSpec};
use super::records::{EstimatorReport, LevelRecord, SampleOutcome};
use super::rates::{fit_rates, least_squares_slope};
use crate::quadrature::QuadratureRule;
use crate::randfield::{draw_field, BasisMatrix, DeterministicField, FieldSample, KlExpansion};
use crate::rng::{domain, Stream};
use crate::transport::{
    solve, stability_constants, stable_mesh_width, CouplingPolicy, Mesh, SolverChoice,
};
use crate::{Error, Result};

/// Discretisation of one ladder level.
#[derive(Debug, Clone)]
pub struct LevelSpec {
    pub h: f64,
    pub cells: usize,
    pub half_order: usize,
    /// KL modes retained at this level.
    pub modes: usize,
}

/// Geometric mesh ladder `h_l = h_0 / 2^l` with the angular order and mode
/// count coupled to the width.
#[derive(Debug, Clone)]
pub struct Ladder {
    pub levels: Vec<LevelSpec>,
}

impl Ladder {
    pub fn geometric(
        coarsest_cells: usize,
        num_levels: usize,
        coupling: &CouplingPolicy,
        modes_of_h: impl Fn(f64) -> usize,
    ) -> Result<Self> {
        if coarsest_cells == 0 || num_levels == 0 {
            return Err(Error::config("ladder needs cells >= 1 and levels >= 1"));
        }
        let mut levels = Vec::with_capacity(num_levels);
        for l in 0..num_levels {
            let cells = coarsest_cells << l;
            let h = 1.0 / cells as f64;
            levels.push(LevelSpec {
                h,
                cells,
                half_order: coupling.half_order(h),
                modes: modes_of_h(h).max(1),
            });
        }
        Ok(Ladder { levels })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Stability refinement switch; disabled by default so plain runs compute on
/// the nominal mesh (the constant `K` and exponent are configurable).
#[derive(Debug, Clone, Copy)]
pub struct StabilityControl {
    pub k_const: f64,
    pub eta: f64,
    pub h_floor: f64,
}

/// Everything needed to evaluate samples on a ladder: the shared KL
/// expansion, deterministic fields, solver configuration and per-level
/// precomputed eigenfunction bases. Immutable and shared by worker threads.
pub struct Sampler {
    kl: Arc<KlExpansion>,
    sigma_a: DeterministicField,
    source: DeterministicField,
    solver: SolverChoice,
    tol: f64,
    max_iter: usize,
    coupling: CouplingPolicy,
    stability: Option<StabilityControl>,
    qoi: QoiSpec,
    seed: u64,
    ladder: Ladder,
    meshes: Vec<Mesh>,
    bases: Vec<BasisMatrix>,
}

impl Sampler {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kl: Arc<KlExpansion>,
        sigma_a: DeterministicField,
        source: DeterministicField,
        solver: SolverChoice,
        tol: f64,
        max_iter: usize,
        coupling: CouplingPolicy,
        stability: Option<StabilityControl>,
        qoi: QoiSpec,
        seed: u64,
        ladder: Ladder,
    ) -> Result<Self> {
        qoi.validate()?;
        if qoi.needs_reference() {
            return Err(Error::config(
                "estimators cannot target a reference-relative functional",
            ));
        }
        if ladder.is_empty() {
            return Err(Error::config("ladder must have at least one level"));
        }
        for spec in &ladder.levels {
            if spec.modes > kl.truncation() {
                return Err(Error::config(format!(
                    "level wants {} KL modes but the expansion holds {}",
                    spec.modes,
                    kl.truncation()
                )));
            }
        }
        let mut breakpoints = vec![0.0, 1.0];
        breakpoints.extend_from_slice(sigma_a.breakpoints());
        breakpoints.extend_from_slice(source.breakpoints());
        let mut meshes = Vec::with_capacity(ladder.len());
        let mut bases = Vec::with_capacity(ladder.len());
        for spec in &ladder.levels {
            let mesh = Mesh::uniform_resolving(spec.cells, &breakpoints)?;
            bases.push(kl.basis_for_mesh(&mesh));
            meshes.push(mesh);
        }
        Ok(Sampler {
            kl,
            sigma_a,
            source,
            solver,
            tol,
            max_iter,
            coupling,
            stability,
            qoi,
            seed,
            ladder,
            meshes,
            bases,
        })
    }

    pub fn ladder(&self) -> &Ladder {
        &self.ladder
    }

    pub fn mesh(&self, level: usize) -> &Mesh {
        &self.meshes[level]
    }

    pub fn kl(&self) -> &Arc<KlExpansion> {
        &self.kl
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn qoi(&self) -> &QoiSpec {
        &self.qoi
    }

    fn stream(&self, level: usize, sample: u64) -> Stream {
        Stream::new(self.seed, domain::FIELD, level as u64, sample)
    }

    /// Solves one field realisation at the discretisation of `level`,
    /// optionally shrinking the mesh per the stability rule, and returns
    /// `(qoi, solution work, refined?)`.
    fn level_value(&self, field: &FieldSample, level: usize) -> Result<(f64, f64, bool)> {
        let spec = &self.ladder.levels[level];
        let mut mesh = self.meshes[level].clone();
        let mut half_order = spec.half_order;
        let mut coeffs =
            field.coefficients_with_basis(&mesh, &self.bases[level], &self.source)?;
        let mut refined = false;
        let mut stability_work = 0.0;

        if let Some(ctl) = self.stability {
            let params = stability_constants(&coeffs, ctl.eta, ctl.k_const)?;
            // Charge the R3 evaluation: one pass over all midpoint pairs.
            stability_work += (mesh.num_cells() * mesh.num_cells()) as f64;
            let h_omega = stable_mesh_width(&params, spec.h, &self.coupling, ctl.h_floor)?;
            if h_omega < spec.h {
                let factor = (spec.h / h_omega).round() as usize;
                mesh = mesh.refine(factor);
                half_order = self.coupling.half_order(h_omega);
                coeffs = field.coefficients(&mesh, &self.source)?;
                refined = true;
            }
        }

        let rule = QuadratureRule::cached(half_order);
        let out = solve(self.solver, &coeffs, &rule, self.tol, self.max_iter)?;
        let q = evaluate_qoi(&self.qoi, &out.scalar, None)?;
        Ok((q, out.stats.work_units + stability_work, refined))
    }

    /// Evaluates sample `sample` of `level`. For `coupled` pairs above level
    /// 0 the coarse member reuses the leading KL coefficients of the fine
    /// draw and the 2:1-coarsened mesh, so the pair shares its randomness.
    pub fn run_single_sample(
        &self,
        level: usize,
        sample: u64,
        coupled: bool,
    ) -> Result<SampleOutcome> {
        let wall = Instant::now();
        let spec = &self.ladder.levels[level];
        let stream = self.stream(level, sample);
        let field = draw_field_with_modes(&self.kl, &self.sigma_a, &stream, spec.modes);

        let run = || -> Result<SampleOutcome> {
            let (q_fine, work_fine, refined_fine) = self.level_value(&field, level)?;
            if coupled && level > 0 {
                let coarse_modes = self.ladder.levels[level - 1].modes;
                let coarse_field = field.restrict(coarse_modes);
                let (q_coarse, work_coarse, refined_coarse) =
                    self.level_value(&coarse_field, level - 1)?;
                Ok(SampleOutcome {
                    y: q_fine - q_coarse,
                    q_fine,
                    q_coarse: Some(q_coarse),
                    work: work_fine + work_coarse,
                    wall_time: wall.elapsed().as_secs_f64(),
                    refined: refined_fine || refined_coarse,
                })
            } else {
                Ok(SampleOutcome {
                    y: q_fine,
                    q_fine,
                    q_coarse: None,
                    work: work_fine,
                    wall_time: wall.elapsed().as_secs_f64(),
                    refined: refined_fine,
                })
            }
        };
        run().map_err(|e| e.at_sample(level, sample))
    }

    /// Runs samples `range` of `level` on the pool, returning outcomes in
    /// sample-index order regardless of the worker count.
    pub fn run_batch(
        &self,
        pool: &rayon::ThreadPool,
        level: usize,
        range: std::ops::Range<u64>,
        coupled: bool,
    ) -> Result<Vec<SampleOutcome>> {
        let results: Vec<Result<SampleOutcome>> = pool.install(|| {
            range
                .clone()
                .into_par_iter()
                .map(|sample| self.run_single_sample(level, sample, coupled))
                .collect()
        });
        // Deterministic error selection: the lowest failing sample index.
        let mut outcomes = Vec::with_capacity(results.len());
        for r in results {
            outcomes.push(r?);
        }
        Ok(outcomes)
    }
}

/// Draws a field sample with a level-specific mode count (at most the
/// expansion's truncation).
fn draw_field_with_modes(
    kl: &Arc<KlExpansion>,
    sigma_a: &DeterministicField,
    stream: &Stream,
    modes: usize,
) -> FieldSample {
    let full = draw_field(kl, sigma_a, stream);
    if modes < kl.truncation() {
        full.restrict(modes)
    } else {
        full
    }
}

/// Target of a plain Monte Carlo run.
#[derive(Debug, Clone, Copy)]
pub enum McTarget {
    /// Choose the sample count so the sampling error meets `eps^2 / 2`.
    Epsilon(f64),
    FixedSamples(u64),
}

#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    pub target: McTarget,
    pub warmup: u64,
    pub max_samples: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            target: McTarget::FixedSamples(64),
            warmup: 32,
            max_samples: 2_000_000,
        }
    }
}

/// Standard Monte Carlo estimator of `E[Q_h]` at one ladder level.
///
/// In epsilon mode the sample count is grown in batches until
/// `V_hat / N <= eps^2 / 2`; `bias_bound` (from the caller's bias model for
/// the level) enters the reported MSE split. Exhausting `max_samples` yields
/// an explicit failure report that preserves the partial statistics.
pub fn mc_estimate(
    sampler: &Sampler,
    pool: &rayon::ThreadPool,
    level: usize,
    opts: &McOptions,
    bias_bound: f64,
) -> Result<EstimatorReport> {
    let start = Instant::now();
    let spec = &sampler.ladder().levels[level];
    let mut record = LevelRecord::new(level, spec.h, spec.half_order);
    let mut warnings = Vec::new();
    let mut failure = None;

    match opts.target {
        McTarget::FixedSamples(n) => {
            if n < 1 {
                return Err(Error::config("MC needs at least one sample"));
            }
            let outcomes = sampler.run_batch(pool, level, 0..n, false)?;
            record.accumulate(&outcomes);
        }
        McTarget::Epsilon(eps) => {
            if !(eps > 0.0) {
                return Err(Error::config("MC target epsilon must be positive"));
            }
            let warmup = opts.warmup.max(2);
            let outcomes = sampler.run_batch(pool, level, 0..warmup, false)?;
            record.accumulate(&outcomes);
            loop {
                let var = record.var_y().expect("warmup guarantees two samples");
                let needed = ((2.0 * var / (eps * eps)).ceil() as u64).max(2);
                if record.samples >= needed {
                    break;
                }
                if needed > opts.max_samples {
                    failure = Some(format!(
                        "sample budget exhausted: need {needed}, cap {}",
                        opts.max_samples
                    ));
                    let remaining = opts.max_samples.saturating_sub(record.samples);
                    if remaining > 0 {
                        let outcomes = sampler.run_batch(
                            pool,
                            level,
                            record.samples..record.samples + remaining,
                            false,
                        )?;
                        record.accumulate(&outcomes);
                    }
                    break;
                }
                let next = needed.min(opts.max_samples);
                let outcomes =
                    sampler.run_batch(pool, level, record.samples..next, false)?;
                record.accumulate(&outcomes);
            }
        }
    }

    if record.refined_samples > 0 {
        warnings.push(format!(
            "{} of {} samples required stability refinement",
            record.refined_samples, record.samples
        ));
    }

    let estimate = record.mean_y();
    let sampling_error_sq = if record.samples >= 2 {
        record.var_y()? / record.samples as f64
    } else {
        0.0
    };
    let epsilon = match opts.target {
        McTarget::Epsilon(e) => Some(e),
        McTarget::FixedSamples(_) => None,
    };
    let success = failure.is_none()
        && match epsilon {
            Some(eps) => {
                let half = 0.5 * eps * eps;
                sampling_error_sq <= half && bias_bound * bias_bound <= half
            }
            None => true,
        };
    Ok(EstimatorReport {
        method: "mc",
        estimate,
        epsilon,
        total_work: record.work_units,
        total_time: start.elapsed().as_secs_f64(),
        sampling_error_sq,
        bias_bound,
        levels: vec![record],
        rates: None,
        success,
        warnings,
        failure,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct MlmcOptions {
    pub epsilon: f64,
    /// Initial samples per level.
    pub warmup: u64,
    /// Levels active before any bias-driven extension (counted inclusively).
    pub start_levels: usize,
    pub max_samples_per_level: u64,
    /// Floor for the fitted bias decay exponent in the extension test.
    pub alpha_floor: f64,
}

impl MlmcOptions {
    pub fn new(epsilon: f64) -> Self {
        MlmcOptions {
            epsilon,
            warmup: 32,
            start_levels: 3,
            max_samples_per_level: 2_000_000,
            alpha_floor: 0.5,
        }
    }
}

/// Adaptive multilevel Monte Carlo driver.
///
/// Runs warm-up samples on an initial ladder prefix, allocates
/// `N_l = ceil(2 eps^{-2} sqrt(V_l / C_l) sum_j sqrt(V_j C_j))` from the
/// empirical level variances and costs, and extends the ladder until the
/// bias proxy `max |mean Y_l| 2^{-alpha (L - l)} / (2^alpha - 1)` over the
/// last three levels drops below `eps / sqrt(2)`.
pub fn mlmc_estimate(
    sampler: &Sampler,
    pool: &rayon::ThreadPool,
    opts: &MlmcOptions,
) -> Result<EstimatorReport> {
    let eps = opts.epsilon;
    if !(eps > 0.0) {
        return Err(Error::config("MLMC target epsilon must be positive"));
    }
    let start = Instant::now();
    let max_level = sampler.ladder().len() - 1;
    let warmup = opts.warmup.max(2);

    let mut records: Vec<LevelRecord> = Vec::new();
    let mut active = opts.start_levels.clamp(1, max_level + 1);
    for level in 0..active {
        let spec = &sampler.ladder().levels[level];
        let mut rec = LevelRecord::new(level, spec.h, spec.half_order);
        let outcomes = sampler.run_batch(pool, level, 0..warmup, true)?;
        rec.accumulate(&outcomes);
        records.push(rec);
    }

    let mut warnings: Vec<String> = Vec::new();
    let mut failure: Option<String> = None;

    'outer: loop {
        // Optimal allocation from the empirical variances and costs.
        let vars: Vec<f64> = records
            .iter()
            .map(|r| r.var_y())
            .collect::<Result<_>>()?;
        let costs: Vec<f64> = records.iter().map(|r| r.mean_cost()).collect();
        let vc_sum: f64 = vars
            .iter()
            .zip(&costs)
            .map(|(v, c)| (v * c).sqrt())
            .sum();
        let targets: Vec<u64> = vars
            .iter()
            .zip(&costs)
            .map(|(v, c)| {
                let n = (2.0 / (eps * eps) * (v / c).sqrt() * vc_sum).ceil();
                (n as u64).max(2)
            })
            .collect();

        let mut grew = false;
        for (level, (&target, rec)) in targets.iter().zip(records.iter_mut()).enumerate() {
            if target > opts.max_samples_per_level {
                failure = Some(format!(
                    "level {level} wants {target} samples, cap {}",
                    opts.max_samples_per_level
                ));
                break 'outer;
            }
            if rec.samples < target {
                let outcomes = sampler.run_batch(pool, level, rec.samples..target, true)?;
                rec.accumulate(&outcomes);
                grew = true;
            }
        }
        if grew {
            continue;
        }

        // Bias test on the fitted decay of |mean Y_l|.
        let alpha = fitted_alpha(&records).max(opts.alpha_floor);
        let top = records.len() - 1;
        let denom = 2f64.powf(alpha) - 1.0;
        let bias = records
            .iter()
            .filter(|r| r.level >= 1 && r.level + 3 > top)
            .map(|r| r.mean_y().abs() * 2f64.powf(-(alpha * (top - r.level) as f64)) / denom)
            .fold(0.0f64, f64::max);
        if records.len() >= 2 && bias <= eps / std::f64::consts::SQRT_2 {
            break;
        }
        if active > max_level {
            failure = Some(if records.len() < 2 {
                format!(
                    "single-level ladder cannot bound the discretisation bias (cap L = {max_level})"
                )
            } else {
                format!(
                    "level ladder exhausted at L = {max_level} with bias proxy {bias:.3e} > {:.3e}",
                    eps / std::f64::consts::SQRT_2
                )
            });
            break;
        }
        // Extend the ladder by one level.
        let spec = &sampler.ladder().levels[active];
        let mut rec = LevelRecord::new(active, spec.h, spec.half_order);
        let outcomes = sampler.run_batch(pool, active, 0..warmup, true)?;
        rec.accumulate(&outcomes);
        records.push(rec);
        active += 1;
    }

    // Variance decay canary.
    for w in records.windows(2) {
        if w[0].level >= 1 && w[1].var_y()? > w[0].var_y()? {
            warnings.push(format!(
                "variance of Y does not decay between levels {} and {} (coupling suspect)",
                w[0].level, w[1].level
            ));
        }
    }
    for rec in &records {
        if rec.refined_samples > 0 {
            warnings.push(format!(
                "level {}: {} of {} samples required stability refinement",
                rec.level, rec.refined_samples, rec.samples
            ));
        }
    }

    let estimate: f64 = records.iter().map(|r| r.mean_y()).sum();
    let sampling_error_sq: f64 = records
        .iter()
        .map(|r| Ok(r.var_y()? / r.samples as f64))
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    let alpha = fitted_alpha(&records).max(opts.alpha_floor);
    let top = records.len() - 1;
    let bias = records
        .iter()
        .filter(|r| r.level >= 1 && r.level + 3 > top)
        .map(|r| {
            r.mean_y().abs() * 2f64.powf(-(alpha * (top - r.level) as f64))
                / (2f64.powf(alpha) - 1.0)
        })
        .fold(0.0f64, f64::max);
    let rates = fit_rates(&records).ok();
    let total_work: f64 = records.iter().map(|r| r.work_units).sum();
    let half = 0.5 * eps * eps;
    let success = failure.is_none() && bias * bias <= half && sampling_error_sq <= half;
    Ok(EstimatorReport {
        method: "mlmc",
        estimate,
        epsilon: Some(eps),
        levels: records,
        total_work,
        total_time: start.elapsed().as_secs_f64(),
        sampling_error_sq,
        bias_bound: bias,
        rates,
        success,
        warnings,
        failure,
    })
}

/// Bias decay exponent from the difference levels currently available;
/// conservative default when fewer than two difference levels exist.
fn fitted_alpha(records: &[LevelRecord]) -> f64 {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.level >= 1 && r.mean_y().abs() > 0.0)
        .map(|r| (r.level as f64, r.mean_y().abs().log2()))
        .collect();
    if pts.len() < 2 {
        return 0.5;
    }
    let (slope, _) = least_squares_slope(&pts);
    -slope
}

/// A bias model fitted from pilot level means: picks the coarsest level
/// whose extrapolated discretisation bias meets `eps / sqrt(2)`.
#[derive(Debug, Clone)]
pub struct BiasModel {
    /// `|mean Y_l|` per level, from a pilot run.
    pub level_bias: Vec<f64>,
    pub alpha: f64,
}

impl BiasModel {
    pub fn from_level_records(records: &[LevelRecord], alpha_floor: f64) -> Self {
        BiasModel {
            level_bias: records.iter().map(|r| r.mean_y().abs()).collect(),
            alpha: fitted_alpha(records).max(alpha_floor),
        }
    }

    /// Discretisation-bias proxy of level `l`: the measured tail sum
    /// `sum_{j > l} |E[Y_j]|` plus a geometric extrapolation beyond the
    /// deepest pilot level.
    pub fn bias_at(&self, level: usize) -> f64 {
        if self.level_bias.len() < 2 {
            return f64::INFINITY;
        }
        let ratio = 2f64.powf(-self.alpha);
        let deepest = self.level_bias.len() - 1;
        let last = self.level_bias[deepest];
        if level >= deepest {
            last * ratio.powi((level - deepest) as i32 + 1) / (1.0 - ratio)
        } else {
            let measured: f64 = self.level_bias[level + 1..].iter().sum();
            measured + last * ratio / (1.0 - ratio)
        }
    }

    /// Coarsest level meeting the bias half-budget, capped at `max_level`.
    pub fn level_for(&self, eps: f64, max_level: usize) -> usize {
        for level in 0..=max_level {
            if self.bias_at(level) <= eps / std::f64::consts::SQRT_2 {
                return level;
            }
        }
        max_level
    }
}
