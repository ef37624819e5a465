//! Experiment drivers behind the CLI subcommands.

use std::sync::Arc;

use rayon::prelude::*;

use super::config::{StudyConfig, fmt_float};
use super::csvout::{write_json, OutputFile};
use crate::estimators::{
    evaluate_qoi, mc_estimate, mlmc_estimate, BiasModel, EstimatorReport, Ladder, McOptions,
    McTarget, MlmcOptions,
};
use crate::quadrature::QuadratureRule;
use crate::randfield::draw_field;
use crate::rng::{domain, Stream};
use crate::transport::{solve, CoefficientSample, Mesh, ScalarFlux};
use crate::{Error, Result};

/// Deterministic single solve: writes `flux.csv` (x, phi per node) and a
/// `stats.json` summary.
pub fn cmd_solve(cfg: &StudyConfig) -> Result<()> {
    let mut breakpoints = vec![0.0, 1.0];
    breakpoints.extend_from_slice(cfg.sigma_a.breakpoints());
    breakpoints.extend_from_slice(cfg.source.breakpoints());
    let mesh = Mesh::uniform_resolving(cfg.solve_cells, &breakpoints)
        .map_err(|e| Error::config(format!("key `solve_cells`: {e}")))?;
    let half_order = cfg.coupling.half_order(mesh.h());

    let coeffs = if let Some(sigma_s) = cfg.sigma_s_const {
        let sigma_a = cfg.sigma_a.clone();
        let source = cfg.source.clone();
        CoefficientSample::from_fields(
            mesh,
            move |_| sigma_s,
            move |x| sigma_a.eval(x),
            move |x| source.eval(x),
        )?
    } else {
        let kl = cfg.build_kl(false)?;
        let stream = Stream::new(cfg.seed, domain::FIELD, 0, 0);
        let field = draw_field(&kl, &cfg.sigma_a, &stream);
        field.coefficients(&mesh, &cfg.source)?
    };

    let rule = QuadratureRule::cached(half_order);
    let out = solve(cfg.solver, &coeffs, &rule, cfg.tol, cfg.max_iter)?;

    let mut flux = OutputFile::create(cfg, "flux.csv")?;
    flux.line("x,phi");
    for (x, phi) in coeffs.mesh().nodes().iter().zip(out.scalar.nodal()) {
        flux.row(&[fmt_float(*x), fmt_float(*phi)]);
    }
    flux.finish()?;

    write_json(
        cfg,
        "stats.json",
        serde_json::json!({
            "cells": coeffs.mesh().num_cells(),
            "half_order": half_order,
            "iterations": out.stats.iterations,
            "final_residual": out.stats.final_residual,
            "work_units": out.stats.work_units,
            "wall_time_seconds": out.stats.wall_time,
            "phi_at_half": out.scalar.eval(0.5),
        }),
    )?;
    Ok(())
}

/// Per-level error rows of a convergence study.
pub struct ConvergenceRow {
    pub h: f64,
    pub half_order: usize,
    pub mean_sup_err: f64,
    pub se_sup_err: f64,
    pub mean_qoi_err: f64,
    pub se_qoi_err: f64,
}

pub struct ConvergenceResult {
    pub rows: Vec<ConvergenceRow>,
    pub sup_slope: f64,
    pub sup_slope_se: f64,
    pub qoi_slope: f64,
    pub qoi_slope_se: f64,
}

/// Estimates `E || phi - phi^{h, N(h)} ||_inf` and `E |Q - Q_h|` against a
/// per-sample reference solution (same field realisation solved on the
/// reference mesh), for every ladder level.
pub fn run_convergence(cfg: &StudyConfig) -> Result<ConvergenceResult> {
    if cfg.num_levels == 0 {
        return Ok(ConvergenceResult {
            rows: Vec::new(),
            sup_slope: f64::NAN,
            sup_slope_se: f64::NAN,
            qoi_slope: f64::NAN,
            qoi_slope_se: f64::NAN,
        });
    }
    let finest = cfg.coarsest_cells << (cfg.num_levels - 1);
    if cfg.reference_cells <= finest {
        return Err(Error::config(format!(
            "key `reference_cells`: reference ({}) must be strictly finer than the finest ladder level ({finest})",
            cfg.reference_cells
        )));
    }
    if cfg.samples < 2 {
        return Err(Error::config("key `samples`: need at least 2"));
    }

    let kl = cfg.build_kl(true)?;
    let ladder = Ladder::geometric(cfg.coarsest_cells, cfg.num_levels, &cfg.coupling, |h| {
        cfg.modes_of_h(h)
    })?;
    let mut breakpoints = vec![0.0, 1.0];
    breakpoints.extend_from_slice(cfg.sigma_a.breakpoints());
    breakpoints.extend_from_slice(cfg.source.breakpoints());

    let mut meshes = Vec::new();
    let mut bases = Vec::new();
    for spec in &ladder.levels {
        let mesh = Mesh::uniform_resolving(spec.cells, &breakpoints)?;
        bases.push(kl.basis_for_mesh(&mesh));
        meshes.push(mesh);
    }
    let ref_mesh = Mesh::uniform_resolving(cfg.reference_cells, &breakpoints)?;
    let ref_basis = kl.basis_for_mesh(&ref_mesh);
    let ref_modes = cfg.reference_modes_effective();
    let qoi = cfg.qoi();

    let solve_one = |coeffs: &CoefficientSample, half_order: usize| -> Result<ScalarFlux> {
        let rule = QuadratureRule::cached(half_order);
        Ok(solve(cfg.solver, coeffs, &rule, cfg.tol, cfg.max_iter)?.scalar)
    };

    // Per sample: solve the reference once, then every ladder level on the
    // same realisation.
    let per_sample = |sample: u64| -> Result<Vec<(f64, f64)>> {
        let stream = Stream::new(cfg.seed, domain::FIELD, 0, sample);
        let field = draw_field(&kl, &cfg.sigma_a, &stream);
        let ref_field = field.restrict(ref_modes.min(kl.truncation()));
        let ref_coeffs = ref_field.coefficients_with_basis(&ref_mesh, &ref_basis, &cfg.source)?;
        let ref_flux = solve_one(&ref_coeffs, cfg.reference_half_order)?;
        let ref_q = evaluate_qoi(&qoi, &ref_flux, None)?;
        let mut rows = Vec::with_capacity(ladder.len());
        for (idx, spec) in ladder.levels.iter().enumerate() {
            let level_field = field.restrict(spec.modes);
            let coeffs =
                level_field.coefficients_with_basis(&meshes[idx], &bases[idx], &cfg.source)?;
            let flux = solve_one(&coeffs, spec.half_order)?;
            let sup = flux.sup_diff_at_nodes(&ref_flux);
            let q = evaluate_qoi(&qoi, &flux, None)?;
            rows.push((sup, (q - ref_q).abs()));
        }
        Ok(rows)
    };

    let pool = cfg.thread_pool()?;
    let results: Vec<Result<Vec<(f64, f64)>>> = pool.install(|| {
        (0..cfg.samples)
            .into_par_iter()
            .map(per_sample)
            .collect()
    });

    let levels = ladder.len();
    let mut sums = vec![(0.0f64, 0.0f64, 0.0f64, 0.0f64); levels];
    let n = cfg.samples as f64;
    for r in results {
        let rows = r?;
        for (idx, (sup, qerr)) in rows.into_iter().enumerate() {
            sums[idx].0 += sup;
            sums[idx].1 += sup * sup;
            sums[idx].2 += qerr;
            sums[idx].3 += qerr * qerr;
        }
    }

    let mut rows = Vec::with_capacity(levels);
    for (idx, spec) in ladder.levels.iter().enumerate() {
        let (s, s2, q, q2) = sums[idx];
        let mean_sup = s / n;
        let var_sup = ((s2 - n * mean_sup * mean_sup) / (n - 1.0)).max(0.0);
        let mean_qoi = q / n;
        let var_qoi = ((q2 - n * mean_qoi * mean_qoi) / (n - 1.0)).max(0.0);
        rows.push(ConvergenceRow {
            h: spec.h,
            half_order: spec.half_order,
            mean_sup_err: mean_sup,
            se_sup_err: (var_sup / n).sqrt(),
            mean_qoi_err: mean_qoi,
            se_qoi_err: (var_qoi / n).sqrt(),
        });
    }

    let fit = |select: &dyn Fn(&ConvergenceRow) -> f64| -> (f64, f64) {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| select(r) > 0.0)
            .map(|r| (r.h.log2(), select(r).log2()))
            .collect();
        if pts.len() < 2 {
            (f64::NAN, f64::NAN)
        } else {
            crate::estimators::least_squares_slope(&pts)
        }
    };
    let (sup_slope, sup_slope_se) = fit(&|r| r.mean_sup_err);
    let (qoi_slope, qoi_slope_se) = fit(&|r| r.mean_qoi_err);

    Ok(ConvergenceResult {
        rows,
        sup_slope,
        sup_slope_se,
        qoi_slope,
        qoi_slope_se,
    })
}

/// Runs the convergence study and writes `convergence.csv` and `rates.txt`.
pub fn cmd_convergence(cfg: &StudyConfig) -> Result<()> {
    let result = run_convergence(cfg)?;
    let mut csv = OutputFile::create(cfg, "convergence.csv")?;
    csv.line("h,N,mean_sup_err,se_sup_err,mean_qoi_err,se_qoi_err");
    for r in &result.rows {
        csv.row(&[
            fmt_float(r.h),
            r.half_order.to_string(),
            fmt_float(r.mean_sup_err),
            fmt_float(r.se_sup_err),
            fmt_float(r.mean_qoi_err),
            fmt_float(r.se_qoi_err),
        ]);
    }
    csv.finish()?;

    let mut rates = OutputFile::create(cfg, "rates.txt")?;
    rates.line(&format!("sup_err_slope = {}", fmt_float(result.sup_slope)));
    rates.line(&format!(
        "sup_err_slope_se = {}",
        fmt_float(result.sup_slope_se)
    ));
    rates.line(&format!("qoi_err_slope = {}", fmt_float(result.qoi_slope)));
    rates.line(&format!(
        "qoi_err_slope_se = {}",
        fmt_float(result.qoi_slope_se)
    ));
    rates.finish()?;
    Ok(())
}

/// One row of the epsilon-cost table.
pub struct EpsCostRow {
    pub method: &'static str,
    pub epsilon: f64,
    pub achieved_err: f64,
    pub work_units: f64,
    pub seconds: f64,
    pub levels: usize,
    pub samples_per_level: Vec<u64>,
    pub status: String,
}

pub struct EpsCostResult {
    pub reference_estimate: f64,
    pub reference_epsilon: f64,
    pub rows: Vec<EpsCostRow>,
    pub mc_slope: f64,
    pub mlmc_slope: f64,
}

fn report_row(
    method: &'static str,
    epsilon: f64,
    reference: f64,
    report: &EstimatorReport,
) -> EpsCostRow {
    EpsCostRow {
        method,
        epsilon,
        achieved_err: (report.estimate - reference).abs(),
        work_units: report.total_work,
        seconds: report.total_time,
        levels: report.levels.len(),
        samples_per_level: report.levels.iter().map(|l| l.samples).collect(),
        status: match &report.failure {
            None => "ok".to_string(),
            Some(msg) => format!("failed: {}", msg.replace(',', ";")),
        },
    }
}

fn error_row(method: &'static str, epsilon: f64, err: &Error) -> EpsCostRow {
    EpsCostRow {
        method,
        epsilon,
        achieved_err: f64::NAN,
        work_units: f64::NAN,
        seconds: f64::NAN,
        levels: 0,
        samples_per_level: Vec::new(),
        status: format!("error: {}", err.to_string().replace(',', ";")),
    }
}

/// Runs both estimators across the epsilon grid. The achieved error column
/// is measured against a high-accuracy MLMC estimate at `min(eps) / 4`,
/// whose pilot level means also drive the bias-based mesh choice for the
/// plain MC points.
pub fn run_epscost(cfg: &StudyConfig) -> Result<EpsCostResult> {
    if cfg.eps_grid.is_empty() {
        return Err(Error::config("key `eps`: epsilon grid is empty"));
    }
    let kl = cfg.build_kl(false)?;
    let sampler = cfg.build_sampler(Arc::clone(&kl))?;
    let pool = cfg.thread_pool()?;

    let mut eps_grid = cfg.eps_grid.clone();
    eps_grid.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eps_grid.dedup();
    let eps_min = *eps_grid.last().unwrap();

    let reference_epsilon = eps_min / 4.0;
    let reference = mlmc_estimate(
        &sampler,
        &pool,
        &MlmcOptions {
            warmup: cfg.warmup,
            max_samples_per_level: cfg.max_samples_per_level,
            ..MlmcOptions::new(reference_epsilon)
        },
    )?;
    if let Some(msg) = &reference.failure {
        return Err(Error::Solver(format!(
            "reference estimate at eps = {reference_epsilon:.3e} failed: {msg}"
        )));
    }
    let bias_model = BiasModel::from_level_records(&reference.levels, 0.5);

    let mut rows = Vec::new();
    for &eps in &eps_grid {
        match mlmc_estimate(
            &sampler,
            &pool,
            &MlmcOptions {
                warmup: cfg.warmup,
                max_samples_per_level: cfg.max_samples_per_level,
                ..MlmcOptions::new(eps)
            },
        ) {
            Ok(report) => rows.push(report_row("mlmc", eps, reference.estimate, &report)),
            Err(e) => rows.push(error_row("mlmc", eps, &e)),
        }

        let level = bias_model.level_for(eps, sampler.ladder().len() - 1);
        let bias = bias_model.bias_at(level);
        match mc_estimate(
            &sampler,
            &pool,
            level,
            &McOptions {
                target: McTarget::Epsilon(eps),
                warmup: cfg.warmup,
                max_samples: cfg.max_samples_per_level,
            },
            bias,
        ) {
            Ok(report) => {
                let mut row = report_row("mc", eps, reference.estimate, &report);
                row.levels = level + 1;
                rows.push(row);
            }
            Err(e) => rows.push(error_row("mc", eps, &e)),
        }
    }

    let slope_for = |method: &str| -> f64 {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.method == method && r.status == "ok" && r.work_units > 0.0)
            .map(|r| (r.epsilon.log2(), r.work_units.log2()))
            .collect();
        if pts.len() < 2 {
            f64::NAN
        } else {
            -crate::estimators::least_squares_slope(&pts).0
        }
    };

    Ok(EpsCostResult {
        reference_estimate: reference.estimate,
        reference_epsilon,
        mc_slope: slope_for("mc"),
        mlmc_slope: slope_for("mlmc"),
        rows,
    })
}

/// Runs the epsilon-cost study and writes `epscost.csv` and
/// `epscost_rates.txt`.
pub fn cmd_epscost(cfg: &StudyConfig) -> Result<()> {
    let result = run_epscost(cfg)?;
    let mut csv = OutputFile::create(cfg, "epscost.csv")?;
    csv.line("method,epsilon,achieved_err,work_units,seconds,levels,samples_per_level,status");
    for r in &result.rows {
        let samples: Vec<String> = r.samples_per_level.iter().map(|s| s.to_string()).collect();
        csv.row(&[
            r.method.to_string(),
            fmt_float(r.epsilon),
            fmt_float(r.achieved_err),
            fmt_float(r.work_units),
            fmt_float(r.seconds),
            r.levels.to_string(),
            samples.join(";"),
            r.status.clone(),
        ]);
    }
    csv.finish()?;

    let mut rates = OutputFile::create(cfg, "epscost_rates.txt")?;
    rates.line(&format!(
        "reference_epsilon = {}",
        fmt_float(result.reference_epsilon)
    ));
    rates.line(&format!(
        "reference_estimate = {}",
        fmt_float(result.reference_estimate)
    ));
    rates.line(&format!("mc_cost_slope = {}", fmt_float(result.mc_slope)));
    rates.line(&format!(
        "mlmc_cost_slope = {}",
        fmt_float(result.mlmc_slope)
    ));
    rates.finish()?;
    Ok(())
}

pub struct KlCheckResult {
    /// (index, nystrom eigenvalue, analytic eigenvalue, relative delta);
    /// the analytic columns are NaN except for `nu = 0.5`.
    pub table: Vec<(usize, f64, f64, f64)>,
    pub max_rel_delta: f64,
    pub gram_residual_nystrom: f64,
    pub gram_residual_analytic: f64,
    pub trace_nystrom: f64,
    pub decay_ratio: f64,
}

/// Cross-checks the Nystrom eigensolver against the analytic expansion
/// (for `nu = 0.5`) and reports orthonormality and trace diagnostics.
pub fn run_kl_check(cfg: &StudyConfig) -> Result<KlCheckResult> {
    use crate::quadrature::gauss_legendre_unit;
    use crate::randfield::{kl_analytic_exponential, kl_nystrom, KlExpansion};
    use crate::specfun::MaternParams;

    let params = MaternParams::new(cfg.nu, cfg.lambda_c, cfg.sigma_var2)?;
    let modes = 20.min(cfg.nystrom_points / 4).max(1);
    let nystrom = kl_nystrom(&params, cfg.nystrom_points, modes)?;
    let analytic = if cfg.nu == 0.5 {
        Some(kl_analytic_exponential(&params, modes)?)
    } else {
        None
    };

    let gram = |kl: &KlExpansion| -> f64 {
        let rule = gauss_legendre_unit(256);
        let mut max_resid = 0.0f64;
        for i in 0..modes {
            for j in i..modes {
                let dot =
                    rule.integrate(|x| kl.eval_eigenfunction(i, x) * kl.eval_eigenfunction(j, x));
                let expected = if i == j { 1.0 } else { 0.0 };
                max_resid = max_resid.max((dot - expected).abs());
            }
        }
        max_resid
    };

    let mut table = Vec::with_capacity(modes);
    let mut max_rel_delta: f64 = 0.0;
    for i in 0..modes {
        let xi_n = nystrom.eigenvalues()[i];
        let (xi_a, delta) = match &analytic {
            Some(a) => {
                let xi_a = a.eigenvalues()[i];
                let delta = ((xi_n - xi_a) / xi_a).abs();
                (xi_a, delta)
            }
            None => (f64::NAN, f64::NAN),
        };
        if delta.is_finite() {
            max_rel_delta = max_rel_delta.max(delta);
        }
        table.push((i + 1, xi_n, xi_a, delta));
    }
    if analytic.is_none() {
        max_rel_delta = f64::NAN;
    }

    Ok(KlCheckResult {
        max_rel_delta,
        gram_residual_nystrom: gram(&nystrom),
        gram_residual_analytic: analytic.as_ref().map(|a| gram(a)).unwrap_or(f64::NAN),
        trace_nystrom: nystrom.eigenvalues().iter().sum(),
        decay_ratio: nystrom.eigenvalues()[modes - 1] / nystrom.eigenvalues()[0],
        table,
    })
}

/// Runs the KL cross-check and writes `kl_eigenvalues.csv` and
/// `kl_summary.txt`.
pub fn cmd_kl_check(cfg: &StudyConfig) -> Result<()> {
    let result = run_kl_check(cfg)?;
    let mut csv = OutputFile::create(cfg, "kl_eigenvalues.csv")?;
    csv.line("i,xi_nystrom,xi_analytic,rel_delta");
    for (i, xi_n, xi_a, delta) in &result.table {
        csv.row(&[
            i.to_string(),
            fmt_float(*xi_n),
            fmt_float(*xi_a),
            fmt_float(*delta),
        ]);
    }
    csv.finish()?;

    let mut summary = OutputFile::create(cfg, "kl_summary.txt")?;
    summary.line(&format!(
        "max_rel_eigenvalue_delta = {}",
        fmt_float(result.max_rel_delta)
    ));
    summary.line(&format!(
        "gram_residual_nystrom = {}",
        fmt_float(result.gram_residual_nystrom)
    ));
    summary.line(&format!(
        "gram_residual_analytic = {}",
        fmt_float(result.gram_residual_analytic)
    ));
    summary.line(&format!(
        "trace_nystrom = {}",
        fmt_float(result.trace_nystrom)
    ));
    summary.line(&format!("sigma_var2 = {}", fmt_float(cfg.sigma_var2)));
    summary.line(&format!("decay_ratio = {}", fmt_float(result.decay_ratio)));
    summary.finish()?;
    Ok(())
}
