//! Flat key-value study configuration.
//!
//! The on-disk format is one `key = value` pair per line with `#` comments.
//! CLI flags override file keys. Unknown keys are configuration errors that
//! name the offending key. [`StudyConfig::to_config_string`] writes the
//! canonical serialisation (fixed key order, full float precision), which
//! round-trips losslessly through [`StudyConfig::parse`].

use std::path::PathBuf;
use std::sync::Arc;

use crate::estimators::{Ladder, QoiSpec, Sampler, StabilityControl};
use crate::randfield::{kl_analytic_exponential, kl_nystrom, DeterministicField, KlExpansion};
use crate::specfun::MaternParams;
use crate::transport::{CouplingPolicy, SolverChoice};
use crate::{Error, Result};

/// Which experiment a config drives (the CLI subcommand).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Solve,
    Convergence,
    EpsCost,
    KlCheck,
}

impl StudyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StudyKind::Solve => "solve",
            StudyKind::Convergence => "convergence",
            StudyKind::EpsCost => "epscost",
            StudyKind::KlCheck => "kl-check",
        }
    }
}

/// How the KL eigenpairs are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlMethod {
    /// Analytic for `nu = 0.5`, Nystrom otherwise.
    Auto,
    Analytic,
    Nystrom,
}

/// Full study configuration with desk-scale defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    // Physics.
    pub nu: f64,
    pub lambda_c: f64,
    pub sigma_var2: f64,
    pub sigma_a: DeterministicField,
    pub source: DeterministicField,
    /// Deterministic scattering cross-section for `solve` runs; when unset a
    /// single field realisation is drawn from the seed.
    pub sigma_s_const: Option<f64>,

    // Numerics.
    pub coarsest_cells: usize,
    pub num_levels: usize,
    pub solve_cells: usize,
    pub coupling: CouplingPolicy,
    pub solver: SolverChoice,
    pub tol: f64,
    pub max_iter: usize,
    pub stability_enabled: bool,
    pub stability_k: f64,
    pub stability_eta: f64,
    pub stability_floor: f64,
    pub kl_method: KlMethod,
    /// Cap on KL modes; 0 resolves to a smoothness-dependent default.
    pub kl_modes_cap: usize,
    pub nystrom_points: usize,

    // Sampling.
    pub seed: u64,
    pub samples: u64,
    pub eps_grid: Vec<f64>,
    pub warmup: u64,
    pub max_samples_per_level: u64,
    pub workers: usize,

    // Reference discretisation.
    pub reference_cells: usize,
    pub reference_half_order: usize,
    /// 0 resolves to the mode formula at the reference width.
    pub reference_modes: usize,

    pub qoi_power: u32,
    pub out_dir: PathBuf,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            nu: 1.5,
            lambda_c: 1.0,
            sigma_var2: 1.0,
            sigma_a: DeterministicField::Constant(0.5f64.exp()),
            source: DeterministicField::Constant(std::f64::consts::E),
            sigma_s_const: None,
            coarsest_cells: 8,
            num_levels: 5,
            solve_cells: 256,
            coupling: CouplingPolicy::Linear,
            solver: SolverChoice::SourceIteration,
            tol: 1e-10,
            max_iter: 10_000,
            stability_enabled: false,
            stability_k: 1.0,
            stability_eta: 0.5,
            stability_floor: 1.0 / (1 << 24) as f64,
            kl_method: KlMethod::Auto,
            kl_modes_cap: 0,
            nystrom_points: 512,
            seed: 7777,
            samples: 256,
            eps_grid: vec![0.04, 0.02, 0.01, 0.005],
            warmup: 32,
            max_samples_per_level: 2_000_000,
            workers: 0,
            reference_cells: 512,
            reference_half_order: 256,
            reference_modes: 0,
            qoi_power: 1,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    // Accept plain floats and "1/512"-style fractions.
    if let Some((num, den)) = value.split_once('/') {
        let n: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("key `{key}`: bad number `{value}`")))?;
        let d: f64 = den
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("key `{key}`: bad number `{value}`")))?;
        if d == 0.0 {
            return Err(Error::config(format!("key `{key}`: division by zero")));
        }
        return Ok(n / d);
    }
    value
        .parse()
        .map_err(|_| Error::config(format!("key `{key}`: bad number `{value}`")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::config(format!("key `{key}`: bad integer `{value}`")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse()
        .map_err(|_| Error::config(format!("key `{key}`: bad integer `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("key `{key}`: bad flag `{value}`"))),
    }
}

/// `1.5` (constant) or `piecewise: 0,0.5,1 ; 1.0,2.0` (breakpoints; values).
/// The absorption cross-section must be strictly positive; the source may
/// vanish.
fn parse_field(key: &str, value: &str, strictly_positive: bool) -> Result<DeterministicField> {
    let check = |v: f64| -> Result<()> {
        if strictly_positive && !(v > 0.0) {
            Err(Error::config(format!("key `{key}`: values must be > 0")))
        } else if !strictly_positive && !(v >= 0.0) {
            Err(Error::config(format!("key `{key}`: values must be >= 0")))
        } else {
            Ok(())
        }
    };
    if let Some(rest) = value.strip_prefix("piecewise:") {
        let (bp, vals) = rest.split_once(';').ok_or_else(|| {
            Error::config(format!(
                "key `{key}`: piecewise needs `breakpoints ; values`"
            ))
        })?;
        let breakpoints: Vec<f64> = bp
            .split(',')
            .map(|s| parse_f64(key, s.trim()))
            .collect::<Result<_>>()?;
        let values: Vec<f64> = vals
            .split(',')
            .map(|s| parse_f64(key, s.trim()))
            .collect::<Result<_>>()?;
        if breakpoints.len() != values.len() + 1 {
            return Err(Error::config(format!(
                "key `{key}`: need one more breakpoint than values"
            )));
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config(format!(
                "key `{key}`: breakpoints must increase"
            )));
        }
        for &v in &values {
            check(v)?;
        }
        Ok(DeterministicField::PiecewiseConstant {
            breakpoints,
            values,
        })
    } else {
        let v = parse_f64(key, value)?;
        check(v)?;
        Ok(DeterministicField::Constant(v))
    }
}

fn field_to_string(f: &DeterministicField) -> String {
    match f {
        DeterministicField::Constant(v) => fmt_float(*v),
        DeterministicField::PiecewiseConstant {
            breakpoints,
            values,
        } => {
            let bp: Vec<String> = breakpoints.iter().map(|v| fmt_float(*v)).collect();
            let vals: Vec<String> = values.iter().map(|v| fmt_float(*v)).collect();
            format!("piecewise:{};{}", bp.join(","), vals.join(","))
        }
    }
}

/// Floats rendered with 17 significant digits (lossless for f64).
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl StudyConfig {
    /// Parses config text, starting from the defaults.
    pub fn parse(text: &str) -> Result<StudyConfig> {
        let mut cfg = StudyConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.split_once('#') {
                Some((head, _)) => head,
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            cfg.apply_key(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<StudyConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        StudyConfig::parse(&text)
    }

    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "nu" => self.nu = parse_f64(key, value)?,
            "lambda_c" => self.lambda_c = parse_f64(key, value)?,
            "sigma_var2" => self.sigma_var2 = parse_f64(key, value)?,
            "sigma_a" => self.sigma_a = parse_field(key, value, true)?,
            "source" => self.source = parse_field(key, value, false)?,
            "sigma_s_const" => {
                self.sigma_s_const = if value == "none" {
                    None
                } else {
                    Some(parse_f64(key, value)?)
                }
            }
            "coarsest_cells" => self.coarsest_cells = parse_usize(key, value)?,
            "num_levels" => self.num_levels = parse_usize(key, value)?,
            "solve_cells" => self.solve_cells = parse_usize(key, value)?,
            "coupling" => {
                self.coupling = match value {
                    "sqrt" => CouplingPolicy::Sqrt,
                    "linear" => CouplingPolicy::Linear,
                    other => {
                        if let Some(rest) = other.strip_prefix("power:") {
                            let (c0, eta) = rest.split_once(',').ok_or_else(|| {
                                Error::config("key `coupling`: power needs `power:c0,eta`")
                            })?;
                            CouplingPolicy::Power {
                                c0: parse_f64(key, c0.trim())?,
                                eta: parse_f64(key, eta.trim())?,
                            }
                        } else {
                            return Err(Error::config(format!(
                                "key `coupling`: unknown policy `{value}`"
                            )));
                        }
                    }
                }
            }
            "solver" => {
                self.solver = match value {
                    "source_iteration" => SolverChoice::SourceIteration,
                    "direct" => SolverChoice::Direct,
                    _ => {
                        return Err(Error::config(format!(
                            "key `solver`: unknown solver `{value}`"
                        )))
                    }
                }
            }
            "tol" => self.tol = parse_f64(key, value)?,
            "max_iter" => self.max_iter = parse_usize(key, value)?,
            "stability" => self.stability_enabled = parse_bool(key, value)?,
            "stability_k" => self.stability_k = parse_f64(key, value)?,
            "stability_eta" => self.stability_eta = parse_f64(key, value)?,
            "stability_floor" => self.stability_floor = parse_f64(key, value)?,
            "kl" => {
                self.kl_method = match value {
                    "auto" => KlMethod::Auto,
                    "analytic" => KlMethod::Analytic,
                    "nystrom" => KlMethod::Nystrom,
                    _ => {
                        return Err(Error::config(format!(
                            "key `kl`: unknown method `{value}`"
                        )))
                    }
                }
            }
            "kl_modes_cap" => self.kl_modes_cap = parse_usize(key, value)?,
            "nystrom_points" => self.nystrom_points = parse_usize(key, value)?,
            "seed" => self.seed = parse_u64(key, value)?,
            "samples" => self.samples = parse_u64(key, value)?,
            "eps" => {
                self.eps_grid = value
                    .split(',')
                    .map(|s| parse_f64(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "warmup" => self.warmup = parse_u64(key, value)?,
            "max_samples_per_level" => self.max_samples_per_level = parse_u64(key, value)?,
            "workers" => self.workers = parse_usize(key, value)?,
            "reference_cells" => self.reference_cells = parse_usize(key, value)?,
            "reference_half_order" => self.reference_half_order = parse_usize(key, value)?,
            "reference_modes" => self.reference_modes = parse_usize(key, value)?,
            "qoi_power" => self.qoi_power = parse_usize(key, value)? as u32,
            "out" => self.out_dir = PathBuf::from(value),
            _ => return Err(Error::config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let m = MaternParams::new(self.nu, self.lambda_c, self.sigma_var2)?;
        if !m.is_half_integer() {
            return Err(Error::config(format!(
                "key `nu`: supported values are 0.5, 1.5, 2.5 (got {})",
                self.nu
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("key `tol`: must be > 0"));
        }
        if self.qoi_power < 1 {
            return Err(Error::config("key `qoi_power`: must be >= 1"));
        }
        if !(0.0 < self.stability_eta && self.stability_eta < 1.0) {
            return Err(Error::config("key `stability_eta`: must lie in (0, 1)"));
        }
        if self.eps_grid.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::config("key `eps`: entries must be > 0"));
        }
        if self.num_levels > 0 {
            let finest = self.coarsest_cells << (self.num_levels - 1);
            if self.reference_cells < finest {
                return Err(Error::config(format!(
                    "key `reference_cells`: reference ({}) must be at least as fine as the finest level ({finest})",
                    self.reference_cells
                )));
            }
        }
        Ok(())
    }

    /// Canonical serialisation: fixed key order, lossless floats.
    pub fn to_config_string(&self) -> String {
        let coupling = match self.coupling {
            CouplingPolicy::Sqrt => "sqrt".to_string(),
            CouplingPolicy::Linear => "linear".to_string(),
            CouplingPolicy::Power { c0, eta } => {
                format!("power:{},{}", fmt_float(c0), fmt_float(eta))
            }
        };
        let solver = match self.solver {
            SolverChoice::SourceIteration => "source_iteration",
            SolverChoice::Direct => "direct",
        };
        let kl = match self.kl_method {
            KlMethod::Auto => "auto",
            KlMethod::Analytic => "analytic",
            KlMethod::Nystrom => "nystrom",
        };
        let eps: Vec<String> = self.eps_grid.iter().map(|e| fmt_float(*e)).collect();
        let mut s = String::new();
        let mut push = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        push("nu", fmt_float(self.nu));
        push("lambda_c", fmt_float(self.lambda_c));
        push("sigma_var2", fmt_float(self.sigma_var2));
        push("sigma_a", field_to_string(&self.sigma_a));
        push("source", field_to_string(&self.source));
        push(
            "sigma_s_const",
            self.sigma_s_const
                .map(fmt_float)
                .unwrap_or_else(|| "none".to_string()),
        );
        push("coarsest_cells", self.coarsest_cells.to_string());
        push("num_levels", self.num_levels.to_string());
        push("solve_cells", self.solve_cells.to_string());
        push("coupling", coupling);
        push("solver", solver.to_string());
        push("tol", fmt_float(self.tol));
        push("max_iter", self.max_iter.to_string());
        push(
            "stability",
            if self.stability_enabled { "on" } else { "off" }.to_string(),
        );
        push("stability_k", fmt_float(self.stability_k));
        push("stability_eta", fmt_float(self.stability_eta));
        push("stability_floor", fmt_float(self.stability_floor));
        push("kl", kl.to_string());
        push("kl_modes_cap", self.kl_modes_cap.to_string());
        push("nystrom_points", self.nystrom_points.to_string());
        push("seed", self.seed.to_string());
        push("samples", self.samples.to_string());
        push("eps", eps.join(","));
        push("warmup", self.warmup.to_string());
        push(
            "max_samples_per_level",
            self.max_samples_per_level.to_string(),
        );
        push("workers", self.workers.to_string());
        push("reference_cells", self.reference_cells.to_string());
        push(
            "reference_half_order",
            self.reference_half_order.to_string(),
        );
        push("reference_modes", self.reference_modes.to_string());
        push("qoi_power", self.qoi_power.to_string());
        push("out", self.out_dir.display().to_string());
        s
    }

    /// FNV-1a hash of the canonical serialisation, with the execution-only
    /// keys (worker count, output directory) normalised away: runs that can
    /// only differ in scheduling or file placement share a hash.
    pub fn hash(&self) -> u64 {
        let mut canonical = self.clone();
        canonical.workers = 0;
        canonical.out_dir = PathBuf::new();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in canonical.to_config_string().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h
    }

    /// Effective cap on KL modes: explicit, or smoothness-driven default
    /// (the rough-field expansion needs many more modes than the smooth one,
    /// whose Nystrom resolution bounds the truncation).
    pub fn modes_cap(&self) -> usize {
        if self.kl_modes_cap > 0 {
            self.kl_modes_cap
        } else if self.nu == 0.5 && self.kl_method != KlMethod::Nystrom {
            512
        } else {
            (self.nystrom_points / 4).min(128)
        }
    }

    /// Truncation schedule: `225 ceil(h^{-1/2})` modes for `nu = 0.5`,
    /// `8 ceil(h^{-1})` otherwise, capped for desk-scale runs.
    pub fn modes_of_h(&self, h: f64) -> usize {
        let raw = if self.nu == 0.5 {
            225.0 * (1.0 / h.sqrt()).ceil()
        } else {
            8.0 * (1.0 / h).ceil()
        } as usize;
        raw.clamp(1, self.modes_cap())
    }

    pub fn reference_h(&self) -> f64 {
        1.0 / self.reference_cells as f64
    }

    /// Reference-level KL mode count.
    pub fn reference_modes_effective(&self) -> usize {
        if self.reference_modes > 0 {
            self.reference_modes.min(self.modes_cap())
        } else {
            self.modes_of_h(self.reference_h())
        }
    }

    /// Builds the KL expansion sized for the deepest discretisation the
    /// study can touch.
    pub fn build_kl(&self, include_reference: bool) -> Result<Arc<KlExpansion>> {
        let params = MaternParams::new(self.nu, self.lambda_c, self.sigma_var2)?;
        let mut truncation = 1usize;
        for l in 0..self.num_levels.max(1) {
            let h = 1.0 / (self.coarsest_cells << l) as f64;
            truncation = truncation.max(self.modes_of_h(h));
        }
        if include_reference {
            truncation = truncation.max(self.reference_modes_effective());
        }
        let analytic = match self.kl_method {
            KlMethod::Analytic => true,
            KlMethod::Nystrom => false,
            KlMethod::Auto => self.nu == 0.5,
        };
        let kl = if analytic {
            kl_analytic_exponential(&params, truncation)?
        } else {
            kl_nystrom(&params, self.nystrom_points, truncation)?
        };
        Ok(Arc::new(kl))
    }

    pub fn stability_control(&self) -> Option<StabilityControl> {
        if self.stability_enabled {
            Some(StabilityControl {
                k_const: self.stability_k,
                eta: self.stability_eta,
                h_floor: self.stability_floor,
            })
        } else {
            None
        }
    }

    pub fn qoi(&self) -> QoiSpec {
        QoiSpec::L1NormPower { q: self.qoi_power }
    }

    /// Builds the estimator sampler over the configured ladder.
    pub fn build_sampler(&self, kl: Arc<KlExpansion>) -> Result<Sampler> {
        let ladder = Ladder::geometric(self.coarsest_cells, self.num_levels, &self.coupling, |h| {
            self.modes_of_h(h)
        })?;
        Sampler::new(
            kl,
            self.sigma_a.clone(),
            self.source.clone(),
            self.solver,
            self.tol,
            self.max_iter,
            self.coupling,
            self.stability_control(),
            self.qoi(),
            self.seed,
            ladder,
        )
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))
    }
}
