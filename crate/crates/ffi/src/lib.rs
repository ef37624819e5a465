//! C ABI for the slab transport library.
//!
//! The interface follows the usual opaque-handle pattern: a config is parsed
//! into a [`SlabConfig`] handle, studies run against it, and every fallible
//! call returns a [`SlabStatus`] code with the detail message retrievable
//! from [`slab_last_error_message`] on the calling thread. All pointers
//! passed in must be valid for the duration of the call; handles must be
//! freed exactly once with [`slab_config_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use slab_mlmc::harness::{run_study, StudyConfig, StudyKind};
use slab_mlmc::transport::analytic_pure_absorber;
use slab_mlmc::Error;

/// Status codes mirroring the CLI exit codes (0 ok, 2 config, 3 numerics).
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum SlabStatus {
    Ok = 0,
    ConfigError = 2,
    NumericalError = 3,
    InvalidArgument = 4,
    Panic = 5,
}

/// Opaque study configuration handle.
pub struct SlabConfig {
    inner: StudyConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> SlabStatus {
    match err.exit_code() {
        2 => SlabStatus::ConfigError,
        _ => SlabStatus::NumericalError,
    }
}

fn guarded(f: impl FnOnce() -> SlabStatus) -> SlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            SlabStatus::Panic
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, SlabStatus> {
    if ptr.is_null() {
        set_error(&format!("{name} must not be null"));
        return Err(SlabStatus::InvalidArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{name} must be valid UTF-8"));
        SlabStatus::InvalidArgument
    })
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn slab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parses flat `key = value` config text into a new handle.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid writable slot.
#[no_mangle]
pub unsafe extern "C" fn slab_config_parse(
    text: *const c_char,
    out: *mut *mut SlabConfig,
) -> SlabStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out must not be null");
            return SlabStatus::InvalidArgument;
        }
        let text = match cstr_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match StudyConfig::parse(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(SlabConfig { inner: cfg }));
                SlabStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Overrides one config key on an existing handle.
///
/// # Safety
/// `cfg` must be a live handle from [`slab_config_parse`]; `key` and `value`
/// must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn slab_config_set(
    cfg: *mut SlabConfig,
    key: *const c_char,
    value: *const c_char,
) -> SlabStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_mut() else {
            set_error("cfg must not be null");
            return SlabStatus::InvalidArgument;
        };
        let (key, value) = match (cstr_arg(key, "key"), cstr_arg(value, "value")) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match cfg
            .inner
            .apply_key(key, value)
            .and_then(|()| cfg.inner.validate())
        {
            Ok(()) => SlabStatus::Ok,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Frees a config handle. Passing NULL is a no-op.
///
/// # Safety
/// `cfg` must be a handle from [`slab_config_parse`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slab_config_free(cfg: *mut SlabConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn study_kind(name: &str) -> Option<StudyKind> {
    match name {
        "solve" => Some(StudyKind::Solve),
        "convergence" => Some(StudyKind::Convergence),
        "epscost" => Some(StudyKind::EpsCost),
        "kl-check" => Some(StudyKind::KlCheck),
        _ => None,
    }
}

/// Runs one study (`"solve"`, `"convergence"`, `"epscost"` or `"kl-check"`)
/// against the config, writing the study's files. `out_dir` overrides the
/// config's output directory when non-NULL.
///
/// # Safety
/// `cfg` must be a live handle; `study` must be NUL-terminated; `out_dir`
/// may be NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn slab_run_study(
    cfg: *const SlabConfig,
    study: *const c_char,
    out_dir: *const c_char,
) -> SlabStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_ref() else {
            set_error("cfg must not be null");
            return SlabStatus::InvalidArgument;
        };
        let study = match cstr_arg(study, "study") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let Some(kind) = study_kind(study) else {
            set_error(&format!("unknown study `{study}`"));
            return SlabStatus::InvalidArgument;
        };
        let mut config = cfg.inner.clone();
        if !out_dir.is_null() {
            match cstr_arg(out_dir, "out_dir") {
                Ok(dir) => config.out_dir = PathBuf::from(dir),
                Err(s) => return s,
            }
        }
        match run_study(kind, &config) {
            Ok(()) => SlabStatus::Ok,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Solves the configured deterministic problem and copies the nodal scalar
/// flux (length `solve_cells + 1`) into `phi_out`. `*n_nodes` carries the
/// buffer capacity in and the node count out; when the buffer is too small
/// the required size is written and `SLAB_STATUS_INVALID_ARGUMENT` returned.
///
/// # Safety
/// `cfg` must be a live handle; `phi_out` must point to `*n_nodes` writable
/// doubles; `n_nodes` must be a valid writable slot.
#[no_mangle]
pub unsafe extern "C" fn slab_solve_flux(
    cfg: *const SlabConfig,
    phi_out: *mut f64,
    n_nodes: *mut usize,
) -> SlabStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_ref() else {
            set_error("cfg must not be null");
            return SlabStatus::InvalidArgument;
        };
        if n_nodes.is_null() {
            set_error("n_nodes must not be null");
            return SlabStatus::InvalidArgument;
        }
        let needed = cfg.inner.solve_cells + 1;
        if phi_out.is_null() || *n_nodes < needed {
            *n_nodes = needed;
            set_error("phi_out buffer too small");
            return SlabStatus::InvalidArgument;
        }
        match solve_nodal_flux(&cfg.inner) {
            Ok(nodal) => {
                std::ptr::copy_nonoverlapping(nodal.as_ptr(), phi_out, nodal.len());
                *n_nodes = nodal.len();
                SlabStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

fn solve_nodal_flux(cfg: &StudyConfig) -> slab_mlmc::Result<Vec<f64>> {
    use slab_mlmc::quadrature::QuadratureRule;
    use slab_mlmc::randfield::draw_field;
    use slab_mlmc::rng::{domain, Stream};
    use slab_mlmc::transport::{solve, CoefficientSample, Mesh};

    let mut breakpoints = vec![0.0, 1.0];
    breakpoints.extend_from_slice(cfg.sigma_a.breakpoints());
    breakpoints.extend_from_slice(cfg.source.breakpoints());
    let mesh = Mesh::uniform_resolving(cfg.solve_cells, &breakpoints)?;
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
    Ok(out.scalar.nodal().to_vec())
}

/// Closed-form scalar flux of the constant pure absorber (`f = 1`,
/// `sigma_S = 0`) at `x`; NaN on domain errors.
#[no_mangle]
pub extern "C" fn slab_pure_absorber_flux(sigma: f64, x: f64) -> f64 {
    analytic_pure_absorber(sigma, x).unwrap_or(f64::NAN)
}
