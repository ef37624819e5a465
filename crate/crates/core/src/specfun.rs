//! Exponential integrals and closed-form Matern kernels.
//!
//! These functions back the analytic transport oracles (`E1`, `E2`, `Ein`)
//! and the covariance kernels of the random-field sampler. Everything here is
//! a pure function of its arguments.

use crate::{Error, Result};

/// Euler's constant, 20 digits.
pub const EULER_GAMMA: f64 = 0.57721566490153286061;

const SERIES_MAX_TERMS: usize = 200;
/// Above this argument the alternating series for `Ein` loses too many digits
/// in f64; switch to the `E1`-based identity.
const EIN_SERIES_CUTOFF: f64 = 12.0;

/// Exponential integral `E1(z) = int_1^inf exp(-t z) / t dt` for `z > 0`.
///
/// Power series (with `-gamma - ln z`) for `z <= 1`, modified Lentz continued
/// fraction for `z > 1`. Relative error is below 1e-13 on both branches.
pub fn exp_integral_e1(z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::domain(format!("E1 requires z > 0, got {z}")));
    }
    if z <= 1.0 {
        Ok(-EULER_GAMMA - z.ln() + ein_series(z))
    } else {
        Ok(en_continued_fraction(1, z))
    }
}

/// Exponential integral `E2(z) = int_0^1 exp(-z/s) ds` for `z > 0`.
///
/// Uses the recurrence `E2(z) = exp(-z) - z E1(z)` for `z <= 1`; for larger
/// arguments the recurrence cancels catastrophically, so the order-2
/// continued fraction is evaluated directly.
pub fn exp_integral_e2(z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::domain(format!("E2 requires z > 0, got {z}")));
    }
    if z <= 1.0 {
        Ok((-z).exp() - z * exp_integral_e1(z)?)
    } else {
        Ok(en_continued_fraction(2, z))
    }
}

/// Entire exponential integral `Ein(z) = int_0^z (1 - exp(-t)) / t dt`,
/// `z > 0`. Satisfies `0 <= Ein(z) <= z` and
/// `E1(z) = -gamma - ln z + Ein(z)`.
pub fn ein(z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::domain(format!("Ein requires z > 0, got {z}")));
    }
    if z <= EIN_SERIES_CUTOFF {
        Ok(ein_series(z))
    } else {
        // The alternating series peaks near e^z / z^{3/2} before it decays;
        // past the cutoff that wipes out the f64 mantissa.
        Ok(exp_integral_e1(z)? + EULER_GAMMA + z.ln())
    }
}

/// Alternating series `sum_{k>=1} (-1)^{k+1} z^k / (k k!)`, which equals
/// `Ein(z)` wherever it is evaluated here.
fn ein_series(z: f64) -> f64 {
    let mut term = 1.0; // z^k / k! carried incrementally
    let mut sum = 0.0;
    for k in 1..=SERIES_MAX_TERMS {
        term *= -z / k as f64;
        let contrib = -term / k as f64;
        sum += contrib;
        if contrib.abs() <= sum.abs() * 1e-17 + 1e-300 {
            return sum;
        }
    }
    unreachable!("Ein series did not converge for z = {z}");
}

/// Modified Lentz evaluation of the continued fraction for `E_n(x)`, `x > 1`.
fn en_continued_fraction(n: usize, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let nf = n as f64;
    let mut b = x + nf;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=SERIES_MAX_TERMS {
        let a = -(i as f64) * (nf - 1.0 + i as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return h * (-x).exp();
        }
    }
    unreachable!("E{n} continued fraction did not converge for x = {x}");
}

/// Parameters of the Matern covariance family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    /// Smoothness exponent; restricted to {0.5, 1.5, 2.5} in closed form.
    pub nu: f64,
    /// Correlation length.
    pub lambda_c: f64,
    /// Variance of the field (value of the kernel at zero lag).
    pub sigma_var2: f64,
}

impl MaternParams {
    pub fn new(nu: f64, lambda_c: f64, sigma_var2: f64) -> Result<Self> {
        if !(nu > 0.0) || !(lambda_c > 0.0) || !(sigma_var2 > 0.0) {
            return Err(Error::domain(format!(
                "Matern parameters must be positive (nu = {nu}, lambda_c = {lambda_c}, sigma_var2 = {sigma_var2})"
            )));
        }
        Ok(MaternParams {
            nu,
            lambda_c,
            sigma_var2,
        })
    }

    /// Scaled distance `z = 2 sqrt(nu) r / lambda_C`.
    pub fn scaled_distance(&self, r: f64) -> f64 {
        2.0 * self.nu.sqrt() * r / self.lambda_c
    }

    /// True when the closed-form kernel below supports this smoothness.
    pub fn is_half_integer(&self) -> bool {
        [0.5, 1.5, 2.5].iter().any(|&v| self.nu == v)
    }
}

/// Matern covariance `C_nu(r)` through the half-integer closed forms:
/// `nu = 1/2` exponential, `nu = 3/2` and `nu = 5/2` polynomial-exponential.
pub fn matern_cov(params: &MaternParams, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::domain(format!("distance must be >= 0, got {r}")));
    }
    let z = params.scaled_distance(r);
    let shape = if params.nu == 0.5 {
        (-z).exp()
    } else if params.nu == 1.5 {
        (1.0 + z) * (-z).exp()
    } else if params.nu == 2.5 {
        (1.0 + z + z * z / 3.0) * (-z).exp()
    } else {
        return Err(Error::config(format!(
            "closed-form Matern kernel supports nu in {{0.5, 1.5, 2.5}}, got {}",
            params.nu
        )));
    };
    Ok(params.sigma_var2 * shape)
}
