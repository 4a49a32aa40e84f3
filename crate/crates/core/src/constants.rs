//! Deterministic constants: the semicircle log-potential, the complexity
//! function, its threshold `E₀(p)`, the large-`p` rate constants and the
//! Kac–Rice prefactors.
//!
//! Everything here is a pure function of its arguments. [`constants_report`]
//! bundles all values for one `(p, d, field)` triple together with the
//! residuals of their defining equations, so downstream code can query a
//! single report instead of re-solving.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure, invalid, Error, Result};
use crate::field::Field;

const BISECT_TOL: f64 = 1e-6;
const NEWTON_TOL: f64 = 1e-13;

fn check_finite(name: &str, x: f64) -> Result<()> {
    ensure(x.is_finite(), || format!("{name} must be finite, got {x}"))
}

fn check_p(p: u64) -> Result<()> {
    ensure(p >= 2, || format!("p must be at least 2, got {p}"))
}

fn check_d(d: u64) -> Result<()> {
    ensure(d >= 2, || format!("d must be at least 2, got {d}"))
}

/// Log-potential of the semicircle law on `[-2, 2]`:
/// `Ω(u) = ∫ log|u − λ| dμ_sc(λ)`.
pub fn omega(u: f64) -> Result<f64> {
    check_finite("u", u)?;
    Ok(omega_raw(u))
}

pub(crate) fn omega_raw(u: f64) -> f64 {
    let x = u.abs();
    if x <= 2.0 {
        return x * x / 4.0 - 0.5;
    }
    let disc = x * x - 4.0;
    let s = if disc < 1e-30 { 0.0 } else { disc.sqrt() };
    // x²/4 − x·s/4 rewritten as x/(x + s) to avoid cancellation at large |u|.
    x / (x + s) - 0.5 + (s / 2.0 + x / 2.0).ln()
}

/// Derivative of [`omega`]; equals minus the semicircle Stieltjes transform
/// outside the support.
pub fn omega_prime(u: f64) -> f64 {
    let x = u.abs();
    let sign = if u < 0.0 { -1.0 } else { 1.0 };
    if x <= 2.0 {
        u / 2.0
    } else {
        sign * 2.0 / (x + (x * x - 4.0).sqrt())
    }
}

/// Complexity function `Σ_p(u) = (1 + log(p−1))/2 + Ω(u√(p/(p−1))) − u²/2`.
pub fn sigma_p(p: u64, u: f64) -> Result<f64> {
    check_p(p)?;
    check_finite("u", u)?;
    Ok(sigma_raw(p, u))
}

pub(crate) fn sigma_raw(p: u64, u: f64) -> f64 {
    let pf = p as f64;
    let s = (pf / (pf - 1.0)).sqrt();
    (1.0 + (pf - 1.0).ln()) / 2.0 + omega_raw(u * s) - u * u / 2.0
}

fn sigma_prime(p: u64, u: f64) -> f64 {
    let pf = p as f64;
    let s = (pf / (pf - 1.0)).sqrt();
    s * omega_prime(u * s) - u
}

/// Root of a decreasing-through-zero function on `[lo, hi]`: bisection down to
/// `BISECT_TOL`, then safeguarded Newton steps to `NEWTON_TOL`.
fn bracketed_root(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    what: &str,
) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::NotBracketed(format!(
            "{what}: f({lo}) = {flo}, f({hi}) = {fhi}"
        )));
    }
    while hi - lo > BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    let mut best = (f(x).abs(), x);
    let mut extra = 1;
    for _ in 0..100 {
        let fx = f(x);
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == flo.signum() {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - fx / df(x);
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= NEWTON_TOL * x.abs().max(1.0) {
            // one more step after the size criterion; quadratic convergence
            // takes the residual down to rounding level
            if extra == 0 {
                break;
            }
            extra -= 1;
        }
    }
    let fx = f(x).abs();
    Ok(if fx < best.0 { x } else { best.1 })
}

/// Positive root `E₀(p)` of `Σ_p`; `E₀(2) = √2` by convention.
pub fn solve_e0(p: u64) -> Result<f64> {
    check_p(p)?;
    if p == 2 {
        return Ok(2f64.sqrt());
    }
    let pf = p as f64;
    let lo = 2.0 * ((pf - 1.0) / pf).sqrt() + 1e-9;
    let hi = 2.0 + 2.0 * (pf.ln() + 1.0).sqrt();
    bracketed_root(|u| sigma_raw(p, u), |u| sigma_prime(p, u), lo, hi, "E0")
}

/// `α(p) = √p · E₀(p)`.
pub fn alpha(p: u64) -> Result<f64> {
    Ok((p as f64).sqrt() * solve_e0(p)?)
}

fn subag_residual(p: f64, q: f64) -> f64 {
    // q²(1 + p(1−q)/q) + p(1−q)·log(1−q), i.e. the implicit equation with
    // both denominators cleared.
    q * q + p * q * (1.0 - q) + p * (1.0 - q) * (-q).ln_1p()
}

fn subag_residual_prime(p: f64, q: f64) -> f64 {
    2.0 * q + p * (1.0 - 2.0 * q) - p * (-q).ln_1p() - p
}

/// Residual of `q²/(p(1−q)) = −log(1−q)/(1 + p(1−q)/q)` in its original form.
pub fn subag_equation_residual(p: u64, q: f64) -> f64 {
    let pf = p as f64;
    q * q / (pf * (1.0 - q)) + (-q).ln_1p() / (1.0 + pf * (1.0 - q) / q)
}

/// Solution `(q_c, E★)` of the implicit equations for the ground-state
/// energy of the pure spherical `p`-spin model.
pub fn solve_subag(p: u64) -> Result<(f64, f64)> {
    ensure(p >= 3, || format!("solve_subag requires p >= 3, got {p}"))?;
    let pf = p as f64;
    let q = bracketed_root(
        |q| subag_residual(pf, q),
        |q| subag_residual_prime(pf, q),
        1e-9,
        1.0 - 1e-9,
        "q_c",
    )?;
    let e_star = (-(-q).ln_1p() * (1.0 + pf * (1.0 - q) / q)).sqrt();
    Ok((q, e_star))
}

/// `β_K(d)`, the large-`p` correction constant of the rate `γ_d^K(p)`.
///
/// For the complex field this is the limit of `log L(p,d)/(2p(d−1)) − log(p)/2`,
/// which has a single power of `Γ((2d−1)/2)`.
pub fn beta_k(d: u64, field: Field) -> Result<f64> {
    check_d(d)?;
    let df = d as f64;
    Ok(match field {
        Field::Real => {
            0.5 * ((df - 1.0) / (2.0 * PI)).ln()
                + (2f64.ln() + df / 2.0 * PI.ln() - ln_gamma(df / 2.0)) / (df - 1.0)
        }
        Field::Complex => {
            0.5 * (df - 1.0).ln()
                + (2f64.ln() + 0.5 * PI.ln() - ln_gamma((2.0 * df - 1.0) / 2.0))
                    / (2.0 * (df - 1.0))
        }
    })
}

/// Residual of the equation defining `γ_d^K(p)`.
pub fn gamma_residual(p: u64, beta: f64, g: f64) -> f64 {
    (p as f64).ln() / 2.0 + beta + omega_raw(g) - g * g / 2.0
}

/// Unique positive root `γ_d^K(p)` of `log(p)/2 + β_K(d) + Ω(γ) − γ²/2`.
pub fn solve_gamma(p: u64, d: u64, field: Field) -> Result<f64> {
    check_p(p)?;
    let beta = beta_k(d, field)?;
    let pf = p as f64;
    let hi = 2.0 + 2.0 * (pf.ln() + 2.0 * beta).sqrt();
    bracketed_root(
        |g| gamma_residual(p, beta, g),
        |g| omega_prime(g) - g,
        0.0,
        hi,
        "gamma",
    )
}

/// Three-term large-`p` expansion `√log p + log log p/(2√log p) + β/√log p`.
pub fn gamma_asymptotic_3term(p: u64, d: u64, field: Field) -> Result<f64> {
    check_p(p)?;
    let beta = beta_k(d, field)?;
    let l = (p as f64).ln();
    Ok(l.sqrt() + l.ln() / (2.0 * l.sqrt()) + beta / l.sqrt())
}

/// Lower branch `W₋₁` of the Lambert function on `[−1/e, 0)`.
pub fn lambert_w_minus1(x: f64) -> Result<f64> {
    let branch = -1.0 / E;
    ensure(x.is_finite() && x < 0.0 && x >= branch - 1e-16, || {
        format!("lambert_w_minus1 needs x in [-1/e, 0), got {x}")
    })?;
    if x <= branch {
        return Ok(-1.0);
    }
    let mut w = if x < -0.3 {
        let q = -(2.0 * (E * x + 1.0)).sqrt();
        -1.0 + q - q * q / 3.0 + 11.0 / 72.0 * q * q * q
    } else {
        let l1 = (-x).ln();
        l1 - (-l1).ln()
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let fp = ew * (w + 1.0);
        if fp == 0.0 {
            break;
        }
        let step = f / (fp - (w + 2.0) * f / (2.0 * w + 2.0));
        let next = (w - step).min(-1.0);
        let done = (next - w).abs() <= 1e-16 * w.abs();
        w = next;
        if done {
            break;
        }
    }
    Ok(w)
}

/// Largest root of `x² − log(x²) + 1/x = c` on the increasing branch.
fn solve_dagger(c: f64) -> Result<f64> {
    let f = |x: f64| x * x - (x * x).ln() + 1.0 / x - c;
    let df = |x: f64| 2.0 * x - 2.0 / x - 1.0 / (x * x);
    // df is increasing on (0, ∞); its zero is the minimizer of f.
    let (mut a, mut b) = (0.5, 2.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if df(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let xmin = 0.5 * (a + b);
    let mut hi = 2.0 * c.sqrt().max(2.0);
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    bracketed_root(f, df, xmin, hi, "gamma_dagger")
}

/// The three comparison values `(γ₋, γ†, γ★)` that sandwich `γ_d^K(p)` for
/// large `p`; `γ★ = √(−W₋₁(−e^{−2β}/p))`.
pub fn gamma_envelopes(p: u64, d: u64, field: Field) -> Result<(f64, f64, f64)> {
    check_p(p)?;
    let beta = beta_k(d, field)?;
    let c = (p as f64).ln() + 2.0 * beta;
    let minus = c.sqrt();
    let dagger = solve_dagger(c)?;
    let star = (-lambert_w_minus1(-(-2.0 * beta).exp() / p as f64)?).sqrt();
    Ok((minus, dagger, star))
}

/// `log F(p,d)` (real) or `log L(p,d)` (complex), the Kac–Rice prefactor.
pub fn log_prefactor(p: u64, d: u64, field: Field) -> Result<f64> {
    check_p(p)?;
    check_d(d)?;
    let (pf, df) = (p as f64, d as f64);
    let n = pf * (df - 1.0);
    Ok(match field {
        Field::Real => {
            (n + 1.0) / 2.0 * (n / (2.0 * PI)).ln()
                + pf * (2f64.ln() + df / 2.0 * PI.ln() - ln_gamma(df / 2.0))
        }
        Field::Complex => {
            n * (n / PI).ln() + pf * 2f64.ln() + (df * pf + (1.0 - pf) / 2.0) * PI.ln()
                - ln_gamma(df)
                - (pf - 1.0) * ln_gamma((2.0 * df - 1.0) / 2.0)
        }
    })
}

/// Radius `2√((p−1)/p)` of the support of `μ_p`.
pub fn mu_p_radius(p: u64) -> f64 {
    let pf = p as f64;
    2.0 * ((pf - 1.0) / pf).sqrt()
}

/// Density of `μ_p(u)`, the semicircle law of radius `2√((p−1)/p)` centred at `−u`.
pub fn mu_p(p: u64, u: f64, x: f64) -> Result<f64> {
    check_p(p)?;
    let pf = p as f64;
    let r2 = 4.0 * (pf - 1.0) / pf;
    let y = x + u;
    Ok(pf / (pf - 1.0) * (r2 - y * y).max(0.0).sqrt() / (2.0 * PI))
}

/// Cumulative distribution function of `μ_p(u)`.
pub fn mu_p_cdf(p: u64, u: f64, x: f64) -> Result<f64> {
    check_p(p)?;
    Ok(semicircle_cdf(mu_p_radius(p), x + u))
}

/// CDF of the centred semicircle law of radius `r`.
pub(crate) fn semicircle_cdf(r: f64, x: f64) -> f64 {
    if x <= -r {
        0.0
    } else if x >= r {
        1.0
    } else {
        let t = x / r;
        0.5 + (t * (1.0 - t * t).sqrt() + t.asin()) / PI
    }
}

/// `∫_{−∞}^x F(t) dt` for the semicircle CDF `F` of radius `r`.
pub(crate) fn semicircle_cdf_integral(r: f64, x: f64) -> f64 {
    if x <= -r {
        0.0
    } else if x >= r {
        x
    } else {
        let s = (r * r - x * x).sqrt();
        x / 2.0 - s * s * s / (3.0 * PI * r * r) + (x * (x / r).asin() + s) / PI
    }
}

/// All constants for one `(p, d, field)` triple, with the residuals of their
/// defining equations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub p: u64,
    pub d: u64,
    pub field: Field,
    pub e0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub gamma_asymptotic_3term: f64,
    pub gamma_minus: f64,
    pub gamma_dagger: f64,
    pub gamma_star: f64,
    /// `None` for `p = 2`, where the implicit equation has no root in (0, 1).
    pub e_star: Option<f64>,
    pub q_c: Option<f64>,
    pub log_prefactor: f64,
    pub residuals: BTreeMap<String, f64>,
}

/// Computes every constant for `(p, d, field)`.
pub fn constants_report(p: u64, d: u64, field: Field) -> Result<ConstantsReport> {
    check_p(p)?;
    check_d(d)?;
    let e0 = solve_e0(p)?;
    let beta = beta_k(d, field)?;
    let gamma = solve_gamma(p, d, field)?;
    let (gamma_minus, gamma_dagger, gamma_star) = gamma_envelopes(p, d, field)?;
    let subag = if p >= 3 { Some(solve_subag(p)?) } else { None };

    let mut residuals = BTreeMap::new();
    residuals.insert("e0".to_string(), sigma_raw(p, e0));
    residuals.insert("gamma".to_string(), gamma_residual(p, beta, gamma));
    let c = (p as f64).ln() + 2.0 * beta;
    residuals.insert(
        "gamma_dagger".to_string(),
        gamma_dagger * gamma_dagger - (gamma_dagger * gamma_dagger).ln() + 1.0 / gamma_dagger - c,
    );
    residuals.insert(
        "gamma_star".to_string(),
        gamma_star * gamma_star - (gamma_star * gamma_star).ln() - c,
    );
    if let Some((q, _)) = subag {
        residuals.insert("q_c".to_string(), subag_equation_residual(p, q));
    }
    for (name, r) in &residuals {
        if !r.is_finite() {
            return Err(Error::Numerical(format!("residual of {name} is {r}")));
        }
    }

    Ok(ConstantsReport {
        p,
        d,
        field,
        e0,
        alpha: (p as f64).sqrt() * e0,
        beta,
        gamma,
        gamma_asymptotic_3term: gamma_asymptotic_3term(p, d, field)?,
        gamma_minus,
        gamma_dagger,
        gamma_star,
        e_star: subag.map(|s| s.1),
        q_c: subag.map(|s| s.0),
        log_prefactor: log_prefactor(p, d, field)?,
        residuals,
    })
}

/// Supremum of `Σ_p` over a union of closed intervals. `Σ_p` is even and
/// concave, so on each interval the supremum sits at the point closest to 0.
pub(crate) fn sup_sigma_over(p: u64, intervals: &[(f64, f64)]) -> Result<f64> {
    check_p(p)?;
    if intervals.is_empty() {
        return Err(invalid("empty interval set"));
    }
    let mut best = f64::NEG_INFINITY;
    for &(a, b) in intervals {
        let u = 0f64.clamp(a, b);
        let s = if u.is_finite() {
            sigma_raw(p, u)
        } else {
            f64::NEG_INFINITY
        };
        best = best.max(s);
    }
    Ok(best)
}
