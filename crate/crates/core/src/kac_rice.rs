//! Kac–Rice upper bounds on the expected number of critical points of the
//! random multilinear form on products of spheres.
//!
//! The real bound is
//! `F(p,d) ∫_D e^{−N u²/2} E|det(W − u)| du` with `W ~ BHGOE(d−1, p)` and
//! `N = p(d−1)`; the complex bound is
//! `L(p,d) ∫_D e^{−p(d−1) u²} E|det(W − u)| du` with `W ~ tBHGOE(d−1, p)`.
//!
//! The expected absolute determinant is estimated by Monte Carlo with common
//! random numbers: one set of matrices is diagonalized once and reused for
//! every grid point, so `log|det(W − u)| = Σ log|λ_i − u|` costs `O(n)` per
//! point. The integral estimator is the average of independent per-sample
//! integrals, and its standard error is computed from their spread.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::constants::{log_prefactor, sup_sigma_over};
use crate::error::{ensure, invalid, Error, Result};
use crate::field::Field;
use crate::rmt::{log_abs_det, sample_bhgoe_with, sample_tbhgoe_with, SpectrumSummary, symmetric_spectrum};
use crate::stream::Stream;
use crate::tensor::{Scalar, Tensor};

/// Disjoint closed intervals, sorted, possibly unbounded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        ensure(!intervals.is_empty(), || "interval set is empty".into())?;
        for &(a, b) in &intervals {
            ensure(!a.is_nan() && !b.is_nan() && a <= b, || format!("bad interval [{a}, {b}]"))?;
            ensure(a < f64::INFINITY && b > f64::NEG_INFINITY, || format!("empty interval [{a}, {b}]"))?;
        }
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        for w in intervals.windows(2) {
            ensure(w[0].1 < w[1].0, || format!("intervals {:?} and {:?} overlap", w[0], w[1]))?;
        }
        Ok(IntervalSet { intervals })
    }

    pub fn single(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![(a, b)])
    }

    pub fn real_line() -> Self {
        IntervalSet { intervals: vec![(f64::NEG_INFINITY, f64::INFINITY)] }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Parses `a:b`, with `inf`/`-inf` for unbounded ends; several intervals
    /// may be joined with commas.
    pub fn parse(s: &str) -> Result<Self> {
        let mut v = Vec::new();
        for part in s.split(',') {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| invalid(format!("interval `{part}` is not of the form a:b")))?;
            let num = |t: &str| -> Result<f64> {
                t.trim().parse::<f64>().map_err(|_| invalid(format!("bad interval endpoint `{t}`")))
            };
            v.push((num(a)?, num(b)?));
        }
        Self::new(v)
    }

    fn is_bounded(&self) -> bool {
        self.intervals.iter().all(|(a, b)| a.is_finite() && b.is_finite())
    }
}

impl std::fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.intervals.iter().map(|(a, b)| format!("{a}:{b}")).collect();
        f.write_str(&parts.join(","))
    }
}

fn check_pd(p: usize, d: usize) -> Result<()> {
    ensure(p >= 2 && d >= 2, || format!("need p, d >= 2, got p={p}, d={d}"))
}

/// Size `N` of the chart and of the Hessian: `p(d−1)` or `2p(d−1)+1`.
pub fn landscape_dim(p: usize, d: usize, field: Field) -> usize {
    match field {
        Field::Real => p * (d - 1),
        Field::Complex => 2 * p * (d - 1) + 1,
    }
}

/// Coefficient `c` of the Gaussian weight `e^{−c u²}`.
fn weight_coefficient(p: usize, d: usize, field: Field) -> f64 {
    let n = (p * (d - 1)) as f64;
    match field {
        Field::Real => n / 2.0,
        Field::Complex => n,
    }
}

/// Normalization of the per-coordinate rate: `p(d−1)` or `2p(d−1)`.
pub fn rate_normalizer(p: usize, d: usize, field: Field) -> f64 {
    let n = (p * (d - 1)) as f64;
    match field {
        Field::Real => n,
        Field::Complex => 2.0 * n,
    }
}

/// Spectrum of the conditional Hessian law used by the bound, drawn from
/// `(seed, "kr", [sample])`.
fn kr_spectrum(p: usize, d: usize, field: Field, seed: u64, sample: u64) -> Result<SpectrumSummary> {
    let mut s = Stream::new(seed, "kr", &[sample]);
    let m = match field {
        Field::Real => sample_bhgoe_with(d - 1, p, 1.0 / (p * (d - 1)) as f64, &mut s)?,
        Field::Complex => sample_tbhgoe_with(d - 1, p, &mut s)?,
    };
    symmetric_spectrum(&m.data)
}

/// Shared Monte Carlo sample of Hessian spectra.
#[derive(Debug, Clone)]
pub struct DetSample {
    pub p: usize,
    pub d: usize,
    pub field: Field,
    pub seed: u64,
    pub spectra: Vec<SpectrumSummary>,
}

impl DetSample {
    /// Draws `n_samples` spectra; sample `s` uses the stream `(seed, "kr", [s])`.
    pub fn draw(p: usize, d: usize, field: Field, n_samples: usize, seed: u64) -> Result<Self> {
        check_pd(p, d)?;
        ensure(n_samples >= 2, || format!("need at least 2 samples, got {n_samples}"))?;
        let spectra = (0..n_samples as u64)
            .into_par_iter()
            .map(|s| kr_spectrum(p, d, field, seed, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(DetSample { p, d, field, seed, spectra })
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    /// `(log E|det(W − u)|, stderr)` for this sample.
    pub fn log_moment(&self, u: f64) -> Result<(f64, f64)> {
        let logs: Vec<f64> = self.spectra.iter().map(|s| log_abs_det(s, u)).collect();
        log_mean_exp(&logs)
    }
}

/// `log(mean(exp(x_s)))` with the delta-method standard error of the log.
fn log_mean_exp(logs: &[f64]) -> Result<(f64, f64)> {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::Numerical("every sample has a singular shift".into()));
    }
    let n = logs.len() as f64;
    let ys: Vec<f64> = logs.iter().map(|&l| (l - m).exp()).collect();
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((m + mean.ln(), (var / n).sqrt() / mean))
}

/// Monte Carlo estimate of `log E|det(W − u)|` with `W ~ BHGOE(d−1, p)` (real)
/// or `tBHGOE(d−1, p)` (complex), and the standard error of that log.
pub fn det_moment_mc(p: usize, d: usize, field: Field, u: f64, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    ensure(u.is_finite(), || format!("u must be finite, got {u}"))?;
    DetSample::draw(p, d, field, n_samples, seed)?.log_moment(u)
}

/// Monte Carlo evaluation of a Kac–Rice bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KacRiceEstimate {
    pub p: usize,
    pub d: usize,
    pub field: Field,
    pub interval_set: IntervalSet,
    /// Log of the estimated upper bound on the expected number of critical
    /// points with value in `D`.
    pub log_bound: f64,
    pub mc_stderr_log: f64,
    /// Total number of Simpson nodes after refinement.
    pub grid_points: usize,
    pub samples_per_point: usize,
    /// `sup_{u ∈ D} Σ_p(u)`.
    pub laplace_prediction: f64,
    pub log_prefactor: f64,
    /// `log_bound − log_prefactor`.
    pub log_integral: f64,
    /// Truncation point for unbounded intervals.
    pub u_max: f64,
    /// Upper estimate of the log of the mass cut off by truncation, when any.
    pub log_truncation_error: Option<f64>,
    pub refinements: usize,
    pub warnings: Vec<String>,
}

impl KacRiceEstimate {
    /// `log_bound` divided by `p(d−1)` (real) or `2p(d−1)` (complex).
    pub fn rate(&self) -> f64 {
        self.log_bound / rate_normalizer(self.p, self.d, self.field)
    }
}

/// Options for [`kr_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrOptions {
    /// Simpson nodes per unit length before refinement.
    pub grid_per_unit: usize,
    pub samples: usize,
    pub seed: u64,
    /// Maximum number of grid doublings.
    pub max_refinements: usize,
}

impl Default for KrOptions {
    fn default() -> Self {
        KrOptions { grid_per_unit: 33, samples: 1000, seed: 0, max_refinements: 4 }
    }
}

/// Truncation radius for unbounded intervals.
pub fn truncation_radius(p: usize, d: usize, field: Field) -> Result<f64> {
    check_pd(p, d)?;
    let n_eff = 2.0 * weight_coefficient(p, d, field);
    let lp = log_prefactor(p as u64, d as u64, field)?;
    let pf = p as f64;
    Ok(2.0 + 2.0 * ((pf - 1.0) / pf).sqrt() + (2.0 * lp.max(0.0) / n_eff + 40.0 / n_eff).sqrt())
}

struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

fn simpson_grid(intervals: &[(f64, f64)], per_unit: usize, level: usize) -> Grid {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for &(a, b) in intervals {
        let len = b - a;
        if len <= 0.0 {
            continue;
        }
        let mut m = ((len * per_unit as f64).ceil() as usize).max(8);
        m += m % 2;
        m <<= level;
        let h = len / m as f64;
        for k in 0..=m {
            let w = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            nodes.push(a + k as f64 * h);
            weights.push(w * h / 3.0);
        }
    }
    Grid { nodes, weights }
}

/// `(log ∫, stderr of the log)` of `∫ e^{−c u²} E|det(W − u)| du` over the grid,
/// as the mean over samples of the per-sample integrals.
fn integrate(sample: &DetSample, grid: &Grid, c: f64) -> Result<(f64, f64)> {
    if grid.nodes.is_empty() {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    let logw: Vec<f64> = grid.nodes.iter().zip(&grid.weights).map(|(&u, &w)| w.ln() - c * u * u).collect();
    let per_sample: Vec<Vec<f64>> = sample
        .spectra
        .par_iter()
        .map(|s| grid.nodes.iter().zip(&logw).map(|(&u, &lw)| log_abs_det(s, u) + lw).collect())
        .collect();
    let shift = per_sample.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(Error::Numerical("integrand vanishes on every sample".into()));
    }
    let ys: Vec<f64> = per_sample.iter().map(|row| row.iter().map(|&l| (l - shift).exp()).sum()).collect();
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((shift + mean.ln(), (var / n).sqrt() / mean))
}

/// Kac–Rice upper bound over `domain`, using a fresh Monte Carlo sample.
pub fn kr_bound(p: usize, d: usize, field: Field, domain: &IntervalSet, opts: &KrOptions) -> Result<KacRiceEstimate> {
    let sample = DetSample::draw(p, d, field, opts.samples, opts.seed)?;
    kr_bound_with(&sample, domain, opts)
}

/// Kac–Rice upper bound over `domain` using an existing sample, so that
/// several domains can share random numbers.
pub fn kr_bound_with(sample: &DetSample, domain: &IntervalSet, opts: &KrOptions) -> Result<KacRiceEstimate> {
    let (p, d, field) = (sample.p, sample.d, sample.field);
    ensure(opts.grid_per_unit >= 1, || "grid must be at least 1 point per unit".into())?;
    let u_max = truncation_radius(p, d, field)?;
    let c = weight_coefficient(p, d, field);
    let lp = log_prefactor(p as u64, d as u64, field)?;
    let truncated: Vec<(f64, f64)> = domain
        .intervals()
        .iter()
        .map(|&(a, b)| (a.max(-u_max), b.min(u_max)))
        .filter(|(a, b)| a <= b)
        .collect();

    let mut warnings = Vec::new();
    let mut level = 0;
    let mut grid = simpson_grid(&truncated, opts.grid_per_unit, level);
    let (mut log_int, mut se) = integrate(sample, &grid, c)?;
    loop {
        if level >= opts.max_refinements {
            warnings.push(format!("grid refinement did not settle after {level} doublings"));
            break;
        }
        let finer = simpson_grid(&truncated, opts.grid_per_unit, level + 1);
        let (li, s) = integrate(sample, &finer, c)?;
        let change = (li - log_int).abs();
        level += 1;
        grid = finer;
        log_int = li;
        se = s;
        if change.is_nan() || change <= 3.0 * se {
            break;
        }
    }

    let log_truncation_error = if domain.is_bounded() {
        None
    } else {
        // |det(W − u)| ≤ (|u| + ‖W‖)^n, and e^{−c u²}(u + R)^n is log-concave,
        // so the mass beyond u_max is at most the integrand there over the
        // magnitude of its log-derivative (R is the largest sampled norm).
        let r = sample.spectra.iter().map(|s| s.op_norm).fold(0.0, f64::max);
        let n = sample.spectra[0].len() as f64;
        let slope = 2.0 * c * u_max - n / (u_max + r);
        if slope > 0.0 {
            Some(n * (u_max + r).ln() - c * u_max * u_max - slope.ln() + 2f64.ln())
        } else {
            warnings.push("truncation radius too small for a tail estimate".into());
            Some(f64::INFINITY)
        }
    };

    let log_bound = lp + log_int;
    Ok(KacRiceEstimate {
        p,
        d,
        field,
        interval_set: domain.clone(),
        log_bound,
        mc_stderr_log: se,
        grid_points: grid.nodes.len(),
        samples_per_point: sample.len(),
        laplace_prediction: laplace_rate(p, domain)?,
        log_prefactor: lp,
        log_integral: log_int,
        u_max,
        log_truncation_error,
        refinements: level,
        warnings,
    })
}

/// `sup_{u ∈ D} Σ_p(u)`.
pub fn laplace_rate(p: usize, domain: &IntervalSet) -> Result<f64> {
    sup_sigma_over(p as u64, domain.intervals())
}

/// Value, gradient and Hessian of the normalized field at the north pole in
/// the standard chart.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapePoint {
    pub field: Field,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

impl LandscapePoint {
    pub fn dim(&self) -> usize {
        self.gradient.len()
    }
}

/// A chart coordinate: which factor it moves, which component, and the
/// phase (`1` for a real part, `i` for an imaginary part) of the tangent
/// direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartCoord {
    pub slot: usize,
    pub index: usize,
    pub imaginary: bool,
}

impl ChartCoord {
    fn phase(self) -> Complex64 {
        if self.imaginary {
            Complex64::new(0.0, 1.0)
        } else {
            Complex64::new(1.0, 0.0)
        }
    }
}

/// Chart coordinates in Hessian order.
///
/// Real: `(slot, index)` for every slot and `index ≥ 1`, slot-major.
/// Complex: all real parts in that order, then all imaginary parts, then the
/// imaginary part of the first component of factor 1.
pub fn chart_coords(p: usize, d: usize, field: Field) -> Vec<ChartCoord> {
    let mut out = Vec::with_capacity(landscape_dim(p, d, field));
    for slot in 0..p {
        for index in 1..d {
            out.push(ChartCoord { slot, index, imaginary: false });
        }
    }
    if field == Field::Complex {
        for slot in 0..p {
            for index in 1..d {
                out.push(ChartCoord { slot, index, imaginary: true });
            }
        }
        out.push(ChartCoord { slot: 0, index: 0, imaginary: true });
    }
    out
}

/// Exact value, gradient and Hessian at the north pole `(e₁, …, e₁)` of
/// `Re T(x)/√(p(d−1))` pulled back through the chart that drops the first
/// component of each factor (and its imaginary part for factors 2..p).
pub fn landscape_at_north_pole<S: Scalar>(t: &Tensor<S>) -> LandscapePoint {
    let (p, d, field) = (t.order(), t.dim(), S::FIELD);
    let coords = chart_coords(p, d, field);
    let n = coords.len();
    let c = ((p * (d - 1)) as f64).sqrt();
    let data = t.data();
    let stride = |slot: usize| d.pow((p - 1 - slot) as u32);
    let value = data[0].re() / c;
    let gradient: Vec<f64> = coords
        .iter()
        .map(|q| (q.phase() * data[q.index * stride(q.slot)].to_complex()).re / c)
        .collect();
    let mut hessian = DMatrix::zeros(n, n);
    for (r, qr) in coords.iter().enumerate() {
        for (s, qs) in coords.iter().enumerate().skip(r) {
            let h = if qr.slot != qs.slot {
                let e = data[qr.index * stride(qr.slot) + qs.index * stride(qs.slot)].to_complex();
                (qr.phase() * qs.phase() * e).re / c
            } else if r == s {
                -value
            } else {
                0.0
            };
            hessian[(r, s)] = h;
            hessian[(s, r)] = h;
        }
    }
    LandscapePoint { field, value, gradient, hessian }
}

/// Covariance of two landscape variables (value, gradient entry or Hessian
/// entry) under the closed-form covariance structure of the north-pole chart.
///
/// In the complex case the closed form has the gradient uncorrelated with the
/// Hessian. In this chart, though, the Hessian row of the last coordinate
/// against a real coordinate of factor `k ≥ 2` is the same random variable as
/// the matching imaginary gradient entry, so an audit reports those pairs.
pub fn predicted_covariance(p: usize, d: usize, field: Field, a: &AuditVar, b: &AuditVar) -> f64 {
    let coords = chart_coords(p, d, field);
    let n = match field {
        Field::Real => (p * (d - 1)) as f64,
        // normalized by 1/(N − 1) = 1/(2p(d−1))
        Field::Complex => (2 * p * (d - 1)) as f64,
    };
    let delta = |x: bool| if x { 1.0 } else { 0.0 };
    use AuditVar::*;
    match (*a, *b) {
        (Value, Value) => 1.0 / n,
        (Value, Grad(_)) | (Grad(_), Value) => 0.0,
        (Grad(i), Grad(j)) => delta(i == j) / n,
        (Value, Hess(i, j)) | (Hess(i, j), Value) => -delta(i == j) / n,
        (Grad(_), Hess(..)) | (Hess(..), Grad(_)) => 0.0,
        (Hess(r, s), Hess(u, v)) => {
            let (x, y, z, w) = (coords[r], coords[s], coords[u], coords[v]);
            match field {
                Field::Real => {
                    let (a, b, c, dd) = (x.slot, y.slot, z.slot, w.slot);
                    let (i, j, k, l) = (x.index, y.index, z.index, w.index);
                    let eq = |m: usize, n: usize| delta(m == n);
                    (eq(a, b) * eq(c, dd) * eq(i, j) * eq(k, l)
                        + eq(a, c) * eq(b, dd) * eq(i, k) * eq(j, l)
                        + eq(a, dd) * eq(b, c) * eq(i, l) * eq(j, k)
                        - delta(a == b && b == c && c == dd) * (eq(i, k) * eq(j, l) + eq(i, l) * eq(j, k)))
                        / n
                }
                Field::Complex => {
                    let same = |m: ChartCoord, n: ChartCoord| m.index == n.index && m.imaginary == n.imaginary;
                    let (k0, k1, k2, k3) = (x.slot, y.slot, z.slot, w.slot);
                    let (q0, q1, q2, q3) = (x.imaginary, y.imaginary, z.imaginary, w.imaginary);
                    if k0 == k1 && k2 == k3 {
                        delta(same(x, y)) * delta(same(z, w)) / n
                    } else if k0 == k2 && k1 == k3 {
                        delta(x.index == z.index) * delta(y.index == w.index)
                            * (delta(q0 == q2) * delta(q1 == q3) - delta(q0 == q1 && q1 != q2 && q2 == q3)
                                + delta(q0 == q3 && q3 != q1 && q1 == q2))
                            / n
                    } else if k0 == k3 && k1 == k2 {
                        delta(x.index == w.index) * delta(y.index == z.index)
                            * (delta(q0 == q3) * delta(q1 == q2) - delta(q0 == q1 && q1 != q2 && q2 == q3)
                                + delta(q0 == q2 && q2 != q1 && q1 == q3))
                            / n
                    } else {
                        0.0
                    }
                }
            }
        }
    }
}

/// A scalar variable of the landscape: the value, a gradient entry, or an
/// upper-triangular Hessian entry `(r, s)` with `r ≤ s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AuditVar {
    Value,
    Grad(usize),
    Hess(usize, usize),
}

impl AuditVar {
    pub fn label(&self) -> String {
        match self {
            AuditVar::Value => "f".into(),
            AuditVar::Grad(i) => format!("g{i}"),
            AuditVar::Hess(i, j) => format!("H{i},{j}"),
        }
    }
}

fn audit_vars(n: usize) -> Vec<AuditVar> {
    let mut v = vec![AuditVar::Value];
    v.extend((0..n).map(AuditVar::Grad));
    for r in 0..n {
        for s in r..n {
            v.push(AuditVar::Hess(r, s));
        }
    }
    v
}

fn flatten(lp: &LandscapePoint) -> Vec<f64> {
    let n = lp.dim();
    let mut v = Vec::with_capacity(1 + n + n * (n + 1) / 2);
    v.push(lp.value);
    v.extend_from_slice(&lp.gradient);
    for r in 0..n {
        for s in r..n {
            v.push(lp.hessian[(r, s)]);
        }
    }
    v
}

/// One compared second moment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceEntry {
    pub a: String,
    pub b: String,
    pub empirical: f64,
    pub predicted: f64,
    pub stderr: f64,
    /// `(empirical − predicted)/stderr`; zero for pairs that are exactly zero
    /// on every sample and predicted zero.
    pub z: f64,
}

/// Result of [`covariance_audit`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceAudit {
    pub p: usize,
    pub d: usize,
    pub field: Field,
    pub n_samples: usize,
    /// Number of compared pairs (including pairs that vanish identically).
    pub entries: usize,
    /// Pairs with nonzero sampling variability.
    pub stochastic_entries: usize,
    pub max_abs_dev: f64,
    pub max_abs_z: f64,
    /// Entries outside `3·stderr`, and the count expected by chance if every
    /// prediction were exact.
    pub exceed_3sigma: usize,
    pub expected_exceed_3sigma: f64,
    /// Family-wise envelope: the per-entry threshold whose joint coverage over
    /// all stochastic pairs equals that of a single `3σ` test.
    pub z_envelope: f64,
    /// Deterministic pairs whose empirical and predicted values differ.
    pub deterministic_mismatches: usize,
    /// Mean over diagonal Hessian entries of the regression slope on the value.
    pub slope: f64,
    pub slope_stderr: f64,
    /// Largest deviations, worst first.
    pub worst: Vec<CovarianceEntry>,
    /// Every compared pair, in variable order.
    #[serde(skip)]
    pub all: Vec<CovarianceEntry>,
}

impl CovarianceAudit {
    /// True when every entry is inside the family-wise envelope and no
    /// deterministic pair disagrees.
    pub fn covariances_match(&self) -> bool {
        self.max_abs_z <= self.z_envelope && self.deterministic_mismatches == 0
    }
}

fn sample_tensor_from<S: Scalar>(p: usize, d: usize, stream: &mut Stream) -> Result<Tensor<S>> {
    let n = d.pow(p as u32);
    Tensor::from_vec(p, d, (0..n).map(|_| S::gaussian(stream)).collect())
}

fn audit_point(p: usize, d: usize, field: Field, seed: u64, s: u64) -> Result<Vec<f64>> {
    let mut st = Stream::new(seed, "audit", &[s]);
    Ok(match field {
        Field::Real => flatten(&landscape_at_north_pole(&sample_tensor_from::<f64>(p, d, &mut st)?)),
        Field::Complex => flatten(&landscape_at_north_pole(&sample_tensor_from::<Complex64>(p, d, &mut st)?)),
    })
}

const AUDIT_CHUNK: usize = 256;

/// Compares empirical second moments of (value, gradient, Hessian) at the
/// north pole over `n_samples` independent tensors with the closed-form
/// covariances, and regresses the diagonal Hessian entries on the value.
pub fn covariance_audit(p: usize, d: usize, field: Field, n_samples: usize, seed: u64) -> Result<CovarianceAudit> {
    check_pd(p, d)?;
    ensure(n_samples >= 2, || "need at least 2 samples".into())?;
    let n = landscape_dim(p, d, field);
    let vars = audit_vars(n);
    let m = vars.len();
    let tri = m * (m + 1) / 2;

    // Fixed chunking keeps the floating-point summation order independent of
    // the number of threads.
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..n_samples.div_ceil(AUDIT_CHUNK))
        .into_par_iter()
        .map(|ci| {
            let mut s1 = vec![0.0; tri];
            let mut s2 = vec![0.0; tri];
            let end = ((ci + 1) * AUDIT_CHUNK).min(n_samples);
            for s in ci * AUDIT_CHUNK..end {
                let x = audit_point(p, d, field, seed, s as u64)?;
                let mut k = 0;
                for i in 0..m {
                    let xi = x[i];
                    for &xj in &x[i..] {
                        let v = xi * xj;
                        s1[k] += v;
                        s2[k] += v * v;
                        k += 1;
                    }
                }
            }
            Ok((s1, s2))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s1 = vec![0.0; tri];
    let mut s2 = vec![0.0; tri];
    for (a, b) in chunks {
        for k in 0..tri {
            s1[k] += a[k];
            s2[k] += b[k];
        }
    }

    let nf = n_samples as f64;
    let mut all = Vec::with_capacity(tri);
    let mut stochastic = 0;
    let mut deterministic_mismatches = 0;
    let mut k = 0;
    for i in 0..m {
        for j in i..m {
            let mean = s1[k] / nf;
            let var = (s2[k] / nf - mean * mean).max(0.0);
            let se = (var / (nf - 1.0)).sqrt();
            let pred = predicted_covariance(p, d, field, &vars[i], &vars[j]);
            let z = if se > 0.0 {
                stochastic += 1;
                (mean - pred) / se
            } else {
                if (mean - pred).abs() > 1e-12 {
                    deterministic_mismatches += 1;
                }
                0.0
            };
            all.push(CovarianceEntry {
                a: vars[i].label(),
                b: vars[j].label(),
                empirical: mean,
                predicted: pred,
                stderr: se,
                z,
            });
            k += 1;
        }
    }

    let max_abs_dev = all.iter().map(|e| (e.empirical - e.predicted).abs()).fold(0.0, f64::max);
    let max_abs_z = all.iter().map(|e| e.z.abs()).fold(0.0, f64::max);
    let exceed_3sigma = all.iter().filter(|e| e.z.abs() > 3.0).count();
    let normal = Normal::standard();
    let single = 2.0 * (1.0 - normal.cdf(3.0));
    let expected_exceed_3sigma = single * stochastic as f64;
    let per_test = -(-single).ln_1p() / stochastic.max(1) as f64;
    let per_test = -(-per_test).exp_m1();
    let z_envelope = normal.inverse_cdf(1.0 - per_test / 2.0);

    let mut worst = all.clone();
    worst.sort_by(|x, y| y.z.abs().total_cmp(&x.z.abs()).then_with(|| x.a.cmp(&y.a)));
    worst.truncate(10);

    let (slope, slope_stderr) = diagonal_slope(p, d, field, n_samples.min(20_000), seed)?;

    Ok(CovarianceAudit {
        p,
        d,
        field,
        n_samples,
        entries: tri,
        stochastic_entries: stochastic,
        max_abs_dev,
        max_abs_z,
        exceed_3sigma,
        expected_exceed_3sigma,
        z_envelope,
        deterministic_mismatches,
        slope,
        slope_stderr,
        worst,
        all,
    })
}

/// Least-squares slope of each diagonal Hessian entry on the value, averaged
/// over the diagonal, with the largest per-entry standard error.
fn diagonal_slope(p: usize, d: usize, field: Field, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    let n = landscape_dim(p, d, field);
    let rows: Vec<(f64, Vec<f64>)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let x = audit_point(p, d, field, seed, s)?;
            let diag: Vec<f64> = (0..n)
                .map(|r| {
                    // position of Hess(r, r) in the flattened layout
                    let before: usize = (0..r).map(|q| n - q).sum();
                    x[1 + n + before]
                })
                .collect();
            Ok((x[0], diag))
        })
        .collect::<Result<Vec<_>>>()?;
    let nf = rows.len() as f64;
    let vbar = rows.iter().map(|r| r.0).sum::<f64>() / nf;
    let sxx: f64 = rows.iter().map(|r| (r.0 - vbar).powi(2)).sum();
    let mut slopes = Vec::with_capacity(n);
    let mut max_se: f64 = 0.0;
    for k in 0..n {
        let hbar = rows.iter().map(|r| r.1[k]).sum::<f64>() / nf;
        let sxy: f64 = rows.iter().map(|r| (r.0 - vbar) * (r.1[k] - hbar)).sum();
        let b = sxy / sxx;
        let a = hbar - b * vbar;
        let rss: f64 = rows.iter().map(|r| (r.1[k] - a - b * r.0).powi(2)).sum();
        let se = (rss / (nf - 2.0) / sxx).sqrt();
        slopes.push(b);
        max_se = max_se.max(se);
    }
    Ok((slopes.iter().sum::<f64>() / n as f64, max_se))
}

/// Expected number of critical points of `x ↦ xᵀ T y` on `𝕊^{d−1} × 𝕊^{d−1}`
/// for Gaussian `T`: each of the `d` singular pairs gives four sign choices.
pub fn exact_critical_count_p2(d: usize) -> f64 {
    4.0 * d as f64
}
