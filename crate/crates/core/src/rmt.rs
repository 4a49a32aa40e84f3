//! Block-hollow Gaussian ensembles and their spectra.
//!
//! `BHGOE(d, p, σ²)` is a `pd × pd` real symmetric Gaussian matrix whose `p`
//! diagonal `d × d` blocks are zero. `tBHGOE(d, p)` is the `(2dp+1)`-sized
//! matrix
//!
//! ```text
//! [ B   C   θᵀ ]
//! [ C  −B      ]
//! [ θ        0 ]
//! ```
//!
//! with `B`, `C` independent `BHGOE(d, p, 1/(2dp))` and `θ` Gaussian with the
//! first `d` entries of each half set to zero. Block size is always passed
//! explicitly; Kac–Rice code asks for block size `d − 1`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{mu_p_radius, semicircle_cdf, semicircle_cdf_integral};
use crate::error::{ensure, Error, Result};
use crate::stream::Stream;

/// Largest matrix side accepted by the samplers.
pub const DEFAULT_MATRIX_BUDGET: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Bhgoe,
    Tbhgoe,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::Bhgoe => "bhgoe",
            Model::Tbhgoe => "tbhgoe",
        }
    }
}

/// A sampled ensemble matrix with its structural parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMatrix {
    pub model: Model,
    /// Block size.
    pub d: usize,
    /// Number of blocks.
    pub p: usize,
    /// Entry variance of the off-diagonal blocks (of `B` and `C` for tBHGOE).
    pub sigma2: f64,
    /// Matrix side: `pd` or `2dp + 1`.
    pub n: usize,
    pub data: DMatrix<f64>,
    pub seed: Option<u64>,
}

fn check_shape(d: usize, p: usize, n: usize) -> Result<()> {
    ensure(d >= 1 && p >= 2, || format!("need d >= 1 and p >= 2, got d={d}, p={p}"))?;
    if n > DEFAULT_MATRIX_BUDGET {
        return Err(Error::Budget(format!("matrix side {n} exceeds {DEFAULT_MATRIX_BUDGET}")));
    }
    Ok(())
}

fn fill_bhgoe(m: &mut DMatrix<f64>, offset: usize, d: usize, p: usize, sd: f64, sign: f64, stream: &mut Stream) {
    let n = d * p;
    for i in 0..n {
        for j in (i + 1)..n {
            if i / d != j / d {
                let v = sd * stream.normal();
                m[(offset + i, offset + j)] = sign * v;
                m[(offset + j, offset + i)] = sign * v;
            }
        }
    }
}

/// `BHGOE(d, p, σ²)` drawn from `stream`. Entries of the strict upper triangle
/// outside the diagonal blocks are drawn in row-major order.
pub fn sample_bhgoe_with(d: usize, p: usize, sigma2: f64, stream: &mut Stream) -> Result<EnsembleMatrix> {
    let n = d * p;
    check_shape(d, p, n)?;
    ensure(sigma2 > 0.0 && sigma2.is_finite(), || format!("sigma2 must be positive, got {sigma2}"))?;
    let mut data = DMatrix::zeros(n, n);
    fill_bhgoe(&mut data, 0, d, p, sigma2.sqrt(), 1.0, stream);
    Ok(EnsembleMatrix { model: Model::Bhgoe, d, p, sigma2, n, data, seed: None })
}

/// `BHGOE(d, p, σ²)` from the stream `(seed, "rmt", [])`.
pub fn sample_bhgoe(d: usize, p: usize, sigma2: f64, seed: u64) -> Result<EnsembleMatrix> {
    sample_bhgoe_trial(d, p, sigma2, seed, &[])
}

/// `BHGOE(d, p, σ²)` from the stream `(seed, "rmt", indices)`.
pub fn sample_bhgoe_trial(d: usize, p: usize, sigma2: f64, seed: u64, indices: &[u64]) -> Result<EnsembleMatrix> {
    let mut s = Stream::new(seed, "rmt", indices);
    let mut m = sample_bhgoe_with(d, p, sigma2, &mut s)?;
    m.seed = Some(seed);
    Ok(m)
}

/// `tBHGOE(d, p)` drawn from `stream`: `B`, then `C`, then `θ`.
pub fn sample_tbhgoe_with(d: usize, p: usize, stream: &mut Stream) -> Result<EnsembleMatrix> {
    let half = d * p;
    let n = 2 * half + 1;
    check_shape(d, p, n)?;
    let sigma2 = 1.0 / (2.0 * half as f64);
    let sd = sigma2.sqrt();
    let mut b = DMatrix::zeros(half, half);
    fill_bhgoe(&mut b, 0, d, p, sd, 1.0, stream);
    let mut c = DMatrix::zeros(half, half);
    fill_bhgoe(&mut c, 0, d, p, sd, 1.0, stream);
    let mut data = DMatrix::zeros(n, n);
    for i in 0..half {
        for j in 0..half {
            data[(i, j)] = b[(i, j)];
            data[(half + i, half + j)] = -b[(i, j)];
            data[(i, half + j)] = c[(i, j)];
            data[(half + i, j)] = c[(i, j)];
        }
    }
    for a in 0..2 * half {
        if a < d || (a >= half && a < half + d) {
            continue;
        }
        let v = sd * stream.normal();
        data[(n - 1, a)] = v;
        data[(a, n - 1)] = v;
    }
    Ok(EnsembleMatrix { model: Model::Tbhgoe, d, p, sigma2, n, data, seed: None })
}

/// `tBHGOE(d, p)` from the stream `(seed, "rmt", [])`.
pub fn sample_tbhgoe(d: usize, p: usize, seed: u64) -> Result<EnsembleMatrix> {
    sample_tbhgoe_trial(d, p, seed, &[])
}

/// `tBHGOE(d, p)` from the stream `(seed, "rmt", indices)`.
pub fn sample_tbhgoe_trial(d: usize, p: usize, seed: u64, indices: &[u64]) -> Result<EnsembleMatrix> {
    let mut s = Stream::new(seed, "rmt", indices);
    let mut m = sample_tbhgoe_with(d, p, &mut s)?;
    m.seed = Some(seed);
    Ok(m)
}

/// Sorted spectrum of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSummary {
    /// Eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
    pub op_norm: f64,
}

impl SpectrumSummary {
    /// Builds a summary from unsorted eigenvalues.
    pub fn from_eigenvalues(mut ev: Vec<f64>) -> Result<Self> {
        ensure(!ev.is_empty(), || "empty spectrum".into())?;
        if ev.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite eigenvalue".into()));
        }
        ev.sort_by(f64::total_cmp);
        let op_norm = ev[0].abs().max(ev[ev.len() - 1].abs());
        Ok(SpectrumSummary { eigenvalues: ev, op_norm })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.len() - 1]
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Empirical spectral CDF: fraction of eigenvalues `≤ x`.
    pub fn esd_cdf(&self, x: f64) -> f64 {
        self.eigenvalues.partition_point(|&l| l <= x) as f64 / self.len() as f64
    }
}

/// Eigenvalues of a symmetric matrix given as a dense `DMatrix`.
pub fn symmetric_spectrum(m: &DMatrix<f64>) -> Result<SpectrumSummary> {
    ensure(m.is_square(), || "matrix is not square".into())?;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    SpectrumSummary::from_eigenvalues(m.symmetric_eigenvalues().iter().copied().collect())
}

/// Full spectrum of an ensemble matrix.
pub fn eigenvalues(m: &EnsembleMatrix) -> Result<SpectrumSummary> {
    symmetric_spectrum(&m.data)
}

fn semicircle_quantile(r: f64, c: f64) -> f64 {
    let (mut lo, mut hi) = (-r, r);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if semicircle_cdf(r, mid) < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact `W₁` between the empirical measure of sorted points `xs` and the
/// centred semicircle law of radius `r`, as `∫|F_n − F|`.
pub fn w1_to_semicircle(xs: &[f64], r: f64) -> f64 {
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    let g = |x: f64| semicircle_cdf_integral(r, x);
    let mut total = g(xs[0]);
    for k in 1..n {
        let (a, b) = (xs[k - 1], xs[k]);
        if b <= a {
            continue;
        }
        let c = k as f64 / n as f64;
        let xs_star = semicircle_quantile(r, c).clamp(a, b);
        total += c * (xs_star - a) - (g(xs_star) - g(a)) + (g(b) - g(xs_star)) - c * (b - xs_star);
    }
    let last = xs[n - 1];
    let m = last.max(r);
    total += (m - last) - (g(m) - g(last));
    total
}

/// `W₁` distance between the spectrum of `W − u` and `μ_p(0)`.
pub fn esd_w1(s: &SpectrumSummary, p: usize, u: f64) -> Result<f64> {
    ensure(p >= 2, || format!("p must be at least 2, got {p}"))?;
    let shifted: Vec<f64> = s.eigenvalues.iter().map(|l| l - u).collect();
    Ok(w1_to_semicircle(&shifted, mu_p_radius(p as u64)))
}

fn check_upper(z: Complex64) -> Result<()> {
    ensure(z.im > 0.0 && z.re.is_finite() && z.im.is_finite(), || {
        format!("z must lie in the open upper half plane, got {z}")
    })
}

/// Solution `m̃_p(z)` of `1 + (z + ((p−1)/p)·m)·m = 0` with `Im m > 0`.
pub fn stieltjes_mp(p: usize, z: Complex64) -> Result<Complex64> {
    ensure(p >= 2, || format!("p must be at least 2, got {p}"))?;
    check_upper(z)?;
    let a = (p as f64 - 1.0) / p as f64;
    let root = (z * z - 4.0 * a).sqrt();
    let m1 = (-z + root) / (2.0 * a);
    let m2 = (-z - root) / (2.0 * a);
    Ok(if m1.im > 0.0 { m1 } else { m2 })
}

/// Residual of the scalar Dyson equation at `m`.
pub fn mde_residual(p: usize, z: Complex64, m: Complex64) -> Complex64 {
    let a = (p as f64 - 1.0) / p as f64;
    1.0 + (z + a * m) * m
}

/// Empirical Stieltjes transform `(1/n) Σ 1/(λ_i − z)`.
pub fn stieltjes_empirical(s: &SpectrumSummary, z: Complex64) -> Result<Complex64> {
    check_upper(z)?;
    let sum: Complex64 = s.eigenvalues.iter().map(|&l| 1.0 / (l - z)).sum();
    Ok(sum / s.len() as f64)
}

/// Mean of `|s_N(E + iη) − m̃_p(E + iη)|` over `points` equally spaced `E`
/// in `[e_min, e_max]`.
pub fn mean_stieltjes_deviation(
    s: &SpectrumSummary,
    p: usize,
    eta: f64,
    e_min: f64,
    e_max: f64,
    points: usize,
) -> Result<f64> {
    ensure(points >= 2, || "need at least two energies".into())?;
    let mut total = 0.0;
    for k in 0..points {
        let e = e_min + (e_max - e_min) * k as f64 / (points - 1) as f64;
        let z = Complex64::new(e, eta);
        total += (stieltjes_empirical(s, z)? - stieltjes_mp(p, z)?).norm();
    }
    Ok(total / points as f64)
}

/// True iff no eigenvalue lies in `[u − gap, u + gap]`.
pub fn spectral_gap_ok(s: &SpectrumSummary, u: f64, gap: f64) -> Result<bool> {
    ensure(gap > 0.0, || format!("gap must be positive, got {gap}"))?;
    let first = s.eigenvalues.partition_point(|&l| l < u - gap);
    Ok(first == s.len() || s.eigenvalues[first] > u + gap)
}

/// `Σ log|λ_i − u|`, or `−∞` when some `|λ_i − u| < 1e−300`.
pub fn log_abs_det(s: &SpectrumSummary, u: f64) -> f64 {
    let mut total = 0.0;
    for &l in &s.eigenvalues {
        let a = (l - u).abs();
        if a < 1e-300 {
            return f64::NEG_INFINITY;
        }
        total += a.ln();
    }
    total
}
