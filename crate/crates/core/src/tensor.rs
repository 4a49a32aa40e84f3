//! Dense random tensors and their injective norm.
//!
//! A [`Tensor`] of order `p` and local dimension `d` stores its `d^p` entries
//! flat in row-major order (last index fastest). The same code serves the
//! real and the complex field through the [`Scalar`] trait.
//!
//! The injective norm `max |T(x⁽¹⁾,…,x⁽ᵖ⁾)|` over unit vectors is NP-hard to
//! compute; [`estimate_injective_norm`] runs alternating maximization from
//! many random starts and returns the best value found, which is a lower
//! bound on the true norm.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::field::Field;
use crate::stream::Stream;

/// Default cap on the number of scalars in a sampled tensor.
pub const DEFAULT_ENTRY_BUDGET: usize = 100_000_000;

/// Real or complex scalar used by tensors and factor tuples.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    const FIELD: Field;
    fn zero() -> Self;
    fn from_re(x: f64) -> Self;
    fn conj(self) -> Self;
    fn norm_sqr(self) -> f64;
    fn scale(self, s: f64) -> Self;
    fn re(self) -> f64;
    fn im(self) -> f64;
    /// Standard Gaussian over the field: `N(0,1)`, or real and imaginary
    /// parts independent `N(0,1/2)`.
    fn gaussian(stream: &mut Stream) -> Self;
    fn to_complex(self) -> Complex64 {
        Complex64::new(self.re(), self.im())
    }
    fn abs(self) -> f64 {
        self.norm_sqr().sqrt()
    }
}

impl Scalar for f64 {
    const FIELD: Field = Field::Real;
    fn zero() -> Self {
        0.0
    }
    fn from_re(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn re(self) -> f64 {
        self
    }
    fn im(self) -> f64 {
        0.0
    }
    fn gaussian(stream: &mut Stream) -> Self {
        stream.normal()
    }
}

impl Scalar for Complex64 {
    const FIELD: Field = Field::Complex;
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_re(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn re(self) -> f64 {
        self.re
    }
    fn im(self) -> f64 {
        self.im
    }
    fn gaussian(stream: &mut Stream) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let re = stream.normal() * s;
        let im = stream.normal() * s;
        Complex64::new(re, im)
    }
}

/// Dense order-`p` tensor on `(K^d)^{⊗p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    p: usize,
    d: usize,
    data: Vec<S>,
    seed: Option<u64>,
}

fn entry_count(p: usize, d: usize) -> Option<usize> {
    let mut n: usize = 1;
    for _ in 0..p {
        n = n.checked_mul(d)?;
    }
    Some(n)
}

impl<S: Scalar> Tensor<S> {
    /// Wraps `data` (row-major, length `d^p`).
    pub fn from_vec(p: usize, d: usize, data: Vec<S>) -> Result<Self> {
        ensure(p >= 1 && d >= 1, || format!("need p, d >= 1, got p={p}, d={d}"))?;
        let n = entry_count(p, d).ok_or_else(|| Error::Budget(format!("{d}^{p} overflows")))?;
        ensure(data.len() == n, || format!("expected {n} entries, got {}", data.len()))?;
        Ok(Tensor { p, d, data, seed: None })
    }

    pub fn zeros(p: usize, d: usize) -> Result<Self> {
        let n = entry_count(p, d).ok_or_else(|| Error::Budget(format!("{d}^{p} overflows")))?;
        Self::from_vec(p, d, vec![S::zero(); n])
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn field(&self) -> Field {
        S::FIELD
    }

    /// Seed the tensor was sampled from, if any.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.p, "index length must equal the order");
        idx.iter().fold(0, |acc, &i| {
            assert!(i < self.d, "index {i} out of range");
            acc * self.d + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> S {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: S) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// `c · T`.
    pub fn scaled(&self, c: S) -> Self {
        Tensor {
            p: self.p,
            d: self.d,
            data: self.data.iter().map(|&v| c * v).collect(),
            seed: self.seed,
        }
    }

    /// `T / ‖T‖_HS`.
    pub fn normalized(&self) -> Result<Self> {
        let n = hs_norm(self);
        if n == 0.0 {
            return Err(Error::Numerical("cannot normalize the zero tensor".into()));
        }
        Ok(self.scaled(S::from_re(1.0 / n)))
    }
}

/// Samples a tensor with i.i.d. standard Gaussian entries over the field of `S`,
/// from the stream `(seed, "tensor", [])`.
pub fn sample_tensor<S: Scalar>(p: usize, d: usize, seed: u64) -> Result<Tensor<S>> {
    sample_tensor_keyed(p, d, seed, &[], DEFAULT_ENTRY_BUDGET)
}

/// As [`sample_tensor`] but from the stream `(seed, "tensor", indices)` and with
/// an explicit entry budget.
pub fn sample_tensor_keyed<S: Scalar>(
    p: usize,
    d: usize,
    seed: u64,
    indices: &[u64],
    budget: usize,
) -> Result<Tensor<S>> {
    ensure(p >= 2 && d >= 2, || format!("need p, d >= 2, got p={p}, d={d}"))?;
    let n = entry_count(p, d)
        .filter(|&n| n <= budget)
        .ok_or_else(|| Error::Budget(format!("{d}^{p} entries exceed the budget of {budget}")))?;
    let mut stream = Stream::new(seed, "tensor", indices);
    let data = (0..n).map(|_| S::gaussian(&mut stream)).collect();
    Ok(Tensor { p, d, data, seed: Some(seed) })
}

/// Hilbert–Schmidt (Frobenius) norm.
pub fn hs_norm<S: Scalar>(t: &Tensor<S>) -> f64 {
    t.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// `p` unit vectors of dimension `d`: a rank-one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTuple<S> {
    pub factors: Vec<Vec<S>>,
    pub gauge_fixed: bool,
}

fn vec_norm<S: Scalar>(v: &[S]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

impl<S: Scalar> FactorTuple<S> {
    /// Normalizes each factor. Fails on a zero factor or ragged dimensions.
    pub fn new(factors: Vec<Vec<S>>) -> Result<Self> {
        ensure(!factors.is_empty(), || "factor tuple is empty".into())?;
        let d = factors[0].len();
        let mut out = Vec::with_capacity(factors.len());
        for (k, f) in factors.into_iter().enumerate() {
            ensure(f.len() == d, || format!("factor {k} has dimension {}, expected {d}", f.len()))?;
            let n = vec_norm(&f);
            ensure(n > 0.0 && n.is_finite(), || format!("factor {k} has norm {n}"))?;
            out.push(f.into_iter().map(|x| x.scale(1.0 / n)).collect());
        }
        Ok(FactorTuple { factors: out, gauge_fixed: false })
    }

    /// Every factor equal to the basis vector `e_index`.
    pub fn basis(p: usize, d: usize, index: usize) -> Self {
        let mut e = vec![S::zero(); d];
        e[index] = S::from_re(1.0);
        FactorTuple { factors: vec![e; p], gauge_fixed: false }
    }

    /// Independent uniformly distributed unit vectors.
    pub fn random(p: usize, d: usize, stream: &mut Stream) -> Self {
        let factors = (0..p).map(|_| random_unit::<S>(d, stream)).collect();
        FactorTuple { factors, gauge_fixed: false }
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn dim(&self) -> usize {
        self.factors.first().map_or(0, Vec::len)
    }
}

fn random_unit<S: Scalar>(d: usize, stream: &mut Stream) -> Vec<S> {
    loop {
        let v: Vec<S> = (0..d).map(|_| S::gaussian(stream)).collect();
        let n = vec_norm(&v);
        if n > 1e-300 {
            return v.into_iter().map(|x| x.scale(1.0 / n)).collect();
        }
    }
}

fn check_shapes<S: Scalar>(t: &Tensor<S>, x: &FactorTuple<S>) -> Result<()> {
    ensure(x.order() == t.p && x.factors.iter().all(|f| f.len() == t.d), || {
        format!(
            "factor tuple of order {} and dimension {} does not match tensor ({}, {})",
            x.order(),
            x.dim(),
            t.p,
            t.d
        )
    })
}

/// Contracts `T` against every factor except `skip` (all factors if `None`),
/// collapsing trailing modes first and then leading modes. Returns a vector of
/// length `d` (or 1 when nothing is skipped).
fn contract<S: Scalar>(t: &Tensor<S>, x: &[Vec<S>], skip: Option<usize>) -> Vec<S> {
    let (p, d) = (t.p, t.d);
    let keep = skip.unwrap_or(0);
    let mut buf: Option<Vec<S>> = None;
    let mut len = t.data.len();
    let last_trailing = if skip.is_some() { keep + 1 } else { 0 };
    for mode in (last_trailing..p).rev() {
        let src: &[S] = buf.as_deref().unwrap_or(&t.data);
        let xv = &x[mode];
        let rows = len / d;
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mut acc = S::zero();
            for (a, b) in row.iter().zip(xv) {
                acc += *a * *b;
            }
            out.push(acc);
        }
        buf = Some(out);
        len = rows;
    }
    if skip.is_none() {
        return buf.unwrap_or_else(|| t.data.clone());
    }
    for xv in x.iter().take(keep) {
        let src: &[S] = buf.as_deref().unwrap_or(&t.data);
        let rest = len / d;
        let mut out = vec![S::zero(); rest];
        for (i, &xi) in xv.iter().enumerate() {
            let block = &src[i * rest..(i + 1) * rest];
            for (o, &v) in out.iter_mut().zip(block) {
                *o += xi * v;
            }
        }
        buf = Some(out);
        len = rest;
    }
    buf.unwrap_or_else(|| t.data.clone())
}

/// `Σ T_{i₁…i_p} x⁽¹⁾_{i₁} ⋯ x⁽ᵖ⁾_{i_p}` (no conjugation).
pub fn multilinear_value<S: Scalar>(t: &Tensor<S>, x: &FactorTuple<S>) -> Result<S> {
    check_shapes(t, x)?;
    Ok(contract(t, &x.factors, None)[0])
}

/// The vector `c` with `c_j = T(x⁽¹⁾,…,e_j,…,x⁽ᵖ⁾)`, `e_j` in position `slot` (0-based).
pub fn contract_except<S: Scalar>(t: &Tensor<S>, x: &FactorTuple<S>, slot: usize) -> Result<Vec<S>> {
    check_shapes(t, x)?;
    ensure(slot < t.p, || format!("slot {slot} out of range for order {}", t.p))?;
    Ok(contract(t, &x.factors, Some(slot)))
}

/// Replaces factor `slot` by the maximizer of `|T(…)|` over that slot,
/// `conj(c)/‖c‖`. Returns the new tuple and `‖c‖`, which is the new `|value|`.
fn update_slot<S: Scalar>(
    t: &Tensor<S>,
    x: &mut FactorTuple<S>,
    slot: usize,
    aux: &mut dyn FnMut() -> Stream,
) -> f64 {
    let c = contract(t, &x.factors, Some(slot));
    let n = vec_norm(&c);
    if n < 1e-300 {
        let mut s = aux();
        x.factors[slot] = random_unit(t.d, &mut s);
        return 0.0;
    }
    x.factors[slot] = c.into_iter().map(|v| v.conj().scale(1.0 / n)).collect();
    x.gauge_fixed = false;
    n
}

/// One alternating-maximization step on slot `slot` (0-based). A vanishing
/// contraction resamples the slot from the stream `(0, "als-aux", [slot])`.
pub fn als_update<S: Scalar>(t: &Tensor<S>, x: &FactorTuple<S>, slot: usize) -> Result<FactorTuple<S>> {
    check_shapes(t, x)?;
    ensure(slot < t.p, || format!("slot {slot} out of range for order {}", t.p))?;
    let mut y = x.clone();
    update_slot(t, &mut y, slot, &mut || Stream::new(0, "als-aux", &[slot as u64]));
    Ok(y)
}

/// Options for [`estimate_injective_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlsOptions {
    pub restarts: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Extra key component so that several tensors analysed under one seed
    /// get different starting points.
    pub trial: u64,
}

impl Default for AlsOptions {
    fn default() -> Self {
        AlsOptions { restarts: 32, tol: 1e-10, max_iters: 500, seed: 0, trial: 0 }
    }
}

/// Result of a multistart alternating maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct InjNormEstimate<S> {
    /// Best `|T(x⁽¹⁾,…,x⁽ᵖ⁾)|` found; a lower bound on the injective norm.
    pub value: f64,
    pub tuple: FactorTuple<S>,
    pub restarts_used: usize,
    /// Sweeps performed by the winning restart.
    pub iterations: usize,
    /// Whether the winning restart met the tolerance.
    pub converged: bool,
    /// Index of the winning restart.
    pub best_restart: usize,
}

struct RestartOutcome<S> {
    value: f64,
    tuple: FactorTuple<S>,
    iterations: usize,
    converged: bool,
}

fn run_restart<S: Scalar>(t: &Tensor<S>, opts: &AlsOptions, restart: usize) -> RestartOutcome<S> {
    let r = restart as u64;
    let factors = (0..t.p)
        .map(|slot| {
            let mut s = Stream::new(opts.seed, "als", &[opts.trial, r, slot as u64]);
            random_unit::<S>(t.d, &mut s)
        })
        .collect();
    let mut x = FactorTuple { factors, gauge_fixed: false };
    let mut prev = contract(t, &x.factors, None)[0].abs();
    let mut iterations = 0;
    let mut converged = false;
    for sweep in 0..opts.max_iters {
        let mut value = prev;
        for slot in 0..t.p {
            value = update_slot(t, &mut x, slot, &mut || {
                Stream::new(opts.seed, "als-aux", &[opts.trial, r, sweep as u64, slot as u64])
            });
        }
        iterations = sweep + 1;
        let change = (value - prev).abs();
        prev = value;
        if change <= opts.tol * value.abs() {
            converged = true;
            break;
        }
    }
    let value = contract(t, &x.factors, None)[0].abs();
    RestartOutcome { value, tuple: x, iterations, converged }
}

/// Best alternating-maximization fixed point over `opts.restarts` random
/// starts. Restart `r` starts from the streams `(seed, "als", [trial, r, slot])`, so
/// the result does not depend on the number of worker threads.
pub fn estimate_injective_norm<S: Scalar>(t: &Tensor<S>, opts: &AlsOptions) -> Result<InjNormEstimate<S>> {
    ensure(opts.restarts >= 1, || "restarts must be at least 1".into())?;
    ensure(opts.max_iters >= 1, || "max_iters must be at least 1".into())?;
    ensure(opts.tol >= 0.0, || "tol must be nonnegative".into())?;
    let outcomes: Vec<RestartOutcome<S>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| run_restart(t, opts, r))
        .collect();
    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.value > outcomes[best].value {
            best = i;
        }
    }
    let win = outcomes.into_iter().nth(best).expect("at least one restart");
    Ok(InjNormEstimate {
        value: win.value,
        tuple: win.tuple,
        restarts_used: opts.restarts,
        iterations: win.iterations,
        converged: win.converged,
        best_restart: best,
    })
}

/// Rotates the phases of a complex factor tuple so that the first coordinate
/// of factors 2..p is real and nonnegative and the multilinear value is real
/// and nonnegative. A zero first coordinate gets phase 0; the compensation
/// always goes into factor 1.
pub fn gauge_fix(x: &FactorTuple<Complex64>, t: &Tensor<Complex64>) -> Result<FactorTuple<Complex64>> {
    let value = multilinear_value(t, x)?;
    let p = x.order();
    let mut theta = vec![0.0; p];
    for (th, f) in theta.iter_mut().zip(&x.factors).skip(1) {
        let c = f[0];
        *th = if c == Complex64::new(0.0, 0.0) { 0.0 } else { c.arg() };
    }
    let rest: f64 = theta[1..].iter().sum();
    theta[0] = if value == Complex64::new(0.0, 0.0) { 0.0 } else { value.arg() } - rest;
    let factors = x
        .factors
        .iter()
        .zip(&theta)
        .map(|(f, &th)| {
            let ph = Complex64::from_polar(1.0, -th);
            f.iter().map(|&v| v * ph).collect()
        })
        .collect();
    let mut out = FactorTuple { factors, gauge_fixed: true };
    for f in out.factors.iter_mut().skip(1) {
        // the rotation leaves rounding noise in the imaginary part
        f[0] = Complex64::new(f[0].norm(), 0.0);
    }
    Ok(out)
}

/// Entanglement summary of a normalized state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entanglement {
    pub inj_norm: f64,
    /// `−log(inj_norm²)`; an upper bound on the true geometric entanglement.
    pub gme: f64,
    /// `√(2 − 2·inj_norm)`; an upper bound on the distance to separable states.
    pub dist_sep: f64,
}

pub fn gme_from_value(v: f64) -> f64 {
    -(v * v).ln()
}

pub fn dist_sep_from_value(v: f64) -> f64 {
    (2.0 - 2.0 * v).max(0.0).sqrt()
}

fn check_normalized<S: Scalar>(t: &Tensor<S>) -> Result<()> {
    let n = hs_norm(t);
    ensure((n - 1.0).abs() <= 1e-10, || format!("state is not normalized: ‖T‖_HS = {n}"))
}

/// Estimates the injective norm of a normalized state and derives GME and
/// distance to the separable states from it.
pub fn entanglement<S: Scalar>(t: &Tensor<S>, opts: &AlsOptions) -> Result<Entanglement> {
    check_normalized(t)?;
    let v = estimate_injective_norm(t, opts)?.value;
    Ok(Entanglement { inj_norm: v, gme: gme_from_value(v), dist_sep: dist_sep_from_value(v) })
}

/// Geometric entanglement of a normalized state (upper bound via ALS).
pub fn gme<S: Scalar>(t: &Tensor<S>, opts: &AlsOptions) -> Result<f64> {
    entanglement(t, opts).map(|e| e.gme)
}

/// Distance from a normalized state to the separable states (upper bound via ALS).
pub fn dist_sep<S: Scalar>(t: &Tensor<S>, opts: &AlsOptions) -> Result<f64> {
    entanglement(t, opts).map(|e| e.dist_sep)
}

/// The maximally entangled two-qudit state `Σ_i e_i ⊗ e_i / √d`.
pub fn bell_state<S: Scalar>(d: usize) -> Result<Tensor<S>> {
    let mut t = Tensor::zeros(2, d)?;
    let v = S::from_re(1.0 / (d as f64).sqrt());
    for i in 0..d {
        t.set(&[i, i], v);
    }
    Ok(t)
}

/// The product state `x⁽¹⁾ ⊗ … ⊗ x⁽ᵖ⁾`.
pub fn product_state<S: Scalar>(x: &FactorTuple<S>) -> Result<Tensor<S>> {
    let (p, d) = (x.order(), x.dim());
    let mut data = vec![S::from_re(1.0)];
    for f in &x.factors {
        let mut next = Vec::with_capacity(data.len() * d);
        for &a in &data {
            for &b in f {
                next.push(a * b);
            }
        }
        data = next;
    }
    Tensor::from_vec(p, d, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn naive_value<S: Scalar>(t: &Tensor<S>, x: &FactorTuple<S>) -> S {
        let (p, d) = (t.order(), t.dim());
        let mut idx = vec![0usize; p];
        let mut total = S::zero();
        loop {
            let mut term = t.get(&idx);
            for (k, &i) in idx.iter().enumerate() {
                term = term * x.factors[k][i];
            }
            total += term;
            let mut k = p;
            loop {
                if k == 0 {
                    return total;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < d {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    fn top_singular_value(t: &Tensor<f64>) -> f64 {
        let d = t.dim();
        let m = DMatrix::from_row_slice(d, d, t.data());
        let ev = (m.transpose() * &m).symmetric_eigen().eigenvalues;
        ev.iter().cloned().fold(0.0, f64::max).sqrt()
    }

    #[test]
    fn sampling_is_deterministic_and_budgeted() {
        let a: Tensor<f64> = sample_tensor(3, 4, 9).unwrap();
        let b: Tensor<f64> = sample_tensor(3, 4, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.data().len(), 64);
        let c: Tensor<f64> = sample_tensor(3, 4, 10).unwrap();
        assert_ne!(a, c);
        assert!(matches!(
            sample_tensor_keyed::<f64>(3, 10, 0, &[], 999),
            Err(Error::Budget(_))
        ));
        assert!(sample_tensor::<f64>(1, 4, 0).is_err());
    }

    #[test]
    fn hs_norm_examples() {
        let ones = Tensor::from_vec(3, 2, vec![1.0; 8]).unwrap();
        assert!((hs_norm(&ones) - 8f64.sqrt()).abs() < 1e-15);
        let mut t = Tensor::<f64>::zeros(2, 3).unwrap();
        t.set(&[1, 2], 3.0);
        assert_eq!(hs_norm(&t), 3.0);
        assert_eq!(hs_norm(&Tensor::<f64>::zeros(2, 3).unwrap()), 0.0);
    }

    #[test]
    fn hs_norm_mean_is_entry_count() {
        let n = 10_000;
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                let t: Tensor<f64> = sample_tensor_keyed(3, 4, 1, &[i], DEFAULT_ENTRY_BUDGET).unwrap();
                hs_norm(&t).powi(2) / 64.0
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() <= 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn complex_entry_variance_is_half() {
        let n = 100_000;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut s4 = 0.0;
        for i in 0..n {
            let t: Tensor<Complex64> = sample_tensor_keyed(2, 2, 3, &[i], DEFAULT_ENTRY_BUDGET).unwrap();
            let x = t.get(&[0, 1]).re;
            s1 += x;
            s2 += x * x;
            s4 += x.powi(4);
        }
        let nf = n as f64;
        let var = s2 / nf - (s1 / nf).powi(2);
        let se = ((s4 / nf - (s2 / nf).powi(2)) / nf).sqrt();
        assert!((var - 0.5).abs() <= 3.0 * se, "var {var}");
    }

    #[test]
    fn multilinear_matches_naive_oracle() {
        for p in 2..=4 {
            let t: Tensor<Complex64> = sample_tensor(p, 3, p as u64).unwrap();
            let mut s = Stream::new(1, "test", &[p as u64]);
            let x = FactorTuple::random(p, 3, &mut s);
            let a = multilinear_value(&t, &x).unwrap();
            let b = naive_value(&t, &x);
            assert!((a - b).norm() < 1e-12);
            let tr: Tensor<f64> = sample_tensor(p, 4, 7).unwrap();
            let xr = FactorTuple::random(p, 4, &mut s);
            assert!((multilinear_value(&tr, &xr).unwrap() - naive_value(&tr, &xr)).abs() < 1e-12);
        }
    }

    #[test]
    fn multilinear_basic_cases() {
        let mut t = Tensor::<f64>::zeros(3, 3).unwrap();
        t.set(&[0, 0, 0], 2.5);
        assert_eq!(multilinear_value(&t, &FactorTuple::basis(3, 3, 0)).unwrap(), 2.5);
        let m: Tensor<f64> = sample_tensor(2, 4, 1).unwrap();
        let mut s = Stream::new(2, "t", &[]);
        let x = FactorTuple::<f64>::random(2, 4, &mut s);
        let mm = DMatrix::from_row_slice(4, 4, m.data());
        let a = nalgebra::DVector::from_vec(x.factors[0].clone());
        let b = nalgebra::DVector::from_vec(x.factors[1].clone());
        let expect = (a.transpose() * mm * b)[0];
        assert!((multilinear_value(&m, &x).unwrap() - expect).abs() < 1e-12);
        assert!(multilinear_value(&m, &FactorTuple::basis(3, 4, 0)).is_err());
    }

    #[test]
    fn contraction_except_each_slot_matches_value() {
        let t: Tensor<Complex64> = sample_tensor(4, 3, 5).unwrap();
        let mut s = Stream::new(3, "t", &[]);
        let x = FactorTuple::random(4, 3, &mut s);
        let v = multilinear_value(&t, &x).unwrap();
        for slot in 0..4 {
            let c = contract_except(&t, &x, slot).unwrap();
            let mut acc = Complex64::new(0.0, 0.0);
            for (ci, xi) in c.iter().zip(&x.factors[slot]) {
                acc += ci * xi;
            }
            assert!((acc - v).norm() < 1e-12);
        }
    }

    #[test]
    fn update_on_diagonal_tensor_gives_e1() {
        let mut t = Tensor::<f64>::zeros(3, 3).unwrap();
        t.set(&[0, 0, 0], -1.0);
        let x = FactorTuple::new(vec![vec![0.5, 0.2, 0.1], vec![0.3, -0.4, 1.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let y = als_update(&t, &x, 1).unwrap();
        assert!((y.factors[1][0].abs() - 1.0).abs() < 1e-15);
        assert_eq!(&y.factors[1][1..], &[0.0, 0.0]);

        let mut tc = Tensor::<Complex64>::zeros(2, 2).unwrap();
        tc.set(&[0, 0], Complex64::new(0.0, 1.0));
        let xc = FactorTuple::new(vec![vec![Complex64::new(1.0, 1.0), Complex64::new(0.3, 0.0)]; 2]).unwrap();
        let yc = als_update(&tc, &xc, 0).unwrap();
        assert!((yc.factors[0][0].norm() - 1.0).abs() < 1e-15);
        assert_eq!(yc.factors[0][1], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn update_on_matrix_returns_top_singular_pair() {
        let t: Tensor<f64> = sample_tensor(2, 5, 4).unwrap();
        let m = DMatrix::from_row_slice(5, 5, t.data());
        let svd = m.clone().svd(true, true);
        let (imax, s1) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let v1: Vec<f64> = svd.v_t.unwrap().row(imax).iter().cloned().collect();
        let x = FactorTuple::new(vec![vec![1.0; 5], v1]).unwrap();
        let y = als_update(&t, &x, 0).unwrap();
        let value = multilinear_value(&t, &y).unwrap();
        assert!((value.abs() - s1).abs() < 1e-12);
    }

    #[test]
    fn degenerate_contraction_is_resampled() {
        let t = Tensor::<f64>::zeros(3, 3).unwrap();
        let x = FactorTuple::<f64>::basis(3, 3, 0);
        let y = als_update(&t, &x, 2).unwrap();
        assert!((vec_norm(&y.factors[2]) - 1.0).abs() < 1e-12);
        assert_eq!(y, als_update(&t, &x, 2).unwrap());
    }

    #[test]
    fn als_updates_never_decrease_value() {
        for i in 0..1000u64 {
            let p = 2 + (i % 3) as usize;
            let t: Tensor<Complex64> = sample_tensor_keyed(p, 3, 17, &[i], DEFAULT_ENTRY_BUDGET).unwrap();
            let tr: Tensor<f64> = sample_tensor_keyed(p, 3, 18, &[i], DEFAULT_ENTRY_BUDGET).unwrap();
            let mut s = Stream::new(19, "mono", &[i]);
            let x = FactorTuple::random(p, 3, &mut s);
            let xr = FactorTuple::random(p, 3, &mut s);
            let slot = (i as usize) % p;
            let before = multilinear_value(&t, &x).unwrap().norm();
            let after = multilinear_value(&t, &als_update(&t, &x, slot).unwrap()).unwrap().norm();
            assert!(after >= before - 1e-12);
            let before = multilinear_value(&tr, &xr).unwrap().abs();
            let after = multilinear_value(&tr, &als_update(&tr, &xr, slot).unwrap()).unwrap().abs();
            assert!(after >= before - 1e-12);
        }
    }

    #[test]
    fn matrix_case_equals_top_singular_value() {
        for i in 0..20u64 {
            let t: Tensor<f64> = sample_tensor_keyed(2, 6, 21, &[i], DEFAULT_ENTRY_BUDGET).unwrap();
            let est = estimate_injective_norm(&t, &AlsOptions { restarts: 8, seed: i, ..Default::default() }).unwrap();
            assert!((est.value - top_singular_value(&t)).abs() < 1e-8);
            let direct = multilinear_value(&t, &est.tuple).unwrap().abs();
            assert!((direct - est.value).abs() <= 1e-12);
        }
    }

    #[test]
    fn bell_state_norm() {
        for d in 2..=8 {
            let b: Tensor<f64> = bell_state(d).unwrap();
            let est = estimate_injective_norm(&b, &AlsOptions::default()).unwrap();
            assert!((est.value - 1.0 / (d as f64).sqrt()).abs() < 1e-10);
        }
        let b: Tensor<f64> = bell_state(2).unwrap();
        let e = entanglement(&b, &AlsOptions::default()).unwrap();
        assert!((e.gme - 2f64.ln()).abs() < 1e-9);
        assert!((e.dist_sep - (2.0 - 2f64.sqrt()).sqrt()).abs() < 1e-9);
    }

    /// Brute-force oracle for p = 3, d = 2 real: angles on a 0.01 rad grid,
    /// then coordinate polish.
    fn grid_oracle(t: &Tensor<f64>) -> f64 {
        let e = t.data();
        let f = |a: f64, b: f64, c: f64| {
            let (x, y, z) = ([a.cos(), a.sin()], [b.cos(), b.sin()], [c.cos(), c.sin()]);
            let mut v = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        v += e[4 * i + 2 * j + k] * x[i] * y[j] * z[k];
                    }
                }
            }
            v.abs()
        };
        let n = (std::f64::consts::PI / 0.01).ceil() as usize;
        let grid: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
        let mut best = (0.0, 0.0, 0.0, 0.0);
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    let v = f(a, b, c);
                    if v > best.0 {
                        best = (v, a, b, c);
                    }
                }
            }
        }
        let (mut v, mut a, mut b, mut c) = best;
        let mut h = 0.005;
        while h > 1e-9 {
            let mut improved = false;
            for (da, db, dc) in [(h, 0.0, 0.0), (-h, 0.0, 0.0), (0.0, h, 0.0), (0.0, -h, 0.0), (0.0, 0.0, h), (0.0, 0.0, -h)] {
                let w = f(a + da, b + db, c + dc);
                if w > v {
                    v = w;
                    a += da;
                    b += db;
                    c += dc;
                    improved = true;
                }
            }
            if !improved {
                h /= 2.0;
            }
        }
        v
    }

    #[test]
    fn small_order_three_matches_grid_oracle() {
        for i in 0..3u64 {
            let t: Tensor<f64> = sample_tensor_keyed(3, 2, 23, &[i], DEFAULT_ENTRY_BUDGET).unwrap();
            let est = estimate_injective_norm(&t, &AlsOptions { restarts: 64, seed: i, ..Default::default() }).unwrap();
            let oracle = grid_oracle(&t);
            assert!((est.value - oracle).abs() < 1e-3, "{} vs {}", est.value, oracle);
        }
    }

    #[test]
    fn gauge_fix_properties() {
        for i in 0..1000u64 {
            let t: Tensor<Complex64> = sample_tensor_keyed(3, 3, 29, &[i], DEFAULT_ENTRY_BUDGET).unwrap();
            let mut s = Stream::new(31, "gauge", &[i]);
            let x = FactorTuple::random(3, 3, &mut s);
            let g = gauge_fix(&x, &t).unwrap();
            let v0 = multilinear_value(&t, &x).unwrap();
            let v = multilinear_value(&t, &g).unwrap();
            assert!(v.im.abs() <= 1e-12 && v.re >= 0.0);
            assert!((v.norm() - v0.norm()).abs() <= 1e-12);
            for f in &g.factors[1..] {
                assert_eq!(f[0].im, 0.0);
            }
            for f in &g.factors {
                assert!((vec_norm(f) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gauge_fix_keeps_real_tuples_and_undoes_phases() {
        let t: Tensor<Complex64> = sample_tensor(3, 2, 3).unwrap();
        let re = |v: &[f64]| v.iter().map(|&a| Complex64::new(a, 0.0)).collect::<Vec<_>>();
        let mut x = FactorTuple::new(vec![re(&[0.6, 0.8]), re(&[1.0, 0.0]), re(&[0.8, -0.6])]).unwrap();
        // make the value real and positive by choosing slot 1 as the maximizer direction
        x = als_update(&t, &x, 0).unwrap();
        let g = gauge_fix(&x, &t).unwrap();
        let g2 = gauge_fix(&g, &t).unwrap();
        for (a, b) in g.factors.iter().flatten().zip(g2.factors.iter().flatten()) {
            assert!((a - b).norm() < 1e-12);
        }
        let mut y = g.clone();
        let ph = Complex64::from_polar(1.0, std::f64::consts::PI / 3.0);
        y.factors[1].iter_mut().for_each(|v| *v *= ph);
        let before = multilinear_value(&t, &g).unwrap().norm();
        assert!((multilinear_value(&t, &gauge_fix(&y, &t).unwrap()).unwrap().norm() - before).abs() < 1e-12);
    }

    #[test]
    fn gauge_fix_zero_first_coordinate_uses_phase_zero() {
        let t: Tensor<Complex64> = sample_tensor(2, 2, 8).unwrap();
        let i = Complex64::new(0.0, 1.0);
        let x = FactorTuple::new(vec![vec![Complex64::new(1.0, 0.0), i], vec![Complex64::new(0.0, 0.0), i]]).unwrap();
        let g = gauge_fix(&x, &t).unwrap();
        assert_eq!(g.factors[1], x.factors[1]);
        let v = multilinear_value(&t, &g).unwrap();
        assert!(v.im.abs() < 1e-12 && v.re >= 0.0);
    }

    #[test]
    fn product_state_has_zero_entanglement() {
        let x = FactorTuple::<f64>::basis(3, 3, 0);
        let t = product_state(&x).unwrap();
        let e = entanglement(&t, &AlsOptions::default()).unwrap();
        assert!(e.gme.abs() < 1e-12 && e.dist_sep < 1e-6);
        let unnormalized = t.scaled(2.0);
        assert!(entanglement(&unnormalized, &AlsOptions::default()).is_err());
    }
}
