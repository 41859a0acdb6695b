//! The order-`s` Cesàro engine.
//!
//! Given a per-direction second-derivative oracle `q_{k,μ}`, the engine forms
//! the partial estimates
//!
//! ```text
//! L_N = (1/N) Σ_{k=1..N} k^(1-s) Σ_{μ=1..d} q_{k,μ}
//! ```
//!
//! together with a windowed convergence verdict, plus the exotic variant
//! `(1/N^s) Σ Σ q` and the sequence lemma relating the two chains for
//! `s > 0`. Oracle calls for distinct `(k, μ)` may run in parallel; the
//! reduction is sequential in ascending `(k, μ)` with compensated summation,
//! so results are bit-reproducible across execution modes.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::exec;
use crate::gauge::CMat;

/// Default windowed-convergence tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CesaroError<E> {
    #[error("oracle failed at direction (k={k}, mu={mu}): {source}")]
    Oracle { k: usize, mu: usize, source: E },
    #[error("exotic chain is defined for s ≥ 0 only, got s = {0}")]
    NegativeOrder(f64),
    #[error("sequence lemma requires s > 0, got s = {0}")]
    NonPositiveOrder(f64),
    #[error("need n_max ≥ 8, got {0}")]
    NMaxTooSmall(usize),
}

/// Values the engine can average: a vector space with a norm.
pub trait CesaroValue: Clone {
    fn zeros_like(&self) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn scale(&self, w: f64) -> Self;
    fn norm(&self) -> f64;
    /// Representative scalar `(re, im)` for tabular reports.
    fn scalar_repr(&self) -> (f64, f64);
}

impl CesaroValue for f64 {
    fn zeros_like(&self) -> Self {
        0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn scale(&self, w: f64) -> Self {
        self * w
    }
    fn norm(&self) -> f64 {
        self.abs()
    }
    fn scalar_repr(&self) -> (f64, f64) {
        (*self, 0.0)
    }
}

impl CesaroValue for CMat {
    fn zeros_like(&self) -> Self {
        CMat::zeros(self.dim())
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn scale(&self, w: f64) -> Self {
        CMat::scale(self, w)
    }
    fn norm(&self) -> f64 {
        self.frob_norm()
    }
    fn scalar_repr(&self) -> (f64, f64) {
        let t: Complex64 = self.trace() / self.dim() as f64;
        (t.re, t.im)
    }
}

/// Compensated (Kahan) accumulator, applied componentwise through the
/// `CesaroValue` vector-space operations.
pub struct Kahan<T: CesaroValue> {
    sum: T,
    comp: T,
}

impl<T: CesaroValue> Kahan<T> {
    pub fn new(like: &T) -> Self {
        Kahan { sum: like.zeros_like(), comp: like.zeros_like() }
    }

    pub fn add(&mut self, term: &T) {
        let y = term.sub(&self.comp);
        let t = self.sum.add(&y);
        self.comp = t.sub(&self.sum).sub(&y);
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum.clone()
    }
}

/// Convergence verdict of a Cesàro series.
#[derive(Clone, Debug, Serialize)]
pub enum Verdict<T> {
    /// All partials in the trailing window agree with the final one within
    /// `tol`; `at` is the earliest index from which they keep doing so.
    Converged { value: T, at: usize },
    NotConverged,
}

impl<T> Verdict<T> {
    pub fn is_converged(&self) -> bool {
        matches!(self, Verdict::Converged { .. })
    }
}

/// The sequence of partial estimates `L_1 .. L_{n_max}` with its verdict.
#[derive(Clone, Debug, Serialize)]
pub struct CesaroSeries<T> {
    pub order_s: f64,
    pub tol: f64,
    /// `partials[i]` is `L_{i+1}`.
    pub partials: Vec<T>,
    pub verdict: Verdict<T>,
}

impl<T: CesaroValue> CesaroSeries<T> {
    pub fn n_max(&self) -> usize {
        self.partials.len()
    }

    pub fn last(&self) -> &T {
        self.partials.last().expect("non-empty series")
    }

    /// `‖L_N − L_{n_max}‖` per N; the plotting quantity.
    pub fn running_gaps(&self) -> Vec<f64> {
        let last = self.last();
        self.partials.iter().map(|p| p.sub(last).norm()).collect()
    }

    fn with_verdict(order_s: f64, tol: f64, partials: Vec<T>) -> Self {
        let n_max = partials.len();
        let window = (n_max / 8).max(8).min(n_max);
        let last = partials.last().expect("non-empty series").clone();
        let within = |p: &T| p.sub(&last).norm() <= tol;
        let converged = partials[n_max - window..].iter().all(within);
        let verdict = if converged {
            // earliest index from which every later partial stays within tol
            let mut at = n_max;
            for (i, p) in partials.iter().enumerate().rev() {
                if within(p) {
                    at = i + 1;
                } else {
                    break;
                }
            }
            Verdict::Converged { value: last, at: at.max(window) }
        } else {
            Verdict::NotConverged
        };
        CesaroSeries { order_s, tol, partials, verdict }
    }
}

fn evaluate_directions<T, E, F>(
    oracle: F,
    dim: usize,
    n_max: usize,
) -> Result<Vec<T>, CesaroError<E>>
where
    T: CesaroValue + Send,
    E: Send,
    F: Fn(usize, usize) -> Result<T, E> + Sync,
{
    let raw = exec::map_indexed(n_max * dim, |idx| {
        let k = idx / dim + 1;
        let mu = idx % dim + 1;
        oracle(k, mu).map_err(|e| (k, mu, e))
    });
    let mut flat = Vec::with_capacity(n_max * dim);
    for r in raw {
        match r {
            Ok(v) => flat.push(v),
            Err((k, mu, source)) => return Err(CesaroError::Oracle { k, mu, source }),
        }
    }
    // q_k = Σ_μ q_{k,μ}, ascending μ
    let mut per_k = Vec::with_capacity(n_max);
    for k in 0..n_max {
        let mut acc = Kahan::new(&flat[k * dim]);
        for mu in 0..dim {
            acc.add(&flat[k * dim + mu]);
        }
        per_k.push(acc.value());
    }
    Ok(per_k)
}

/// Order-`s` Cesàro estimate of a Laplacian from a direction oracle.
pub fn cesaro_estimate<T, E, F>(
    oracle: F,
    s: f64,
    dim: usize,
    n_max: usize,
    tol: f64,
) -> Result<CesaroSeries<T>, CesaroError<E>>
where
    T: CesaroValue + Send,
    E: Send,
    F: Fn(usize, usize) -> Result<T, E> + Sync,
{
    if n_max < 8 {
        return Err(CesaroError::NMaxTooSmall(n_max));
    }
    let per_k = evaluate_directions(oracle, dim, n_max)?;
    let mut acc = Kahan::new(&per_k[0]);
    let mut partials = Vec::with_capacity(n_max);
    for (i, q) in per_k.iter().enumerate() {
        let k = (i + 1) as f64;
        acc.add(&q.scale(k.powf(1.0 - s)));
        partials.push(acc.value().scale(1.0 / (i + 1) as f64));
    }
    Ok(CesaroSeries::with_verdict(s, tol, partials))
}

/// Exotic estimate `(1/N^s) Σ_{k≤N} Σ_μ q_{k,μ}`, defined for `s ≥ 0`.
pub fn exotic_estimate<T, E, F>(
    oracle: F,
    s: f64,
    dim: usize,
    n: usize,
) -> Result<T, CesaroError<E>>
where
    T: CesaroValue + Send,
    E: Send,
    F: Fn(usize, usize) -> Result<T, E> + Sync,
{
    if s < 0.0 {
        return Err(CesaroError::NegativeOrder(s));
    }
    let per_k = evaluate_directions(oracle, dim, n)?;
    let mut acc = Kahan::new(&per_k[0]);
    for q in &per_k {
        acc.add(q);
    }
    Ok(acc.value().scale(1.0 / (n as f64).powf(s)))
}

/// Exotic partials at every `N ≤ n`, for chain-consistency diagnostics.
pub fn exotic_partials<T, E, F>(
    oracle: F,
    s: f64,
    dim: usize,
    n: usize,
) -> Result<Vec<T>, CesaroError<E>>
where
    T: CesaroValue + Send,
    E: Send,
    F: Fn(usize, usize) -> Result<T, E> + Sync,
{
    if s < 0.0 {
        return Err(CesaroError::NegativeOrder(s));
    }
    let per_k = evaluate_directions(oracle, dim, n)?;
    let mut acc = Kahan::new(&per_k[0]);
    let mut out = Vec::with_capacity(n);
    for (i, q) in per_k.iter().enumerate() {
        acc.add(q);
        out.push(acc.value().scale(1.0 / ((i + 1) as f64).powf(s)));
    }
    Ok(out)
}

/// Both sides of the sequence lemma at truncation `N`:
/// `lhs = (1/N) Σ a_k k^(1-s)`, `rhs = s·(1/N^s) Σ a_k`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SeqLemma {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

pub fn seq_lemma_check<F>(a: F, s: f64, n: usize) -> Result<SeqLemma, CesaroError<std::convert::Infallible>>
where
    F: Fn(usize) -> f64,
{
    if s <= 0.0 {
        return Err(CesaroError::NonPositiveOrder(s));
    }
    let mut weighted = Kahan::new(&0.0);
    let mut plain = Kahan::new(&0.0);
    for k in 1..=n {
        let ak = a(k);
        weighted.add(&(ak * (k as f64).powf(1.0 - s)));
        plain.add(&ak);
    }
    let lhs = weighted.value() / n as f64;
    let rhs = s * plain.value() / (n as f64).powf(s);
    Ok(SeqLemma { lhs, rhs, gap: (lhs - rhs).abs() })
}
