//! Trigonometric bases of `L²([0,1])`, path coefficients over the sine
//! family, the differentiation isomorphism and the weak-uniform-density
//! diagnostic.
//!
//! Coefficient convention (it matters): [`PathCoeffs`] stores coefficients
//! of the path `γ` itself over `{h_k}`, `h_k(t) = √2 sin(πkt)`, so
//! `γ^μ(t) = Σ_k c_{k,μ} h_k(t)` and the Cameron–Martin norm is
//! `‖γ‖² = Σ_{k,μ} π²k² c_{k,μ}²` (since `ḣ_k = πk l_k`). Every `π²k²`
//! weight downstream traces back to this.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("time {0} outside [0, 1]")]
    OutOfDomain(f64),
    #[error("index {n} invalid for the {family:?} family")]
    BadIndex { family: TrigBasis, n: usize },
    #[error("step function needs at least one piece")]
    EmptyStepFunction,
    #[error("invalid step-function pieces: {0}")]
    BadPieces(String),
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("inverse differentiation undefined on the constant component l_0")]
    ConstantComponent,
}

/// The two weakly-uniformly-dense trigonometric families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrigBasis {
    /// `h_n(t) = √2 sin(πnt)`, `n ≥ 1`.
    Sine,
    /// `l_0 = 1`, `l_n(t) = √2 cos(πnt)`, `n ≥ 1`.
    Cosine,
}

impl TrigBasis {
    /// Evaluate the `n`-th basis element at `t ∈ [0,1]`.
    pub fn eval(self, n: usize, t: f64) -> Result<f64, BasisError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(BasisError::OutOfDomain(t));
        }
        match self {
            TrigBasis::Sine => {
                if n == 0 {
                    return Err(BasisError::BadIndex { family: self, n });
                }
                Ok(SQRT_2 * (PI * n as f64 * t).sin())
            }
            TrigBasis::Cosine => {
                if n == 0 {
                    Ok(1.0)
                } else {
                    Ok(SQRT_2 * (PI * n as f64 * t).cos())
                }
            }
        }
    }
}

pub fn sine(k: usize, t: f64) -> f64 {
    SQRT_2 * (PI * k as f64 * t).sin()
}

pub fn cosine(k: usize, t: f64) -> f64 {
    if k == 0 {
        1.0
    } else {
        SQRT_2 * (PI * k as f64 * t).cos()
    }
}

/// Bounded step function on `[0,1]`: disjoint ordered pieces, zero in gaps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepFn {
    pieces: Vec<(f64, f64, f64)>,
}

impl StepFn {
    pub fn new(pieces: Vec<(f64, f64, f64)>) -> Result<Self, BasisError> {
        if pieces.is_empty() {
            return Err(BasisError::EmptyStepFunction);
        }
        let mut prev_end = 0.0f64;
        for &(a, b, _) in &pieces {
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a >= b {
                return Err(BasisError::BadPieces(format!("bad interval [{a}, {b}]")));
            }
            if a < prev_end {
                return Err(BasisError::BadPieces(format!(
                    "piece [{a}, {b}] overlaps previous end {prev_end}"
                )));
            }
            prev_end = b;
        }
        Ok(StepFn { pieces })
    }

    pub fn indicator(a: f64, b: f64) -> Result<Self, BasisError> {
        StepFn::new(vec![(a, b, 1.0)])
    }

    pub fn constant(v: f64) -> Self {
        StepFn { pieces: vec![(0.0, 1.0, v)] }
    }

    pub fn eval(&self, t: f64) -> f64 {
        for &(a, b, v) in &self.pieces {
            if t >= a && t < b {
                return v;
            }
        }
        // right endpoint belongs to the last piece containing it
        if let Some(&(_, b, v)) = self.pieces.last() {
            if (t - b).abs() < f64::EPSILON {
                return v;
            }
        }
        0.0
    }

    pub fn pieces(&self) -> &[(f64, f64, f64)] {
        &self.pieces
    }
}

/// `∫_a^b cos(w t) dt`.
fn int_cos(w: f64, a: f64, b: f64) -> f64 {
    if w == 0.0 {
        return b - a;
    }
    ((w * b).sin() - (w * a).sin()) / w
}

/// `sin(2πx)` with exact values at quarter-integers. The density integrals
/// evaluate the antiderivative at breakpoints like 1/2 where the exact
/// value is an integer multiple of π; plain `(2πk·t).sin()` would leave
/// `O(k·ε)` residue there and turn exact cancellations into noise.
fn sin_two_pi(x: f64) -> f64 {
    let r = x - x.floor();
    if r == 0.0 || r == 0.5 {
        0.0
    } else if r == 0.25 {
        1.0
    } else if r == 0.75 {
        -1.0
    } else {
        (2.0 * PI * r).sin()
    }
}

/// `∫_a^b cos(2πk t) dt` with the reduced-argument evaluation.
fn int_cos_freq(k: usize, a: f64, b: f64) -> f64 {
    let w = 2.0 * PI * k as f64;
    (sin_two_pi(k as f64 * b) - sin_two_pi(k as f64 * a)) / w
}

/// `∫_a^b t·cos(w t) dt`.
fn int_t_cos(w: f64, a: f64, b: f64) -> f64 {
    if w == 0.0 {
        return 0.5 * (b * b - a * a);
    }
    let f = |t: f64| (w * t).cos() / (w * w) + t * (w * t).sin() / w;
    f(b) - f(a)
}

/// `∫_a^b sin(w t) dt`.
fn int_sin(w: f64, a: f64, b: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    ((w * a).cos() - (w * b).cos()) / w
}

/// `∫_a^b t·sin(w t) dt`.
fn int_t_sin(w: f64, a: f64, b: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let f = |t: f64| (w * t).sin() / (w * w) - t * (w * t).cos() / w;
    f(b) - f(a)
}

/// Oscillatory weight for exact product integration against piecewise-linear
/// interpolants. The closed forms keep quadrature error independent of the
/// oscillation frequency.
#[derive(Clone, Copy, Debug)]
pub enum OscWeight {
    /// `w(t) = 1`.
    One,
    /// `w(t) = h_k(t) = √2 sin(πkt)`.
    SineBasis(usize),
    /// `w(t) = h_k(t)² = 1 − cos(2πkt)`.
    SineBasisSq(usize),
}

/// Panel weights `(a, b)` with `∫_{t0}^{t1} w(t)·L(t) dt = a·L(t0) + b·L(t1)`
/// for linear `L`, exact up to roundoff.
pub fn linear_panel_weights(w: OscWeight, t0: f64, t1: f64) -> (f64, f64) {
    let dt = t1 - t0;
    match w {
        OscWeight::One => (0.5 * dt, 0.5 * dt),
        OscWeight::SineBasis(k) => {
            let om = PI * k as f64;
            let s0 = SQRT_2 * int_sin(om, t0, t1);
            let s1 = SQRT_2 * int_t_sin(om, t0, t1);
            let b = (s1 - t0 * s0) / dt;
            (s0 - b, b)
        }
        OscWeight::SineBasisSq(k) => {
            let om = 2.0 * PI * k as f64;
            let s0 = dt - int_cos(om, t0, t1);
            let s1 = (0.5 * (t1 * t1 - t0 * t0)) - int_t_cos(om, t0, t1);
            let b = (s1 - t0 * s0) / dt;
            (s0 - b, b)
        }
    }
}

/// Path in the Cameron–Martin space `W^{1,2}_0([0,1], R^d)` with finite sine
/// support: `γ^μ(t) = Σ_k c_{k,μ} h_k(t)`. Note `γ(0) = γ(1) = 0` for every
/// such path since `h_k` vanishes at both ends.
#[derive(Clone, Debug, PartialEq)]
pub struct PathCoeffs {
    dim: usize,
    coeffs: BTreeMap<(usize, usize), f64>,
}

impl PathCoeffs {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        PathCoeffs { dim, coeffs: BTreeMap::new() }
    }

    /// Build from `[k, μ, c]` triples; the dimension is the largest `μ`.
    pub fn from_triples(triples: &[(usize, usize, f64)]) -> Self {
        let dim = triples.iter().map(|&(_, mu, _)| mu).max().unwrap_or(1).max(1);
        let mut p = PathCoeffs::new(dim);
        for &(k, mu, c) in triples {
            p.set(k, mu, c);
        }
        p
    }

    pub fn to_triples(&self) -> Vec<(usize, usize, f64)> {
        self.coeffs.iter().map(|(&(k, mu), &c)| (k, mu, c)).collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Re-embed into a space of dimension at least the current one.
    pub fn with_dim(mut self, dim: usize) -> Self {
        assert!(dim >= self.dim);
        self.dim = dim;
        self
    }

    pub fn set(&mut self, k: usize, mu: usize, c: f64) {
        assert!(k >= 1, "sine index starts at 1");
        assert!(mu >= 1 && mu <= self.dim, "coordinate index out of range");
        if c == 0.0 {
            self.coeffs.remove(&(k, mu));
        } else {
            self.coeffs.insert((k, mu), c);
        }
    }

    pub fn get(&self, k: usize, mu: usize) -> f64 {
        self.coeffs.get(&(k, mu)).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.coeffs.iter().map(|(&km, &c)| (km, c))
    }

    pub fn max_frequency(&self) -> usize {
        self.coeffs.keys().map(|&(k, _)| k).max().unwrap_or(0)
    }

    /// `γ(t)`; exact zero at `t = 0`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, BasisError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(BasisError::OutOfDomain(t));
        }
        let mut out = vec![0.0; self.dim];
        for (&(k, mu), &c) in &self.coeffs {
            out[mu - 1] += c * sine(k, t);
        }
        Ok(out)
    }

    /// `γ̇(t)`; uses `ḣ_k = πk l_k`.
    pub fn deriv(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&(k, mu), &c) in &self.coeffs {
            out[mu - 1] += c * PI * k as f64 * cosine(k, t);
        }
        out
    }

    /// Cameron–Martin norm squared `Σ π²k²c²`.
    pub fn w_norm_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(&(k, _), &c)| {
                let pk = PI * k as f64;
                pk * pk * c * c
            })
            .sum()
    }

    /// The differentiation isomorphism `D`: the `h_k ⊗ p_μ` coefficient `c`
    /// maps to the `l_k ⊗ p_μ` coefficient `πk·c`. The image never touches
    /// `l_0`.
    pub fn d_isomorphism(&self) -> BTreeMap<(usize, usize), f64> {
        self.coeffs
            .iter()
            .map(|(&(k, mu), &c)| ((k, mu), PI * k as f64 * c))
            .collect()
    }

    /// Inverse of [`Self::d_isomorphism`], defined only away from `l_0`.
    pub fn d_inverse(
        image: &BTreeMap<(usize, usize), f64>,
        dim: usize,
    ) -> Result<PathCoeffs, BasisError> {
        let mut p = PathCoeffs::new(dim);
        for (&(k, mu), &v) in image {
            if k == 0 {
                return Err(BasisError::ConstantComponent);
            }
            p.set(k, mu, v / (PI * k as f64));
        }
        Ok(p)
    }

    /// Coefficient shift used by directional finite differences.
    pub fn shifted(&self, k: usize, mu: usize, eps: f64) -> PathCoeffs {
        let mut out = self.clone();
        out.set(k, mu, out.get(k, mu) + eps);
        out
    }
}

// Wire format: a bare JSON list of [k, mu, c] triples.
impl Serialize for PathCoeffs {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let triples = self.to_triples();
        let mut seq = serializer.serialize_seq(Some(triples.len()))?;
        for (k, mu, c) in triples {
            seq.serialize_element(&serde_json::json!([k, mu, c]))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for PathCoeffs {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = PathCoeffs;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a list of [k, mu, c] triples")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<PathCoeffs, A::Error> {
                let mut triples = Vec::new();
                while let Some((k, mu, c)) = seq.next_element::<(usize, usize, f64)>()? {
                    triples.push((k, mu, c));
                }
                Ok(PathCoeffs::from_triples(&triples))
            }
        }
        deserializer.deserialize_seq(V)
    }
}

/// Weak-uniform-density defect `∫₀¹ h(t)·((1/n)Σ_{k≤n} e_k²(t) − 1) dt`,
/// evaluated in closed form (no quadrature error).
///
/// For the sine family `h_k² = 1 − cos(2πkt)`; for the cosine family the
/// first `n` elements are `l_0 .. l_{n-1}`.
pub fn weak_density_defect(family: TrigBasis, n: usize, h: &StepFn) -> Result<f64, BasisError> {
    if n == 0 {
        return Err(BasisError::ZeroCount);
    }
    if h.pieces().is_empty() {
        return Err(BasisError::EmptyStepFunction);
    }
    let mut total = 0.0;
    match family {
        TrigBasis::Sine => {
            for k in 1..=n {
                let mut piece_sum = 0.0;
                for &(a, b, v) in h.pieces() {
                    piece_sum += v * int_cos_freq(k, a, b);
                }
                total -= piece_sum;
            }
        }
        TrigBasis::Cosine => {
            for k in 1..n {
                let mut piece_sum = 0.0;
                for &(a, b, v) in h.pieces() {
                    piece_sum += v * int_cos_freq(k, a, b);
                }
                total += piece_sum;
            }
        }
    }
    Ok(total / n as f64)
}
