//! S-transform picture: transforms of chaos vectors, the second-derivative
//! kernel, Laplacians of orders ±1 on transforms, U-functional growth
//! diagnostics, and the isomorphism between the two pictures.
//!
//! The S-transform of a chaos vector is the finite sum
//! `SΦ(ξ) = Σ_n ⟨F^n, ξ^⊗n⟩` (bilinear pairing, no conjugation). Its second
//! derivative at `ξ` is the rank-2 kernel `Σ_n n(n-1)·F^n ⊗̂_(n-2) ξ^⊗(n-2)`,
//! which at truncation is square-integrable with no diagonal part — so the
//! order-1 estimate drains at rate 1/N, while the order `-1` estimate
//! scaled by `π²` reproduces the Laplacian on chaos coefficients term by
//! term (`S(∂²_{p_μ h_k}Ψ)(ξ) = π²k²·⟨SΨ''(ξ) p_μ l_k, p_μ l_k⟩`).

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::cesaro::{self, CesaroSeries};
use crate::chaos::{BasisIndex, ChaosError, ChaosVector, SymTensor};
use crate::gauge::CMat;

#[derive(Debug, Error)]
pub enum HidaError {
    #[error(transparent)]
    Chaos(#[from] ChaosError),
    #[error("order must be -1 or 1, got {0}")]
    UnsupportedOrder(f64),
    #[error("test vector touches index j={j} beyond the truncation j_max={j_max}")]
    SupportOverflow { j: usize, j_max: usize },
    #[error("averaging over {n_dirs} directions exceeds the truncation j_max = {j_max}")]
    DirectionsBeyondTruncation { n_dirs: usize, j_max: usize },
    #[error("nuclear weights must be increasing with λ₁ > 1")]
    BadWeights,
}

/// Finitely supported element of the complexified test space, in the cosine
/// basis `l_j ⊗ p_μ`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TestVector {
    entries: BTreeMap<BasisIndex, Complex64>,
}

impl TestVector {
    pub fn new() -> Self {
        TestVector::default()
    }

    pub fn set(&mut self, ix: BasisIndex, z: Complex64) {
        if z == Complex64::ZERO {
            self.entries.remove(&ix);
        } else {
            self.entries.insert(ix, z);
        }
    }

    pub fn get(&self, ix: BasisIndex) -> Complex64 {
        self.entries.get(&ix).copied().unwrap_or(Complex64::ZERO)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&BasisIndex, &Complex64)> {
        self.entries.iter()
    }

    pub fn support(&self) -> Vec<BasisIndex> {
        self.entries.keys().copied().collect()
    }

    pub fn max_j(&self) -> usize {
        self.entries.keys().map(|ix| ix.j).max().unwrap_or(0)
    }

    pub fn scale(&self, w: Complex64) -> TestVector {
        let entries = self.entries.iter().map(|(k, v)| (*k, v * w)).collect();
        TestVector { entries }
    }

    pub fn add(&self, other: &TestVector) -> TestVector {
        let mut out = self.clone();
        for (k, v) in &other.entries {
            let slot = out.entries.entry(*k).or_insert(Complex64::ZERO);
            *slot += v;
        }
        out
    }

    /// Plain `H`-norm squared `Σ |ξ_α|²`.
    pub fn norm_sq(&self) -> f64 {
        self.entries.values().map(|z| z.norm_sqr()).sum()
    }

    /// Random complex Gaussian test vector over the full index range.
    pub fn random(j_max: usize, dim: usize, amp: f64, seed: u64) -> TestVector {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x853c_49e6_748f_ea9b).wrapping_add(9));
        let normal = StandardNormal;
        let mut xi = TestVector::new();
        for j in 0..=j_max {
            for mu in 1..=dim {
                let re: f64 = normal.sample(&mut rng);
                let im: f64 = normal.sample(&mut rng);
                xi.set(BasisIndex::new(j, mu), Complex64::new(re, im) * amp);
            }
        }
        xi
    }
}

// Wire format: list of [j, mu, re, im].
impl Serialize for TestVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.entries.len()))?;
        for (ix, z) in &self.entries {
            seq.serialize_element(&(ix.j, ix.mu, z.re, z.im))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for TestVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = TestVector;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a list of [j, mu, re, im] quadruples")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<TestVector, A::Error> {
                let mut xi = TestVector::new();
                while let Some((j, mu, re, im)) = seq.next_element::<(usize, usize, f64, f64)>()? {
                    xi.set(BasisIndex::new(j, mu), Complex64::new(re, im));
                }
                Ok(xi)
            }
        }
        d.deserialize_seq(V)
    }
}

/// Weight sequence `1 < λ₁ ≤ λ₂ ≤ …` for the scale-of-spaces norms
/// `|ξ|_p² = Σ λ^{2p} |ξ_α|²`; an explicit prefix is extended by the affine
/// rule `λ_k = intercept + slope·k` (default `1 + k`, which keeps
/// `Σ λ_k^{-2}` finite). Diagnostic role only.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NuclearWeights {
    prefix: Vec<f64>,
    slope: f64,
    intercept: f64,
    pub p: f64,
}

impl NuclearWeights {
    pub fn new(prefix: Vec<f64>, slope: f64, intercept: f64, p: f64) -> Result<Self, HidaError> {
        if slope <= 0.0 {
            // the affine tail must grow, or Σ λ_k^{-2} diverges
            return Err(HidaError::BadWeights);
        }
        let w = NuclearWeights { prefix, slope, intercept, p };
        let mut prev: f64 = 1.0;
        for k in 1..=w.prefix.len().max(4) + 2 {
            let l = w.lambda(k);
            if !(l >= prev && l > 1.0) {
                return Err(HidaError::BadWeights);
            }
            prev = l;
        }
        Ok(w)
    }

    pub fn standard(p: f64) -> Self {
        NuclearWeights { prefix: Vec::new(), slope: 1.0, intercept: 1.0, p }
    }

    /// `λ_k` for `k ≥ 1`.
    pub fn lambda(&self, k: usize) -> f64 {
        assert!(k >= 1);
        self.prefix
            .get(k - 1)
            .copied()
            .unwrap_or(self.intercept + self.slope * k as f64)
    }

    /// `|ξ|_p²` with the cosine index `j` mapped to `λ_{j+1}`.
    pub fn norm_sq(&self, xi: &TestVector) -> f64 {
        xi.entries()
            .map(|(ix, z)| self.lambda(ix.j + 1).powf(2.0 * self.p) * z.norm_sqr())
            .sum()
    }
}

fn check_support(c: &ChaosVector, xi: &TestVector) -> Result<(), HidaError> {
    if let Some(ix) = xi.entries().map(|(ix, _)| *ix).find(|ix| ix.j > c.j_max()) {
        return Err(HidaError::SupportOverflow { j: ix.j, j_max: c.j_max() });
    }
    Ok(())
}

/// `SΦ(ξ) = Σ_n Σ_m F_m √(n!/m!) Π ξ_α^{m_α}` — the transform is evaluated
/// directly over the stored coefficients; exact finite sum.
pub fn s_transform(c: &ChaosVector, xi: &TestVector) -> Result<CMat, HidaError> {
    check_support(c, xi)?;
    let mut out = CMat::zeros(c.n_gauge());
    for n in 0..=c.n_max() {
        for (key, val) in c.level(n).entries() {
            let mut factor = Complex64::ONE;
            let mut mfact = 1.0;
            let mut run = 0usize;
            for (i, ix) in key.iter().enumerate() {
                factor *= xi.get(*ix);
                if i > 0 && key[i - 1] == *ix {
                    run += 1;
                    mfact *= (run + 1) as f64;
                } else {
                    run = 0;
                }
                if factor == Complex64::ZERO {
                    break;
                }
            }
            if factor == Complex64::ZERO && !key.is_empty() {
                continue;
            }
            let nfact: f64 = (1..=n).map(|i| i as f64).product();
            out += &val.scale_c(factor * (nfact / mfact).sqrt());
        }
    }
    Ok(out)
}

/// Canonical coefficients of `ξ^⊗n`: `(ξ^⊗n)_m = √(n!/m!) Π ξ^m`.
pub fn xi_power(xi: &TestVector, n: usize, j_max: usize, dim: usize) -> SymTensor {
    let mut out = SymTensor::new(n, j_max, dim, 1);
    if n == 0 {
        out.add_entry(Vec::new(), CMat::scalar(Complex64::ONE));
        return out;
    }
    let support = xi.support();
    let nfact: f64 = (1..=n).map(|i| i as f64).product();
    // combinations with repetition over the support
    let mut stack: Vec<(usize, Vec<BasisIndex>, Complex64)> =
        vec![(0, Vec::new(), Complex64::ONE)];
    while let Some((start, key, factor)) = stack.pop() {
        if key.len() == n {
            let mut mfact = 1.0;
            let mut run = 1usize;
            for i in 1..key.len() {
                if key[i] == key[i - 1] {
                    run += 1;
                    mfact *= run as f64;
                } else {
                    run = 1;
                }
            }
            out.add_entry(key, CMat::scalar(factor * (nfact / mfact).sqrt()));
            continue;
        }
        for (i, ix) in support.iter().enumerate().skip(start) {
            let mut key2 = key.clone();
            key2.push(*ix);
            stack.push((i, key2, factor * xi.get(*ix)));
        }
    }
    out
}

/// Second derivative of the transform at `ξ`: the rank-2 kernel
/// `Σ_{n≥2} n(n-1)·F^n ⊗̂_(n-2) ξ^⊗(n-2)`. Square-integrable at truncation;
/// no diagonal (bounded) part survives.
pub fn s_second_derivative(c: &ChaosVector, xi: &TestVector) -> Result<SymTensor, HidaError> {
    check_support(c, xi)?;
    let mut out = SymTensor::new(2, c.j_max(), c.dim(), c.n_gauge());
    for n in 2..=c.n_max() {
        let pow = xi_power(xi, n - 2, c.j_max(), c.dim());
        let contracted = c.level(n).contract(&pow)?;
        out = out.add(&contracted.scale((n * (n - 1)) as f64));
    }
    Ok(out)
}

/// Diagonal pairing `⟨K p_μ l_k, p_μ l_k⟩` of a rank-2 kernel.
pub fn kernel_diagonal(kernel: &SymTensor, k: usize, mu: usize) -> CMat {
    let ix = BasisIndex::new(k, mu);
    kernel.get(&[ix, ix])
}

/// Order `s ∈ {-1, 1}` Laplacian estimate of the transform at `ξ`:
/// partials `(1/N) Σ_{k≤N} Σ_μ k^(1-s) ⟨SΦ''(ξ) p_μ l_k, p_μ l_k⟩`.
pub fn hida_levy_laplacian(
    c: &ChaosVector,
    s: f64,
    xi: &TestVector,
    n_dirs: usize,
    tol: f64,
) -> Result<CesaroSeries<CMat>, HidaError> {
    if s != 1.0 && s != -1.0 {
        return Err(HidaError::UnsupportedOrder(s));
    }
    if n_dirs > c.j_max() {
        return Err(HidaError::DirectionsBeyondTruncation { n_dirs, j_max: c.j_max() });
    }
    let kernel = s_second_derivative(c, xi)?;
    cesaro::cesaro_estimate::<CMat, std::convert::Infallible, _>(
        |k, mu| Ok(kernel_diagonal(&kernel, k, mu)),
        s,
        c.dim(),
        n_dirs,
        tol,
    )
    .map_err(|e| match e {
        cesaro::CesaroError::NMaxTooSmall(n) => {
            HidaError::DirectionsBeyondTruncation { n_dirs: n, j_max: c.j_max() }
        }
        _ => unreachable!("infallible oracle"),
    })
}

/// Tail-decay diagnostic for the order-1 estimate. Directions beyond the
/// truncation pair to exact zeros of the finite kernel, which is the honest
/// value of the untruncated transform here, so the average may extend past
/// `j_max`: `N·‖L_N‖` must stay bounded (the vanishing-diagonal property).
#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub n_max: usize,
    pub bound: f64,
    /// `N·‖L_N‖` per `N`.
    pub scaled_norms: Vec<f64>,
    pub growth_detected: bool,
}

pub fn prop1_decay(
    c: &ChaosVector,
    xi: &TestVector,
    n_max: usize,
    tol: f64,
) -> Result<DecayReport, HidaError> {
    let kernel = s_second_derivative(c, xi)?;
    let series = cesaro::cesaro_estimate::<CMat, std::convert::Infallible, _>(
        |k, mu| {
            Ok(if k <= c.j_max() {
                kernel_diagonal(&kernel, k, mu)
            } else {
                CMat::zeros(c.n_gauge())
            })
        },
        1.0,
        c.dim(),
        n_max,
        tol,
    )
    .map_err(|e| match e {
        cesaro::CesaroError::NMaxTooSmall(n) => {
            HidaError::DirectionsBeyondTruncation { n_dirs: n, j_max: c.j_max() }
        }
        _ => unreachable!("infallible oracle"),
    })?;
    let scaled: Vec<f64> = series
        .partials
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1) as f64 * p.frob_norm())
        .collect();
    let bound = scaled.iter().fold(0.0f64, |a, &b| a.max(b));
    // Finite kernels make N·‖L_N‖ eventually constant; growth past the
    // early window means the diagonal failed to vanish.
    let early = scaled
        .iter()
        .take(2 * c.j_max().min(n_max))
        .fold(0.0f64, |a, &b| a.max(b));
    let growth_detected = *scaled.last().unwrap() > early * (1.0 + 1e-9) + 1e-12;
    Ok(DecayReport { n_max, bound, scaled_norms: scaled, growth_detected })
}

/// Both routes of the isomorphism between the pictures, per truncation `N`.
#[derive(Clone, Debug, Serialize)]
pub struct MainTheoremReport {
    /// `S`(Laplacian-on-coefficients partial)`(ξ)` per `N`.
    pub lhs_partials: Vec<CMat>,
    /// `π²·`(order `-1` transform-side partial) per `N`.
    pub rhs_partials: Vec<CMat>,
    pub per_n_gap: Vec<f64>,
    pub max_gap: f64,
    /// Strongest per-direction form: worst gap of
    /// `S(∂²_{p_μh_k}Ψ)(ξ) = π²k²⟨SΨ''(ξ)p_μl_k, p_μl_k⟩` over directions.
    pub per_direction_max_gap: f64,
    pub n_dirs: usize,
}

/// Verify that the Laplacian on chaos coefficients, pushed through the
/// S-transform, equals `π²` times the order `-1` Laplacian on transforms.
pub fn verify_main_theorem(
    c: &ChaosVector,
    xi: &TestVector,
    n_dirs: usize,
    tol: f64,
) -> Result<MainTheoremReport, HidaError> {
    if n_dirs > c.j_max() {
        return Err(HidaError::DirectionsBeyondTruncation { n_dirs, j_max: c.j_max() });
    }
    check_support(c, xi)?;
    let malliavin = c.levy_laplacian(n_dirs, tol)?;
    let lhs: Vec<CMat> = malliavin
        .partials
        .iter()
        .map(|p| s_transform(p, xi))
        .collect::<Result<_, _>>()?;
    let hida = hida_levy_laplacian(c, -1.0, xi, n_dirs, tol)?;
    let pi2 = std::f64::consts::PI.powi(2);
    let rhs: Vec<CMat> = hida.partials.iter().map(|p| p.scale(pi2)).collect();
    let per_n_gap: Vec<f64> =
        lhs.iter().zip(&rhs).map(|(a, b)| (a - b).frob_norm()).collect();
    let max_gap = per_n_gap.iter().fold(0.0f64, |a, &b| a.max(b));

    let kernel = s_second_derivative(c, xi)?;
    let mut per_direction_max_gap = 0.0f64;
    for k in 1..=n_dirs {
        let pk2 = (std::f64::consts::PI * k as f64).powi(2);
        for mu in 1..=c.dim() {
            let lhs_dir = s_transform(&c.second_derivative_direction(k, mu)?, xi)?;
            let rhs_dir = kernel_diagonal(&kernel, k, mu).scale(pk2);
            per_direction_max_gap =
                per_direction_max_gap.max((&lhs_dir - &rhs_dir).frob_norm());
        }
    }
    Ok(MainTheoremReport {
        lhs_partials: lhs,
        rhs_partials: rhs,
        per_n_gap,
        max_gap,
        per_direction_max_gap,
        n_dirs,
    })
}

/// Empirical growth fit `‖SΦ(r·ξ)‖ ≤ C·exp(K·r²|ξ|_p²)` over random test
/// vectors and a scale grid.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub k_hat: f64,
    pub c_hat: f64,
    pub all_finite: bool,
    pub samples: usize,
    pub points: Vec<(f64, f64)>,
}

pub fn u_functional_growth(
    c: &ChaosVector,
    weights: &NuclearWeights,
    samples: usize,
    scale_grid: &[f64],
    seed: u64,
) -> Result<GrowthReport, HidaError> {
    let mut points = Vec::with_capacity(samples * scale_grid.len());
    let mut all_finite = true;
    for i in 0..samples {
        let xi = TestVector::random(c.j_max(), c.dim(), 0.4, seed.wrapping_add(i as u64));
        let base = weights.norm_sq(&xi);
        for &r in scale_grid {
            let scaled = xi.scale(Complex64::new(r, 0.0));
            let v = s_transform(c, &scaled)?;
            let norm = v.frob_norm();
            if !norm.is_finite() {
                all_finite = false;
                continue;
            }
            let x = r * r * base;
            let y = norm.max(1e-300).ln();
            points.push((x, y));
        }
    }
    // least-squares slope for K, then the smallest C making the bound hold
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in &points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let k_hat = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
    let c_hat = points
        .iter()
        .map(|&(x, y)| (y - k_hat * x).exp())
        .fold(0.0f64, f64::max);
    Ok(GrowthReport { k_hat, c_hat, all_finite, samples, points })
}
