//! Truncated symmetric Fock algebra over `H = L²([0,1], R^d)` and the
//! chaos-coefficient picture of Wiener functionals.
//!
//! Tensors are stored in canonical symmetric form: keys are sorted multisets
//! of basis indices `l_j ⊗ p_μ`, and the stored coefficient is taken against
//! the unit-norm symmetrized basis element, so `|F|² = Σ ‖entry‖²_F`. A
//! chaos vector is the finite sequence of levels `F⁰..F^{n_max}`; its Fock
//! norm squared is `Σ_n n!·|F^n|²`, and evaluation in Gaussian coordinates
//! goes through products of probabilists' Hermite polynomials. The
//! directional derivative along a Cameron–Martin path `h` contracts each
//! level with `ḣ` and carries the level multiplicity `n`; applying it twice
//! along `h_k ⊗ p_μ` yields the `π²k²·n(n-1)` second-derivative terms that
//! feed the Cesàro engine.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::basis::PathCoeffs;
use crate::cesaro::{self, CesaroSeries, CesaroValue};
use crate::exec;
use crate::gauge::CMat;

#[derive(Debug, Error)]
pub enum ChaosError {
    #[error("tensor ranks incompatible: expected {expected}, got {got}")]
    RankMismatch { expected: usize, got: usize },
    #[error("matrix-valued × matrix-valued products are unsupported")]
    MatrixMatrixProduct,
    #[error("cannot contract rank {k} out of rank {n}")]
    ContractionRank { n: usize, k: usize },
    #[error("contraction argument must be scalar-valued")]
    NonScalarContraction,
    #[error("direction index {index} exceeds the truncation j_max = {j_max}")]
    TruncationExceeded { index: usize, j_max: usize },
    #[error("averaging over {n_dirs} directions exceeds the truncation j_max = {j_max}")]
    DirectionsBeyondTruncation { n_dirs: usize, j_max: usize },
    #[error("evaluation point misses coordinate (j={j}, mu={mu})")]
    MissingCoordinate { j: usize, mu: usize },
    #[error("tensors live over different truncated spaces")]
    SpaceMismatch,
}

/// Index of the orthonormal basis `l_j ⊗ p_μ` of `H`: cosine index
/// `j ∈ 0..=j_max`, coordinate `μ ∈ 1..=d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisIndex {
    pub j: usize,
    pub mu: usize,
}

impl BasisIndex {
    pub fn new(j: usize, mu: usize) -> Self {
        BasisIndex { j, mu }
    }
}

impl Serialize for BasisIndex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.j, self.mu).serialize(s)
    }
}

impl<'de> Deserialize<'de> for BasisIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (j, mu) = <(usize, usize)>::deserialize(d)?;
        Ok(BasisIndex { j, mu })
    }
}

/// Sorted multiset of basis indices; the canonical tensor key.
pub type MultiIndex = Vec<BasisIndex>;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Multiset factorial `Π (multiplicity!)` of a sorted key.
fn multiset_factorial(key: &[BasisIndex]) -> f64 {
    let mut out = 1.0;
    let mut run = 1usize;
    for i in 1..key.len() {
        if key[i] == key[i - 1] {
            run += 1;
            out *= run as f64;
        } else {
            run = 1;
        }
    }
    out
}

fn merge_sorted(a: &[BasisIndex], b: &[BasisIndex]) -> MultiIndex {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Multiset difference `a − b` when `b ⊆ a`.
fn subtract_sorted(a: &[BasisIndex], b: &[BasisIndex]) -> Option<MultiIndex> {
    let mut out = Vec::with_capacity(a.len() - b.len());
    let mut j = 0;
    for &x in a {
        if j < b.len() && x == b[j] {
            j += 1;
        } else {
            out.push(x);
        }
    }
    (j == b.len()).then_some(out)
}

/// Rank-`n` symmetric tensor in canonical (orthonormal symmetrized basis)
/// coordinates. `n_gauge = 1` means scalar-valued.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensor {
    rank: usize,
    j_max: usize,
    dim: usize,
    n_gauge: usize,
    entries: BTreeMap<MultiIndex, CMat>,
}

impl SymTensor {
    pub fn new(rank: usize, j_max: usize, dim: usize, n_gauge: usize) -> Self {
        SymTensor { rank, j_max, dim, n_gauge, entries: BTreeMap::new() }
    }

    /// Rank-0 tensor holding a single matrix.
    pub fn constant(j_max: usize, dim: usize, value: CMat) -> Self {
        let n_gauge = value.dim();
        let mut t = SymTensor::new(0, j_max, dim, n_gauge);
        t.entries.insert(Vec::new(), value);
        t
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn j_max(&self) -> usize {
        self.j_max
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_gauge(&self) -> usize {
        self.n_gauge
    }

    pub fn is_scalar_valued(&self) -> bool {
        self.n_gauge == 1
    }

    pub fn entries(&self) -> impl Iterator<Item = (&MultiIndex, &CMat)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert (accumulate) a coefficient; the key is sorted internally.
    pub fn add_entry(&mut self, mut key: MultiIndex, value: CMat) {
        assert_eq!(key.len(), self.rank, "key length must equal the rank");
        assert_eq!(value.dim(), self.n_gauge);
        for ix in &key {
            assert!(
                ix.j <= self.j_max && ix.mu >= 1 && ix.mu <= self.dim,
                "basis index out of range"
            );
        }
        key.sort_unstable();
        let slot = self.entries.entry(key).or_insert_with(|| CMat::zeros(self.n_gauge));
        *slot += &value;
    }

    pub fn get(&self, key: &[BasisIndex]) -> CMat {
        let mut sorted = key.to_vec();
        sorted.sort_unstable();
        self.entries.get(&sorted).cloned().unwrap_or_else(|| CMat::zeros(self.n_gauge))
    }

    /// Hilbert norm squared `Σ ‖entry‖²_F` (the canonical storage is
    /// orthonormal).
    pub fn norm_sq(&self) -> f64 {
        self.entries.values().map(|v| v.frob_norm().powi(2)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, w: f64) -> SymTensor {
        let entries = self.entries.iter().map(|(k, v)| (k.clone(), v.scale(w))).collect();
        SymTensor { entries, ..self.clone() }
    }

    pub fn scale_c(&self, w: Complex64) -> SymTensor {
        let entries = self.entries.iter().map(|(k, v)| (k.clone(), v.scale_c(w))).collect();
        SymTensor { entries, ..self.clone() }
    }

    pub fn add(&self, other: &SymTensor) -> SymTensor {
        assert_eq!(self.rank, other.rank);
        let mut out = self.clone();
        for (k, v) in &other.entries {
            let slot = out.entries.entry(k.clone()).or_insert_with(|| CMat::zeros(out.n_gauge));
            *slot += v;
        }
        out
    }

    fn same_space(&self, other: &SymTensor) -> bool {
        self.j_max == other.j_max && self.dim == other.dim
    }

    /// Symmetrized tensor product. At most one factor may be matrix-valued.
    pub fn sym_product(&self, other: &SymTensor) -> Result<SymTensor, ChaosError> {
        if !self.same_space(other) {
            return Err(ChaosError::SpaceMismatch);
        }
        if self.n_gauge > 1 && other.n_gauge > 1 {
            return Err(ChaosError::MatrixMatrixProduct);
        }
        let (n, k) = (self.rank, other.rank);
        let n_gauge = self.n_gauge.max(other.n_gauge);
        let mut out = SymTensor::new(n + k, self.j_max, self.dim, n_gauge);
        let norm_base = factorial(n) * factorial(k) / factorial(n + k);
        for (ka, va) in &self.entries {
            for (kb, vb) in &other.entries {
                let key = merge_sorted(ka, kb);
                let coeff = (norm_base * multiset_factorial(&key)
                    / (multiset_factorial(ka) * multiset_factorial(kb)))
                .sqrt();
                let val = mixed_mul(va, vb).scale(coeff);
                let slot =
                    out.entries.entry(key).or_insert_with(|| CMat::zeros(out.n_gauge));
                *slot += &val;
            }
        }
        Ok(out)
    }

    /// Contraction `F ⊗̂_k f`, the adjoint of tensoring by `f`:
    /// `⟨F, h ⊗̂ f⟩ = ⟨F ⊗̂_k f, h⟩` for every rank `n-k` tensor `h`.
    pub fn contract(&self, f: &SymTensor) -> Result<SymTensor, ChaosError> {
        if !self.same_space(f) {
            return Err(ChaosError::SpaceMismatch);
        }
        if !f.is_scalar_valued() {
            return Err(ChaosError::NonScalarContraction);
        }
        let (n, k) = (self.rank, f.rank);
        if k > n {
            return Err(ChaosError::ContractionRank { n, k });
        }
        let mut out = SymTensor::new(n - k, self.j_max, self.dim, self.n_gauge);
        let norm_base = factorial(n - k) * factorial(k) / factorial(n);
        for (kf, vf) in &f.entries {
            let w = vf[(0, 0)];
            if w == Complex64::ZERO {
                continue;
            }
            for (km, vm) in &self.entries {
                let Some(kh) = subtract_sorted(km, kf) else { continue };
                let coeff = (norm_base * multiset_factorial(km)
                    / (multiset_factorial(&kh) * multiset_factorial(kf)))
                .sqrt();
                let val = vm.scale_c(w * coeff);
                let slot =
                    out.entries.entry(kh).or_insert_with(|| CMat::zeros(out.n_gauge));
                *slot += &val;
            }
        }
        Ok(out)
    }

    /// Bilinear coefficient pairing `Σ_m F_m · g_m` against a scalar-valued
    /// tensor of the same rank (no conjugation).
    pub fn pair_scalar(&self, g: &SymTensor) -> Result<CMat, ChaosError> {
        if !self.same_space(g) {
            return Err(ChaosError::SpaceMismatch);
        }
        if g.rank != self.rank {
            return Err(ChaosError::RankMismatch { expected: self.rank, got: g.rank });
        }
        if !g.is_scalar_valued() {
            return Err(ChaosError::NonScalarContraction);
        }
        let mut out = CMat::zeros(self.n_gauge);
        if self.entries.len() <= g.entries.len() {
            for (k, v) in &self.entries {
                if let Some(w) = g.entries.get(k) {
                    out += &v.scale_c(w[(0, 0)]);
                }
            }
        } else {
            for (k, w) in &g.entries {
                if let Some(v) = self.entries.get(k) {
                    out += &v.scale_c(w[(0, 0)]);
                }
            }
        }
        Ok(out)
    }
}

fn mixed_mul(a: &CMat, b: &CMat) -> CMat {
    match (a.dim(), b.dim()) {
        (_, 1) => a.scale_c(b[(0, 0)]),
        (1, _) => b.scale_c(a[(0, 0)]),
        _ => unreachable!("matrix-matrix products are rejected upstream"),
    }
}

/// Probabilists' Hermite polynomial `He_n(x)`.
pub fn hermite(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => {
            let mut prev = 1.0;
            let mut cur = x;
            for m in 1..n {
                let next = x * cur - m as f64 * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Finite chaos vector: levels `F⁰..F^{n_max}` over one truncated space.
#[derive(Clone, Debug, PartialEq)]
pub struct ChaosVector {
    j_max: usize,
    dim: usize,
    n_gauge: usize,
    levels: Vec<SymTensor>,
}

impl ChaosVector {
    pub fn zero(j_max: usize, dim: usize, n_gauge: usize, n_max: usize) -> Self {
        let levels =
            (0..=n_max).map(|n| SymTensor::new(n, j_max, dim, n_gauge)).collect();
        ChaosVector { j_max, dim, n_gauge, levels }
    }

    pub fn from_levels(levels: Vec<SymTensor>) -> Self {
        assert!(!levels.is_empty());
        let j_max = levels[0].j_max;
        let dim = levels[0].dim;
        let n_gauge = levels[0].n_gauge;
        for (n, lvl) in levels.iter().enumerate() {
            assert_eq!(lvl.rank, n, "level {n} has rank {}", lvl.rank);
            assert!(lvl.j_max == j_max && lvl.dim == dim && lvl.n_gauge == n_gauge);
        }
        ChaosVector { j_max, dim, n_gauge, levels }
    }

    pub fn j_max(&self) -> usize {
        self.j_max
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_gauge(&self) -> usize {
        self.n_gauge
    }

    pub fn n_max(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, n: usize) -> &SymTensor {
        &self.levels[n]
    }

    pub fn level_mut(&mut self, n: usize) -> &mut SymTensor {
        &mut self.levels[n]
    }

    /// Fock norm squared `Σ_n n!·|F^n|²`.
    pub fn fock_norm_sq(&self) -> f64 {
        self.levels
            .iter()
            .enumerate()
            .map(|(n, lvl)| factorial(n) * lvl.norm_sq())
            .sum()
    }

    /// Singleton chaos `I₁(f)` from a scalar rank-1 coefficient list.
    pub fn first_order(
        j_max: usize,
        dim: usize,
        coeffs: &[(BasisIndex, Complex64)],
        n_max: usize,
    ) -> Self {
        let mut c = ChaosVector::zero(j_max, dim, 1, n_max);
        for &(ix, z) in coeffs {
            c.levels[1].add_entry(vec![ix], CMat::scalar(z));
        }
        c
    }

    /// The diagonal second-level vector with `c_k = 1/(2π²k²)` on
    /// `(l_k ⊗ p_1)^⊗2`, `k = 1..=j_max`: each direction `(k, 1)` then
    /// contributes exactly `π²k²·2·c_k = 1` to the Laplacian.
    pub fn diagonal_inverse_square(j_max: usize, dim: usize, n_max: usize) -> Self {
        assert!(n_max >= 2);
        let mut c = ChaosVector::zero(j_max, dim, 1, n_max);
        let pi2 = std::f64::consts::PI.powi(2);
        for k in 1..=j_max {
            let ix = BasisIndex::new(k, 1);
            let val = 1.0 / (2.0 * pi2 * (k * k) as f64);
            c.levels[2].add_entry(vec![ix, ix], CMat::scalar(Complex64::new(val, 0.0)));
        }
        c
    }

    /// Random sparse chaos vector; entries `N(0, amp^(2n))` on uniformly
    /// sampled multisets, `per_level` keys per level.
    pub fn random_sparse(
        j_max: usize,
        dim: usize,
        n_gauge: usize,
        n_max: usize,
        per_level: usize,
        amp: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(3));
        let mut c = ChaosVector::zero(j_max, dim, n_gauge, n_max);
        let normal = StandardNormal;
        for n in 0..=n_max {
            let scale = amp.powi(n as i32);
            let count = if n == 0 { 1 } else { per_level };
            for _ in 0..count {
                let mut key = Vec::with_capacity(n);
                for _ in 0..n {
                    use rand::Rng;
                    let j = rng.random_range(0..=j_max);
                    let mu = rng.random_range(1..=dim);
                    key.push(BasisIndex::new(j, mu));
                }
                let mut m = CMat::zeros(n_gauge);
                for i in 0..n_gauge {
                    for jj in 0..n_gauge {
                        let re: f64 = normal.sample(&mut rng);
                        let im: f64 = normal.sample(&mut rng);
                        m[(i, jj)] = Complex64::new(re, im) * scale;
                    }
                }
                c.levels[n].add_entry(key, m);
            }
        }
        c
    }

    fn dotted_direction(&self, h: &PathCoeffs) -> Result<SymTensor, ChaosError> {
        let mut hdot = SymTensor::new(1, self.j_max, self.dim, 1);
        for ((k, mu), coef) in h.support() {
            if k > self.j_max {
                return Err(ChaosError::TruncationExceeded { index: k, j_max: self.j_max });
            }
            let val = std::f64::consts::PI * k as f64 * coef;
            hdot.add_entry(
                vec![BasisIndex::new(k, mu)],
                CMat::scalar(Complex64::new(val, 0.0)),
            );
        }
        Ok(hdot)
    }

    /// Directional (Cameron–Martin) derivative along `h`: level `n-1` of the
    /// output receives `n · (F^n ⊗̂₁ ḣ)`, with `ḣ = Σ πk c_{k,μ} l_k ⊗ p_μ`.
    pub fn malliavin_derivative(&self, h: &PathCoeffs) -> Result<ChaosVector, ChaosError> {
        let hdot = self.dotted_direction(h)?;
        let mut out = ChaosVector::zero(self.j_max, self.dim, self.n_gauge, self.n_max());
        for n in 1..=self.n_max() {
            let contracted = self.levels[n].contract(&hdot)?;
            out.levels[n - 1] = contracted.scale(n as f64);
        }
        Ok(out)
    }

    /// Second derivative along the single direction `h_k ⊗ p_μ`:
    /// `π²k² Σ_n n(n-1)·I_{n-2}(F^n ⊗̂₂ (l_k p_μ)⊗(l_k p_μ))`.
    pub fn second_derivative_direction(
        &self,
        k: usize,
        mu: usize,
    ) -> Result<ChaosVector, ChaosError> {
        if k == 0 || k > self.j_max {
            return Err(ChaosError::TruncationExceeded { index: k, j_max: self.j_max });
        }
        let ix = BasisIndex::new(k, mu);
        let mut diag = SymTensor::new(2, self.j_max, self.dim, 1);
        diag.add_entry(vec![ix, ix], CMat::scalar(Complex64::ONE));
        let pk2 = (std::f64::consts::PI * k as f64).powi(2);
        let mut out = ChaosVector::zero(self.j_max, self.dim, self.n_gauge, self.n_max());
        for n in 2..=self.n_max() {
            let contracted = self.levels[n].contract(&diag)?;
            out.levels[n - 2] = contracted.scale(pk2 * (n * (n - 1)) as f64);
        }
        Ok(out)
    }

    /// Cesàro series of the Laplacian on chaos coefficients: partials are
    /// chaos vectors, convergence is measured in the Fock norm. Directions
    /// beyond the truncation are excluded (`n_dirs ≤ j_max`), since they
    /// would contribute exact zeros and spuriously drive estimates to 0.
    pub fn levy_laplacian(
        &self,
        n_dirs: usize,
        tol: f64,
    ) -> Result<CesaroSeries<ChaosVector>, ChaosError> {
        if n_dirs > self.j_max {
            return Err(ChaosError::DirectionsBeyondTruncation { n_dirs, j_max: self.j_max });
        }
        cesaro::cesaro_estimate(
            |k, mu| self.second_derivative_direction(k, mu),
            1.0,
            self.dim,
            n_dirs,
            tol,
        )
        .map_err(|e| match e {
            cesaro::CesaroError::Oracle { source, .. } => source,
            cesaro::CesaroError::NMaxTooSmall(n) => {
                ChaosError::DirectionsBeyondTruncation { n_dirs: n, j_max: self.j_max }
            }
            _ => unreachable!("order is fixed at 1"),
        })
    }

    /// Evaluate at Gaussian coordinates through Hermite products:
    /// `Σ_n Σ_m F_m √(n!/m!) Π_α He_{m_α}(ζ_α)`.
    pub fn evaluate(&self, zeta: &BTreeMap<BasisIndex, f64>) -> Result<CMat, ChaosError> {
        let mut out = CMat::zeros(self.n_gauge);
        for (n, lvl) in self.levels.iter().enumerate() {
            for (key, val) in &lvl.entries {
                let mut prod = 1.0;
                let mut i = 0;
                while i < key.len() {
                    let ix = key[i];
                    let mut mult = 1;
                    while i + mult < key.len() && key[i + mult] == ix {
                        mult += 1;
                    }
                    let z = *zeta.get(&ix).ok_or(ChaosError::MissingCoordinate {
                        j: ix.j,
                        mu: ix.mu,
                    })?;
                    prod *= hermite(mult, z);
                    i += mult;
                }
                let coeff = (factorial(n) / multiset_factorial(key)).sqrt();
                out += &val.scale(coeff * prod);
            }
        }
        Ok(out)
    }

    /// Every basis index with a nonzero coefficient somewhere.
    pub fn active_indices(&self) -> Vec<BasisIndex> {
        let mut set = std::collections::BTreeSet::new();
        for lvl in &self.levels {
            for key in lvl.entries.keys() {
                set.extend(key.iter().copied());
            }
        }
        set.into_iter().collect()
    }
}

impl CesaroValue for ChaosVector {
    fn zeros_like(&self) -> Self {
        ChaosVector::zero(self.j_max, self.dim, self.n_gauge, self.n_max())
    }
    fn add(&self, other: &Self) -> Self {
        assert!(self.j_max == other.j_max && self.n_max() == other.n_max());
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| a.add(b))
            .collect();
        ChaosVector { j_max: self.j_max, dim: self.dim, n_gauge: self.n_gauge, levels }
    }
    fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }
    fn scale(&self, w: f64) -> Self {
        let levels = self.levels.iter().map(|l| l.scale(w)).collect();
        ChaosVector { j_max: self.j_max, dim: self.dim, n_gauge: self.n_gauge, levels }
    }
    fn norm(&self) -> f64 {
        self.fock_norm_sq().sqrt()
    }
    fn scalar_repr(&self) -> (f64, f64) {
        (self.fock_norm_sq().sqrt(), 0.0)
    }
}

/// Monte Carlo check of the Fock-norm isometry under Hermite evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct ParsevalReport {
    pub samples: usize,
    pub empirical_mean: f64,
    pub expected: f64,
    pub std_err: f64,
}

impl ParsevalReport {
    pub fn within(&self, n_sigma: f64) -> bool {
        (self.empirical_mean - self.expected).abs() <= n_sigma * self.std_err
    }
}

/// Estimate `E ‖Ψ(ζ)‖²_F` over standard-normal coordinates and compare with
/// `Σ n!·|F^n|²`. Samples are drawn in fixed-size blocks with per-block RNG
/// streams, so the result is independent of the execution mode.
pub fn parseval_mc(c: &ChaosVector, samples: usize, seed: u64) -> ParsevalReport {
    let indices = c.active_indices();
    const BLOCK: usize = 1024;
    let blocks = samples.div_ceil(BLOCK);
    let partial: Vec<(f64, f64)> = exec::map_indexed(blocks, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(b as u64),
        );
        let normal = StandardNormal;
        let count = BLOCK.min(samples - b * BLOCK);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut zeta = BTreeMap::new();
        for _ in 0..count {
            for ix in &indices {
                let z: f64 = normal.sample(&mut rng);
                zeta.insert(*ix, z);
            }
            let v = c.evaluate(&zeta).expect("coordinates cover active indices");
            let nsq = v.frob_norm().powi(2);
            sum += nsq;
            sum_sq += nsq * nsq;
        }
        (sum, sum_sq)
    });
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (s, s2) in &partial {
        sum += s;
        sum_sq += s2;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    ParsevalReport {
        samples,
        empirical_mean: mean,
        expected: c.fock_norm_sq(),
        std_err: (var / n).sqrt(),
    }
}

// ---- wire format ----
// {"J": .., "d": .., "N": .., "levels":[{"rank":n, "entries":[{"multiset":
// [[j,mu]..], "value":[[re,im]..]}]}]}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    multiset: Vec<BasisIndex>,
    value: CMat,
}

#[derive(Serialize, Deserialize)]
struct LevelJson {
    rank: usize,
    entries: Vec<EntryJson>,
}

#[derive(Serialize, Deserialize)]
struct ChaosJson {
    #[serde(rename = "J")]
    j: usize,
    d: usize,
    #[serde(rename = "N")]
    n: usize,
    levels: Vec<LevelJson>,
}

impl Serialize for ChaosVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let levels = self
            .levels
            .iter()
            .map(|lvl| LevelJson {
                rank: lvl.rank,
                entries: lvl
                    .entries
                    .iter()
                    .map(|(k, v)| EntryJson { multiset: k.clone(), value: v.clone() })
                    .collect(),
            })
            .collect();
        ChaosJson { j: self.j_max, d: self.dim, n: self.n_gauge, levels }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChaosVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let js = ChaosJson::deserialize(d)?;
        let n_max = js.levels.len().saturating_sub(1);
        let mut c = ChaosVector::zero(js.j, js.d, js.n, n_max);
        for lvl in js.levels {
            for e in lvl.entries {
                c.levels[lvl.rank].add_entry(e.multiset, e.value);
            }
        }
        Ok(c)
    }
}

impl fmt::Display for ChaosVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ChaosVector(j_max={}, d={}, N={}, levels={}, fock_norm={:.4e})",
            self.j_max,
            self.dim,
            self.n_gauge,
            self.levels.len(),
            self.fock_norm_sq().sqrt()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_rank1(j_max: usize, dim: usize, ix: BasisIndex) -> SymTensor {
        let mut t = SymTensor::new(1, j_max, dim, 1);
        t.add_entry(vec![ix], CMat::scalar(Complex64::ONE));
        t
    }

    #[test]
    fn hermite_values() {
        // He₂ = x²-1, He₃ = x³-3x, He₄ = x⁴-6x²+3
        for x in [-1.3, 0.0, 0.7, 2.1] {
            assert!((hermite(2, x) - (x * x - 1.0)).abs() < 1e-13);
            assert!((hermite(3, x) - (x.powi(3) - 3.0 * x)).abs() < 1e-13);
            assert!((hermite(4, x) - (x.powi(4) - 6.0 * x * x + 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn sym_product_repeated_index() {
        let e = unit_rank1(4, 2, BasisIndex::new(1, 1));
        let ee = e.sym_product(&e).unwrap();
        assert_eq!(ee.len(), 1);
        let v = ee.get(&[BasisIndex::new(1, 1), BasisIndex::new(1, 1)]);
        assert!((v[(0, 0)] - Complex64::ONE).norm() < 1e-15);
    }

    #[test]
    fn sym_product_distinct_indices() {
        // sym(e₁⊗e₂) has Hilbert norm 1/√2, so the canonical coefficient on
        // the unit-norm basis element {e₁,e₂} is 1/√2.
        let e1 = unit_rank1(4, 2, BasisIndex::new(1, 1));
        let e2 = unit_rank1(4, 2, BasisIndex::new(2, 1));
        let t = e1.sym_product(&e2).unwrap();
        let v = t.get(&[BasisIndex::new(1, 1), BasisIndex::new(2, 1)]);
        assert!((v[(0, 0)].re - 1.0 / 2.0_f64.sqrt()).abs() < 1e-15);
        assert!(t.norm() <= 1.0 + 1e-15);
    }

    #[test]
    fn product_norm_bound_random() {
        for seed in 0..20u64 {
            let a = ChaosVector::random_sparse(4, 2, 1, 3, 6, 0.8, seed);
            let b = ChaosVector::random_sparse(4, 2, 1, 3, 6, 0.8, seed + 100);
            for (na, nb) in [(1usize, 1usize), (2, 1), (2, 2), (3, 1)] {
                let f = a.level(na);
                let g = b.level(nb);
                let p = f.sym_product(g).unwrap();
                assert!(
                    p.norm() <= f.norm() * g.norm() + 1e-12,
                    "seed {seed} ranks ({na},{nb}): {} > {}",
                    p.norm(),
                    f.norm() * g.norm()
                );
            }
        }
    }

    #[test]
    fn contraction_examples() {
        let e = unit_rank1(4, 2, BasisIndex::new(1, 1));
        let ee = e.sym_product(&e).unwrap();
        let back = ee.contract(&e).unwrap();
        assert!((back.get(&[BasisIndex::new(1, 1)])[(0, 0)] - Complex64::ONE).norm() < 1e-15);

        let e2 = unit_rank1(4, 2, BasisIndex::new(2, 1));
        let zero = ee.contract(&e2).unwrap();
        assert!(zero.norm() < 1e-15);
    }

    #[test]
    fn contraction_adjointness_random() {
        // ⟨F, h ⊗̂ f⟩ = ⟨F ⊗̂₁ f, h⟩ via two separate code paths.
        for seed in 0..10u64 {
            let f3 = ChaosVector::random_sparse(3, 2, 1, 3, 10, 1.0, seed).level(3).clone();
            let f1 = ChaosVector::random_sparse(3, 2, 1, 1, 5, 1.0, seed + 57).level(1).clone();
            for hseed in 0..20u64 {
                let h = ChaosVector::random_sparse(3, 2, 1, 2, 8, 1.0, hseed + 999)
                    .level(2)
                    .clone();
                let lhs = f3.pair_scalar(&h.sym_product(&f1).unwrap()).unwrap();
                let rhs = f3.contract(&f1).unwrap().pair_scalar(&h).unwrap();
                assert!(
                    (&lhs - &rhs).frob_norm() <= 1e-12 * (1.0 + lhs.frob_norm()),
                    "seed ({seed},{hseed})"
                );
            }
        }
    }

    #[test]
    fn contraction_norm_bound() {
        for seed in 40..60u64 {
            let c = ChaosVector::random_sparse(4, 2, 1, 4, 8, 0.9, seed);
            for (n, k) in [(2usize, 1usize), (3, 1), (3, 2), (4, 2)] {
                let f = c.level(n);
                let g = ChaosVector::random_sparse(4, 2, 1, k, 6, 0.9, seed + 7)
                    .level(k)
                    .clone();
                let r = f.contract(&g).unwrap();
                assert!(r.norm() <= f.norm() * g.norm() + 1e-12);
            }
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let mut c = ChaosVector::zero(4, 2, 1, 3);
        c.level_mut(0).add_entry(vec![], CMat::scalar(cx(2.0, -1.0)));
        let mut h = PathCoeffs::new(2);
        h.set(1, 1, 1.0);
        let d = c.malliavin_derivative(&h).unwrap();
        assert!(d.fock_norm_sq() < 1e-30);
    }

    #[test]
    fn derivative_first_order_pairing() {
        // Ψ = I₁(l₁⊗p₁), h = h₁⊗p₁: ∂_hΨ = ⟨l₁, ḣ₁⟩ = π.
        let c = ChaosVector::first_order(
            4,
            2,
            &[(BasisIndex::new(1, 1), Complex64::ONE)],
            3,
        );
        let mut h = PathCoeffs::new(2);
        h.set(1, 1, 1.0);
        let d = c.malliavin_derivative(&h).unwrap();
        let v = d.level(0).get(&[]);
        assert!((v[(0, 0)] - cx(PI, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn derivative_truncation_guard() {
        let c = ChaosVector::zero(4, 2, 1, 2);
        let mut h = PathCoeffs::new(2);
        h.set(9, 1, 1.0);
        assert!(matches!(
            c.malliavin_derivative(&h),
            Err(ChaosError::TruncationExceeded { index: 9, j_max: 4 })
        ));
    }

    #[test]
    fn iterated_derivative_matches_direction_formula() {
        // Ψ = I₂(f ⊗̂ f) with f = l₁⊗p₁: ∂²_h Ψ = 2π² for h = h₁⊗p₁, both
        // by iterating the first derivative and by the direction formula.
        let f = unit_rank1(4, 2, BasisIndex::new(1, 1));
        let ff = f.sym_product(&f).unwrap();
        let mut c = ChaosVector::zero(4, 2, 1, 2);
        *c.level_mut(2) = ff;
        let mut h = PathCoeffs::new(2);
        h.set(1, 1, 1.0);
        let twice = c
            .malliavin_derivative(&h)
            .unwrap()
            .malliavin_derivative(&h)
            .unwrap();
        let expect = 2.0 * PI * PI;
        assert!((twice.level(0).get(&[])[(0, 0)] - cx(expect, 0.0)).norm() < 1e-12);

        let direct = c.second_derivative_direction(1, 1).unwrap();
        assert!((direct.level(0).get(&[])[(0, 0)] - cx(expect, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn derivative_commutes_with_evaluation() {
        // evaluate(∂_h c)(ζ) equals the directional derivative of
        // evaluate(c) along the coordinate vector of ḣ — the test that pins
        // the multiplicity convention.
        let c = ChaosVector::random_sparse(3, 2, 1, 4, 6, 0.7, 11);
        let mut h = PathCoeffs::new(2);
        h.set(1, 1, 0.8);
        h.set(2, 2, -0.4);
        let dc = c.malliavin_derivative(&h).unwrap();

        let mut zeta = BTreeMap::new();
        let mut t: f64 = 0.3;
        for j in 0..=3usize {
            for mu in 1..=2usize {
                zeta.insert(BasisIndex::new(j, mu), (1.3 * t).sin() + 0.2);
                t += 0.7;
            }
        }
        let analytic = dc.evaluate(&zeta).unwrap();

        let eps = 1e-5;
        let shift = |sign: f64| {
            let mut z = zeta.clone();
            for ((k, mu), coef) in h.support() {
                let v = z.get_mut(&BasisIndex::new(k, mu)).unwrap();
                *v += sign * eps * PI * k as f64 * coef;
            }
            c.evaluate(&z).unwrap()
        };
        let fd = (&shift(1.0) - &shift(-1.0)).scale(0.5 / eps);
        assert!(
            (&fd - &analytic).frob_norm() <= 1e-6 * (1.0 + analytic.frob_norm()),
            "fd {:?} vs analytic {:?}",
            fd,
            analytic
        );
    }

    #[test]
    fn laplacian_diagonal_example() {
        let c = ChaosVector::diagonal_inverse_square(16, 2, 4);
        let series = c.levy_laplacian(16, 1e-6).unwrap();
        for (i, p) in series.partials.iter().enumerate() {
            let v = p.level(0).get(&[]);
            assert!(
                (v[(0, 0)] - Complex64::ONE).norm() <= 1e-12,
                "N={}: {:?}",
                i + 1,
                v
            );
        }
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let mut c = ChaosVector::zero(8, 2, 1, 3);
        c.level_mut(0).add_entry(vec![], CMat::scalar(cx(1.0, 2.0)));
        let series = c.levy_laplacian(8, 1e-10).unwrap();
        assert!(series.last().fock_norm_sq() < 1e-30);
    }

    #[test]
    fn laplacian_finite_support_decay() {
        // Support on k ≤ 3 only: partials for N ≥ 4 scale as (fixed sum)/N.
        let mut c = ChaosVector::zero(12, 1, 1, 2);
        for k in 1..=3usize {
            let ix = BasisIndex::new(k, 1);
            c.level_mut(2).add_entry(vec![ix, ix], CMat::scalar(cx(0.1 * k as f64, 0.0)));
        }
        let series = c.levy_laplacian(12, 1e-9).unwrap();
        let s3 = series.partials[2].scale(3.0);
        for n in 4..=12usize {
            let expect = s3.scale(1.0 / n as f64);
            let diff = series.partials[n - 1].sub(&expect);
            assert!(diff.fock_norm_sq().sqrt() < 1e-12);
        }
    }

    #[test]
    fn laplacian_direction_window_guard() {
        let c = ChaosVector::zero(4, 1, 1, 2);
        assert!(matches!(
            c.levy_laplacian(9, 1e-6),
            Err(ChaosError::DirectionsBeyondTruncation { n_dirs: 9, j_max: 4 })
        ));
    }

    #[test]
    fn evaluation_examples() {
        let c = ChaosVector::first_order(
            3,
            1,
            &[(BasisIndex::new(2, 1), Complex64::ONE)],
            2,
        );
        let mut zeta = BTreeMap::new();
        zeta.insert(BasisIndex::new(2, 1), 1.7);
        let v = c.evaluate(&zeta).unwrap();
        assert!((v[(0, 0)] - cx(1.7, 0.0)).norm() < 1e-15);

        // I₂(e ⊗̂ e) evaluates to He₂(x) = x² - 1.
        let e = unit_rank1(3, 1, BasisIndex::new(2, 1));
        let mut c2 = ChaosVector::zero(3, 1, 1, 2);
        *c2.level_mut(2) = e.sym_product(&e).unwrap();
        let v = c2.evaluate(&zeta).unwrap();
        assert!((v[(0, 0)] - cx(1.7 * 1.7 - 1.0, 0.0)).norm() < 1e-14);

        let missing = ChaosVector::first_order(
            3,
            1,
            &[(BasisIndex::new(1, 1), Complex64::ONE)],
            2,
        );
        assert!(matches!(
            missing.evaluate(&zeta),
            Err(ChaosError::MissingCoordinate { j: 1, mu: 1 })
        ));
    }

    #[test]
    fn parseval_monte_carlo() {
        let c = ChaosVector::random_sparse(4, 2, 1, 4, 5, 0.6, 21);
        let rep = parseval_mc(&c, 20_000, 77);
        assert!(
            rep.within(3.0),
            "mean {} vs expected {} (SE {})",
            rep.empirical_mean,
            rep.expected,
            rep.std_err
        );
    }

    #[test]
    fn fock_norm_weights() {
        let mut c = ChaosVector::zero(3, 1, 1, 3);
        let ix = BasisIndex::new(1, 1);
        c.level_mut(0).add_entry(vec![], CMat::scalar(cx(2.0, 0.0)));
        c.level_mut(3).add_entry(vec![ix, ix, ix], CMat::scalar(cx(0.5, 0.0)));
        // 0!·4 + 3!·0.25
        assert!((c.fock_norm_sq() - (4.0 + 6.0 * 0.25)).abs() < 1e-14);
    }

    #[test]
    fn chaos_json_schema_roundtrip() {
        let c = ChaosVector::random_sparse(3, 2, 1, 2, 4, 0.8, 5);
        let js = serde_json::to_string(&c).unwrap();
        assert!(js.contains("\"J\":3"));
        assert!(js.contains("\"d\":2"));
        assert!(js.contains("\"N\":1"));
        assert!(js.contains("\"multiset\""));
        let back: ChaosVector = serde_json::from_str(&js).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn matrix_matrix_product_rejected() {
        let mut a = SymTensor::new(1, 2, 1, 2);
        a.add_entry(vec![BasisIndex::new(1, 1)], CMat::identity(2));
        assert!(matches!(
            a.sym_product(&a),
            Err(ChaosError::MatrixMatrixProduct)
        ));
    }
}
