//! Raw-coordinate reference implementations for the canonical symmetric
//! storage: full multi-index arrays, permutation-averaged symmetrization,
//! plain slot contraction. Deliberately naive and independent of the
//! canonical-coefficient code paths it validates.

use num_complex::Complex64;
use levylap::chaos::{BasisIndex, SymTensor};

/// Dense rank-`n` array over the full basis list.
#[derive(Clone, Debug)]
pub struct RawTensor {
    pub rank: usize,
    pub basis: Vec<BasisIndex>,
    pub data: Vec<Complex64>,
}

pub fn basis_list(j_max: usize, dim: usize) -> Vec<BasisIndex> {
    let mut out = Vec::new();
    for j in 0..=j_max {
        for mu in 1..=dim {
            out.push(BasisIndex::new(j, mu));
        }
    }
    out
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn multiset_fact(key: &[usize]) -> f64 {
    let mut sorted = key.to_vec();
    sorted.sort_unstable();
    let mut out = 1.0;
    let mut run = 1;
    for i in 1..sorted.len() {
        if sorted[i] == sorted[i - 1] {
            run += 1;
            out *= run as f64;
        } else {
            run = 1;
        }
    }
    out
}

impl RawTensor {
    pub fn zeros(rank: usize, basis: Vec<BasisIndex>) -> Self {
        let len = basis.len().pow(rank as u32);
        RawTensor { rank, basis, data: vec![Complex64::ZERO; len] }
    }

    fn b(&self) -> usize {
        self.basis.len()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.b() + i)
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Iterate all index tuples of the given rank.
    fn tuples(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for _ in 0..self.rank {
            let mut next = Vec::with_capacity(out.len() * self.b());
            for t in &out {
                for i in 0..self.b() {
                    let mut t2 = t.clone();
                    t2.push(i);
                    next.push(t2);
                }
            }
            out = next;
        }
        out
    }

    /// Average over all permutations of the slots.
    pub fn symmetrized(&self) -> RawTensor {
        let mut out = RawTensor::zeros(self.rank, self.basis.clone());
        let perms = permutations(self.rank);
        let w = 1.0 / perms.len() as f64;
        for t in self.tuples() {
            let mut acc = Complex64::ZERO;
            for p in &perms {
                let permuted: Vec<usize> = p.iter().map(|&s| t[s]).collect();
                acc += self.data[self.offset(&permuted)];
            }
            let o = out.offset(&t);
            out.data[o] = acc * w;
        }
        out
    }

    /// Plain tensor product (no symmetrization).
    pub fn product(&self, other: &RawTensor) -> RawTensor {
        assert_eq!(self.basis, other.basis);
        let mut out = RawTensor::zeros(self.rank + other.rank, self.basis.clone());
        for (i, a) in self.data.iter().enumerate() {
            if *a == Complex64::ZERO {
                continue;
            }
            for (j, b) in other.data.iter().enumerate() {
                out.data[i * other.data.len() + j] = a * b;
            }
        }
        out
    }

    /// Contract the last `k` slots against a rank-`k` tensor (plain sums).
    pub fn contract_last(&self, f: &RawTensor) -> RawTensor {
        assert_eq!(self.basis, f.basis);
        let k = f.rank;
        assert!(k <= self.rank);
        let keep = self.rank - k;
        let stride = self.b().pow(k as u32);
        let mut out = RawTensor::zeros(keep, self.basis.clone());
        for outer in 0..self.b().pow(keep as u32) {
            let mut acc = Complex64::ZERO;
            for inner in 0..stride {
                acc += self.data[outer * stride + inner] * f.data[inner];
            }
            out.data[outer] = acc;
        }
        out
    }

    /// Bilinear pairing `Σ a·b` (no conjugation).
    pub fn pair(&self, other: &RawTensor) -> Complex64 {
        assert_eq!(self.rank, other.rank);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let smaller = permutations(n - 1);
    for p in smaller {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Expand a scalar-valued canonical tensor to raw coordinates: the entry on
/// a multiset `m` spreads `value·√(m!/n!)` over each distinct arrangement.
pub fn to_raw(t: &SymTensor, basis: &[BasisIndex]) -> RawTensor {
    assert!(t.is_scalar_valued(), "raw oracle covers scalar-valued tensors");
    let pos: std::collections::BTreeMap<BasisIndex, usize> =
        basis.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let mut out = RawTensor::zeros(t.rank(), basis.to_vec());
    for (key, val) in t.entries() {
        let z = val.entries()[0];
        let idx: Vec<usize> = key.iter().map(|ix| pos[ix]).collect();
        let spread = z * (multiset_fact(&idx) / fact(t.rank())).sqrt();
        for arrangement in distinct_permutations(&idx) {
            let o = out.offset(&arrangement);
            out.data[o] = spread;
        }
    }
    out
}

/// Read a symmetric raw tensor back into canonical coordinates.
pub fn to_canonical(raw: &RawTensor, j_max: usize, dim: usize) -> SymTensor {
    let mut out = SymTensor::new(raw.rank, j_max, dim, 1);
    for key_idx in multisets(raw.basis.len(), raw.rank) {
        let mut acc = Complex64::ZERO;
        for arrangement in distinct_permutations(&key_idx) {
            acc += raw.data[raw.offset(&arrangement)];
        }
        let coeff = acc * (multiset_fact(&key_idx) / fact(raw.rank)).sqrt();
        if coeff != Complex64::ZERO {
            let key: Vec<BasisIndex> = key_idx.iter().map(|&i| raw.basis[i]).collect();
            out.add_entry(key, levylap::gauge::CMat::scalar(coeff));
        }
    }
    out
}

fn distinct_permutations(idx: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for p in permutations(idx.len()) {
        let arr: Vec<usize> = p.iter().map(|&s| idx[s]).collect();
        if seen.insert(arr.clone()) {
            out.push(arr);
        }
    }
    out
}

/// All sorted multisets of the given size over `0..b`.
fn multisets(b: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..size {
        let mut next = Vec::new();
        for m in &out {
            let lo = m.last().copied().unwrap_or(0);
            for i in lo..b {
                let mut m2 = m.clone();
                m2.push(i);
                next.push(m2);
            }
        }
        out = next;
    }
    out
}
