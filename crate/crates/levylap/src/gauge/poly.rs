//! Multivariate polynomials with matrix coefficients.
//!
//! Connections and curvature live here so that first and second partial
//! derivatives are exact; identities at theorem level would otherwise be
//! drowned in finite-difference noise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cmat::CMat;

/// Polynomial map `R^dim_in -> M_N(C)`, stored as monomial exponent vectors
/// with matrix coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatPoly {
    dim_in: usize,
    dim_mat: usize,
    terms: BTreeMap<Vec<u32>, CMat>,
}

impl MatPoly {
    pub fn zero(dim_in: usize, dim_mat: usize) -> Self {
        MatPoly { dim_in, dim_mat, terms: BTreeMap::new() }
    }

    pub fn constant(dim_in: usize, coeff: CMat) -> Self {
        let mut p = MatPoly::zero(dim_in, coeff.dim());
        p.add_term(vec![0; dim_in], coeff);
        p
    }

    /// Single monomial `coeff · x^exps`.
    pub fn monomial(dim_in: usize, exps: Vec<u32>, coeff: CMat) -> Self {
        assert_eq!(exps.len(), dim_in);
        let mut p = MatPoly::zero(dim_in, coeff.dim());
        p.add_term(exps, coeff);
        p
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_mat(&self) -> usize {
        self.dim_mat
    }

    pub fn add_term(&mut self, exps: Vec<u32>, coeff: CMat) {
        assert_eq!(exps.len(), self.dim_in);
        assert_eq!(coeff.dim(), self.dim_mat);
        let slot = self.terms.entry(exps).or_insert_with(|| CMat::zeros(self.dim_mat));
        *slot += &coeff;
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &CMat)> {
        self.terms.iter()
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        debug_assert_eq!(x.len(), self.dim_in);
        let mut out = CMat::zeros(self.dim_mat);
        for (exps, coeff) in &self.terms {
            let mono: f64 = exps
                .iter()
                .zip(x)
                .map(|(&e, &xi)| xi.powi(e as i32))
                .product();
            out += &coeff.scale(mono);
        }
        out
    }

    /// Exact partial derivative along coordinate `mu` (0-based).
    pub fn partial(&self, mu: usize) -> MatPoly {
        let mut out = MatPoly::zero(self.dim_in, self.dim_mat);
        for (exps, coeff) in &self.terms {
            let e = exps[mu];
            if e == 0 {
                continue;
            }
            let mut dexps = exps.clone();
            dexps[mu] = e - 1;
            out.add_term(dexps, coeff.scale(e as f64));
        }
        out
    }

    pub fn scale(&self, w: f64) -> MatPoly {
        let terms = self.terms.iter().map(|(e, c)| (e.clone(), c.scale(w))).collect();
        MatPoly { dim_in: self.dim_in, dim_mat: self.dim_mat, terms }
    }

    pub fn add(&self, other: &MatPoly) -> MatPoly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &MatPoly) -> MatPoly {
        self.add(&other.scale(-1.0))
    }

    /// Matrix product of polynomials (term convolution, order preserved).
    pub fn mat_mul(&self, other: &MatPoly) -> MatPoly {
        let mut out = MatPoly::zero(self.dim_in, self.dim_mat);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let exps: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(exps, ca * cb);
            }
        }
        out
    }

    pub fn commutator(&self, other: &MatPoly) -> MatPoly {
        self.mat_mul(other).sub(&other.mat_mul(self))
    }

    /// Conjugate every coefficient: `g⁻¹ · coeff · g`.
    pub fn conjugated(&self, g_inv: &CMat, g: &CMat) -> MatPoly {
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| (e.clone(), &(g_inv * c) * g))
            .collect();
        MatPoly { dim_in: self.dim_in, dim_mat: self.dim_mat, terms }
    }
}
