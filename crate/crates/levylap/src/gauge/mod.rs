//! `u(N)`-valued connections on `R^d`: curvature, covariant derivatives and
//! Yang–Mills residuals.
//!
//! Catalog entries used throughout the test matrix:
//!
//! * `zero` — the trivial connection, a Yang–Mills solution.
//! * `constant-abelian(β)` — `d=2, N=1`, `A_1 = 0`, `A_2(x) = iβx¹`;
//!   constant curvature `F_12 = iβ`, a Yang–Mills solution.
//! * `quadratic-abelian(β)` — `A_2(x) = iβ(x¹)²/2`; curvature `iβx¹` and
//!   covariant divergence `(0, iβ)`, not a Yang–Mills solution.
//! * `su2-polynomial(seed)` — `d=2, N=2`, random traceless skew-Hermitian
//!   polynomial coefficients of degree ≤ 2.

mod cmat;
mod poly;

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cmat::CMat;
pub use poly::MatPoly;

#[derive(Debug, Error)]
pub enum GaugeError {
    #[error("non-finite evaluation in connection component {component} at x = {at:?}")]
    NonFinite { component: usize, at: Vec<f64> },
    #[error("singular matrix: pivot magnitude {pivot:.3e} at column {col}")]
    Singular { pivot: f64, col: usize },
    #[error("point dimension {got} does not match base dimension {want}")]
    PointDim { got: usize, want: usize },
    #[error("unknown connection name `{0}`")]
    UnknownName(String),
}

type OpaqueFn = Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>;

/// One component `A_mu` of a connection: exact polynomial, or an opaque
/// function differentiated by central differences.
#[derive(Clone)]
pub enum Component {
    Poly(MatPoly),
    Opaque(OpaqueFn),
}

/// A `u(N)`-valued 1-form `A = A_mu dx^mu` on `R^d`.
#[derive(Clone)]
pub struct Connection {
    name: String,
    dim_space: usize,
    dim_gauge: usize,
    comps: Vec<Component>,
}

/// Curvature `F_mn(x)` at a point: antisymmetric by construction.
#[derive(Clone, Debug)]
pub struct CurvatureValue {
    dim_space: usize,
    f: Vec<CMat>,
}

impl CurvatureValue {
    pub fn get(&self, mu: usize, nu: usize) -> &CMat {
        debug_assert!(mu >= 1 && mu <= self.dim_space && nu >= 1 && nu <= self.dim_space);
        &self.f[(mu - 1) * self.dim_space + (nu - 1)]
    }

    pub fn dim_space(&self) -> usize {
        self.dim_space
    }

    /// Euclidean contraction `F_mn F^mn = Σ_{mu,nu} F_mn · F_mn`.
    pub fn full_contraction(&self, dim_gauge: usize) -> CMat {
        let mut out = CMat::zeros(dim_gauge);
        for mu in 1..=self.dim_space {
            for nu in 1..=self.dim_space {
                out += &(self.get(mu, nu) * self.get(mu, nu));
            }
        }
        out
    }
}

const FD_BASE_STEP: f64 = 1e-5;

fn fd_step(x: &[f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    FD_BASE_STEP * (1.0 + norm)
}

fn central_diff(f: &dyn Fn(&[f64]) -> CMat, mu: usize, x: &[f64], step: f64) -> CMat {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[mu] += step;
    xm[mu] -= step;
    (&f(&xp) - &f(&xm)).scale(0.5 / step)
}

impl Connection {
    pub fn new_polynomial(name: impl Into<String>, comps: Vec<MatPoly>) -> Self {
        assert!(!comps.is_empty());
        let dim_space = comps[0].dim_in();
        let dim_gauge = comps[0].dim_mat();
        assert!(comps.iter().all(|p| p.dim_in() == dim_space && p.dim_mat() == dim_gauge));
        assert_eq!(comps.len(), dim_space);
        Connection {
            name: name.into(),
            dim_space,
            dim_gauge,
            comps: comps.into_iter().map(Component::Poly).collect(),
        }
    }

    pub fn new_opaque(
        name: impl Into<String>,
        dim_space: usize,
        dim_gauge: usize,
        comps: Vec<OpaqueFn>,
    ) -> Self {
        assert_eq!(comps.len(), dim_space);
        Connection {
            name: name.into(),
            dim_space,
            dim_gauge,
            comps: comps.into_iter().map(Component::Opaque).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_space(&self) -> usize {
        self.dim_space
    }

    pub fn dim_gauge(&self) -> usize {
        self.dim_gauge
    }

    fn check_point(&self, x: &[f64]) -> Result<(), GaugeError> {
        if x.len() != self.dim_space {
            return Err(GaugeError::PointDim { got: x.len(), want: self.dim_space });
        }
        Ok(())
    }

    /// Evaluate `A_mu(x)`, `mu` 1-based.
    pub fn component(&self, mu: usize, x: &[f64]) -> Result<CMat, GaugeError> {
        self.check_point(x)?;
        let v = match &self.comps[mu - 1] {
            Component::Poly(p) => p.eval(x),
            Component::Opaque(f) => f(x),
        };
        if !v.is_finite() {
            return Err(GaugeError::NonFinite { component: mu, at: x.to_vec() });
        }
        Ok(v)
    }

    /// `∂_mu A_nu (x)`; exact for polynomials, central differences otherwise.
    pub fn d_component(&self, mu: usize, nu: usize, x: &[f64]) -> Result<CMat, GaugeError> {
        self.check_point(x)?;
        let v = match &self.comps[nu - 1] {
            Component::Poly(p) => p.partial(mu - 1).eval(x),
            Component::Opaque(f) => central_diff(&**f, mu - 1, x, fd_step(x)),
        };
        if !v.is_finite() {
            return Err(GaugeError::NonFinite { component: nu, at: x.to_vec() });
        }
        Ok(v)
    }

    /// Curvature polynomial `F_mn = ∂_m A_n - ∂_n A_m + [A_m, A_n]` when the
    /// connection is polynomial.
    pub fn curvature_poly(&self, mu: usize, nu: usize) -> Option<MatPoly> {
        let (a_mu, a_nu) = match (&self.comps[mu - 1], &self.comps[nu - 1]) {
            (Component::Poly(a), Component::Poly(b)) => (a, b),
            _ => return None,
        };
        Some(a_nu.partial(mu - 1).sub(&a_mu.partial(nu - 1)).add(&a_mu.commutator(a_nu)))
    }

    /// Curvature at a point; antisymmetry `F_mn = -F_nm` holds exactly.
    pub fn curvature(&self, x: &[f64]) -> Result<CurvatureValue, GaugeError> {
        self.check_point(x)?;
        let d = self.dim_space;
        let mut f = vec![CMat::zeros(self.dim_gauge); d * d];
        for mu in 1..=d {
            for nu in (mu + 1)..=d {
                let da = self.d_component(mu, nu, x)?;
                let db = self.d_component(nu, mu, x)?;
                let amu = self.component(mu, x)?;
                let anu = self.component(nu, x)?;
                let val = &(&da - &db) + &amu.commutator(&anu);
                f[(nu - 1) * d + (mu - 1)] = -&val;
                f[(mu - 1) * d + (nu - 1)] = val;
            }
        }
        Ok(CurvatureValue { dim_space: d, f })
    }

    /// Covariant derivative `(∇_mu phi)(x) = ∂_mu phi + [A_mu, phi]` for an
    /// analytic matrix field, returned for `mu = 1..d`.
    pub fn covariant_derivative(&self, phi: &MatPoly, x: &[f64]) -> Result<Vec<CMat>, GaugeError> {
        self.check_point(x)?;
        let phi_x = phi.eval(x);
        (1..=self.dim_space)
            .map(|mu| {
                let dphi = phi.partial(mu - 1).eval(x);
                let a = self.component(mu, x)?;
                let v = &dphi + &a.commutator(&phi_x);
                if !v.is_finite() {
                    return Err(GaugeError::NonFinite { component: mu, at: x.to_vec() });
                }
                Ok(v)
            })
            .collect()
    }

    /// One unsummed covariant-divergence term `∇_mu F_mn (x)` for a fixed
    /// index pair: `∂_mu F_mn + [A_mu, F_mn]`.
    pub fn covariant_curvature_div(
        &self,
        mu: usize,
        nu: usize,
        x: &[f64],
    ) -> Result<CMat, GaugeError> {
        self.check_point(x)?;
        if mu == nu {
            return Ok(CMat::zeros(self.dim_gauge));
        }
        let df = match self.curvature_poly(mu, nu) {
            Some(fp) => fp.partial(mu - 1).eval(x),
            None => {
                // Nested finite differences of the curvature; widen the step
                // since the inner evaluation is itself differenced.
                let this = self.clone();
                let g = move |y: &[f64]| {
                    this.curvature(y)
                        .map(|c| c.get(mu, nu).clone())
                        .unwrap_or_else(|_| CMat::zeros(this.dim_gauge))
                };
                central_diff(&g, mu - 1, x, fd_step(x).sqrt())
            }
        };
        let a = self.component(mu, x)?;
        let fv = self.curvature(x)?.get(mu, nu).clone();
        let v = &df + &a.commutator(&fv);
        if !v.is_finite() {
            return Err(GaugeError::NonFinite { component: nu, at: x.to_vec() });
        }
        Ok(v)
    }

    /// Yang–Mills residual `(∇^mu F_mn)(x)` for `nu = 1..d` (identity
    /// Euclidean metric, so the raised index equals the lowered one).
    pub fn ym_residual(&self, x: &[f64]) -> Result<Vec<CMat>, GaugeError> {
        self.check_point(x)?;
        let d = self.dim_space;
        let mut out = vec![CMat::zeros(self.dim_gauge); d];
        for nu in 1..=d {
            for mu in 1..=d {
                if mu == nu {
                    continue;
                }
                out[nu - 1] += &self.covariant_curvature_div(mu, nu, x)?;
            }
        }
        Ok(out)
    }

    /// Frobenius-norm aggregate of the Yang–Mills residual.
    pub fn ym_residual_norm(&self, x: &[f64]) -> Result<f64, GaugeError> {
        let r = self.ym_residual(x)?;
        Ok(r.iter().map(|m| m.frob_norm().powi(2)).sum::<f64>().sqrt())
    }

    /// Largest skew-Hermiticity defect `‖A_mu + A_mu*‖_F` over components.
    pub fn skew_hermitian_defect(&self, x: &[f64]) -> Result<f64, GaugeError> {
        let mut worst = 0.0f64;
        for mu in 1..=self.dim_space {
            worst = worst.max(self.component(mu, x)?.skew_hermitian_defect());
        }
        Ok(worst)
    }

    /// Constant gauge transform `A ↦ g⁻¹ A g` (polynomial connections).
    pub fn conjugated(&self, g: &CMat) -> Result<Connection, GaugeError> {
        let g_inv = g.inverse()?;
        let comps = self
            .comps
            .iter()
            .map(|c| match c {
                Component::Poly(p) => Component::Poly(p.conjugated(&g_inv, g)),
                Component::Opaque(f) => {
                    let f = f.clone();
                    let g_inv = g_inv.clone();
                    let g = g.clone();
                    Component::Opaque(Arc::new(move |x: &[f64]| &(&g_inv * &f(x)) * &g) as OpaqueFn)
                }
            })
            .collect();
        Ok(Connection {
            name: format!("{}~conj", self.name),
            dim_space: self.dim_space,
            dim_gauge: self.dim_gauge,
            comps,
        })
    }

    /// Wrap a polynomial connection as opaque closures (finite-difference
    /// derivative path), used for cross-validation.
    pub fn as_opaque(&self) -> Connection {
        let comps = self
            .comps
            .iter()
            .map(|c| match c {
                Component::Poly(p) => {
                    let p = p.clone();
                    Component::Opaque(Arc::new(move |x: &[f64]| p.eval(x)) as OpaqueFn)
                }
                Component::Opaque(f) => Component::Opaque(f.clone()),
            })
            .collect();
        Connection {
            name: format!("{}~opaque", self.name),
            dim_space: self.dim_space,
            dim_gauge: self.dim_gauge,
            comps,
        }
    }

    // ---- catalog ----

    pub fn zero(dim_space: usize, dim_gauge: usize) -> Connection {
        let comps = (0..dim_space).map(|_| MatPoly::zero(dim_space, dim_gauge)).collect();
        Connection::new_polynomial("zero", comps)
    }

    /// `d=2, N=1`: `A_1 = 0`, `A_2(x) = iβ x¹`. Constant curvature `iβ`,
    /// satisfies the Yang–Mills equations.
    pub fn constant_abelian(beta: f64) -> Connection {
        let a1 = MatPoly::zero(2, 1);
        let a2 = MatPoly::monomial(2, vec![1, 0], CMat::scalar(Complex64::new(0.0, beta)));
        Connection::new_polynomial(format!("constant-abelian({beta})"), vec![a1, a2])
    }

    /// `d=2, N=1`: `A_1 = 0`, `A_2(x) = iβ (x¹)²/2`. Curvature `iβ x¹`,
    /// Yang–Mills residual `(0, iβ)`.
    pub fn quadratic_abelian(beta: f64) -> Connection {
        let a1 = MatPoly::zero(2, 1);
        let a2 = MatPoly::monomial(2, vec![2, 0], CMat::scalar(Complex64::new(0.0, beta / 2.0)));
        Connection::new_polynomial(format!("quadratic-abelian({beta})"), vec![a1, a2])
    }

    /// Truly constant abelian `A_mu = i a_mu`; the transport along any path
    /// has the closed form `exp(-i a·γ(t))`.
    pub fn uniform_abelian(a: &[f64]) -> Connection {
        let d = a.len();
        let comps = a
            .iter()
            .map(|&amu| MatPoly::constant(d, CMat::scalar(Complex64::new(0.0, amu))))
            .collect();
        Connection::new_polynomial("uniform-abelian", comps)
    }

    /// `d=2, N=2`: random traceless skew-Hermitian polynomial coefficients
    /// of total degree ≤ 2, scaled down with the degree so transports stay
    /// well-conditioned on unit-scale paths.
    pub fn su2_polynomial(seed: u64) -> Connection {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x52);
        let exps: [[u32; 2]; 6] = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]];
        let comps = (0..2)
            .map(|_| {
                let mut p = MatPoly::zero(2, 2);
                for e in exps {
                    let total = (e[0] + e[1]) as f64;
                    let amp = 0.25 / (1.0 + total);
                    p.add_term(e.to_vec(), random_su2(&mut rng).scale(amp));
                }
                p
            })
            .collect();
        Connection::new_polynomial(format!("su2-polynomial({seed})"), comps)
    }

    /// Resolve a catalog name; `beta` feeds the abelian entries and `seed`
    /// the random one.
    pub fn from_name(name: &str, beta: f64, seed: u64) -> Result<Connection, GaugeError> {
        match name {
            "zero" => Ok(Connection::zero(2, 1)),
            "constant-abelian" => Ok(Connection::constant_abelian(beta)),
            "quadratic-abelian" => Ok(Connection::quadratic_abelian(beta)),
            "su2-polynomial" => Ok(Connection::su2_polynomial(seed)),
            other => Err(GaugeError::UnknownName(other.to_string())),
        }
    }

    pub fn catalog_names() -> &'static [&'static str] {
        &["zero", "constant-abelian", "quadratic-abelian", "su2-polynomial"]
    }
}

/// Random element of su(2): `i(a σ1 + b σ2 + c σ3)` with `a,b,c ∈ [-1,1)`.
fn random_su2(rng: &mut ChaCha8Rng) -> CMat {
    let a: f64 = rng.random_range(-1.0..1.0);
    let b: f64 = rng.random_range(-1.0..1.0);
    let c: f64 = rng.random_range(-1.0..1.0);
    let i = Complex64::I;
    let mut m = CMat::zeros(2);
    m[(0, 0)] = i * c;
    m[(0, 1)] = i * a + b;
    m[(1, 0)] = i * a - b;
    m[(1, 1)] = -i * c;
    m
}

/// Serializable form of a polynomial connection: per component, a list of
/// `(exponent vector, matrix)` pairs.
#[derive(Serialize, Deserialize)]
pub struct ConnectionJson {
    pub name: String,
    pub dim_space: usize,
    pub dim_gauge: usize,
    pub components: Vec<Vec<(Vec<u32>, CMat)>>,
}

impl Connection {
    pub fn to_json(&self) -> Option<ConnectionJson> {
        let components = self
            .comps
            .iter()
            .map(|c| match c {
                Component::Poly(p) => {
                    Some(p.terms().map(|(e, m)| (e.clone(), m.clone())).collect())
                }
                Component::Opaque(_) => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(ConnectionJson {
            name: self.name.clone(),
            dim_space: self.dim_space,
            dim_gauge: self.dim_gauge,
            components,
        })
    }

    pub fn from_json(js: &ConnectionJson) -> Connection {
        let comps = js
            .components
            .iter()
            .map(|terms| {
                let mut p = MatPoly::zero(js.dim_space, js.dim_gauge);
                for (e, m) in terms {
                    p.add_term(e.clone(), m.clone());
                }
                p
            })
            .collect();
        Connection::new_polynomial(js.name.clone(), comps)
    }
}
