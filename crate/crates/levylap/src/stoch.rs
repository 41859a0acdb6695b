//! Brownian paths, Stratonovich stochastic parallel transport and the
//! pathwise verification of the stochastic holonomy identity.
//!
//! Paths are built by dyadic midpoint refinement with per-node RNG streams,
//! so a path refines consistently: the same seed at twice the resolution
//! agrees exactly on shared grid nodes. The transport uses the
//! Heun/midpoint predictor-corrector, which converges to the Stratonovich
//! solution without an Itô correction term; the drift discriminator test
//! against the abelian closed form `exp(-i a·b_t)` pins that down.

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::basis::sine;
use crate::cesaro::{self, CesaroSeries};
use crate::exec;
use crate::gauge::{CMat, Connection, GaugeError};
use crate::transport::{TransportError, TransportResult};

#[derive(Debug, Error)]
pub enum StochError {
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("step count must be a power of two ≥ 2, got {0}")]
    BadStepCount(usize),
    #[error("resolution guard: {n_dirs} directions need at least {}² = {} steps, got {m}", n_dirs, n_dirs * n_dirs)]
    ResolutionGuard { n_dirs: usize, m: usize },
    #[error("need at least 8 directions for a windowed verdict, got {0}")]
    TooFewDirections(usize),
    #[error("stochastic integration blow-up at t = {t}")]
    BlowUp { t: f64 },
    #[error("dimension mismatch: connection is {conn}-dimensional, path is {path}-dimensional")]
    DimensionMismatch { conn: usize, path: usize },
}

/// Discretized d-dimensional Brownian path on a uniform dyadic grid.
#[derive(Clone, Debug, Serialize)]
pub struct BrownianPath {
    dim: usize,
    steps: usize,
    seed: u64,
    /// `values[i]` is `b_{i/M}`, `values[0] = 0`.
    values: Vec<Vec<f64>>,
    /// `increments[i] = b_{(i+1)/M} − b_{i/M}`, kept consistent with
    /// `values` at all times.
    increments: Vec<Vec<f64>>,
}

fn node_rng(seed: u64, level: u32, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&level.to_le_bytes());
    key[12..20].copy_from_slice(&index.to_le_bytes());
    key[20..28].copy_from_slice(b"levybp-1");
    // decorrelate nearby keys through one hop of the stream itself
    let mut rng = ChaCha8Rng::from_seed(key);
    let _ = rng.next_u64();
    rng
}

/// Midpoint (bridge) construction of a standard Brownian path: level 0 draws
/// `b(1) ~ N(0, I_d)`, level `ℓ` fills midpoints with conditional variance
/// `2^{-(ℓ+1)}`. Reproducible per seed; refining to `2M` steps leaves all
/// shared nodes untouched.
pub fn sample_brownian(dim: usize, steps: usize, seed: u64) -> Result<BrownianPath, StochError> {
    if steps < 2 || !steps.is_power_of_two() {
        return Err(StochError::BadStepCount(steps));
    }
    let levels = steps.trailing_zeros();
    let mut values = vec![vec![0.0; dim]; steps + 1];
    let normal = StandardNormal;

    let mut rng = node_rng(seed, 0, 0);
    for v in values[steps].iter_mut() {
        *v = normal.sample(&mut rng);
    }
    for level in 1..=levels {
        let segment = steps >> level; // grid stride of this level's midpoints
        let sd = 0.5f64.powi(level as i32 + 1).sqrt();
        for idx in 0..(1usize << (level - 1)) {
            let mid = (2 * idx + 1) * segment;
            let left = 2 * idx * segment;
            let right = (2 * idx + 2) * segment;
            let mut rng = node_rng(seed, level, idx as u64);
            for mu in 0..dim {
                let z: f64 = normal.sample(&mut rng);
                values[mid][mu] = 0.5 * (values[left][mu] + values[right][mu]) + sd * z;
            }
        }
    }
    let increments = (0..steps)
        .map(|i| (0..dim).map(|mu| values[i + 1][mu] - values[i][mu]).collect())
        .collect();
    Ok(BrownianPath { dim, steps, seed, values, increments })
}

impl BrownianPath {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn increment(&self, i: usize) -> &[f64] {
        &self.increments[i]
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.steps as f64
    }

    pub fn end(&self) -> &[f64] {
        &self.values[self.steps]
    }

    /// Largest coordinate excursion, for the bounded-coefficient guard.
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter().map(|x| x.abs()))
            .fold(0.0, f64::max)
    }

    /// Cameron–Martin shift by `ε·h_k ⊗ p_μ`: values move pointwise and
    /// increments stay consistent. The shift vanishes at both endpoints.
    pub fn cm_shift(&self, k: usize, mu: usize, eps: f64) -> BrownianPath {
        assert!(k >= 1 && mu >= 1 && mu <= self.dim);
        let mut out = self.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            v[mu - 1] += eps * sine(k, i as f64 / self.steps as f64);
        }
        for i in 0..self.steps {
            let d = eps
                * (sine(k, (i + 1) as f64 / self.steps as f64)
                    - sine(k, i as f64 / self.steps as f64));
            out.increments[i][mu - 1] += d;
        }
        out
    }
}

/// Heun (midpoint predictor-corrector) solve of the Stratonovich transport
/// `U = I − ∫ A_μ(b_s) U ∂b^μ_s` along a discretized path.
pub fn stochastic_transport(
    conn: &Connection,
    b: &BrownianPath,
) -> Result<TransportResult, StochError> {
    if conn.dim_space() != b.dim {
        return Err(StochError::DimensionMismatch { conn: conn.dim_space(), path: b.dim });
    }
    let n = conn.dim_gauge();
    let mut grid = Vec::with_capacity(b.steps + 1);
    let mut u = Vec::with_capacity(b.steps + 1);
    grid.push(0.0);
    u.push(CMat::identity(n));
    let mut current = CMat::identity(n);
    // generator increment B_i = Σ_μ A_μ(x)·Δb^μ at a point
    let gen = |x: &[f64], db: &[f64]| -> Result<CMat, StochError> {
        let mut out = CMat::zeros(n);
        for mu in 1..=conn.dim_space() {
            if db[mu - 1] != 0.0 {
                out += &conn.component(mu, x)?.scale(db[mu - 1]);
            }
        }
        Ok(out)
    };
    for i in 0..b.steps {
        let db = b.increment(i);
        let b0 = gen(b.value(i), db)?;
        let predictor = &current - &(&b0 * &current);
        let b1 = gen(b.value(i + 1), db)?;
        let incr = &(&b0 * &current) + &(&b1 * &predictor);
        current = &current - &incr.scale(0.5);
        if !current.is_finite() {
            return Err(StochError::BlowUp { t: b.time(i + 1) });
        }
        grid.push(b.time(i + 1));
        u.push(current.clone());
    }
    Ok(TransportResult::from_nodes(grid, u)?)
}

/// Worst grid deviation of the transport from the abelian closed form
/// `exp(-i a·b_t)` for a truly constant connection `A_μ = i a_μ`; the
/// Stratonovich-vs-Itô discriminator (an Itô scheme would drift by
/// `exp(|a|²t/2)` in modulus).
pub fn abelian_drift(a: &[f64], b: &BrownianPath) -> Result<f64, StochError> {
    let conn = Connection::uniform_abelian(a);
    let tr = stochastic_transport(&conn, b)?;
    let mut worst = 0.0f64;
    for i in 0..=b.steps {
        let phase: f64 = a.iter().zip(b.value(i)).map(|(ai, bi)| ai * bi).sum();
        // U_t·exp(+i a·b_t) should sit at 1
        let rot = Complex64::new(phase.cos(), phase.sin());
        let dev = (tr.at(i)[(0, 0)] * rot - Complex64::ONE).norm();
        worst = worst.max(dev);
    }
    Ok(worst)
}

/// Closed-form right side of the stochastic holonomy identity:
/// `U₁∫U_t⁻¹ F_μν F^μν U_t dt − U₁∫U_t⁻¹ (∇^μF_μν) U_t db^ν` with the first
/// integral by trapezoid and the second an Itô (left-point) sum.
pub fn thm1_rhs(conn: &Connection, b: &BrownianPath) -> Result<CMat, StochError> {
    let (curv, ito) = thm1_rhs_terms(conn, b)?;
    Ok(&curv - &ito)
}

/// The two summands of [`thm1_rhs`]: the curvature-contraction integral and
/// the Itô residual integral, each already multiplied by `U₁`. For a
/// Yang–Mills solution the second term vanishes.
pub fn thm1_rhs_terms(conn: &Connection, b: &BrownianPath) -> Result<(CMat, CMat), StochError> {
    let tr = stochastic_transport(conn, b)?;
    let n = conn.dim_gauge();
    let m = b.steps;
    let h = 1.0 / m as f64;
    let mut curvature_term = CMat::zeros(n);
    let mut prev: Option<CMat> = None;
    let mut ito_term = CMat::zeros(n);
    for i in 0..=m {
        let x = b.value(i);
        let f = conn.curvature(x)?;
        let ff = f.full_contraction(n);
        let conj = &(tr.inv_at(i) * &ff) * tr.at(i);
        if let Some(p) = prev.take() {
            curvature_term += &(&p + &conj).scale(0.5 * h);
        }
        prev = Some(conj);

        if i < m {
            let res = conn.ym_residual(x)?;
            let db = b.increment(i);
            let mut v = CMat::zeros(n);
            for nu in 1..=conn.dim_space() {
                if db[nu - 1] != 0.0 {
                    v += &res[nu - 1].scale(db[nu - 1]);
                }
            }
            ito_term += &(&(tr.inv_at(i) * &v) * tr.at(i));
        }
    }
    Ok((tr.end() * &curvature_term, tr.end() * &ito_term))
}

/// Pathwise estimate of the Laplacian of the endpoint transport: central
/// second differences under Cameron–Martin shifts, Cesàro-averaged over
/// sine directions. `n_dirs ≤ √M` keeps the highest direction resolved on
/// the grid.
pub fn thm1_lhs_estimate(
    conn: &Connection,
    b: &BrownianPath,
    n_dirs: usize,
    eps: f64,
    tol: f64,
) -> Result<CesaroSeries<CMat>, StochError> {
    if n_dirs * n_dirs > b.steps {
        return Err(StochError::ResolutionGuard { n_dirs, m: b.steps });
    }
    let center = stochastic_transport(conn, b)?.end().clone();
    let dim = conn.dim_space();
    let table: Vec<Result<CMat, StochError>> = exec::map_indexed(n_dirs * dim, |idx| {
        let k = idx / dim + 1;
        let mu = idx % dim + 1;
        let up = stochastic_transport(conn, &b.cm_shift(k, mu, eps))?.end().clone();
        let dn = stochastic_transport(conn, &b.cm_shift(k, mu, -eps))?.end().clone();
        let num = &(&up + &dn) - &center.scale(2.0);
        Ok(num.scale(1.0 / (eps * eps)))
    });
    let mut vals = Vec::with_capacity(table.len());
    for v in table {
        vals.push(v?);
    }
    cesaro::cesaro_estimate::<CMat, std::convert::Infallible, _>(
        |k, mu| Ok(vals[(k - 1) * dim + (mu - 1)].clone()),
        1.0,
        dim,
        n_dirs,
        tol,
    )
    .map_err(|e| match e {
        cesaro::CesaroError::NMaxTooSmall(n) => StochError::TooFewDirections(n),
        _ => unreachable!("infallible oracle"),
    })
}

/// Default finite-difference step for the pathwise estimate.
pub const DEFAULT_CM_EPS: f64 = 1e-2;

/// Per-seed and aggregate gaps between the pathwise estimate and the closed
/// form, at a set of direction checkpoints.
#[derive(Clone, Debug, Serialize)]
pub struct Thm1Report {
    pub checkpoints: Vec<usize>,
    pub seeds: Vec<u64>,
    /// `rel_gaps[s][c]`: `‖L_N − rhs‖_F/(1+‖rhs‖_F)` for seed `s` at
    /// checkpoint `c`.
    pub rel_gaps: Vec<Vec<f64>>,
    pub mean_rel_gap: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Mean signed deviation `L_N(final) − rhs` and its standard errors,
    /// for the unbiasedness check (N = last checkpoint).
    pub mean_dev_re: f64,
    pub mean_dev_im: f64,
    pub se_dev_re: f64,
    pub se_dev_im: f64,
    pub monotone: bool,
}

/// Monte Carlo comparison of the pathwise Laplacian estimate against the
/// closed-form right side over independent driving paths.
pub fn verify_thm1(
    conn: &Connection,
    seeds: &[u64],
    steps: usize,
    checkpoints: &[usize],
    eps: f64,
) -> Result<Thm1Report, StochError> {
    assert!(!checkpoints.is_empty() && checkpoints.windows(2).all(|w| w[0] < w[1]));
    let n_dirs = *checkpoints.last().unwrap();
    let per_seed: Vec<Result<(Vec<f64>, Complex64), StochError>> =
        exec::map_items(seeds, |&seed| {
            let b = sample_brownian(conn.dim_space(), steps, seed)?;
            let rhs = thm1_rhs(conn, &b)?;
            let series = thm1_lhs_estimate(conn, &b, n_dirs, eps, 1e-6)?;
            let scale = 1.0 + rhs.frob_norm();
            let gaps = checkpoints
                .iter()
                .map(|&n| (&series.partials[n - 1] - &rhs).frob_norm() / scale)
                .collect();
            let dev = &series.partials[n_dirs - 1] - &rhs;
            let dev_repr = dev.trace() / dev.dim() as f64;
            Ok((gaps, dev_repr))
        });
    let mut rel_gaps = Vec::with_capacity(seeds.len());
    let mut devs = Vec::with_capacity(seeds.len());
    for r in per_seed {
        let (gaps, dev) = r?;
        rel_gaps.push(gaps);
        devs.push(dev);
    }
    let ns = seeds.len() as f64;
    let mut mean_rel_gap = vec![0.0; checkpoints.len()];
    let mut var = vec![0.0; checkpoints.len()];
    for gaps in &rel_gaps {
        for (i, g) in gaps.iter().enumerate() {
            mean_rel_gap[i] += g;
        }
    }
    for m in mean_rel_gap.iter_mut() {
        *m /= ns;
    }
    for gaps in &rel_gaps {
        for (i, g) in gaps.iter().enumerate() {
            var[i] += (g - mean_rel_gap[i]).powi(2);
        }
    }
    let std_err: Vec<f64> =
        var.iter().map(|v| (v / (ns * (ns - 1.0).max(1.0))).sqrt()).collect();
    let monotone = mean_rel_gap.windows(2).all(|w| w[1] <= w[0]);

    let mean_re = devs.iter().map(|d| d.re).sum::<f64>() / ns;
    let mean_im = devs.iter().map(|d| d.im).sum::<f64>() / ns;
    let var_re =
        devs.iter().map(|d| (d.re - mean_re).powi(2)).sum::<f64>() / (ns * (ns - 1.0).max(1.0));
    let var_im =
        devs.iter().map(|d| (d.im - mean_im).powi(2)).sum::<f64>() / (ns * (ns - 1.0).max(1.0));
    Ok(Thm1Report {
        checkpoints: checkpoints.to_vec(),
        seeds: seeds.to_vec(),
        rel_gaps,
        mean_rel_gap,
        std_err,
        mean_dev_re: mean_re,
        mean_dev_im: mean_im,
        se_dev_re: var_re.sqrt(),
        se_dev_im: var_im.sqrt(),
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_brownian(2, 64, 7).unwrap();
        let b = sample_brownian(2, 64, 7).unwrap();
        assert_eq!(a.values, b.values);
        let c = sample_brownian(2, 64, 8).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn refinement_extends_exactly() {
        let coarse = sample_brownian(3, 256, 42).unwrap();
        let fine = sample_brownian(3, 512, 42).unwrap();
        for i in 0..=256 {
            assert_eq!(coarse.value(i), fine.value(2 * i), "node {i}");
        }
    }

    #[test]
    fn increments_reconstruct_values() {
        let b = sample_brownian(2, 128, 3).unwrap();
        let mut acc = vec![0.0; 2];
        for i in 0..128 {
            for mu in 0..2 {
                acc[mu] += b.increment(i)[mu];
            }
            for mu in 0..2 {
                assert!((acc[mu] - b.value(i + 1)[mu]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn terminal_variance_is_unit() {
        // Var(b_1) ≈ 1 per coordinate over 10⁴ seeds, within 3 SE of the
        // χ²₁ sampling error √(2/n).
        let n = 10_000;
        let mut sums = [0.0f64; 2];
        for seed in 0..n {
            let b = sample_brownian(2, 4, seed as u64).unwrap();
            for mu in 0..2 {
                sums[mu] += b.end()[mu] * b.end()[mu];
            }
        }
        let se = (2.0f64 / n as f64).sqrt();
        for s in sums {
            let var = s / n as f64;
            assert!((var - 1.0).abs() <= 3.0 * se, "empirical variance {var}");
        }
    }

    #[test]
    fn bad_step_count_rejected() {
        assert!(matches!(sample_brownian(1, 3, 0), Err(StochError::BadStepCount(3))));
        assert!(matches!(sample_brownian(1, 0, 0), Err(StochError::BadStepCount(0))));
    }

    #[test]
    fn cm_shift_examples() {
        let b = sample_brownian(2, 64, 5).unwrap();
        let same = b.cm_shift(2, 1, 0.0);
        assert_eq!(b.values, same.values);

        let eps = 0.3;
        let k = 4;
        let shifted = b.cm_shift(k, 2, eps);
        // endpoint: h_k(1) = 0
        assert!((shifted.end()[1] - b.end()[1]).abs() < 1e-12);
        // t = 1/(2k): shift is ε·√2 in coordinate μ
        let i = 64 / (2 * k);
        let expect = eps * 2.0f64.sqrt();
        assert!((shifted.value(i)[1] - b.value(i)[1] - expect).abs() < 1e-12);
        // increments stay consistent
        let mut acc = 0.0;
        for i in 0..64 {
            acc += shifted.increment(i)[1];
            assert!((acc - shifted.value(i + 1)[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn runaway_coefficients_hit_blow_up_guard() {
        use std::sync::Arc;
        let huge = Arc::new(|_: &[f64]| CMat::scalar(num_complex::Complex64::new(-1e5, 0.0)))
            as Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>;
        let zero =
            Arc::new(|_: &[f64]| CMat::zeros(1)) as Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>;
        let conn = Connection::new_opaque("runaway", 2, 1, vec![huge, zero]);
        let b = sample_brownian(2, 64, 1).unwrap();
        match stochastic_transport(&conn, &b) {
            Err(StochError::BlowUp { t }) => assert!(t > 0.0 && t <= 1.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn zero_connection_transport_trivial() {
        let conn = Connection::zero(2, 2);
        let b = sample_brownian(2, 64, 1).unwrap();
        let tr = stochastic_transport(&conn, &b).unwrap();
        for i in 0..=64 {
            assert!((tr.at(i) - &CMat::identity(2)).frob_norm() < 1e-15);
        }
    }

    #[test]
    fn stratonovich_discriminator() {
        // The Heun scheme reproduces exp(-i a·b_t) with tiny drift; an Itô
        // scheme would be off by exp(|a|²/2) ≈ 1.8 at t=1.
        let a = [1.0, 0.7];
        let b = sample_brownian(2, 1 << 14, 11).unwrap();
        let drift = abelian_drift(&a, &b).unwrap();
        assert!(drift <= 1e-3, "drift {drift}");
    }

    #[test]
    fn su2_unitarity_drift() {
        let conn = Connection::su2_polynomial(6);
        let b = sample_brownian(2, 1 << 14, 21).unwrap();
        let tr = stochastic_transport(&conn, &b).unwrap();
        assert!(tr.end().unitary_defect() <= 1e-4, "defect {}", tr.end().unitary_defect());
    }

    #[test]
    fn rhs_zero_connection() {
        let conn = Connection::zero(2, 1);
        let b = sample_brownian(2, 128, 2).unwrap();
        assert!(thm1_rhs(&conn, &b).unwrap().frob_norm() < 1e-15);
    }

    #[test]
    fn rhs_constant_curvature_closed_form() {
        // F_12 = iβ constant: the contraction term is exactly -2β²·U₁ and
        // the residual term vanishes.
        let beta = 1.0;
        let conn = Connection::constant_abelian(beta);
        let b = sample_brownian(2, 1 << 10, 13).unwrap();
        let rhs = thm1_rhs(&conn, &b).unwrap();
        let u1 = stochastic_transport(&conn, &b).unwrap().end().clone();
        let expect = u1.scale(-2.0 * beta * beta);
        assert!(
            (&rhs - &expect).frob_norm() <= 1e-10,
            "rhs {:?} vs {:?}",
            rhs,
            expect
        );
    }

    #[test]
    fn rhs_refinement_stability() {
        // thm1_rhs(M) − thm1_rhs(2M) shrinks roughly like M^(-1/2) on the
        // same refined path; averaged over seeds to tame fluctuations.
        let conn = Connection::quadratic_abelian(1.0);
        let mut r1 = 0.0;
        let mut r2 = 0.0;
        for seed in 0..8u64 {
            let b10 = sample_brownian(2, 1 << 10, seed).unwrap();
            let b11 = sample_brownian(2, 1 << 11, seed).unwrap();
            let b12 = sample_brownian(2, 1 << 12, seed).unwrap();
            let v10 = thm1_rhs(&conn, &b10).unwrap();
            let v11 = thm1_rhs(&conn, &b11).unwrap();
            let v12 = thm1_rhs(&conn, &b12).unwrap();
            r1 += (&v11 - &v10).frob_norm();
            r2 += (&v12 - &v11).frob_norm();
        }
        assert!(r2 < r1, "refinement diffs did not shrink: {r2} vs {r1}");
    }

    #[test]
    fn lhs_zero_connection() {
        let conn = Connection::zero(2, 1);
        let b = sample_brownian(2, 256, 3).unwrap();
        let series = thm1_lhs_estimate(&conn, &b, 8, 1e-2, 1e-9).unwrap();
        for p in &series.partials {
            assert!(p.frob_norm() < 1e-9);
        }
    }

    #[test]
    fn resolution_guard() {
        let conn = Connection::zero(2, 1);
        let b = sample_brownian(2, 64, 3).unwrap();
        assert!(matches!(
            thm1_lhs_estimate(&conn, &b, 9, 1e-2, 1e-9),
            Err(StochError::ResolutionGuard { n_dirs: 9, m: 64 })
        ));
    }

    #[test]
    fn lhs_constant_abelian_closed_form() {
        // Truly constant A: U₁(b+εh) = exp(-i a·(b₁+εh(1))) and h_k(1)=0,
        // so every directional second difference sits at the finite-
        // difference noise floor around zero.
        let conn = Connection::uniform_abelian(&[0.9, -0.4]);
        let b = sample_brownian(2, 1 << 12, 17).unwrap();
        let series = thm1_lhs_estimate(&conn, &b, 8, 1e-2, 1e-9).unwrap();
        for p in &series.partials {
            assert!(p.frob_norm() <= 1e-3, "partial {}", p.frob_norm());
        }
    }

    #[test]
    fn cameron_martin_first_derivative_richardson() {
        // First differences converge at O(ε²): halving ε divides the
        // Richardson defect by about 4.
        let conn = Connection::quadratic_abelian(1.0);
        let b = sample_brownian(2, 1 << 10, 23).unwrap();
        let d1 = |eps: f64| {
            let up = stochastic_transport(&conn, &b.cm_shift(2, 1, eps)).unwrap();
            let dn = stochastic_transport(&conn, &b.cm_shift(2, 1, -eps)).unwrap();
            (up.end() - dn.end()).scale(0.5 / eps)
        };
        let e = 0.08;
        let c1 = (&d1(e) - &d1(e / 2.0)).frob_norm();
        let c2 = (&d1(e / 2.0) - &d1(e / 4.0)).frob_norm();
        assert!(c2 <= 0.4 * c1 + 1e-12, "{c2} vs {c1}");
    }

    #[test]
    fn verify_thm1_zero_connection() {
        let conn = Connection::zero(2, 1);
        let rep = verify_thm1(&conn, &[1, 2, 3], 256, &[4, 8], 1e-2).unwrap();
        for gaps in &rep.rel_gaps {
            for g in gaps {
                assert!(*g < 1e-9);
            }
        }
    }

    #[test]
    fn verify_thm1_quadratic_small() {
        // Desk-scale smoke run; the full acceptance configuration runs in
        // the integration suite.
        let conn = Connection::quadratic_abelian(1.0);
        let seeds: Vec<u64> = (0..8).collect();
        let rep = verify_thm1(&conn, &seeds, 1 << 10, &[4, 8], 1e-2).unwrap();
        assert!(rep.mean_rel_gap[1] < rep.mean_rel_gap[0] + 0.2);
        assert!(rep.mean_rel_gap[1] < 1.0);
    }
}
