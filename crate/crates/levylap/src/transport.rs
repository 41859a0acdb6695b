//! Deterministic parallel transport along Cameron–Martin paths and its
//! directional derivatives.
//!
//! The transport solves the linear matrix ODE `U̇ = -A_μ(γ(t)) U γ̇^μ(t)`,
//! `U_0 = I`, with classical RK4. Second directional derivatives along
//! `h_k ⊗ p_μ` come in two independent flavors:
//!
//! * the kernel route, which evaluates the Volterra double integral plus the
//!   diagonal integral of the second-derivative kernel (one transport solve
//!   serves every direction), and
//! * the finite-difference route, central second differences of the
//!   transport along shifted paths (the cross-check).
//!
//! Feeding the kernel route into the Cesàro engine gives the holonomy
//! Laplacian; its closed-form counterpart is [`gf_rhs`], and the estimate
//! vanishes exactly when the connection solves the Yang–Mills equations.

use serde::Serialize;
use thiserror::Error;

use crate::basis::{linear_panel_weights, BasisError, OscWeight, PathCoeffs};
use crate::cesaro::{self, CesaroSeries};
use crate::exec;
use crate::gauge::{CMat, Connection, GaugeError};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("integration blow-up: non-finite state at t = {t}")]
    BlowUp { t: f64 },
    #[error("need at least 16 steps, got {0}")]
    StepsTooSmall(usize),
    #[error("need n_max ≥ 8, got {0}")]
    NMaxTooSmall(usize),
    #[error("connection is {conn}-dimensional but the path is {path}-dimensional")]
    DimensionMismatch { conn: usize, path: usize },
    #[error(
        "fd/kernel cross-check failed at (k={k}, mu={mu}): gap {gap:.3e} exceeds bound {bound:.3e}"
    )]
    CrossCheck { k: usize, mu: usize, gap: f64, bound: f64 },
}

fn from_infallible(e: cesaro::CesaroError<std::convert::Infallible>) -> TransportError {
    match e {
        cesaro::CesaroError::NMaxTooSmall(n) => TransportError::NMaxTooSmall(n),
        _ => unreachable!("infallible oracle"),
    }
}

/// Which second-derivative route to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivMethod {
    Kernel,
    Fd,
}

/// Default finite-difference step for directional second differences.
pub const DEFAULT_FD_STEP: f64 = 1e-3;
/// Default RK4 step count.
pub const DEFAULT_STEPS: usize = 2048;

/// Solved transport on a uniform grid with cached inverses.
#[derive(Clone, Debug)]
pub struct TransportResult {
    grid: Vec<f64>,
    u: Vec<CMat>,
    u_inv: Vec<CMat>,
    steps: usize,
}

impl TransportResult {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn at(&self, i: usize) -> &CMat {
        &self.u[i]
    }

    pub fn inv_at(&self, i: usize) -> &CMat {
        &self.u_inv[i]
    }

    pub fn end(&self) -> &CMat {
        self.u.last().expect("non-empty grid")
    }

    /// Worst unitarity defect `‖U_t* U_t − I‖_F` over the grid.
    pub fn unitarity_drift(&self) -> f64 {
        self.u.iter().map(|m| m.unitary_defect()).fold(0.0, f64::max)
    }

    pub(crate) fn from_nodes(grid: Vec<f64>, u: Vec<CMat>) -> Result<Self, TransportError> {
        let steps = grid.len() - 1;
        let u_inv = u.iter().map(|m| m.inverse()).collect::<Result<Vec<_>, _>>()?;
        Ok(TransportResult { grid, u, u_inv, steps })
    }
}

/// RK4 solve of `U̇ = -A_μ(γ(t)) U γ̇^μ(t)` on a uniform grid of `steps`
/// intervals. `U_0 = I` exactly; global error `O(step⁴)` for polynomial
/// connections.
pub fn parallel_transport(
    conn: &Connection,
    path: &PathCoeffs,
    steps: usize,
) -> Result<TransportResult, TransportError> {
    if steps < 16 {
        return Err(TransportError::StepsTooSmall(steps));
    }
    if conn.dim_space() != path.dim() {
        return Err(TransportError::DimensionMismatch {
            conn: conn.dim_space(),
            path: path.dim(),
        });
    }
    let n = conn.dim_gauge();
    let h = 1.0 / steps as f64;

    // -B(t) = -Σ_μ A_μ(γ(t)) γ̇^μ(t), the generator of the flow.
    let gen_at = |t: f64| -> Result<CMat, TransportError> {
        let x = path.eval(t.clamp(0.0, 1.0))?;
        let dx = path.deriv(t);
        let mut b = CMat::zeros(n);
        for mu in 1..=conn.dim_space() {
            if dx[mu - 1] != 0.0 {
                b += &conn.component(mu, &x)?.scale(-dx[mu - 1]);
            }
        }
        Ok(b)
    };

    let mut grid = Vec::with_capacity(steps + 1);
    let mut u = Vec::with_capacity(steps + 1);
    grid.push(0.0);
    u.push(CMat::identity(n));
    let mut current = CMat::identity(n);
    for i in 0..steps {
        let t0 = i as f64 * h;
        let t1 = (i + 1) as f64 * h;
        let tm = t0 + 0.5 * h;
        let b0 = gen_at(t0)?;
        let bm = gen_at(tm)?;
        let b1 = gen_at(t1)?;
        let k1 = &b0 * &current;
        let k2 = &bm * &(&current + &k1.scale(0.5 * h));
        let k3 = &bm * &(&current + &k2.scale(0.5 * h));
        let k4 = &b1 * &(&current + &k3.scale(h));
        let incr = &(&k1 + &k4) + &(&k2 + &k3).scale(2.0);
        current = &current + &incr.scale(h / 6.0);
        if !current.is_finite() {
            return Err(TransportError::BlowUp { t: t1 });
        }
        grid.push(t1);
        u.push(current.clone());
    }
    TransportResult::from_nodes(grid, u)
}

/// One transport solve with everything the per-direction kernel evaluation
/// needs: `W_μ(t) = U_t⁻¹ F_μν(γ(t)) γ̇^ν(t) U_t` and
/// `G_μ(t) = U_t⁻¹ (∇_μ F_μν γ̇^ν)(γ(t)) U_t` on the grid.
pub struct DirectionScan {
    transport: TransportResult,
    w: Vec<Vec<CMat>>,
    g: Vec<Vec<CMat>>,
    dim_space: usize,
}

impl DirectionScan {
    pub fn new(
        conn: &Connection,
        path: &PathCoeffs,
        steps: usize,
    ) -> Result<Self, TransportError> {
        let transport = parallel_transport(conn, path, steps)?;
        let d = conn.dim_space();
        let nodes = transport.grid().to_vec();
        let per_node = exec::map_items(&nodes, |&t| -> Result<_, TransportError> {
            let x = path.eval(t)?;
            let dx = path.deriv(t);
            let f = conn.curvature(&x)?;
            let mut w_row = Vec::with_capacity(d);
            let mut g_row = Vec::with_capacity(d);
            for mu in 1..=d {
                let mut w = CMat::zeros(conn.dim_gauge());
                let mut g = CMat::zeros(conn.dim_gauge());
                for nu in 1..=d {
                    if dx[nu - 1] == 0.0 {
                        continue;
                    }
                    w += &f.get(mu, nu).scale(dx[nu - 1]);
                    g += &conn.covariant_curvature_div(mu, nu, &x)?.scale(dx[nu - 1]);
                }
                w_row.push(w);
                g_row.push(g);
            }
            Ok((w_row, g_row))
        });
        let mut w = vec![Vec::with_capacity(nodes.len()); d];
        let mut g = vec![Vec::with_capacity(nodes.len()); d];
        for (i, row) in per_node.into_iter().enumerate() {
            let (w_row, g_row) = row?;
            for mu in 0..d {
                let ui = transport.inv_at(i);
                let uu = transport.at(i);
                w[mu].push(&(ui * &w_row[mu]) * uu);
                g[mu].push(&(ui * &g_row[mu]) * uu);
            }
        }
        Ok(DirectionScan { transport, w, g, dim_space: d })
    }

    pub fn transport(&self) -> &TransportResult {
        &self.transport
    }

    pub fn dim_space(&self) -> usize {
        self.dim_space
    }

    /// `⟨(U₁)''_{V_μ V_μ} h_k, h_k⟩` through the kernel split:
    /// `U₁·(2 ∬_{s<t} W(t)h_k(t) W(s)h_k(s) − ∫ G(t) h_k(t)² dt)`.
    ///
    /// Product integration against piecewise-linear interpolants keeps the
    /// quadrature error `O(step²)` uniformly in the oscillation index `k`.
    pub fn second_derivative(&self, k: usize, mu: usize) -> CMat {
        debug_assert!(mu >= 1 && mu <= self.dim_space);
        let w = &self.w[mu - 1];
        let g = &self.g[mu - 1];
        let grid = self.transport.grid();
        let n = self.transport.at(0).dim();

        let mut p = CMat::zeros(n); // P(t) = ∫₀ᵗ W h_k
        let mut double = CMat::zeros(n);
        let mut m_prev = CMat::zeros(n); // W(t_i)·P(t_i)
        let mut diag = CMat::zeros(n);
        for i in 0..grid.len() - 1 {
            let (t0, t1) = (grid[i], grid[i + 1]);
            let (a, b) = linear_panel_weights(OscWeight::SineBasis(k), t0, t1);
            let p_next = &(&p + &w[i].scale(a)) + &w[i + 1].scale(b);
            let m_next = &w[i + 1] * &p_next;
            double += &m_prev.scale(a);
            double += &m_next.scale(b);
            let (cc, dd) = linear_panel_weights(OscWeight::SineBasisSq(k), t0, t1);
            diag += &g[i].scale(cc);
            diag += &g[i + 1].scale(dd);
            p = p_next;
            m_prev = m_next;
        }
        let inner = &double.scale(2.0) - &diag;
        self.transport.end() * &inner
    }

    pub(crate) fn volterra_factor(&self, mu: usize) -> &[CMat] {
        &self.w[mu - 1]
    }

    pub(crate) fn diagonal_factor(&self, mu: usize) -> &[CMat] {
        &self.g[mu - 1]
    }
}

/// Second directional derivative of the endpoint transport along
/// `h_k ⊗ p_μ`, by the requested method.
pub fn second_directional_derivative(
    conn: &Connection,
    path: &PathCoeffs,
    k: usize,
    mu: usize,
    method: DerivMethod,
    steps: usize,
    fd_step: f64,
) -> Result<CMat, TransportError> {
    match method {
        DerivMethod::Kernel => Ok(DirectionScan::new(conn, path, steps)?.second_derivative(k, mu)),
        DerivMethod::Fd => fd_second_derivative(conn, path, k, mu, steps, fd_step),
    }
}

fn fd_second_derivative(
    conn: &Connection,
    path: &PathCoeffs,
    k: usize,
    mu: usize,
    steps: usize,
    fd_step: f64,
) -> Result<CMat, TransportError> {
    assert!(fd_step > 0.0);
    let up = parallel_transport(conn, &path.shifted(k, mu, fd_step), steps)?;
    let u0 = parallel_transport(conn, path, steps)?;
    let um = parallel_transport(conn, &path.shifted(k, mu, -fd_step), steps)?;
    let num = &(up.end() + um.end()) - &u0.end().scale(2.0);
    Ok(num.scale(1.0 / (fd_step * fd_step)))
}

/// Kernel-route value, cross-checked against the finite-difference route.
/// Disagreement beyond `10·(ε² + step⁴)·scale` is surfaced as an error
/// rather than silently returned.
pub fn second_directional_derivative_checked(
    conn: &Connection,
    path: &PathCoeffs,
    k: usize,
    mu: usize,
    steps: usize,
    fd_step: f64,
) -> Result<CMat, TransportError> {
    let kernel = DirectionScan::new(conn, path, steps)?.second_derivative(k, mu);
    let fd = fd_second_derivative(conn, path, k, mu, steps, fd_step)?;
    let gap = (&kernel - &fd).frob_norm();
    let step = 1.0 / steps as f64;
    let scale = 1.0 + kernel.frob_norm() + fd.frob_norm();
    let bound = 10.0 * (fd_step * fd_step + step.powi(4)) * scale;
    if gap > bound {
        return Err(TransportError::CrossCheck { k, mu, gap, bound });
    }
    Ok(kernel)
}

/// Order-`s` Cesàro estimate of the Laplacian of the endpoint transport,
/// sine directions, kernel route.
pub fn levy_laplacian_transport(
    conn: &Connection,
    path: &PathCoeffs,
    s: f64,
    n_max: usize,
    steps: usize,
    tol: f64,
) -> Result<CesaroSeries<CMat>, TransportError> {
    let scan = DirectionScan::new(conn, path, steps)?;
    let dim = conn.dim_space();
    cesaro::cesaro_estimate::<CMat, std::convert::Infallible, _>(
        |k, mu| Ok(scan.second_derivative(k, mu)),
        s,
        dim,
        n_max,
        tol,
    )
    .map_err(from_infallible)
}

/// Same estimate routed through the cosine picture: the differentiation
/// isomorphism moves a factor `π²k²` per direction, so `π²·`(order `−1`,
/// cosine route) reproduces the sine-route order-1 series term by term.
pub fn levy_laplacian_cosine_route(
    conn: &Connection,
    path: &PathCoeffs,
    n_max: usize,
    steps: usize,
    tol: f64,
) -> Result<CesaroSeries<CMat>, TransportError> {
    let scan = DirectionScan::new(conn, path, steps)?;
    let dim = conn.dim_space();
    let series = cesaro::cesaro_estimate::<CMat, std::convert::Infallible, _>(
        |k, mu| {
            let pk = std::f64::consts::PI * k as f64;
            Ok(scan.second_derivative(k, mu).scale(1.0 / (pk * pk)))
        },
        -1.0,
        dim,
        n_max,
        tol,
    )
    .map_err(from_infallible)?;
    let pi2 = std::f64::consts::PI.powi(2);
    Ok(CesaroSeries {
        order_s: series.order_s,
        tol: series.tol,
        partials: series.partials.iter().map(|p| p.scale(pi2)).collect(),
        verdict: match series.verdict {
            cesaro::Verdict::Converged { value, at } => {
                cesaro::Verdict::Converged { value: value.scale(pi2), at }
            }
            cesaro::Verdict::NotConverged => cesaro::Verdict::NotConverged,
        },
    })
}

/// Closed-form right-hand side of the holonomy Laplace identity:
/// `-U₁ ∫ U_t⁻¹ (∇^μ F_μν)(γ(t)) γ̇^ν(t) U_t dt`, composite Simpson over the
/// transport grid.
pub fn gf_rhs(
    conn: &Connection,
    path: &PathCoeffs,
    steps: usize,
) -> Result<CMat, TransportError> {
    let transport = parallel_transport(conn, path, steps)?;
    let grid = transport.grid().to_vec();
    let integrand = exec::map_items(&grid, |&t| -> Result<CMat, TransportError> {
        let x = path.eval(t)?;
        let dx = path.deriv(t);
        let res = conn.ym_residual(&x)?;
        let mut v = CMat::zeros(conn.dim_gauge());
        for nu in 1..=conn.dim_space() {
            if dx[nu - 1] != 0.0 {
                v += &res[nu - 1].scale(dx[nu - 1]);
            }
        }
        Ok(v)
    });
    let mut vals = Vec::with_capacity(grid.len());
    for (i, v) in integrand.into_iter().enumerate() {
        let v = v?;
        vals.push(&(transport.inv_at(i) * &v) * transport.at(i));
    }
    let integral = simpson_nodes(&vals, 1.0 / steps as f64);
    Ok(-&(transport.end() * &integral))
}

/// Composite Simpson over uniformly spaced nodes; a trapezoid panel absorbs
/// the last interval when the count is odd.
fn simpson_nodes(vals: &[CMat], h: f64) -> CMat {
    let n = vals.len() - 1;
    let dim = vals[0].dim();
    let mut acc = CMat::zeros(dim);
    let even_end = if n % 2 == 0 { n } else { n - 1 };
    let mut i = 0;
    while i + 2 <= even_end {
        acc += &vals[i].scale(h / 3.0);
        acc += &vals[i + 1].scale(4.0 * h / 3.0);
        acc += &vals[i + 2].scale(h / 3.0);
        i += 2;
    }
    if n % 2 == 1 {
        acc += &vals[n - 1].scale(h / 2.0);
        acc += &vals[n].scale(h / 2.0);
    }
    acc
}

/// Second-derivative kernel of one direction space `V_μ`: the
/// square-integrable Volterra part on a `(m+1)×(m+1)` grid and the bounded
/// diagonal part on the same 1-D grid.
#[derive(Clone, Debug, Serialize)]
pub struct SecondDerivKernel {
    pub mu: usize,
    pub grid: Vec<f64>,
    /// Row-major `K_V(s_i, t_j)`, symmetric as a matrix-valued function.
    pub k_v: Vec<CMat>,
    pub k_l: Vec<CMat>,
}

impl SecondDerivKernel {
    pub fn from_fns(
        mu: usize,
        resolution: usize,
        dim_gauge: usize,
        k_v: impl Fn(f64, f64) -> CMat,
        k_l: impl Fn(f64) -> CMat,
    ) -> Self {
        let grid: Vec<f64> = (0..=resolution).map(|i| i as f64 / resolution as f64).collect();
        let mut kv = Vec::with_capacity(grid.len() * grid.len());
        for &s in &grid {
            for &t in &grid {
                let v = k_v(s, t);
                debug_assert_eq!(v.dim(), dim_gauge);
                kv.push(v);
            }
        }
        let kl = grid.iter().map(|&t| k_l(t)).collect();
        SecondDerivKernel { mu, grid, k_v: kv, k_l: kl }
    }

    fn dim_gauge(&self) -> usize {
        self.k_l[0].dim()
    }

    /// Largest symmetry defect `‖K_V(s,t) − K_V(t,s)‖_F` over grid pairs.
    pub fn symmetry_defect(&self) -> f64 {
        let m = self.grid.len();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..i {
                worst = worst.max((&self.k_v[i * m + j] - &self.k_v[j * m + i]).frob_norm());
            }
        }
        worst
    }

    /// `⟨K_V, h_k ⊗ h_k⟩ + ∫ K_L h_k²` by bilinear product integration.
    pub fn pair_with_direction(&self, k: usize) -> CMat {
        let m = self.grid.len() - 1;
        let n = self.dim_gauge();
        // inner integral over t for each row s_i
        let mut rows = Vec::with_capacity(m + 1);
        for i in 0..=m {
            let mut r = CMat::zeros(n);
            for j in 0..m {
                let (a, b) =
                    linear_panel_weights(OscWeight::SineBasis(k), self.grid[j], self.grid[j + 1]);
                r += &self.k_v[i * (m + 1) + j].scale(a);
                r += &self.k_v[i * (m + 1) + j + 1].scale(b);
            }
            rows.push(r);
        }
        let mut volterra = CMat::zeros(n);
        let mut diag = CMat::zeros(n);
        for i in 0..m {
            let (a, b) =
                linear_panel_weights(OscWeight::SineBasis(k), self.grid[i], self.grid[i + 1]);
            volterra += &rows[i].scale(a);
            volterra += &rows[i + 1].scale(b);
            let (c, d) =
                linear_panel_weights(OscWeight::SineBasisSq(k), self.grid[i], self.grid[i + 1]);
            diag += &self.k_l[i].scale(c);
            diag += &self.k_l[i + 1].scale(d);
        }
        &volterra + &diag
    }

    /// `∫ K_L(t) dt` (trapezoid; exact for piecewise-linear samples).
    pub fn diagonal_integral(&self) -> CMat {
        let m = self.grid.len() - 1;
        let mut acc = CMat::zeros(self.dim_gauge());
        for i in 0..m {
            let h = self.grid[i + 1] - self.grid[i];
            acc += &(&self.k_l[i] + &self.k_l[i + 1]).scale(0.5 * h);
        }
        acc
    }
}

/// Export the transport's second-derivative kernels on a coarse grid, one
/// per direction space.
pub fn transport_kernels(
    conn: &Connection,
    path: &PathCoeffs,
    steps: usize,
    resolution: usize,
) -> Result<Vec<SecondDerivKernel>, TransportError> {
    assert!(resolution >= 1 && steps % resolution == 0, "resolution must divide steps");
    let scan = DirectionScan::new(conn, path, steps)?;
    let stride = steps / resolution;
    let u1 = scan.transport().end().clone();
    let mut out = Vec::with_capacity(scan.dim_space);
    for mu in 1..=scan.dim_space {
        let w = scan.volterra_factor(mu);
        let g = scan.diagonal_factor(mu);
        let grid: Vec<f64> =
            (0..=resolution).map(|i| scan.transport.grid()[i * stride]).collect();
        let mut kv = Vec::with_capacity((resolution + 1).pow(2));
        for i in 0..=resolution {
            for j in 0..=resolution {
                let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
                kv.push(&u1 * &(&w[hi * stride] * &w[lo * stride]));
            }
        }
        let kl = (0..=resolution).map(|i| -&(&u1 * &g[i * stride])).collect();
        out.push(SecondDerivKernel { mu, grid, k_v: kv, k_l: kl });
    }
    Ok(out)
}

/// Cesàro estimate from explicit kernels vs the direct diagonal integral.
#[derive(Debug, Serialize)]
pub struct Prop2Report {
    pub series: CesaroSeries<CMat>,
    pub direct: CMat,
    pub gap: f64,
}

/// Check that the classical (order-1) Cesàro estimate built from a kernel
/// pair recovers `Σ_μ ∫ K_L_μμ(t) dt`: the Volterra diagonal pairings
/// average away, only the diagonal part survives.
pub fn prop2_check(
    kernels: &[SecondDerivKernel],
    n_max: usize,
    tol: f64,
) -> Result<Prop2Report, TransportError> {
    assert!(!kernels.is_empty());
    let dim = kernels.len();
    let series = cesaro::cesaro_estimate::<CMat, std::convert::Infallible, _>(
        |k, mu| Ok(kernels[mu - 1].pair_with_direction(k)),
        1.0,
        dim,
        n_max,
        tol,
    )
    .map_err(from_infallible)?;
    let mut direct = CMat::zeros(kernels[0].dim_gauge());
    for kern in kernels {
        direct += &kern.diagonal_integral();
    }
    let gap = (series.last() - &direct).frob_norm();
    Ok(Prop2Report { series, direct, gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cesaro::DEFAULT_TOL;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn test_path() -> PathCoeffs {
        let mut p = PathCoeffs::new(2);
        p.set(1, 1, 1.0);
        p.set(2, 2, 0.5);
        p
    }

    /// Matrix exponential by scaling and squaring (test helper).
    fn expm(x: &CMat) -> CMat {
        let k = 10;
        let scaled = x.scale(1.0 / f64::from(1 << k));
        let mut term = CMat::identity(x.dim());
        let mut sum = CMat::identity(x.dim());
        for j in 1..20 {
            term = &term * &scaled;
            term = term.scale(1.0 / j as f64);
            sum += &term;
        }
        let mut out = sum;
        for _ in 0..k {
            out = &out * &out;
        }
        out
    }

    #[test]
    fn zero_connection_transport_is_identity() {
        let conn = Connection::zero(2, 2);
        let tr = parallel_transport(&conn, &test_path(), 64).unwrap();
        for i in 0..=64 {
            assert!((tr.at(i) - &CMat::identity(2)).frob_norm() < 1e-15);
        }
    }

    #[test]
    fn uniform_abelian_matches_closed_form() {
        // U_t = exp(-i a·γ(t)) for constant A_μ = i a_μ.
        let a = [0.8, -0.5];
        let conn = Connection::uniform_abelian(&a);
        let path = test_path();
        let tr = parallel_transport(&conn, &path, 512).unwrap();
        for i in [0usize, 63, 256, 512] {
            let t = tr.grid()[i];
            let g = path.eval(t).unwrap();
            let phase = -(a[0] * g[0] + a[1] * g[1]);
            let expect = c(phase.cos(), phase.sin());
            assert!(
                (tr.at(i)[(0, 0)] - expect).norm() < 1e-9,
                "t={t}: {:?} vs {expect}",
                tr.at(i)[(0, 0)]
            );
        }
    }

    #[test]
    fn su2_transport_stays_unitary() {
        let conn = Connection::su2_polynomial(5);
        let tr = parallel_transport(&conn, &test_path(), 2048).unwrap();
        assert!(tr.unitarity_drift() < 1e-8, "drift {}", tr.unitarity_drift());
    }

    #[test]
    fn global_gauge_covariance() {
        // Transport with g⁻¹Ag equals g⁻¹ U g for constant unitary g.
        let conn = Connection::su2_polynomial(2);
        let mut x = CMat::zeros(2);
        x[(0, 1)] = c(0.0, 0.6);
        x[(1, 0)] = c(0.0, 0.6);
        x[(0, 0)] = c(0.0, -0.3);
        x[(1, 1)] = c(0.0, 0.3);
        let g = expm(&x);
        assert!(g.unitary_defect() < 1e-12);
        let conj = conn.conjugated(&g).unwrap();
        let path = test_path();
        let t1 = parallel_transport(&conn, &path, 512).unwrap();
        let t2 = parallel_transport(&conj, &path, 512).unwrap();
        let g_inv = g.inverse().unwrap();
        let expected = &(&g_inv * t1.end()) * &g;
        assert!((t2.end() - &expected).frob_norm() < 1e-9);
    }

    #[test]
    fn second_derivative_zero_connection() {
        let conn = Connection::zero(2, 1);
        let path = test_path();
        for method in [DerivMethod::Kernel, DerivMethod::Fd] {
            let v =
                second_directional_derivative(&conn, &path, 3, 1, method, 64, 1e-3).unwrap();
            assert!(v.frob_norm() < 1e-9, "{method:?} gave {}", v.frob_norm());
        }
    }

    #[test]
    fn kernel_diagonal_term_quadratic_abelian() {
        // For the quadratic connection the diagonal part of the μ=1 kernel
        // contributes -iβ ∫ γ̇²(t) h_k(t)² dt · U₁; quadrature oracle for
        // both kernel pieces (abelian: conjugation cancels, all commute).
        let beta = 1.0;
        let conn = Connection::quadratic_abelian(beta);
        let path = test_path();
        let steps = 2048;
        let k = 3;
        let scan = DirectionScan::new(&conn, &path, steps).unwrap();
        let got = scan.second_derivative(k, 1);

        let panels = 1 << 15;
        let h = 1.0 / panels as f64;
        let mut diag = c(0.0, 0.0);
        let mut inner = c(0.0, 0.0); // running ∫ F_12 γ̇² h_k
        let mut double = c(0.0, 0.0);
        for i in 0..panels {
            let t = (i as f64 + 0.5) * h;
            let x = path.eval(t).unwrap();
            let dx = path.deriv(t);
            let f12 = c(0.0, beta * x[0]); // F_12 = iβx¹
            let hk = crate::basis::sine(k, t);
            diag += c(0.0, beta) * dx[1] * hk * hk * h;
            double += f12 * dx[1] * hk * inner * h;
            inner += f12 * dx[1] * hk * h;
        }
        let u1 = scan.transport().end()[(0, 0)];
        let expect = (2.0 * double - diag) * u1;
        assert!(
            (got[(0, 0)] - expect).norm() < 2e-3 * (1.0 + expect.norm()),
            "kernel {:?} vs oracle {expect}",
            got[(0, 0)]
        );
    }

    #[test]
    fn constant_curvature_diagonal_vanishes() {
        // ∇F = 0: only the Volterra part contributes and its Cesàro mean
        // drains to zero.
        let conn = Connection::constant_abelian(1.0);
        let path = test_path();
        let scan = DirectionScan::new(&conn, &path, 512).unwrap();
        for mu in 1..=2 {
            for gv in scan.diagonal_factor(mu) {
                assert!(gv.frob_norm() < 1e-13);
            }
        }
        let series = levy_laplacian_transport(&conn, &path, 1.0, 128, 512, 1e-2).unwrap();
        let n64 = series.partials[63].frob_norm();
        let n128 = series.partials[127].frob_norm();
        assert!(n128 <= n64 + 1e-12);
    }

    #[test]
    fn fd_and_kernel_routes_agree_on_catalog() {
        let path = test_path();
        for conn in [
            Connection::constant_abelian(1.0),
            Connection::quadratic_abelian(1.0),
            Connection::su2_polynomial(9),
        ] {
            for (k, mu) in [(1usize, 1usize), (2, 2), (5, 1)] {
                let v = second_directional_derivative_checked(
                    &conn,
                    &path,
                    k,
                    mu,
                    DEFAULT_STEPS,
                    DEFAULT_FD_STEP,
                )
                .unwrap();
                assert!(v.frob_norm().is_finite());
            }
        }
    }

    #[test]
    fn laplacian_of_zero_connection_converges_to_zero() {
        let conn = Connection::zero(2, 1);
        let series =
            levy_laplacian_transport(&conn, &test_path(), 1.0, 32, 64, DEFAULT_TOL).unwrap();
        assert!(series.verdict.is_converged());
        assert!(series.last().frob_norm() < 1e-12);
    }

    #[test]
    fn constant_curvature_laplacian_decays_at_parseval_rate() {
        // Yang–Mills solution: the estimate tends to zero, and the finite-N
        // partial carries the Volterra trace: N·L_N → -‖γ̇¹‖²+‖γ̇²‖² times
        // U₁ by Parseval over the sine family. For this path the trace is
        // 2π² (γ̇¹ = π l₁, γ̇² = π l₂).
        let conn = Connection::constant_abelian(1.0);
        let path = test_path();
        let series = levy_laplacian_transport(&conn, &path, 1.0, 400, 1024, 1e-3).unwrap();
        let u1 = parallel_transport(&conn, &path, 1024).unwrap().end().clone();
        let trace = u1.scale(-2.0 * PI * PI);
        let scaled200 = series.partials[199].scale(200.0);
        assert!(
            (&scaled200 - &trace).frob_norm() <= 0.2,
            "200·L_200 = {:?} vs Parseval trace {:?}",
            scaled200,
            trace
        );
        assert!(series.partials[399].frob_norm() < series.partials[199].frob_norm());
    }

    #[test]
    fn gf_rhs_abelian_closed_form() {
        // -iβ·γ²(1)·U₁ with abelian conjugation cancelling; sine paths close
        // up (γ²(1)=0), so the value is zero — the quadrature must agree.
        let conn = Connection::quadratic_abelian(1.0);
        let path = test_path();
        let rhs = gf_rhs(&conn, &path, 1024).unwrap();
        let gamma2_end = path.eval(1.0).unwrap()[1];
        let u1 = parallel_transport(&conn, &path, 1024).unwrap().end()[(0, 0)];
        let expect = c(0.0, -gamma2_end) * u1;
        assert!((rhs[(0, 0)] - expect).norm() < 1e-8);
        assert!(rhs.frob_norm() < 1e-8);
    }

    #[test]
    fn gf_rhs_zero_for_ym_solutions() {
        let path = test_path();
        for conn in [Connection::zero(2, 1), Connection::constant_abelian(1.0)] {
            assert!(gf_rhs(&conn, &path, 512).unwrap().frob_norm() < 1e-10);
        }
    }

    #[test]
    fn laplace_identity_on_catalog_paths() {
        // The estimate approaches gf_rhs with the gap carried by the
        // Volterra trace over N: doubling N roughly halves it. Tolerances
        // below are calibrated to the 1/N rate for unit-scale paths.
        use rand::{Rng, SeedableRng};
        let mut paths = Vec::new();
        for seed in 0..4u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed * 31 + 7);
            let mut p = PathCoeffs::new(2);
            for k in 1..=3usize {
                for mu in 1..=2usize {
                    p.set(k, mu, rng.random_range(-0.5..0.5));
                }
            }
            paths.push(p);
        }
        paths.push(test_path());
        for conn in [
            Connection::constant_abelian(1.0),
            Connection::quadratic_abelian(1.0),
            Connection::su2_polynomial(4),
        ] {
            for (pi, path) in paths.iter().enumerate() {
                let steps = 1024;
                let rhs = gf_rhs(&conn, path, steps).unwrap();
                let series =
                    levy_laplacian_transport(&conn, path, 1.0, 400, steps, DEFAULT_TOL)
                        .unwrap();
                let gap200 = (&series.partials[199] - &rhs).frob_norm();
                let gap400 = (&series.partials[399] - &rhs).frob_norm();
                assert!(
                    gap200 <= 0.25 * (1.0 + rhs.frob_norm()),
                    "{} path {pi}: gap {gap200}",
                    conn.name()
                );
                assert!(
                    gap400 <= 0.65 * gap200 + 1e-9,
                    "{} path {pi}: gap400 {gap400} vs gap200 {gap200}",
                    conn.name()
                );
            }
        }
    }

    #[test]
    fn cosine_route_reproduces_sine_route_termwise() {
        let conn = Connection::quadratic_abelian(1.0);
        let path = test_path();
        let sine_route =
            levy_laplacian_transport(&conn, &path, 1.0, 24, 256, DEFAULT_TOL).unwrap();
        let cosine_route =
            levy_laplacian_cosine_route(&conn, &path, 24, 256, DEFAULT_TOL).unwrap();
        for (a, b) in sine_route.partials.iter().zip(&cosine_route.partials) {
            assert!((a - b).frob_norm() <= 1e-10 * (1.0 + a.frob_norm()));
        }
    }

    #[test]
    fn prop2_examples() {
        let id = CMat::identity(1);
        // Pure smooth Volterra part: estimate decays to zero.
        let smooth = SecondDerivKernel::from_fns(
            1,
            128,
            1,
            |s, t| id.scale_c(c(0.3 * (1.0 + s * t), -0.1 * (s + t))),
            |_| CMat::zeros(1),
        );
        assert!(smooth.symmetry_defect() < 1e-14);
        let rep = prop2_check(&[smooth], 200, DEFAULT_TOL).unwrap();
        assert!(rep.direct.frob_norm() < 1e-15);
        let p25 = rep.series.partials[24].frob_norm();
        let p200 = rep.series.partials[199].frob_norm();
        assert!(p200 <= 0.02, "final {p200}");
        assert!(p200 <= 0.5 * p25 + 1e-12);

        // Constant diagonal part: both routes equal c·d·I exactly.
        let cval = c(0.7, -0.2);
        let kerns: Vec<_> = (1..=2)
            .map(|mu| {
                SecondDerivKernel::from_fns(mu, 64, 1, |_, _| CMat::zeros(1), |_| {
                    id.scale_c(cval)
                })
            })
            .collect();
        let rep = prop2_check(&kerns, 64, DEFAULT_TOL).unwrap();
        assert!((rep.direct[(0, 0)] - 2.0 * cval).norm() < 1e-13);
        assert!(rep.gap < 1e-12, "gap {}", rep.gap);

        // Linear diagonal part t·I: direct = d·(1/2), Cesàro within 0.05.
        let kerns: Vec<_> = (1..=2)
            .map(|mu| {
                SecondDerivKernel::from_fns(mu, 128, 1, |_, _| CMat::zeros(1), |t| id.scale(t))
            })
            .collect();
        let rep = prop2_check(&kerns, 200, DEFAULT_TOL).unwrap();
        assert!((rep.direct[(0, 0)] - c(1.0, 0.0)).norm() < 1e-13);
        assert!(rep.gap <= 0.05, "gap {}", rep.gap);
    }

    #[test]
    fn transport_kernels_match_direction_scan() {
        // Pairing the exported kernels with h_k reproduces the streaming
        // kernel-route second derivative.
        let conn = Connection::su2_polynomial(12);
        let path = test_path();
        let steps = 512;
        let kerns = transport_kernels(&conn, &path, steps, 256).unwrap();
        let scan = DirectionScan::new(&conn, &path, steps).unwrap();
        for (k, mu) in [(1usize, 1usize), (3, 2)] {
            let via_kernel = kerns[mu - 1].pair_with_direction(k);
            let direct = scan.second_derivative(k, mu);
            let gap = (&via_kernel - &direct).frob_norm();
            assert!(gap < 5e-4 * (1.0 + direct.frob_norm()), "gap {gap}");
        }
    }

    #[test]
    fn step_guard() {
        let conn = Connection::zero(2, 1);
        assert!(matches!(
            parallel_transport(&conn, &test_path(), 8),
            Err(TransportError::StepsTooSmall(8))
        ));
    }

    #[test]
    fn exponential_growth_hits_blow_up_guard() {
        // A large non-skew generator makes U grow like exp(c·t) past the
        // f64 range; the solver must stop with the time stamp.
        use std::sync::Arc;
        let huge = Arc::new(|_: &[f64]| CMat::scalar(c(-2000.0, 0.0)))
            as Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>;
        let zero =
            Arc::new(|_: &[f64]| CMat::zeros(1)) as Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>;
        let conn = Connection::new_opaque("runaway", 2, 1, vec![huge, zero]);
        match parallel_transport(&conn, &test_path(), 64) {
            Err(TransportError::BlowUp { t }) => assert!(t > 0.0 && t <= 1.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn eq1_chain_rule_weights() {
        // Scaling a direction term down by π²k² and back reproduces it; the
        // cosine-route series is built from exactly these numbers.
        let k = 7usize;
        let pk = PI * k as f64;
        let conn = Connection::su2_polynomial(1);
        let path = test_path();
        let scan = DirectionScan::new(&conn, &path, 256).unwrap();
        let sine_term = scan.second_derivative(k, 1);
        let cosine_term = sine_term.scale(1.0 / (pk * pk));
        let back = cosine_term.scale(pk * pk);
        assert!((&back - &sine_term).frob_norm() <= 1e-12 * sine_term.frob_norm());
    }
}
