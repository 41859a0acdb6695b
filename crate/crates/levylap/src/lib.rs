//! Finite-truncation Lévy Laplacians over path and Wiener spaces.
//!
//! The crate realizes, at finite truncation, the order-`s` chain of Lévy
//! Laplacians in two numerical pictures and the machinery needed to verify
//! the identities connecting them:
//!
//! * [`cesaro`] — the order-`s` Cesàro engine turning per-direction
//!   second-derivative oracles into Laplacian estimates with weights
//!   `k^(1-s)`, the exotic variant, and the sequence lemma.
//! * [`gauge`] — complex `N×N` matrices, `u(N)`-valued polynomial
//!   connections on `R^d`, curvature, covariant derivatives and Yang–Mills
//!   residuals.
//! * [`basis`] — trigonometric bases of `L²([0,1])`, path coefficients in
//!   the Cameron–Martin space, the differentiation isomorphism and the
//!   weak-uniform-density diagnostic.
//! * [`transport`] — deterministic parallel transport along paths, its
//!   first/second directional derivatives via the Volterra/Lévy kernel
//!   split, and the holonomy Laplace identity.
//! * [`chaos`] — truncated symmetric Fock algebra, chaos vectors,
//!   directional (Cameron–Martin) derivatives and the Laplacian on chaos
//!   coefficients, plus Hermite-product evaluation.
//! * [`hida`] — S-transform, its second-derivative kernel, Laplacians of
//!   orders ±1 in the S-picture, U-functional growth diagnostics and the
//!   isomorphism check between the two pictures.
//! * [`stoch`] — dyadic Brownian paths, Stratonovich stochastic transport,
//!   Cameron–Martin shifts and the stochastic holonomy identity.
//!
//! All estimators fix their reduction order (ascending direction index,
//! compensated summation), so results are bit-reproducible whether or not
//! the `parallel` feature (rayon) is enabled.

pub mod basis;
pub mod cesaro;
pub mod chaos;
pub mod exec;
pub mod gauge;
pub mod hida;
pub mod stoch;
pub mod transport;

pub use gauge::CMat;
