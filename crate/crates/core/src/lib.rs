//! Linearized inverse problem of the real drift.
//!
//! A firm value `A` follows a diffusion with constant volatility `σ₀` and a
//! space-dependent real drift `μ(y) = μ₀ + f(y)`, `y = ln(A/D)`. The equity
//! value solves a Black–Scholes-type Cauchy problem in which the drift, not
//! the interest rate, multiplies the first-order term. Linearizing around
//! `μ₀` turns the recovery of `f` from observed prices into a Fredholm
//! equation of the first kind,
//!
//! ```text
//! v(τ*, y) = ∫₀^τ* U_a(τ* − s)[w(s, ·) f](y) ds,
//! ```
//!
//! where `U_a` is the drift-shifted heat semigroup and `w` an error-function
//! weight. The crate provides:
//!
//! * [`model`]: parameters, coordinate changes and the gauge transform;
//! * [`kernels`]: the heat kernel, the semigroup and the weight `w`;
//! * [`forward`]: base prices, the Duhamel forward map and a finite-difference
//!   solver for the full nonlinear problem;
//! * [`fbi`]: FBI and semiclassical Fourier transforms, decay-rate fitting and
//!   analytic wave-front scans;
//! * [`symbols`]: the pseudodifferential symbol of the late-time Duhamel part,
//!   its cutoffs and quantization;
//! * [`inversion`]: matrix assembly, Tikhonov reconstruction and singular
//!   value diagnostics;
//! * [`experiments`]: verification campaigns producing a JSON ledger;
//! * [`io`]: CSV/JSON formats and market-data ingestion.

// `!(x > 0.0)` is the NaN-rejecting form used for argument checks.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod error;
pub mod experiments;
pub mod fbi;
pub mod forward;
pub mod inversion;
pub mod io;
pub mod kernels;
pub mod model;
pub mod quadrature;
pub mod spectral;
pub mod symbols;

pub use error::{LipdError, Result};
pub use model::{Field, Grid, ModelParams, TransformedParams};

pub use num_complex::Complex64;
