//! Killing–Yano forms, Killing tensors and conformal Killing forms on
//! projectively flat equiaffine manifolds and constant-curvature spaces.
//!
//! The crate is organised bottom-up:
//!
//! - [`expr`]: symbolic scalar fields over chart coordinates;
//! - [`poly`]: exact rational polynomials used by the flat-space systems;
//! - [`tensor`]: canonical index enumeration, constant coefficient tensors,
//!   numeric tensors and tensor fields;
//! - [`linalg`]: exact rational row reduction and a small least-squares fit;
//! - [`geometry`]: connections, curvature, the projective Weyl tensor,
//!   concircular fields and structure classification;
//! - [`killing`]: explicit Killing–Yano and Killing bases, dimension
//!   formulas and their null-space oracles, residuals and transfer maps;
//! - [`riemannian`]: Beltrami models of constant curvature, the conformal
//!   Killing operator and the Killing–Yano ⊕ closed splitting;
//! - [`geodesic`]: RK4 geodesics with parallel frames and first-integral
//!   monitors.
//!
//! Pointwise work (residual sampling, geodesic ensembles) runs on rayon when
//! the default `parallel` feature is enabled; see [`exec::Strategy`].

pub mod exec;
pub mod expr;
pub mod geodesic;
pub mod geometry;
pub mod killing;
pub mod linalg;
pub mod poly;
pub mod riemannian;
pub mod sampling;
pub mod tensor;

use thiserror::Error;

pub use expr::{EvalError, ParseError, ScalarField};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("degree p = {p} outside {allowed} for dimension n = {n}")]
    DegreeOutOfRange { n: usize, p: usize, allowed: &'static str },
    #[error("metric is singular at {point:?}")]
    SingularMetric { point: Vec<f64> },
    #[error("no usable sample points: every point hit an evaluation error")]
    NoSamplePoints,
    #[error("least-squares system is rank deficient")]
    RankDeficient,
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
