//! Predictive-latent aerodynamic surrogate pipeline.
//!
//! Geometry point clouds are encoded into fixed-size token sets, a
//! condition-modulated predictor maps geometry tokens to flow tokens, and an
//! implicit decoder reads the flow field back out at arbitrary query
//! coordinates. On top of the model sit ridge-probe latent analysis,
//! concept-vector arithmetic, and constrained latent-space design
//! optimization, all validated against an analytic potential-flow data
//! generator.
//!
//! Core math is generic over the scalar type (`f32`/`f64` via
//! [`numerics::Scalar`]); the concrete aliases below fix the precision used
//! by the training pipeline and file formats.

pub mod error;
pub mod geometry;
pub mod io;
pub mod latent_lab;
pub mod losses;
pub mod model;
pub mod nn;
pub mod numerics;
pub mod optimize;
pub mod probes;
pub mod synthgen;
pub mod training;

pub use error::Error;

/// Scalar type used by the shipped pipeline.
pub type Real = f64;
/// Tensor at pipeline precision.
pub type Tensor = numerics::Tensor<Real>;
/// Autodiff tape at pipeline precision.
pub type Tape = numerics::Tape<Real>;
/// Parameter store at pipeline precision.
pub type ParamStore = numerics::ParamStore<Real>;
/// Point cloud at pipeline precision.
pub type PointCloud = geometry::PointCloud<Real>;
/// Token set at pipeline precision.
pub type TokenSet = model::TokenSet<Real>;

pub type Result<T, E = Error> = std::result::Result<T, E>;
