//! Polynomial-activation networks that carry their own input Jacobian.
//!
//! Each layer propagates a value `h` and the accumulated Jacobian
//! `S = ∂h/∂x` in a single forward pass. Penalizing `‖S^(l)‖_F²` layer by
//! layer gives a derivative-aware regularizer whose gradient is computed
//! analytically, without double backpropagation.
//!
//! Modules:
//! * [`linalg`]: dense row-major matrices with fixed accumulation order.
//! * [`polynet`]: networks, activations, the dual-stream forward pass.
//! * [`grad`]: reverse pass, Adam, training loop, finite-difference oracle.
//! * [`regularizers`]: spectral-norm projection.
//! * [`data`]: synthetic families, IDX and CSV loaders, splits.
//! * [`ordinal`]: thresholds, quadratic weighted kappa, threshold search.
//! * [`sensitivity`]: input-gradient statistics, chain bound, Pareto distance.
//! * [`stats`]: paired and two-sample significance tests.
//! * [`robust`]: PGD and corruption probes.

pub mod data;
pub mod error;
pub mod grad;
pub mod linalg;
pub mod ordinal;
pub mod polynet;
pub mod regularizers;
pub mod robust;
pub mod sensitivity;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::{Matrix, Real};
