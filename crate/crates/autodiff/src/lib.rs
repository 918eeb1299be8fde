//! Minimal n-dimensional autodiff engine with double backprop.
//!
//! Forward values are recorded eagerly on a tape ([`graph::Graph`]); the
//! backward pass emits new tape nodes for every vector-Jacobian product, so
//! gradients are themselves differentiable values. That single mechanism is
//! enough for input-gradient penalties (gradient of a gradient norm with
//! respect to network parameters).
//!
//! Layers ([`nn`]) compose convolutions from im2col/matmul primitives,
//! keeping the op set closed under differentiation. Double precision
//! throughout; determinism given seeds and fixed input order.

pub mod checkpoint;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod nn;
pub mod optim;
pub mod param;

pub use error::{AutodiffError, Result};
pub use graph::{Graph, Var};
pub use kernels::ColGeom;
pub use optim::{OptimKind, Optimizer};
pub use param::Parameter;
