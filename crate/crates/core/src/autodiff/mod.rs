//! Tensor-level reverse-mode automatic differentiation with support for
//! differentiating through gradients (double backpropagation).
//!
//! ```
//! use fisherseg::autodiff::Graph;
//! use fisherseg::tensor::Tensor;
//!
//! let g = Graph::new();
//! let x = g.param(Tensor::scalar(1.0));
//! let cube = x.powf(3.0);
//! let dx = g.backward(cube, &[x], true).unwrap()[0]; // 3x²
//! let loss = dx.square();                            // 9x⁴
//! let d2 = g.gradients(loss, &[x]).unwrap();
//! assert!((d2[0].item().unwrap() - 36.0).abs() < 1e-12);
//! ```

mod backward;
mod graph;
mod ops;

pub use graph::{Graph, NodeId, Var, CLAMP_FLOOR};

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("node {0} does not require gradients")]
    NotDifferentiable(NodeId),
    #[error("variables belong to different graphs")]
    ForeignVar,
}
