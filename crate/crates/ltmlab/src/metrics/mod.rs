//! Probabilistic scoring: Student's-t log-density, CRPS in closed form and
//! by quadrature, point MSE, and the differentiable training loss.
//!
//! The closed-form CRPS and the quadrature route never share code, so each
//! can serve as an oracle for the other.

mod loss;
mod quadrature;
mod studentt;

pub use loss::{batch_scores, nll_loss, point_mse, ScoreTriple};
pub use quadrature::{crps_quadrature, crps_quadrature_studentt};
pub use studentt::{crps_normal, crps_studentt, studentt_logpdf};

use crate::tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("degrees of freedom must be positive and finite, got {0}")]
    BadDof(f64),
    #[error("closed-form CRPS requires more than one degree of freedom, got {0}")]
    CrpsDofTooSmall(f64),
    #[error("quadrature did not converge: requested {requested:e}, achieved {achieved:e}")]
    QuadratureDidNotConverge { requested: f64, achieved: f64 },
    #[error("metric inputs have mismatched lengths: {lhs} vs {rhs}")]
    LengthMismatch { lhs: usize, rhs: usize },
    #[error("batch is empty or every position is masked out")]
    EmptyBatch,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
