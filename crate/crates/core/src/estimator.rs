//! The variance-reduced mini-batch gradient estimator shared by every
//! stochastic solver:
//!
//! `g = (1/b) Σ_{i∈I} (1/(n q_i)) (∇f_i(y) − ∇f_i(x̃)) + ∇F(x̃)`

use crate::error::Result;
use crate::problem::{Problem, Regularizer};
use crate::sampling::SamplingScheme;

/// Snapshot point `x̃` with its full gradient and per-row loss derivatives.
#[derive(Debug, Clone)]
pub struct Anchor {
    pub point: Vec<f64>,
    pub grad: Vec<f64>,
    /// `ψ_i'(a_iᵀx̃)`, so that `∇f_i(x̃)` costs no extra dot product.
    pub derivs: Vec<f64>,
}

impl Anchor {
    /// Costs `n` component-gradient evaluations.
    pub fn new<R: Regularizer>(problem: &Problem<R>, point: &[f64]) -> Result<Self> {
        let (grad, derivs) = problem.full_gradient_with_derivatives(point)?;
        Ok(Anchor {
            point: point.to_vec(),
            grad,
            derivs,
        })
    }
}

/// Scalar coefficient of `a_i` in the estimator for one sampled index:
/// `(1/b)(1/(n q_i))(ψ_i'(a_iᵀy) − ψ_i'(a_iᵀx̃))`.
#[inline]
pub fn correction_coefficient<R: Regularizer>(
    problem: &Problem<R>,
    anchor: &Anchor,
    scheme: &SamplingScheme,
    i: usize,
    margin_at_y: f64,
    inv_b: f64,
) -> f64 {
    let dy = problem.loss.derivative(margin_at_y, problem.data.label(i));
    inv_b * scheme.importance_weight(i) * (dy - anchor.derivs[i])
}

/// Writes the estimator at `y` for the given batch into `out`.
pub fn estimate_into<R: Regularizer>(
    problem: &Problem<R>,
    anchor: &Anchor,
    scheme: &SamplingScheme,
    batch: &[usize],
    y: &[f64],
    out: &mut [f64],
) {
    out.copy_from_slice(&anchor.grad);
    let inv_b = 1.0 / batch.len() as f64;
    for &i in batch {
        let row = problem.data.row(i);
        let c = correction_coefficient(problem, anchor, scheme, i, row.dot(y), inv_b);
        row.axpy(c, out);
    }
}
