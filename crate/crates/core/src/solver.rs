//! Stage-wise driving interface shared by all optimizers.

use crate::error::{Error, Result};
use crate::sampling::RngStream;

/// Accounting for one outer stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageReport {
    /// Component-gradient evaluations charged to this stage (unit: one `∇f_i`).
    pub evals: u64,
    /// The stage ended at a restart boundary.
    pub restarted: bool,
}

/// An optimizer that advances one outer stage at a time.
pub trait StageSolver {
    fn step(&mut self, rng: &mut RngStream) -> Result<StageReport>;

    /// The point the algorithm reports as its output after the stages run so far.
    fn output(&self) -> &[f64];

    /// The most recent outer iterate.
    fn last_iterate(&self) -> &[f64];

    /// Completed outer stages.
    fn stages(&self) -> u64;
}

pub(crate) fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{} must be positive, got {}", name, v)))
    }
}

pub(crate) fn check_count(name: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{} must be at least 1", name)))
    }
}

/// `out = (1 − w) a + w b`
#[inline]
pub(crate) fn blend(a: &[f64], b: &[f64], w: f64, out: &mut [f64]) {
    for ((o, &u), &v) in out.iter_mut().zip(a).zip(b) {
        *o = (1.0 - w) * u + w * v;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
