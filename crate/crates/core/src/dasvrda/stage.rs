//! One inner stage of accelerated variance-reduced dual averaging (and its
//! SVRG-style sibling), computed densely.

use crate::error::Result;
use crate::estimator::{estimate_into, Anchor};
use crate::problem::{Problem, Regularizer};
use crate::sampling::{RngStream, SamplingScheme};
use crate::solver::{blend, check_count, check_positive};

use super::params::{theta, theta_product};

/// How the aggressive sequence `z_k` is updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZUpdate {
    /// `z_k = prox_{ηθ_kθ_{k−1}R}(z_0 − ηθ_kθ_{k−1} ḡ_k)` with the weighted
    /// running average `ḡ_k` of all gradients so far.
    DualAveraging,
    /// `z_k = prox_{ηθ_{k−1}R}(z_{k−1} − ηθ_{k−1} g_k)` using only the latest
    /// estimate.
    Gradient,
}

/// Inner iterates of a stage in progress.
pub struct InnerStage<'a, R> {
    problem: &'a Problem<R>,
    scheme: &'a SamplingScheme,
    anchor: Anchor,
    update: ZUpdate,
    eta: f64,
    b: usize,
    k: u64,
    z0: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    g: Vec<f64>,
    gbar: Vec<f64>,
    batch: Vec<usize>,
}

impl<'a, R: Regularizer> InnerStage<'a, R> {
    /// Sets `x_0 = z_0 = start` and evaluates the full gradient at `anchor`
    /// (`n` component gradients).
    pub fn new(
        problem: &'a Problem<R>,
        scheme: &'a SamplingScheme,
        start: &[f64],
        anchor: &[f64],
        eta: f64,
        b: usize,
        update: ZUpdate,
    ) -> Result<Self> {
        check_positive("eta", eta)?;
        scheme.check_batch(b)?;
        problem.check_dim(start)?;
        let anchor = Anchor::new(problem, anchor)?;
        let d = problem.dim();
        Ok(InnerStage {
            problem,
            scheme,
            anchor,
            update,
            eta,
            b,
            k: 0,
            z0: start.to_vec(),
            x: start.to_vec(),
            y: start.to_vec(),
            z: start.to_vec(),
            g: vec![0.0; d],
            gbar: vec![0.0; d],
            batch: Vec::with_capacity(b),
        })
    }

    /// Runs inner iteration `k + 1`.
    pub fn step(&mut self, rng: &mut RngStream) -> Result<()> {
        let k = self.k + 1;
        let w = 1.0 / theta(k as i64);
        blend(&self.x, &self.z, w, &mut self.y);
        self.scheme.draw_into(rng, self.b, &mut self.batch)?;
        estimate_into(self.problem, &self.anchor, self.scheme, &self.batch, &self.y, &mut self.g);
        match self.update {
            ZUpdate::DualAveraging => {
                for (gb, &g) in self.gbar.iter_mut().zip(&self.g) {
                    *gb = (1.0 - w) * *gb + w * g;
                }
                let tau = self.eta * theta_product(k);
                for ((z, &z0), &gb) in self.z.iter_mut().zip(&self.z0).zip(&self.gbar) {
                    *z = z0 - tau * gb;
                }
                self.problem.reg.prox_in_place(&mut self.z, tau);
            }
            ZUpdate::Gradient => {
                let tau = self.eta * theta(k as i64 - 1);
                for (z, &g) in self.z.iter_mut().zip(&self.g) {
                    *z -= tau * g;
                }
                self.problem.reg.prox_in_place(&mut self.z, tau);
            }
        }
        for (x, &z) in self.x.iter_mut().zip(&self.z) {
            *x = (1.0 - w) * *x + w * z;
        }
        self.k = k;
        Ok(())
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// The most recent variance-reduced estimate `g_k`.
    pub fn gradient(&self) -> &[f64] {
        &self.g
    }

    /// The running average `ḡ_k` (dual averaging only; zeros otherwise).
    pub fn averaged_gradient(&self) -> &[f64] {
        &self.gbar
    }

    pub fn batch(&self) -> &[usize] {
        &self.batch
    }

    pub fn anchor(&self) -> &Anchor {
        &self.anchor
    }

    pub fn into_output(self) -> (Vec<f64>, Vec<f64>) {
        (self.x, self.z)
    }
}

#[allow(clippy::too_many_arguments)]
fn run_dense<R: Regularizer>(
    problem: &Problem<R>,
    start: &[f64],
    anchor: &[f64],
    eta: f64,
    m: usize,
    b: usize,
    scheme: &SamplingScheme,
    rng: &mut RngStream,
    update: ZUpdate,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_count("m", m)?;
    let mut stage = InnerStage::new(problem, scheme, start, anchor, eta, b, update)?;
    for _ in 0..m {
        stage.step(rng)?;
    }
    Ok(stage.into_output())
}

/// One stage of accelerated SVRDA started at `start` with snapshot `anchor`.
/// Returns `(x_m, z_m)`; costs `n + m·b` component gradients.
#[allow(clippy::too_many_arguments)]
pub fn one_stage_accsvrda<R: Regularizer>(
    problem: &Problem<R>,
    start: &[f64],
    anchor: &[f64],
    eta: f64,
    m: usize,
    b: usize,
    scheme: &SamplingScheme,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    run_dense(problem, start, anchor, eta, m, b, scheme, rng, ZUpdate::DualAveraging)
}

/// Same as [`one_stage_accsvrda`] but with the proximal-gradient `z` update.
#[allow(clippy::too_many_arguments)]
pub fn one_stage_dasvrg<R: Regularizer>(
    problem: &Problem<R>,
    start: &[f64],
    anchor: &[f64],
    eta: f64,
    m: usize,
    b: usize,
    scheme: &SamplingScheme,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    run_dense(problem, start, anchor, eta, m, b, scheme, rng, ZUpdate::Gradient)
}
