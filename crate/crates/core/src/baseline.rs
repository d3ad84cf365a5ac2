//! Deterministic and stochastic baselines: proximal gradient, accelerated
//! proximal gradient and proximal SVRG.

use crate::error::Result;
use crate::estimator::{estimate_into, Anchor};
use crate::problem::{Problem, Regularizer};
use crate::sampling::{RngStream, SamplingScheme};
use crate::solver::{check_count, check_positive, StageReport, StageSolver};

/// `prox_{ηR}(x̃ − η∇F(x̃))`
pub fn one_stage_pg<R: Regularizer>(problem: &Problem<R>, x: &[f64], eta: f64) -> Result<Vec<f64>> {
    check_positive("eta", eta)?;
    let grad = crate::problem::full_gradient(problem, x)?;
    Ok(pg_step_with_gradient(problem, x, &grad, eta))
}

pub(crate) fn pg_step_with_gradient<R: Regularizer>(
    problem: &Problem<R>,
    x: &[f64],
    grad: &[f64],
    eta: f64,
) -> Vec<f64> {
    let mut out: Vec<f64> = x.iter().zip(grad).map(|(v, g)| v - eta * g).collect();
    problem.reg.prox_in_place(&mut out, eta);
    out
}

/// Proximal gradient. Reports the running average of the stage outputs.
pub struct PgSolver<'a, R> {
    problem: &'a Problem<R>,
    eta: f64,
    x: Vec<f64>,
    sum: Vec<f64>,
    avg: Vec<f64>,
    s: u64,
}

impl<'a, R: Regularizer> PgSolver<'a, R> {
    pub fn new(problem: &'a Problem<R>, x0: &[f64], eta: f64) -> Result<Self> {
        check_positive("eta", eta)?;
        problem.check_dim(x0)?;
        Ok(PgSolver {
            problem,
            eta,
            x: x0.to_vec(),
            sum: vec![0.0; x0.len()],
            avg: x0.to_vec(),
            s: 0,
        })
    }
}

impl<R: Regularizer> StageSolver for PgSolver<'_, R> {
    fn step(&mut self, _rng: &mut RngStream) -> Result<StageReport> {
        self.x = one_stage_pg(self.problem, &self.x, self.eta)?;
        self.s += 1;
        accumulate_average(&mut self.sum, &mut self.avg, &self.x, self.s);
        Ok(StageReport {
            evals: self.problem.n() as u64,
            restarted: false,
        })
    }

    fn output(&self) -> &[f64] {
        &self.avg
    }

    fn last_iterate(&self) -> &[f64] {
        &self.x
    }

    fn stages(&self) -> u64 {
        self.s
    }
}

fn accumulate_average(sum: &mut [f64], avg: &mut [f64], x: &[f64], count: u64) {
    let inv = 1.0 / count as f64;
    for ((s, a), &v) in sum.iter_mut().zip(avg.iter_mut()).zip(x) {
        *s += v;
        *a = *s * inv;
    }
}

/// Runs `stages` PG stages and returns `(1/S) Σ x̃_s`.
pub fn run_pg<R: Regularizer>(problem: &Problem<R>, x0: &[f64], eta: f64, stages: usize) -> Result<Vec<f64>> {
    check_count("stages", stages)?;
    let mut solver = PgSolver::new(problem, x0, eta)?;
    let mut rng = RngStream::new(0);
    for _ in 0..stages {
        solver.step(&mut rng)?;
    }
    Ok(solver.avg)
}

/// `θ̃_s = (s + 1)/2`, with `θ̃_0 = 0`.
#[inline]
pub fn apg_theta(s: u64) -> f64 {
    if s == 0 {
        0.0
    } else {
        (s as f64 + 1.0) / 2.0
    }
}

/// Accelerated proximal gradient. Reports the last iterate.
pub struct ApgSolver<'a, R> {
    problem: &'a Problem<R>,
    eta: f64,
    x_prev: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    s: u64,
}

impl<'a, R: Regularizer> ApgSolver<'a, R> {
    pub fn new(problem: &'a Problem<R>, x0: &[f64], eta: f64) -> Result<Self> {
        check_positive("eta", eta)?;
        problem.check_dim(x0)?;
        Ok(ApgSolver {
            problem,
            eta,
            x_prev: x0.to_vec(),
            x: x0.to_vec(),
            y: x0.to_vec(),
            s: 0,
        })
    }

    /// Resets momentum so the next stage starts from the current iterate.
    pub fn restart(&mut self) {
        self.x_prev.copy_from_slice(&self.x);
        self.s = 0;
    }

    /// Extrapolated point used by the most recent stage.
    pub fn extrapolated(&self) -> &[f64] {
        &self.y
    }
}

impl<R: Regularizer> StageSolver for ApgSolver<'_, R> {
    fn step(&mut self, _rng: &mut RngStream) -> Result<StageReport> {
        let s = self.s + 1;
        let coef = (apg_theta(s - 1) - 1.0) / apg_theta(s);
        for ((y, &x), &xp) in self.y.iter_mut().zip(&self.x).zip(&self.x_prev) {
            *y = x + coef * (x - xp);
        }
        let next = one_stage_pg(self.problem, &self.y, self.eta)?;
        self.x_prev = std::mem::replace(&mut self.x, next);
        self.s = s;
        Ok(StageReport {
            evals: self.problem.n() as u64,
            restarted: false,
        })
    }

    fn output(&self) -> &[f64] {
        &self.x
    }

    fn last_iterate(&self) -> &[f64] {
        &self.x
    }

    fn stages(&self) -> u64 {
        self.s
    }
}

/// Runs `stages` APG stages and returns `x̃_S`.
pub fn run_apg<R: Regularizer>(problem: &Problem<R>, x0: &[f64], eta: f64, stages: usize) -> Result<Vec<f64>> {
    check_count("stages", stages)?;
    let mut solver = ApgSolver::new(problem, x0, eta)?;
    let mut rng = RngStream::new(0);
    for _ in 0..stages {
        solver.step(&mut rng)?;
    }
    Ok(solver.x)
}

/// One proximal SVRG stage of `m` inner steps with mini-batches of size `b`.
///
/// Returns the average of the inner iterates `(1/m) Σ x_k`. Costs `n + m·b`
/// component gradients.
pub fn one_stage_svrg<R: Regularizer>(
    problem: &Problem<R>,
    anchor_point: &[f64],
    eta: f64,
    m: usize,
    b: usize,
    scheme: &SamplingScheme,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    Ok(svrg_stage(problem, anchor_point, eta, m, b, scheme, rng)?.0)
}

/// Returns `(average, last inner iterate)`.
fn svrg_stage<R: Regularizer>(
    problem: &Problem<R>,
    anchor_point: &[f64],
    eta: f64,
    m: usize,
    b: usize,
    scheme: &SamplingScheme,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_positive("eta", eta)?;
    check_count("m", m)?;
    scheme.check_batch(b)?;
    let anchor = Anchor::new(problem, anchor_point)?;
    let d = problem.dim();
    let mut x = anchor_point.to_vec();
    let mut g = vec![0.0; d];
    let mut sum = vec![0.0; d];
    let mut batch = Vec::with_capacity(b);
    for _ in 0..m {
        scheme.draw_into(rng, b, &mut batch)?;
        estimate_into(problem, &anchor, scheme, &batch, &x, &mut g);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= eta * gi;
        }
        problem.reg.prox_in_place(&mut x, eta);
        sum.iter_mut().zip(&x).for_each(|(s, v)| *s += v);
    }
    let inv = 1.0 / m as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
    Ok((sum, x))
}

/// Proximal SVRG with the averaged stage output used as the next snapshot.
pub struct SvrgSolver<'a, R> {
    problem: &'a Problem<R>,
    scheme: &'a SamplingScheme,
    eta: f64,
    m: usize,
    b: usize,
    x: Vec<f64>,
    last_inner: Vec<f64>,
    sum: Vec<f64>,
    avg: Vec<f64>,
    s: u64,
}

impl<'a, R: Regularizer> SvrgSolver<'a, R> {
    pub fn new(
        problem: &'a Problem<R>,
        scheme: &'a SamplingScheme,
        x0: &[f64],
        eta: f64,
        m: usize,
        b: usize,
    ) -> Result<Self> {
        check_positive("eta", eta)?;
        check_count("m", m)?;
        scheme.check_batch(b)?;
        problem.check_dim(x0)?;
        Ok(SvrgSolver {
            problem,
            scheme,
            eta,
            m,
            b,
            x: x0.to_vec(),
            last_inner: x0.to_vec(),
            sum: vec![0.0; x0.len()],
            avg: x0.to_vec(),
            s: 0,
        })
    }

    /// The last inner iterate of the most recent stage.
    pub fn last_inner(&self) -> &[f64] {
        &self.last_inner
    }
}

impl<R: Regularizer> StageSolver for SvrgSolver<'_, R> {
    fn step(&mut self, rng: &mut RngStream) -> Result<StageReport> {
        let (avg, last) = svrg_stage(self.problem, &self.x, self.eta, self.m, self.b, self.scheme, rng)?;
        self.x = avg;
        self.last_inner = last;
        self.s += 1;
        accumulate_average(&mut self.sum, &mut self.avg, &self.x, self.s);
        Ok(StageReport {
            evals: (self.problem.n() + self.m * self.b) as u64,
            restarted: false,
        })
    }

    fn output(&self) -> &[f64] {
        &self.avg
    }

    fn last_iterate(&self) -> &[f64] {
        &self.x
    }

    fn stages(&self) -> u64 {
        self.s
    }
}

/// Chains `stages` SVRG stages and returns `(1/S) Σ x̃_s`.
#[allow(clippy::too_many_arguments)]
pub fn run_svrg<R: Regularizer>(
    problem: &Problem<R>,
    x0: &[f64],
    eta: f64,
    m: usize,
    b: usize,
    scheme: &SamplingScheme,
    rng: &mut RngStream,
    stages: usize,
) -> Result<Vec<f64>> {
    check_count("stages", stages)?;
    let mut solver = SvrgSolver::new(problem, scheme, x0, eta, m, b)?;
    for _ in 0..stages {
        solver.step(rng)?;
    }
    Ok(solver.avg)
}
