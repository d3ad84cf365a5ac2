//! Outer acceleration loop with fixed or adaptive restarts.

use crate::error::{Error, Result};
use crate::lazy::lazy_one_stage_accsvrda;
use crate::problem::{objective, Problem, Regularizer};
use crate::sampling::{RngStream, SamplingScheme};
use crate::solver::{check_count, dot, StageReport, StageSolver};

use super::params::{outer_theta, StageParams};
use super::stage::{one_stage_accsvrda, one_stage_dasvrg, ZUpdate};

/// Which inner-stage implementation the outer loop calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageEngine {
    Dense(ZUpdate),
    /// Deferred per-coordinate updates; dual averaging with the elastic net only.
    Lazy,
}

impl StageEngine {
    #[allow(clippy::too_many_arguments)]
    pub fn run<R: Regularizer>(
        self,
        problem: &Problem<R>,
        start: &[f64],
        anchor: &[f64],
        eta: f64,
        m: usize,
        b: usize,
        scheme: &SamplingScheme,
        rng: &mut RngStream,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            StageEngine::Dense(ZUpdate::DualAveraging) => {
                one_stage_accsvrda(problem, start, anchor, eta, m, b, scheme, rng)
            }
            StageEngine::Dense(ZUpdate::Gradient) => one_stage_dasvrg(problem, start, anchor, eta, m, b, scheme, rng),
            StageEngine::Lazy => lazy_one_stage_accsvrda(problem, start, anchor, eta, m, b, scheme, rng),
        }
    }
}

/// Outer iterates after `s` stages: `x̃_s`, `x̃_{s−1}` and `z̃_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterState {
    pub x: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub s: u64,
}

impl OuterState {
    /// Stage 0 with `x̃_{−1} = z̃_0`.
    pub fn new(x0: &[f64], z0: &[f64]) -> Self {
        OuterState {
            x: x0.to_vec(),
            x_prev: z0.to_vec(),
            z: z0.to_vec(),
            s: 0,
        }
    }

    pub fn advance(&mut self, x: Vec<f64>, z: Vec<f64>) {
        self.x_prev = std::mem::replace(&mut self.x, x);
        self.z = z;
        self.s += 1;
    }

    /// Drops all momentum: the schedule restarts at `s = 0` from `x̃_s`.
    pub fn restart(&mut self) {
        self.x_prev.copy_from_slice(&self.x);
        self.z.copy_from_slice(&self.x);
        self.s = 0;
    }
}

/// `ỹ_s = x̃_{s−1} + ((θ̃_{s−1} − 1)/θ̃_s)(x̃_{s−1} − x̃_{s−2}) + (θ̃_{s−1}/θ̃_s)(z̃_{s−1} − x̃_{s−1})`
pub fn momentum_point(x_prev: &[f64], x_prev2: &[f64], z_prev: &[f64], gamma: f64, s: u64) -> Vec<f64> {
    debug_assert!(s >= 1);
    let t_prev = outer_theta(gamma, s - 1);
    let t = outer_theta(gamma, s);
    let a = (t_prev - 1.0) / t;
    let c = t_prev / t;
    x_prev
        .iter()
        .zip(x_prev2)
        .zip(z_prev)
        .map(|((&x1, &x2), &z1)| x1 + a * (x1 - x2) + c * (z1 - x1))
        .collect()
}

/// `ỹ_{s+1}` for the state after `s` stages.
pub fn outer_momentum(state: &OuterState, gamma: f64) -> Vec<f64> {
    momentum_point(&state.x, &state.x_prev, &state.z, gamma, state.s + 1)
}

/// Inputs to an adaptive restart test.
#[derive(Debug, Clone, Copy)]
pub enum RestartProbe<'a> {
    /// Restart when `P(x̃_s) > P(x̃_{s−1})`.
    Function { previous: f64, current: f64 },
    /// Restart when `(ỹ_s − x̃_s)ᵀ(ỹ_{s+1} − x̃_s) > 0`.
    Gradient {
        y: &'a [f64],
        x: &'a [f64],
        y_next: &'a [f64],
    },
}

pub fn adaptive_restart_check(probe: RestartProbe<'_>) -> bool {
    match probe {
        RestartProbe::Function { previous, current } => current > previous,
        RestartProbe::Gradient { y, x, y_next } => {
            let s: f64 = y
                .iter()
                .zip(x)
                .zip(y_next)
                .map(|((&ys, &xs), &yn)| (ys - xs) * (yn - xs))
                .sum();
            s > 0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartPolicy {
    Never,
    /// Restart every `S` stages.
    Fixed(u64),
    Function,
    Gradient,
}

/// Doubly accelerated outer loop driving one inner stage per call to `step`.
pub struct DasvrdaSolver<'a, R> {
    problem: &'a Problem<R>,
    scheme: &'a SamplingScheme,
    params: StageParams,
    engine: StageEngine,
    policy: RestartPolicy,
    state: OuterState,
    last_y: Vec<f64>,
    lookahead: Option<Vec<f64>>,
    last_objective: Option<f64>,
    stages: u64,
    restarts: u64,
}

impl<'a, R: Regularizer> DasvrdaSolver<'a, R> {
    pub fn new(
        problem: &'a Problem<R>,
        scheme: &'a SamplingScheme,
        x0: &[f64],
        z0: &[f64],
        params: StageParams,
        engine: StageEngine,
        policy: RestartPolicy,
    ) -> Result<Self> {
        problem.check_dim(x0)?;
        problem.check_dim(z0)?;
        scheme.check_batch(params.b)?;
        if let RestartPolicy::Fixed(0) = policy {
            return Err(Error::InvalidParameter("restart interval must be at least 1".into()));
        }
        if engine == StageEngine::Lazy && problem.reg.as_elastic_net().is_none() {
            return Err(Error::LazyUnsupported);
        }
        Ok(DasvrdaSolver {
            problem,
            scheme,
            params,
            engine,
            policy,
            state: OuterState::new(x0, z0),
            last_y: x0.to_vec(),
            lookahead: None,
            last_objective: None,
            stages: 0,
            restarts: 0,
        })
    }

    pub fn state(&self) -> &OuterState {
        &self.state
    }

    pub fn params(&self) -> &StageParams {
        &self.params
    }

    /// The extrapolated start point `ỹ_s` of the most recent stage.
    pub fn last_start(&self) -> &[f64] {
        &self.last_y
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }
}

impl<R: Regularizer> StageSolver for DasvrdaSolver<'_, R> {
    fn step(&mut self, rng: &mut RngStream) -> Result<StageReport> {
        let n = self.problem.n() as u64;
        let p = self.params;
        let mut evals = n + (p.m * p.b) as u64;
        if self.policy == RestartPolicy::Function && self.last_objective.is_none() {
            self.last_objective = Some(objective(self.problem, &self.state.x)?);
            evals += n;
        }
        let y = match self.lookahead.take() {
            Some(y) => y,
            None => outer_momentum(&self.state, p.gamma),
        };
        let (x, z) = self
            .engine
            .run(self.problem, &y, &self.state.x, p.eta, p.m, p.b, self.scheme, rng)?;
        self.state.advance(x, z);
        self.stages += 1;

        let restart = match self.policy {
            RestartPolicy::Never => false,
            RestartPolicy::Fixed(interval) => self.state.s >= interval,
            RestartPolicy::Function => {
                let current = objective(self.problem, &self.state.x)?;
                evals += n;
                let previous = self.last_objective.replace(current).unwrap_or(f64::INFINITY);
                adaptive_restart_check(RestartProbe::Function { previous, current })
            }
            RestartPolicy::Gradient => {
                let y_next = outer_momentum(&self.state, p.gamma);
                let fire = adaptive_restart_check(RestartProbe::Gradient {
                    y: &y,
                    x: &self.state.x,
                    y_next: &y_next,
                });
                if !fire {
                    self.lookahead = Some(y_next);
                }
                fire
            }
        };
        if restart {
            self.state.restart();
            self.lookahead = None;
            self.restarts += 1;
        }
        self.last_y = y;
        Ok(StageReport {
            evals,
            restarted: restart,
        })
    }

    fn output(&self) -> &[f64] {
        &self.state.x
    }

    fn last_iterate(&self) -> &[f64] {
        &self.state.x
    }

    fn stages(&self) -> u64 {
        self.stages
    }
}

/// Non-strongly-convex variant: `S` accelerated stages from `(x̃_0, z̃_0)`.
#[allow(clippy::too_many_arguments)]
pub fn run_dasvrda_ns<R: Regularizer>(
    problem: &Problem<R>,
    x0: &[f64],
    z0: &[f64],
    params: &StageParams,
    stages: usize,
    scheme: &SamplingScheme,
    rng: &mut RngStream,
    engine: StageEngine,
) -> Result<Vec<f64>> {
    check_count("stages", stages)?;
    let mut solver = DasvrdaSolver::new(problem, scheme, x0, z0, *params, engine, RestartPolicy::Never)?;
    for _ in 0..stages {
        solver.step(rng)?;
    }
    Ok(solver.state.x)
}

/// Strongly convex variant: `T` restarts of `S` stages, each restart seeded
/// with the previous output for both `x̃_0` and `z̃_0`.
#[allow(clippy::too_many_arguments)]
pub fn run_dasvrda_sc<R: Regularizer>(
    problem: &Problem<R>,
    x0: &[f64],
    params: &StageParams,
    stages: usize,
    restarts: usize,
    scheme: &SamplingScheme,
    rng: &mut RngStream,
    engine: StageEngine,
) -> Result<Vec<f64>> {
    check_count("stages", stages)?;
    check_count("restarts", restarts)?;
    let mut solver = DasvrdaSolver::new(
        problem,
        scheme,
        x0,
        x0,
        *params,
        engine,
        RestartPolicy::Fixed(stages as u64),
    )?;
    for _ in 0..stages * restarts {
        solver.step(rng)?;
    }
    Ok(solver.state.x)
}

/// Runs `stages` stages under an adaptive restart policy and returns the last
/// outer iterate.
#[allow(clippy::too_many_arguments)]
pub fn run_dasvrda_adaptive<R: Regularizer>(
    problem: &Problem<R>,
    x0: &[f64],
    params: &StageParams,
    stages: usize,
    policy: RestartPolicy,
    scheme: &SamplingScheme,
    rng: &mut RngStream,
    engine: StageEngine,
) -> Result<Vec<f64>> {
    check_count("stages", stages)?;
    let mut solver = DasvrdaSolver::new(problem, scheme, x0, x0, *params, engine, policy)?;
    for _ in 0..stages {
        solver.step(rng)?;
    }
    Ok(solver.state.x)
}

/// `(ỹ_s − x̃_s)ᵀ(ỹ_{s+1} − x̃_s)`, exposed for diagnostics.
pub fn restart_inner_product(y: &[f64], x: &[f64], y_next: &[f64]) -> f64 {
    let a: Vec<f64> = y.iter().zip(x).map(|(u, v)| u - v).collect();
    let b: Vec<f64> = y_next.iter().zip(x).map(|(u, v)| u - v).collect();
    dot(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn momentum_of_equal_vectors() {
        let v = vec![1.5, -2.0, 0.25];
        for s in 1..5 {
            assert_eq!(momentum_point(&v, &v, &v, 3.3, s), v);
        }
    }

    #[test]
    fn first_momentum_returns_z0() {
        let x0 = [1.0, 2.0];
        let z0 = [-3.0, 0.5];
        let state = OuterState::new(&x0, &z0);
        let y = outer_momentum(&state, 3.0);
        for (a, b) in y.iter().zip(&z0) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn restart_checks() {
        assert!(!adaptive_restart_check(RestartProbe::Function {
            previous: 2.0,
            current: 1.0
        }));
        assert!(!adaptive_restart_check(RestartProbe::Function {
            previous: 1.0,
            current: 1.0
        }));
        assert!(adaptive_restart_check(RestartProbe::Function {
            previous: 1.0,
            current: 1.5
        }));
        let x = [0.5];
        assert!(!adaptive_restart_check(RestartProbe::Gradient {
            y: &[1.0],
            x: &x,
            y_next: &x
        }));
        // Mapping step moved down (y − x > 0) and momentum keeps pointing up.
        assert!(adaptive_restart_check(RestartProbe::Gradient {
            y: &[1.0],
            x: &x,
            y_next: &[0.7]
        }));
        assert!(!adaptive_restart_check(RestartProbe::Gradient {
            y: &[1.0],
            x: &x,
            y_next: &[0.2]
        }));
        assert!((restart_inner_product(&[1.0], &x, &[0.7]) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn restart_resets_state() {
        let mut st = OuterState::new(&[0.0], &[0.0]);
        st.advance(vec![1.0], vec![2.0]);
        st.advance(vec![1.5], vec![3.0]);
        st.restart();
        assert_eq!(st, OuterState::new(&[1.5], &[1.5]));
    }
}
