//! Warm start: a few short stages with geometrically growing inner lengths
//! before the accelerated outer loop.

use crate::error::{Error, Result};
use crate::problem::{full_gradient, objective, Problem, Regularizer};
use crate::sampling::{RngStream, SamplingScheme};
use crate::solver::{check_count, check_positive, StageReport, StageSolver};

use super::outer::{DasvrdaSolver, RestartPolicy, StageEngine};
use super::params::{eta_default, warm_default_rounds, warm_schedule, StageParams};

/// Optional estimates of the initial gap `P(x̃_0) − P(x*)` and of
/// `‖x̃_0 − x*‖²` used to size the first warm-up stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WarmStartHint {
    pub gap: Option<f64>,
    pub dist_sq: Option<f64>,
}

/// `m_0 = min(⌈√((1 + γ(m+1)/b) L ‖x̃_0 − x*‖² / gap)⌉, m)`, clipped to `[1, m]`.
///
/// Without a hint the gap is taken as `P(x̃_0)` (every supported objective is
/// nonnegative) and the distance as the squared length of one proximal
/// gradient step of size `1/L`.
pub fn initial_inner_len<R: Regularizer>(
    problem: &Problem<R>,
    x0: &[f64],
    gamma: f64,
    m: usize,
    b: usize,
    smoothness: f64,
    hint: WarmStartHint,
) -> Result<usize> {
    check_count("m", m)?;
    check_count("b", b)?;
    let gap = match hint.gap {
        Some(g) => g,
        None => objective(problem, x0)?,
    };
    let dist_sq = match hint.dist_sq {
        Some(d) => d,
        None => {
            let g = full_gradient(problem, x0)?;
            let step = 1.0 / smoothness;
            let mut p: Vec<f64> = x0.iter().zip(&g).map(|(x, g)| x - step * g).collect();
            problem.reg.prox_in_place(&mut p, step);
            p.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum()
        }
    };
    if !(gap > 0.0) || !gap.is_finite() {
        return Ok(1);
    }
    let scale = 1.0 + gamma * (m as f64 + 1.0) / b as f64;
    let raw = (scale * smoothness * dist_sq / gap).sqrt().ceil();
    if !raw.is_finite() {
        return Ok(m);
    }
    Ok((raw as usize).clamp(1, m))
}

/// Warm-started DASVRDA as a stage-by-stage solver. The first `U` steps are
/// the warm-up stages, after which every step is one outer stage of the
/// accelerated loop with inner length `m'`.
pub struct WarmStartSolver<'a, R> {
    problem: &'a Problem<R>,
    scheme: &'a SamplingScheme,
    engine: StageEngine,
    gamma: f64,
    eta: f64,
    b: usize,
    lens: Vec<usize>,
    tail_len: usize,
    x: Vec<f64>,
    z: Vec<f64>,
    main: Option<DasvrdaSolver<'a, R>>,
    stages: u64,
}

impl<'a, R: Regularizer> WarmStartSolver<'a, R> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        problem: &'a Problem<R>,
        scheme: &'a SamplingScheme,
        x0: &[f64],
        gamma: f64,
        m0: usize,
        rounds: usize,
        b: usize,
        smoothness: f64,
        engine: StageEngine,
    ) -> Result<Self> {
        check_count("m0", m0)?;
        check_count("b", b)?;
        check_positive("smoothness", smoothness)?;
        problem.check_dim(x0)?;
        scheme.check_batch(b)?;
        if !(gamma > 1.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must exceed 1, got {}", gamma)));
        }
        if engine == StageEngine::Lazy && problem.reg.as_elastic_net().is_none() {
            return Err(Error::LazyUnsupported);
        }
        let (lens, tail_len) = warm_schedule(gamma, m0, rounds);
        if tail_len == 0 || lens.iter().any(|&l| l == 0) {
            return Err(Error::InvalidParameter("warm-start schedule produced an empty stage".into()));
        }
        let eta = eta_default(gamma, tail_len, b, smoothness);
        let mut solver = WarmStartSolver {
            problem,
            scheme,
            engine,
            gamma,
            eta,
            b,
            lens,
            tail_len,
            x: x0.to_vec(),
            z: x0.to_vec(),
            main: None,
            stages: 0,
        };
        if solver.lens.is_empty() {
            solver.start_main()?;
        }
        Ok(solver)
    }

    fn start_main(&mut self) -> Result<()> {
        let params = StageParams {
            gamma: self.gamma,
            eta: self.eta,
            m: self.tail_len,
            b: self.b,
        };
        self.main = Some(DasvrdaSolver::new(
            self.problem,
            self.scheme,
            &self.x,
            &self.z,
            params,
            self.engine,
            RestartPolicy::Never,
        )?);
        Ok(())
    }

    /// Inner lengths `m_1, …, m_U` of the warm-up phase.
    pub fn warm_lengths(&self) -> &[usize] {
        &self.lens
    }

    /// Inner length `m'` of the main phase.
    pub fn tail_len(&self) -> usize {
        self.tail_len
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn in_warm_up(&self) -> bool {
        self.main.is_none()
    }
}

impl<R: Regularizer> StageSolver for WarmStartSolver<'_, R> {
    fn step(&mut self, rng: &mut RngStream) -> Result<StageReport> {
        self.stages += 1;
        if let Some(main) = self.main.as_mut() {
            return main.step(rng);
        }
        let u = self.stages as usize - 1;
        let m = self.lens[u];
        let (x, z) = self
            .engine
            .run(self.problem, &self.z, &self.x, self.eta, m, self.b, self.scheme, rng)?;
        self.x = x;
        self.z = z;
        if u + 1 == self.lens.len() {
            self.start_main()?;
        }
        Ok(StageReport {
            evals: (self.problem.n() + m * self.b) as u64,
            restarted: false,
        })
    }

    fn output(&self) -> &[f64] {
        match &self.main {
            Some(main) => main.output(),
            None => &self.x,
        }
    }

    fn last_iterate(&self) -> &[f64] {
        self.output()
    }

    fn stages(&self) -> u64 {
        self.stages
    }
}

/// Runs `rounds` warm-up stages followed by `stages` accelerated stages.
/// `rounds = None` uses `U = ⌈log_{√γ}(m/m_0)⌉`.
#[allow(clippy::too_many_arguments)]
pub fn run_dasvrda_warm<R: Regularizer>(
    problem: &Problem<R>,
    x0: &[f64],
    gamma: f64,
    m0: usize,
    m: usize,
    b: usize,
    rounds: Option<usize>,
    stages: usize,
    scheme: &SamplingScheme,
    rng: &mut RngStream,
    engine: StageEngine,
) -> Result<Vec<f64>> {
    check_count("m", m)?;
    let rounds = rounds.unwrap_or_else(|| warm_default_rounds(gamma, m0, m));
    let smoothness = problem.mean_smoothness();
    let mut solver = WarmStartSolver::new(problem, scheme, x0, gamma, m0, rounds, b, smoothness, engine)?;
    for _ in 0..rounds + stages {
        solver.step(rng)?;
    }
    Ok(solver.output().to_vec())
}
