use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::apg_theta;
use crate::error::{Error, Result};
use crate::problem::{full_gradient, objective, Problem};

/// High-accuracy minimizer used to report objective gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    /// Content hash of the problem the solution belongs to.
    pub problem_hash: String,
    pub tolerance: f64,
    pub objective: f64,
    pub x: Vec<f64>,
    pub iterations: u64,
    /// `false` when the iteration cap was hit before the stopping rule fired.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    /// Stop when the relative objective decrease over `window` iterations is below this.
    pub tolerance: f64,
    pub window: usize,
    pub max_iterations: u64,
    /// Proximal gradient steps run after the accelerated phase.
    pub polish: usize,
}

impl ReferenceOptions {
    pub fn new(tolerance: f64) -> Self {
        ReferenceOptions {
            tolerance,
            window: 100,
            max_iterations: 200_000,
            polish: 100,
        }
    }
}

/// SHA-256 over the data, labels, loss and regularization.
pub fn problem_hash(problem: &Problem) -> String {
    let mut h = Sha256::new();
    let data = &problem.data;
    let (indptr, indices, values) = data.csr();
    h.update((data.rows() as u64).to_le_bytes());
    h.update((data.cols() as u64).to_le_bytes());
    for &p in indptr {
        h.update((p as u64).to_le_bytes());
    }
    for &j in indices {
        h.update((j as u64).to_le_bytes());
    }
    for &v in values.iter().chain(data.labels()) {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update(problem.loss.to_string().as_bytes());
    h.update(problem.reg.l1.to_bits().to_le_bytes());
    h.update(problem.reg.l2.to_bits().to_le_bytes());
    h.finalize().iter().map(|b| format!("{:02x}", b)).collect()
}

/// Power-iteration estimate of the largest eigenvalue of `∇²F`'s bound
/// `(c/n) AᵀA`, with `c` the loss curvature.
pub fn smoothness_estimate(problem: &Problem, iterations: usize) -> f64 {
    let d = problem.dim();
    let n = problem.n();
    let mut v: Vec<f64> = (0..d).map(|j| 1.0 + (j % 7) as f64 * 0.1).collect();
    let mut lambda = 0.0;
    let mut av = vec![0.0; n];
    for _ in 0..iterations {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        for (i, a) in av.iter_mut().enumerate() {
            *a = problem.data.row(i).dot(&v);
        }
        let mut w = vec![0.0; d];
        for (i, &a) in av.iter().enumerate() {
            problem.data.row(i).axpy(a, &mut w);
        }
        let scale = problem.loss.curvature() / n as f64;
        w.iter_mut().for_each(|x| *x *= scale);
        lambda = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        v = w;
    }
    lambda
}

fn prox_step(problem: &Problem, y: &[f64], step: f64) -> Result<Vec<f64>> {
    let g = full_gradient(problem, y)?;
    let mut out: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
    crate::problem::Regularizer::prox_in_place(&problem.reg, &mut out, step);
    Ok(out)
}

/// Accelerated proximal gradient with function-value restarts followed by a
/// proximal gradient polish. The step size starts from a power-iteration
/// estimate of the smoothness and doubles whenever a momentum-free step fails
/// to decrease the objective.
pub fn compute_reference(problem: &Problem, x0: &[f64], opts: ReferenceOptions) -> Result<ReferenceSolution> {
    if !(opts.tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "reference tolerance must be positive, got {}",
            opts.tolerance
        )));
    }
    problem.check_dim(x0)?;
    let cap = problem.mean_smoothness();
    let mut lip = (1.05 * smoothness_estimate(problem, 300)).min(cap);
    if !(lip > 0.0) {
        lip = cap;
    }
    let mut x = x0.to_vec();
    let mut x_prev = x.clone();
    let mut px = objective(problem, &x)?;
    let mut history = vec![px];
    let mut s = 0u64;
    let mut iterations = 0u64;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let coef = (apg_theta(s) - 1.0) / apg_theta(s + 1);
        let y: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a + coef * (a - b)).collect();
        let next = prox_step(problem, &y, 1.0 / lip)?;
        let pn = objective(problem, &next)?;
        if pn > px || !pn.is_finite() {
            if s == 0 {
                lip *= 2.0;
            }
            x_prev.copy_from_slice(&x);
            s = 0;
            continue;
        }
        x_prev = std::mem::replace(&mut x, next);
        px = pn;
        s += 1;
        history.push(px);
        let len = history.len();
        if len > opts.window {
            let old = history[len - 1 - opts.window];
            if old - px <= opts.tolerance * px.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }
    for _ in 0..opts.polish {
        let next = prox_step(problem, &x, 1.0 / lip)?;
        let pn = objective(problem, &next)?;
        if !(pn < px) {
            break;
        }
        x = next;
        px = pn;
    }
    if !converged {
        log::warn!(
            "reference solver stopped after {} iterations without meeting tolerance {}",
            iterations,
            opts.tolerance
        );
    }
    Ok(ReferenceSolution {
        problem_hash: problem_hash(problem),
        tolerance: opts.tolerance,
        objective: px,
        x,
        iterations,
        converged,
    })
}

pub fn load_reference(path: &Path) -> Result<ReferenceSolution> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn save_reference(path: &Path, reference: &ReferenceSolution) -> Result<()> {
    fs::write(path, serde_json::to_string(reference)?)?;
    Ok(())
}

/// Returns a cached solution when `path` holds one for the same problem at a
/// tolerance at least as tight; otherwise solves from zero and writes the cache.
/// The flag reports a cache hit.
pub fn compute_reference_cached(
    problem: &Problem,
    opts: ReferenceOptions,
    path: &Path,
) -> Result<(ReferenceSolution, bool)> {
    let hash = problem_hash(problem);
    if path.exists() {
        match load_reference(path) {
            Ok(r) if r.problem_hash == hash && r.tolerance <= opts.tolerance => return Ok((r, true)),
            Ok(_) => log::info!("reference cache {} is stale; recomputing", path.display()),
            Err(e) => log::warn!("ignoring unreadable reference cache {}: {}", path.display(), e),
        }
    }
    let r = compute_reference(problem, &vec![0.0; problem.dim()], opts)?;
    save_reference(path, &r)?;
    Ok((r, false))
}
