use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::baseline::{ApgSolver, PgSolver, SvrgSolver};
use crate::dasvrda::{
    choose_stages_for_rho, eta_default, gamma_star, initial_inner_len, warm_default_rounds, DasvrdaSolver,
    RestartPolicy, StageEngine, StageParams, WarmStartHint, WarmStartSolver, ZUpdate,
};
use crate::error::{Error, Result};
use crate::lazy::lazy_recommended;
use crate::problem::{objective, Problem};
use crate::sampling::{RngStream, SamplingKind, SamplingScheme, RNG_NAME};
use crate::solver::StageSolver;

use super::config::{Algorithm, LazyMode, RunConfig, SmoothnessChoice};
use super::reference::{compute_reference_cached, load_reference, problem_hash, ReferenceOptions};

/// Restart interval used by `dasvrda-sc` when neither `--stages` nor a
/// positive `λ2` determines one.
pub const DEFAULT_RESTART_INTERVAL: u64 = 10;

/// Objective growth (relative to the starting value) treated as divergence.
const DIVERGENCE_FACTOR: f64 = 1e8;

/// CSV column names, in order.
pub const TRACE_COLUMNS: [&str; 7] = ["stage", "evals", "evals_over_n", "objective", "gap", "seconds", "restarted"];

/// One row of a convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub stage: u64,
    /// Cumulative component-gradient evaluations.
    pub evals: u64,
    pub evals_over_n: f64,
    /// Objective at the algorithm's reported output.
    pub objective: f64,
    pub gap: Option<f64>,
    pub seconds: f64,
    pub restarted: bool,
    /// Objective at the most recent outer iterate; kept for diagnostics only.
    #[serde(skip)]
    pub last_objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WarmInfo {
    pub m0: usize,
    pub rounds: usize,
}

/// A configuration with every default filled in for a concrete problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub n: usize,
    pub d: usize,
    pub smoothness: f64,
    pub m: usize,
    pub gamma: Option<f64>,
    pub eta: f64,
    pub restart_interval: Option<u64>,
    pub max_stages: Option<u64>,
    pub warm: Option<WarmInfo>,
    pub lazy: bool,
    pub rng: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub resolved: ResolvedRun,
    pub records: Vec<TraceRecord>,
    /// The run stopped early because the objective blew up.
    pub diverged: bool,
    pub output: Vec<f64>,
}

impl RunOutcome {
    pub fn total_evals(&self) -> u64 {
        self.records.last().map_or(0, |r| r.evals)
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.objective)
    }
}

/// Fills in defaults: `m = n/b` (`2n/b` for SVRG), `γ = γ*`, the formula step
/// size scaled by the multiplier, `L̄` under weighted sampling and `L_max`
/// otherwise.
pub fn resolve(config: &RunConfig, problem: &Problem) -> Result<ResolvedRun> {
    config.validate()?;
    let n = problem.n();
    let b = config.batch;
    if config.algo.is_stochastic() && b > n {
        return Err(Error::Config(format!("batch size {} exceeds n = {}", b, n)));
    }
    let choice = config.smoothness.unwrap_or(match config.sampling {
        SamplingKind::Weighted => SmoothnessChoice::Mean,
        _ => SmoothnessChoice::Max,
    });
    let smoothness = match choice {
        SmoothnessChoice::Mean => problem.mean_smoothness(),
        SmoothnessChoice::Max => problem.max_smoothness(),
    };
    let m = config.epoch_len.unwrap_or(match config.algo {
        Algorithm::Svrg => (2 * n / b).max(1),
        _ => (n / b).max(1),
    });
    let mut gamma = None;
    let mut restart_interval = None;
    let mut warm = None;
    let mut max_stages = config.stages;
    let base_eta = match config.algo {
        Algorithm::Pg | Algorithm::Apg => 1.0 / smoothness,
        Algorithm::Svrg => 1.0 / (4.0 * smoothness),
        _ => {
            let g = config.gamma.unwrap_or_else(|| gamma_star(m, b));
            gamma = Some(g);
            eta_default(g, m, b, smoothness)
        }
    };
    let eta = config.eta.unwrap_or(base_eta) * config.eta_multiplier;
    if let Some(g) = gamma {
        StageParams::new(g, eta, m, b, config.theory).map_err(|e| Error::Config(e.to_string()))?;
    }
    match config.algo {
        Algorithm::DasvrdaSc => {
            let g = gamma.unwrap_or(3.0);
            let s = match config.stages {
                Some(s) => s,
                None if config.l2 > 0.0 => choose_stages_for_rho(g, eta, m, config.l2, 0.5)?,
                None => DEFAULT_RESTART_INTERVAL,
            };
            restart_interval = Some(s);
            max_stages = config.restarts.map(|t| s.saturating_mul(t));
        }
        Algorithm::DasvrdaWarm => {
            let x0 = vec![0.0; problem.dim()];
            let g = gamma.unwrap_or(3.0);
            let m0 = initial_inner_len(problem, &x0, g, m, b, smoothness, WarmStartHint::default())?;
            warm = Some(WarmInfo {
                m0,
                rounds: warm_default_rounds(g, m0, m),
            });
        }
        _ => {}
    }
    let lazy = config.algo.uses_dual_averaging()
        && match config.lazy {
            LazyMode::On => true,
            LazyMode::Off => false,
            LazyMode::Auto => lazy_recommended(problem),
        };
    Ok(ResolvedRun {
        config: config.clone(),
        n,
        d: problem.dim(),
        smoothness,
        m,
        gamma,
        eta,
        restart_interval,
        max_stages,
        warm,
        lazy,
        rng: RNG_NAME.to_string(),
    })
}

fn build_solver<'a>(
    r: &ResolvedRun,
    problem: &'a Problem,
    scheme: &'a SamplingScheme,
    x0: &[f64],
) -> Result<Box<dyn StageSolver + 'a>> {
    let b = r.config.batch;
    let engine = if r.lazy {
        StageEngine::Lazy
    } else {
        StageEngine::Dense(ZUpdate::DualAveraging)
    };
    let params = || StageParams {
        gamma: r.gamma.unwrap_or(3.0),
        eta: r.eta,
        m: r.m,
        b,
    };
    let dasvrda = |engine, policy| -> Result<Box<dyn StageSolver + 'a>> {
        Ok(Box::new(DasvrdaSolver::new(problem, scheme, x0, x0, params(), engine, policy)?))
    };
    match r.config.algo {
        Algorithm::Pg => Ok(Box::new(PgSolver::new(problem, x0, r.eta)?)),
        Algorithm::Apg => Ok(Box::new(ApgSolver::new(problem, x0, r.eta)?)),
        Algorithm::Svrg => Ok(Box::new(SvrgSolver::new(problem, scheme, x0, r.eta, r.m, b)?)),
        Algorithm::DasvrdaNs => dasvrda(engine, RestartPolicy::Never),
        Algorithm::DasvrdaSc => dasvrda(engine, RestartPolicy::Fixed(r.restart_interval.unwrap_or(1))),
        Algorithm::DasvrdaArF => dasvrda(engine, RestartPolicy::Function),
        Algorithm::DasvrdaArG => dasvrda(engine, RestartPolicy::Gradient),
        Algorithm::Dasvrg => dasvrda(StageEngine::Dense(ZUpdate::Gradient), RestartPolicy::Never),
        Algorithm::DasvrdaWarm => {
            let w = r.warm.ok_or_else(|| Error::Config("warm start parameters missing".into()))?;
            Ok(Box::new(WarmStartSolver::new(
                problem,
                scheme,
                x0,
                r.gamma.unwrap_or(3.0),
                w.m0,
                w.rounds,
                b,
                r.smoothness,
                engine,
            )?))
        }
    }
}

/// Runs a resolved configuration from `x = 0` until the budget or the stage
/// limit is reached, recording one row per outer stage plus the initial row.
pub fn run_resolved(
    resolved: &ResolvedRun,
    problem: &Problem,
    reference: Option<f64>,
    rng: &mut RngStream,
) -> Result<RunOutcome> {
    let scheme = SamplingScheme::build(resolved.config.sampling, problem.smoothness(), resolved.config.batch)?;
    let x0 = vec![0.0; problem.dim()];
    let mut solver = build_solver(resolved, problem, &scheme, &x0)?;
    let n = problem.n() as f64;
    let start = Instant::now();
    let p0 = objective(problem, &x0)?;
    let record = |stage, evals: u64, obj: f64, last: f64, restarted, start: &Instant| TraceRecord {
        stage,
        evals,
        evals_over_n: evals as f64 / n,
        objective: obj,
        gap: reference.map(|r| obj - r),
        seconds: start.elapsed().as_secs_f64(),
        restarted,
        last_objective: last,
    };
    let mut records = vec![record(0, 0, p0, p0, false, &start)];
    let mut evals = 0u64;
    let mut diverged = false;
    let limit = DIVERGENCE_FACTOR * p0.abs().max(1.0);
    while evals < resolved.config.budget && resolved.max_stages.is_none_or(|s| solver.stages() < s) {
        let report = match solver.step(rng) {
            Ok(r) => r,
            Err(Error::NonFiniteMargin) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        evals += report.evals;
        let obj = objective(problem, solver.output());
        let last = objective(problem, solver.last_iterate());
        match (obj, last) {
            (Ok(o), Ok(l)) if o.is_finite() && o <= limit => {
                records.push(record(solver.stages(), evals, o, l, report.restarted, &start));
            }
            (Ok(_), _) | (Err(Error::NonFiniteMargin), _) => {
                diverged = true;
                break;
            }
            (Err(e), _) => return Err(e),
        }
    }
    if diverged {
        log::warn!("{} diverged after {} stages", resolved.config.algo, solver.stages());
    }
    Ok(RunOutcome {
        resolved: resolved.clone(),
        records,
        diverged,
        output: solver.output().to_vec(),
    })
}

fn fmt_float(v: f64) -> String {
    format!("{}", v)
}

/// CSV text: a `#`-prefixed JSON line with the resolved configuration, the
/// header and one line per record.
pub fn format_trace(resolved: &ResolvedRun, records: &[TraceRecord]) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "# {}", serde_json::to_string(resolved)?).expect("string write");
    writeln!(out, "{}", TRACE_COLUMNS.join(",")).expect("string write");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.stage,
            r.evals,
            fmt_float(r.evals_over_n),
            fmt_float(r.objective),
            r.gap.map(fmt_float).unwrap_or_default(),
            fmt_float(r.seconds),
            u8::from(r.restarted)
        )
        .expect("string write");
    }
    Ok(out)
}

pub fn write_trace(path: &Path, resolved: &ResolvedRun, records: &[TraceRecord]) -> Result<()> {
    fs::write(path, format_trace(resolved, records)?)?;
    Ok(())
}

/// Reads a trace back; the JSON header line is skipped.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    let bad = |m: String| Error::Config(format!("malformed trace: {}", m));
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
    if header != TRACE_COLUMNS.join(",") {
        return Err(bad(format!("unexpected header '{}'", header)));
    }
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != TRACE_COLUMNS.len() {
            return Err(bad(format!("expected 7 fields in '{}'", line)));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number '{}'", s)));
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("bad integer '{}'", s)));
        let objective = num(f[3])?;
        out.push(TraceRecord {
            stage: int(f[0])?,
            evals: int(f[1])?,
            evals_over_n: num(f[2])?,
            objective,
            gap: if f[4].is_empty() { None } else { Some(num(f[4])?) },
            seconds: num(f[5])?,
            restarted: f[6] == "1",
            last_objective: objective,
        });
    }
    Ok(out)
}

/// Loads the reference objective named by the configuration. A missing file
/// is computed (tolerance 1e-12) and written.
pub fn reference_objective(config: &RunConfig, problem: &Problem) -> Result<Option<f64>> {
    let Some(path) = &config.reference else {
        return Ok(None);
    };
    if path.exists() {
        let r = load_reference(path)?;
        if r.problem_hash != problem_hash(problem) {
            return Err(Error::Config(format!(
                "reference {} was computed for a different problem",
                path.display()
            )));
        }
        if !r.converged {
            log::warn!("reference {} did not converge", path.display());
        }
        return Ok(Some(r.objective));
    }
    let (r, _) = compute_reference_cached(problem, ReferenceOptions::new(1e-12), path)?;
    Ok(Some(r.objective))
}

/// Builds the problem, resolves defaults, runs and writes the trace if a path
/// is configured. Configuration errors surface before any optimization.
pub fn run_experiment(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let problem = config.source.build(config.loss, config.l1, config.l2)?;
    let resolved = resolve(config, &problem)?;
    let reference = reference_objective(config, &problem)?;
    let mut rng = RngStream::new(config.seed);
    let outcome = run_resolved(&resolved, &problem, reference, &mut rng)?;
    if let Some(path) = &config.trace {
        write_trace(path, &outcome.resolved, &outcome.records)?;
    }
    Ok(outcome)
}

/// First `evals/n` at which the gap drops to `target`.
pub fn evals_to_gap(records: &[TraceRecord], target: f64) -> Option<f64> {
    records
        .iter()
        .find(|r| r.gap.is_some_and(|g| g <= target))
        .map(|r| r.evals_over_n)
}

/// Same as [`evals_to_gap`] but judged on the last outer iterate.
pub fn evals_to_gap_last_iterate(records: &[TraceRecord], reference: f64, target: f64) -> Option<f64> {
    records
        .iter()
        .find(|r| r.last_objective - reference <= target)
        .map(|r| r.evals_over_n)
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub eta_multiplier: f64,
    pub restart_interval: Option<u64>,
    pub outcome: RunOutcome,
}

fn cell_trace_path(base: &Path, idx: usize) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    base.with_file_name(format!("{}-cell{}.{}", stem, idx, ext))
}

/// Sweeps step-size multipliers (and restart intervals, when given) over a
/// fixed problem. Each cell draws from its own RNG substream and, when the
/// configuration names a trace, writes `<trace>-cell<k>.csv`. Up to
/// `workers` cells run concurrently.
pub fn run_grid(
    config: &RunConfig,
    problem: &Problem,
    reference: Option<f64>,
    multipliers: &[f64],
    intervals: &[Option<u64>],
    workers: usize,
) -> Result<Vec<GridCell>> {
    let mut cells = Vec::new();
    for &mult in multipliers {
        for &interval in intervals {
            let mut c = config.clone();
            c.eta_multiplier = config.eta_multiplier * mult;
            if interval.is_some() {
                c.stages = interval;
            }
            let resolved = resolve(&c, problem)?;
            cells.push((mult, interval, resolved));
        }
    }
    let run_cell = |idx: usize, resolved: &ResolvedRun| -> Result<RunOutcome> {
        let mut rng = RngStream::new(config.seed).substream(idx as u32, 0);
        let outcome = run_resolved(resolved, problem, reference, &mut rng)?;
        if let Some(base) = &config.trace {
            write_trace(&cell_trace_path(base, idx), &outcome.resolved, &outcome.records)?;
        }
        Ok(outcome)
    };
    let workers = workers.max(1).min(cells.len().max(1));
    let mut outcomes: Vec<Option<Result<RunOutcome>>> = (0..cells.len()).map(|_| None).collect();
    if workers == 1 {
        for (idx, (_, _, r)) in cells.iter().enumerate() {
            outcomes[idx] = Some(run_cell(idx, r));
        }
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let cells = &cells;
                    let run_cell = &run_cell;
                    scope.spawn(move || {
                        (w..cells.len())
                            .step_by(workers)
                            .map(|idx| (idx, run_cell(idx, &cells[idx].2)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (idx, res) in h.join().expect("grid worker panicked") {
                    outcomes[idx] = Some(res);
                }
            }
        });
    }
    cells
        .into_iter()
        .zip(outcomes)
        .map(|((eta_multiplier, restart_interval, _), o)| {
            Ok(GridCell {
                eta_multiplier,
                restart_interval,
                outcome: o.expect("every grid cell runs")?,
            })
        })
        .collect()
}

/// The non-diverged cell reaching `target` with the fewest evaluations.
pub fn best_cell(cells: &[GridCell], target: f64) -> Option<(&GridCell, f64)> {
    cells
        .iter()
        .filter(|c| !c.outcome.diverged)
        .filter_map(|c| evals_to_gap(&c.outcome.records, target).map(|e| (c, e)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{SyntheticKind, SyntheticSpec};
    use crate::harness::config::ProblemSource;
    use crate::problem::LossKind;

    fn config(algo: Algorithm) -> (RunConfig, Problem) {
        let mut spec = SyntheticSpec::new(SyntheticKind::Lasso, 40, 8);
        spec.seed = 3;
        let mut c = RunConfig::new(ProblemSource::Synthetic(spec), LossKind::Squared, algo);
        c.batch = 4;
        c.l1 = 1e-3;
        c.budget = 2_000;
        let p = c.source.build(c.loss, c.l1, c.l2).unwrap();
        (c, p)
    }

    #[test]
    fn pg_row_count() {
        let (mut c, p) = config(Algorithm::Pg);
        c.stages = Some(7);
        let r = resolve(&c, &p).unwrap();
        let out = run_resolved(&r, &p, None, &mut RngStream::new(0)).unwrap();
        assert_eq!(out.records.len(), 8);
        assert_eq!(out.total_evals(), 7 * 40);
    }

    #[test]
    fn accounting_per_stage() {
        let (c, p) = config(Algorithm::DasvrdaNs);
        let r = resolve(&c, &p).unwrap();
        assert_eq!(r.m, 10);
        let out = run_resolved(&r, &p, None, &mut RngStream::new(0)).unwrap();
        for w in out.records.windows(2) {
            assert_eq!(w[1].evals - w[0].evals, 40 + 10 * 4);
        }
        assert!(out.total_evals() >= c.budget);
    }

    #[test]
    fn trace_round_trip() {
        let (c, p) = config(Algorithm::DasvrdaArF);
        let r = resolve(&c, &p).unwrap();
        let out = run_resolved(&r, &p, Some(0.0), &mut RngStream::new(1)).unwrap();
        let text = format_trace(&r, &out.records).unwrap();
        assert!(text.starts_with("# {"));
        let back = parse_trace(&text).unwrap();
        assert_eq!(back.len(), out.records.len());
        for (a, b) in back.iter().zip(&out.records) {
            assert_eq!((a.stage, a.evals, a.objective, a.gap), (b.stage, b.evals, b.objective, b.gap));
        }
    }

    #[test]
    fn sc_limits_stages() {
        let (mut c, p) = config(Algorithm::DasvrdaSc);
        c.stages = Some(3);
        c.restarts = Some(2);
        c.budget = 1_000_000;
        let r = resolve(&c, &p).unwrap();
        assert_eq!(r.max_stages, Some(6));
        let out = run_resolved(&r, &p, None, &mut RngStream::new(0)).unwrap();
        assert_eq!(out.records.len(), 7);
        let fired: Vec<u64> = out.records.iter().filter(|r| r.restarted).map(|r| r.stage).collect();
        assert_eq!(fired, vec![3, 6]);
    }

    #[test]
    fn huge_step_is_flagged() {
        let (mut c, p) = config(Algorithm::Svrg);
        c.eta_multiplier = 1e6;
        let r = resolve(&c, &p).unwrap();
        let out = run_resolved(&r, &p, None, &mut RngStream::new(0)).unwrap();
        assert!(out.diverged);
    }

    #[test]
    fn cell_paths() {
        assert_eq!(cell_trace_path(Path::new("/t/run.csv"), 3), PathBuf::from("/t/run-cell3.csv"));
    }
}
