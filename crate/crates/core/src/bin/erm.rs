use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dasvrda::data_io::{DatasetSummary, SyntheticSpec};
use dasvrda::harness::{
    compute_reference_cached, evals_to_gap, learning_rate_grid, resolve, restart_interval_grid, run_grid,
    run_resolved, write_trace, Algorithm, LazyMode, ProblemSource, ReferenceOptions, RunConfig, SmoothnessChoice,
};
use dasvrda::harness::run::reference_objective;
use dasvrda::problem::{LossKind, Problem};
use dasvrda::sampling::{RngStream, SamplingKind};
use dasvrda::Error;

#[derive(Parser)]
#[command(name = "erm", version, about = "Regularized empirical risk minimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimizer (or a step-size grid) and write a convergence trace.
    Run(RunArgs),
    /// Compute a high-accuracy reference solution.
    Ref(RefArgs),
    /// Print dataset statistics as JSON.
    Info(SourceArgs),
}

#[derive(Args, Clone)]
struct SourceArgs {
    /// libsvm file (optionally .gz).
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Synthetic problem, e.g. `lasso:n=200,d=50,density=0.1,noise=0.01,support=5,seed=1`.
    #[arg(long)]
    synthetic: Option<SyntheticSpec>,
    /// Number of features (defaults to the largest index in the file).
    #[arg(long)]
    dim: Option<usize>,
    /// Rescale rows to unit norm after loading.
    #[arg(long)]
    normalize: bool,
}

impl SourceArgs {
    fn source(&self) -> ProblemSource {
        match (&self.data, &self.synthetic) {
            (Some(path), _) => ProblemSource::File {
                path: path.clone(),
                dim: self.dim,
                normalize: self.normalize,
            },
            (None, Some(spec)) => ProblemSource::Synthetic(spec.clone()),
            (None, None) => unreachable!("clap requires a source"),
        }
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// squared | logistic | smoothed-hinge:NU
    #[arg(long, default_value = "logistic")]
    loss: LossKind,
    #[arg(long, default_value_t = 1e-4)]
    l1: f64,
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// pg | apg | svrg | dasvrda-ns | dasvrda-sc | dasvrda-ar-f | dasvrda-ar-g | dasvrda-warm | dasvrg
    #[arg(long)]
    algo: Algorithm,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// Inner iterations per stage (default n/b, or 2n/b for svrg).
    #[arg(long)]
    epoch_len: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Step size (default from the smoothness constants).
    #[arg(long)]
    eta: Option<f64>,
    /// Multiplier applied to the step size.
    #[arg(long, default_value_t = 1.0)]
    eta_scale: f64,
    /// Maximum outer stages; the restart interval for dasvrda-sc.
    #[arg(long)]
    stages: Option<u64>,
    /// Number of restarts for dasvrda-sc.
    #[arg(long)]
    restarts: Option<u64>,
    #[arg(long, default_value = "uniform")]
    sampling: SamplingKind,
    /// Smoothness aggregate for default step sizes: mean | max.
    #[arg(long)]
    smoothness: Option<SmoothnessChoice>,
    #[arg(long, default_value = "auto")]
    lazy: LazyMode,
    /// Reject gamma < 3.
    #[arg(long)]
    theory: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Component-gradient evaluation budget.
    #[arg(long)]
    budget: u64,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Reference solution JSON; computed and written if missing.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Sweep step-size multipliers {1,2,5}x10^p, p in -2..=2 (and restart intervals for dasvrda-sc).
    #[arg(long)]
    grid: bool,
    /// Concurrent grid cells.
    #[arg(long, default_value_t = 1)]
    parallel_runs: usize,
}

#[derive(Args)]
struct RefArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iter: u64,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Config(Error),
    Runtime(Error),
    Unconverged,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn config_err(e: Error) -> Failure {
    Failure::Config(e)
}

fn build_problem(source: &SourceArgs, model: &ModelArgs) -> Result<Problem, Failure> {
    source.source().build(model.loss, model.l1, model.l2).map_err(config_err)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut config = RunConfig::new(args.source.source(), args.model.loss, args.algo);
    config.l1 = args.model.l1;
    config.l2 = args.model.l2;
    config.batch = args.batch;
    config.epoch_len = args.epoch_len;
    config.gamma = args.gamma;
    config.eta = args.eta;
    config.eta_multiplier = args.eta_scale;
    config.stages = args.stages;
    config.restarts = args.restarts;
    config.sampling = args.sampling;
    config.smoothness = args.smoothness;
    config.lazy = args.lazy;
    config.theory = args.theory;
    config.seed = args.seed;
    config.budget = args.budget;
    config.trace = args.trace;
    config.reference = args.reference;
    config.validate().map_err(config_err)?;
    let problem = build_problem(&args.source, &args.model)?;
    let resolved = resolve(&config, &problem).map_err(config_err)?;
    let reference = reference_objective(&config, &problem).map_err(config_err)?;

    if args.grid {
        let intervals: Vec<Option<u64>> = if config.algo == Algorithm::DasvrdaSc {
            restart_interval_grid(1000).into_iter().map(Some).collect()
        } else {
            vec![None]
        };
        let cells = run_grid(&config, &problem, reference, &learning_rate_grid(), &intervals, args.parallel_runs)?;
        println!("eta_scale,restart_interval,diverged,evals_over_n,objective,evals_over_n_to_1e-8");
        for c in &cells {
            let last = c.outcome.records.last().expect("initial row");
            println!(
                "{},{},{},{},{},{}",
                c.eta_multiplier,
                c.restart_interval.map(|s| s.to_string()).unwrap_or_default(),
                c.outcome.diverged,
                last.evals_over_n,
                last.objective,
                evals_to_gap(&c.outcome.records, 1e-8)
                    .map(|e| e.to_string())
                    .unwrap_or_default()
            );
        }
        return Ok(());
    }

    let mut rng = RngStream::new(config.seed);
    let outcome = run_resolved(&resolved, &problem, reference, &mut rng)?;
    if let Some(path) = &config.trace {
        write_trace(path, &outcome.resolved, &outcome.records)?;
    }
    let last = outcome.records.last().expect("initial row");
    println!(
        "{} stages={} evals/n={:.3} objective={:.12e}{}{}",
        config.algo,
        last.stage,
        last.evals_over_n,
        last.objective,
        last.gap.map(|g| format!(" gap={:.3e}", g)).unwrap_or_default(),
        if outcome.diverged { " (diverged)" } else { "" }
    );
    Ok(())
}

fn cmd_ref(args: RefArgs) -> Result<(), Failure> {
    if !(args.tol > 0.0) {
        return Err(config_err(Error::Config(format!("tolerance must be positive, got {}", args.tol))));
    }
    let problem = build_problem(&args.source, &args.model)?;
    let mut opts = ReferenceOptions::new(args.tol);
    opts.max_iterations = args.max_iter;
    let (r, hit) = compute_reference_cached(&problem, opts, &args.out)?;
    println!(
        "objective={:.16e} iterations={} converged={}{}",
        r.objective,
        r.iterations,
        r.converged,
        if hit { " (cached)" } else { "" }
    );
    if r.converged {
        Ok(())
    } else {
        Err(Failure::Unconverged)
    }
}

fn cmd_info(args: SourceArgs) -> Result<(), Failure> {
    let model = ModelArgs {
        loss: LossKind::Squared,
        l1: 0.0,
        l2: 0.0,
    };
    let problem = build_problem(&args, &model)?;
    let summary = DatasetSummary::of(&problem.data);
    println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Ref(a) => cmd_ref(a),
        Command::Info(a) => cmd_info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("erm: {}", e);
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("erm: {}", e);
            ExitCode::from(1)
        }
        Err(Failure::Unconverged) => {
            eprintln!("erm: reference solver exhausted its iteration budget");
            ExitCode::from(3)
        }
    }
}
