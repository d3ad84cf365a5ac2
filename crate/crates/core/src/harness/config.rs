use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_io::{generate_synthetic, load_libsvm, LoadOptions, SyntheticSpec};
use crate::error::{Error, Result};
use crate::problem::{ElasticNet, LossKind, Problem};
use crate::sampling::SamplingKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Pg,
    Apg,
    Svrg,
    DasvrdaNs,
    DasvrdaSc,
    /// Adaptive restart on objective increase.
    DasvrdaArF,
    /// Adaptive restart on the momentum/step inner product.
    DasvrdaArG,
    DasvrdaWarm,
    Dasvrg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Pg,
        Algorithm::Apg,
        Algorithm::Svrg,
        Algorithm::DasvrdaNs,
        Algorithm::DasvrdaSc,
        Algorithm::DasvrdaArF,
        Algorithm::DasvrdaArG,
        Algorithm::DasvrdaWarm,
        Algorithm::Dasvrg,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Algorithm::Pg => "pg",
            Algorithm::Apg => "apg",
            Algorithm::Svrg => "svrg",
            Algorithm::DasvrdaNs => "dasvrda-ns",
            Algorithm::DasvrdaSc => "dasvrda-sc",
            Algorithm::DasvrdaArF => "dasvrda-ar-f",
            Algorithm::DasvrdaArG => "dasvrda-ar-g",
            Algorithm::DasvrdaWarm => "dasvrda-warm",
            Algorithm::Dasvrg => "dasvrg",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        !matches!(self, Algorithm::Pg | Algorithm::Apg)
    }

    /// Uses the accelerated dual-averaging inner stage (and so can run lazily).
    pub fn uses_dual_averaging(&self) -> bool {
        matches!(
            self,
            Algorithm::DasvrdaNs
                | Algorithm::DasvrdaSc
                | Algorithm::DasvrdaArF
                | Algorithm::DasvrdaArG
                | Algorithm::DasvrdaWarm
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .iter()
            .copied()
            .find(|a| a.id() == s)
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LazyMode {
    #[default]
    Auto,
    On,
    Off,
}

impl FromStr for LazyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(LazyMode::Auto),
            "on" => Ok(LazyMode::On),
            "off" => Ok(LazyMode::Off),
            other => Err(Error::Config(format!("unknown lazy mode '{}'", other))),
        }
    }
}

/// Which per-example smoothness aggregate sets the default step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothnessChoice {
    /// `L̄ = (1/n) Σ L_i`
    Mean,
    /// `max_i L_i`
    Max,
}

impl FromStr for SmoothnessChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(SmoothnessChoice::Mean),
            "max" => Ok(SmoothnessChoice::Max),
            other => Err(Error::Config(format!("unknown smoothness choice '{}'", other))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemSource {
    File {
        path: PathBuf,
        dim: Option<usize>,
        normalize: bool,
    },
    Synthetic(SyntheticSpec),
}

impl ProblemSource {
    pub fn build(&self, loss: LossKind, l1: f64, l2: f64) -> Result<Problem> {
        let reg = ElasticNet::new(l1, l2)?;
        let data = match self {
            ProblemSource::File { path, dim, normalize } => load_libsvm(
                path,
                LoadOptions {
                    dim: *dim,
                    binary_labels: loss.is_classification(),
                    normalize: *normalize,
                },
            )?,
            ProblemSource::Synthetic(spec) => generate_synthetic(spec)?.0,
        };
        Problem::new(data, loss, reg)
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: ProblemSource,
    pub loss: LossKind,
    pub l1: f64,
    pub l2: f64,
    pub algo: Algorithm,
    pub batch: usize,
    pub epoch_len: Option<usize>,
    pub gamma: Option<f64>,
    /// Absolute step size; overrides the default formula.
    pub eta: Option<f64>,
    /// Factor applied to the (default or explicit) step size.
    pub eta_multiplier: f64,
    /// Maximum outer stages, or the restart interval for `dasvrda-sc`.
    pub stages: Option<u64>,
    /// Number of restarts for `dasvrda-sc`.
    pub restarts: Option<u64>,
    pub sampling: SamplingKind,
    pub smoothness: Option<SmoothnessChoice>,
    pub lazy: LazyMode,
    /// Reject `γ < 3`.
    pub theory: bool,
    pub seed: u64,
    /// Stop once this many component gradients have been evaluated.
    pub budget: u64,
    pub trace: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(source: ProblemSource, loss: LossKind, algo: Algorithm) -> Self {
        RunConfig {
            source,
            loss,
            l1: 1e-4,
            l2: 0.0,
            algo,
            batch: 1,
            epoch_len: None,
            gamma: None,
            eta: None,
            eta_multiplier: 1.0,
            stages: None,
            restarts: None,
            sampling: SamplingKind::Uniform,
            smoothness: None,
            lazy: LazyMode::Auto,
            theory: false,
            seed: 0,
            budget: 1_000_000,
            trace: None,
            reference: None,
        }
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.budget == 0 {
            return bad("budget must be positive".into());
        }
        if !(self.l1 >= 0.0 && self.l1.is_finite()) || !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("regularization must be nonnegative, got l1={} l2={}", self.l1, self.l2));
        }
        if self.batch == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.epoch_len == Some(0) {
            return bad("epoch length must be at least 1".into());
        }
        if let Some(g) = self.gamma {
            if !(g > 1.0 && g.is_finite()) {
                return bad(format!("gamma must exceed 1, got {}", g));
            }
            if self.theory && g < 3.0 {
                return bad(format!("gamma = {} is below 3 in theory mode", g));
            }
        }
        if let Some(e) = self.eta {
            if !(e > 0.0 && e.is_finite()) {
                return bad(format!("eta must be positive, got {}", e));
            }
        }
        if !(self.eta_multiplier > 0.0 && self.eta_multiplier.is_finite()) {
            return bad(format!("eta multiplier must be positive, got {}", self.eta_multiplier));
        }
        if self.stages == Some(0) || self.restarts == Some(0) {
            return bad("stages and restarts must be at least 1".into());
        }
        if self.lazy == LazyMode::On && self.algo.is_stochastic() && !self.algo.uses_dual_averaging() {
            return bad(format!("lazy updates are not available for {}", self.algo));
        }
        self.loss.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let ProblemSource::Synthetic(spec) = &self.source {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Learning-rate multipliers `{1, 2, 5} × 10^p` for `p ∈ {−2, …, 2}`.
pub fn learning_rate_grid() -> Vec<f64> {
    let mut out = Vec::with_capacity(15);
    for p in -2..=2 {
        for base in [1.0, 2.0, 5.0] {
            out.push(base * 10f64.powi(p));
        }
    }
    out
}

/// Restart intervals `{1, 2, 5} × 10^k` up to `max`.
pub fn restart_interval_grid(max: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut scale = 1u64;
    'outer: loop {
        for base in [1, 2, 5] {
            let v = base * scale;
            if v > max {
                break 'outer;
            }
            out.push(v);
        }
        scale *= 10;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_ids_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.id().parse::<Algorithm>().unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(json, format!("\"{}\"", a.id()));
        }
        assert!(matches!("sgd".parse::<Algorithm>(), Err(Error::UnknownAlgorithm(_))));
    }

    #[test]
    fn grids() {
        let g = learning_rate_grid();
        assert_eq!(g.len(), 15);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[14], 500.0);
        assert_eq!(restart_interval_grid(60), vec![1, 2, 5, 10, 20, 50]);
    }

    #[test]
    fn validation() {
        let spec = SyntheticSpec::new(crate::data_io::SyntheticKind::Lasso, 10, 3);
        let mut c = RunConfig::new(ProblemSource::Synthetic(spec), LossKind::Squared, Algorithm::Svrg);
        assert!(c.validate().is_ok());
        c.lazy = LazyMode::On;
        assert!(c.validate().is_err());
        c.lazy = LazyMode::Auto;
        c.budget = 0;
        assert!(c.validate().is_err());
        c.budget = 10;
        c.l1 = -1.0;
        assert!(c.validate().is_err());
        c.l1 = 0.0;
        c.gamma = Some(2.0);
        c.theory = true;
        assert!(c.validate().is_err());
    }
}
