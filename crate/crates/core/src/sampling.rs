//! Mini-batch index generation.
//!
//! Three schemes are supported: i.i.d. draws from `q_i = L_i/(nL̄)`, i.i.d.
//! uniform draws, and one uniform draw from each block of a fixed disjoint
//! partition of `[n]`. Each comes with the importance weight `1/(n q_i)` that
//! keeps the variance-reduced gradient estimator unbiased.

use std::ops::Range;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name recorded in traces for the generator behind [`RngStream`].
pub const RNG_NAME: &str = "chacha8/rand-0.9";

/// Seeded, reproducible random stream.
///
/// The generator is ChaCha8 keyed by the seed; independent substreams use the
/// ChaCha stream id, so `(seed, stream)` fully determines the output.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    /// Independent substream for a parallel worker at a given iteration.
    pub fn substream(&self, worker: u32, iteration: u32) -> RngStream {
        let id = ((worker as u64) << 32) | iteration as u64;
        RngStream::with_stream(self.seed, self.stream ^ id.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Which scheme to build; resolved against a problem by [`SamplingScheme::build`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingKind {
    Uniform,
    Weighted,
    Partition,
}

impl std::str::FromStr for SamplingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SamplingKind::Uniform),
            "weighted" => Ok(SamplingKind::Weighted),
            "partition" => Ok(SamplingKind::Partition),
            other => Err(Error::Config(format!("unknown sampling scheme '{}'", other))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum SamplingScheme {
    IidUniform {
        n: usize,
    },
    IidWeighted {
        /// `q_i = L_i / (n L̄)`
        probs: Vec<f64>,
        /// `1 / (n q_i) = L̄ / L_i`
        weights: Vec<f64>,
        table: WeightedIndex<f64>,
    },
    Partition {
        n: usize,
        blocks: Vec<Range<usize>>,
    },
}

impl SamplingScheme {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("empty index set".into()));
        }
        Ok(SamplingScheme::IidUniform { n })
    }

    /// Non-uniform i.i.d. sampling with `q_i ∝ L_i`.
    pub fn weighted(smoothness: &[f64]) -> Result<Self> {
        if smoothness.is_empty() {
            return Err(Error::InvalidParameter("empty index set".into()));
        }
        if let Some(l) = smoothness.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "smoothness constants must be positive, got {}",
                l
            )));
        }
        let n = smoothness.len() as f64;
        let total: f64 = smoothness.iter().sum();
        let mean = total / n;
        let probs: Vec<f64> = smoothness.iter().map(|l| l / total).collect();
        let weights = smoothness.iter().map(|l| mean / l).collect();
        let table = WeightedIndex::new(&probs)
            .map_err(|e| Error::InvalidParameter(format!("sampling weights: {}", e)))?;
        Ok(SamplingScheme::IidWeighted {
            probs,
            weights,
            table,
        })
    }

    /// Contiguous disjoint blocks of equal size `n/b`; requires `b | n`.
    pub fn partition(n: usize, b: usize) -> Result<Self> {
        if b == 0 || b > n {
            return Err(Error::BatchOutOfRange { b, n });
        }
        if n % b != 0 {
            return Err(Error::InvalidParameter(format!(
                "partition sampling requires b | n (n = {}, b = {})",
                n, b
            )));
        }
        let size = n / b;
        let blocks = (0..b).map(|l| l * size..(l + 1) * size).collect();
        Ok(SamplingScheme::Partition { n, blocks })
    }

    pub fn build(kind: SamplingKind, smoothness: &[f64], b: usize) -> Result<Self> {
        match kind {
            SamplingKind::Uniform => SamplingScheme::uniform(smoothness.len()),
            SamplingKind::Weighted => SamplingScheme::weighted(smoothness),
            SamplingKind::Partition => SamplingScheme::partition(smoothness.len(), b),
        }
    }

    pub fn kind(&self) -> SamplingKind {
        match self {
            SamplingScheme::IidUniform { .. } => SamplingKind::Uniform,
            SamplingScheme::IidWeighted { .. } => SamplingKind::Weighted,
            SamplingScheme::Partition { .. } => SamplingKind::Partition,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            SamplingScheme::IidUniform { n } | SamplingScheme::Partition { n, .. } => *n,
            SamplingScheme::IidWeighted { probs, .. } => probs.len(),
        }
    }

    /// Probability that a single draw returns `i`.
    pub fn probability(&self, i: usize) -> f64 {
        match self {
            SamplingScheme::IidUniform { n } => 1.0 / *n as f64,
            SamplingScheme::IidWeighted { probs, .. } => probs[i],
            SamplingScheme::Partition { blocks, .. } => {
                let block = blocks.iter().find(|r| r.contains(&i)).expect("index in partition");
                1.0 / block.len() as f64
            }
        }
    }

    /// Multiplier `1/(n q_i)` applied to `∇f_i(y) − ∇f_i(x̃)`.
    #[inline]
    pub fn importance_weight(&self, i: usize) -> f64 {
        match self {
            SamplingScheme::IidWeighted { weights, .. } => weights[i],
            SamplingScheme::IidUniform { .. } | SamplingScheme::Partition { .. } => 1.0,
        }
    }

    pub fn check_batch(&self, b: usize) -> Result<()> {
        let n = self.n();
        if b == 0 || b > n {
            return Err(Error::BatchOutOfRange { b, n });
        }
        if let SamplingScheme::Partition { blocks, .. } = self {
            if blocks.len() != b {
                return Err(Error::InvalidParameter(format!(
                    "partition has {} blocks but batch size is {}",
                    blocks.len(),
                    b
                )));
            }
        }
        Ok(())
    }

    /// Fills `out` with one mini-batch of `b` indices.
    pub fn draw_into(&self, rng: &mut RngStream, b: usize, out: &mut Vec<usize>) -> Result<()> {
        self.check_batch(b)?;
        out.clear();
        let rng = rng.rng();
        match self {
            SamplingScheme::IidUniform { n } => out.extend((0..b).map(|_| rng.random_range(0..*n))),
            SamplingScheme::IidWeighted { table, .. } => out.extend((0..b).map(|_| table.sample(rng))),
            SamplingScheme::Partition { blocks, .. } => out.extend(blocks.iter().map(|r| {
                if r.len() == 1 {
                    r.start
                } else {
                    rng.random_range(r.clone())
                }
            })),
        }
        Ok(())
    }
}

/// Draws one mini-batch of `b` indices.
pub fn draw_batch(scheme: &SamplingScheme, rng: &mut RngStream, b: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(b);
    scheme.draw_into(rng, b, &mut out)?;
    Ok(out)
}

/// `1/(n q_i)` for index `i`.
pub fn importance_weight(scheme: &SamplingScheme, i: usize) -> f64 {
    scheme.importance_weight(i)
}
