//! libsvm text I/O, synthetic problem generators and dataset statistics.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use flate2::read::GzDecoder;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Dataset, DatasetBuilder};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Number of columns; must cover every index in the file.
    pub dim: Option<usize>,
    /// Map label `0` to `−1` (binary classification files stored as {0, 1}).
    pub binary_labels: bool,
    /// Rescale rows to unit Euclidean norm.
    pub normalize: bool,
}

/// Reads a libsvm file (`label idx:val …`, 1-based indices). Files ending in
/// `.gz` are decompressed on the fly.
pub fn load_libsvm(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    read_libsvm(BufReader::new(reader), path, opts)
}

/// Parses libsvm text from any buffered reader; `path` only labels errors.
pub fn read_libsvm(mut reader: impl BufRead, path: &Path, opts: LoadOptions) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut builder = DatasetBuilder::with_capacity(0, 0);
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        lineno += 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_ascii_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let mut label: f64 = label_tok
            .parse()
            .map_err(|_| err(lineno, format!("bad label '{}'", label_tok)))?;
        if opts.binary_labels && label == 0.0 {
            label = -1.0;
        }
        let mut bad = None;
        let entries = tokens.map_while(|tok| match parse_entry(tok) {
            Ok(e) => Some(e),
            Err(msg) => {
                bad = Some(msg);
                None
            }
        });
        let pushed = builder.push_row(entries, label);
        if let Some(msg) = bad {
            return Err(err(lineno, msg));
        }
        pushed.map_err(|e| {
            let msg = match e {
                Error::InvalidDataset(m) => m,
                other => other.to_string(),
            };
            err(lineno, msg)
        })?;
    }
    let cols = match opts.dim {
        Some(d) if d < builder.min_cols() => {
            return Err(Error::InvalidDataset(format!(
                "dimension override {} is below the largest index {}",
                d,
                builder.min_cols()
            )))
        }
        Some(d) => d,
        None => builder.min_cols().max(1),
    };
    let mut data = builder.finish(cols)?;
    if opts.normalize {
        data.normalize_rows();
    }
    Ok(data)
}

fn parse_entry(tok: &str) -> std::result::Result<(usize, f64), String> {
    let (idx, val) = tok
        .split_once(':')
        .ok_or_else(|| format!("expected idx:val, got '{}'", tok))?;
    let idx: usize = idx.parse().map_err(|_| format!("bad index '{}'", idx))?;
    if idx == 0 {
        return Err("indices are 1-based; found 0".into());
    }
    let val: f64 = val.parse().map_err(|_| format!("bad value '{}'", val))?;
    Ok((idx - 1, val))
}

/// Writes libsvm text with 1-based indices. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_libsvm(data: &Dataset, mut out: impl Write) -> Result<()> {
    for i in 0..data.rows() {
        write!(out, "{}", data.label(i))?;
        for (j, v) in data.row(i).iter() {
            write!(out, " {}:{}", j + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Real-valued labels `b = Ax* + noise`.
    Lasso,
    /// Labels `sign(Ax* + logistic noise)` in `{−1, +1}`.
    RidgeLogistic,
}

/// Recipe for a random sparse problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub d: usize,
    /// Expected fraction of nonzero entries.
    pub density: f64,
    /// Standard deviation (lasso) or scale (logistic) of the label noise.
    pub noise: f64,
    /// Nonzeros of the ground-truth coefficient vector.
    pub support: usize,
    pub seed: u64,
    /// Ratio between the largest and smallest column scale; columns are
    /// scaled geometrically from 1 down to `1/condition`.
    #[serde(default = "one")]
    pub condition: f64,
}

fn one() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, n: usize, d: usize) -> Self {
        SyntheticSpec {
            kind,
            n,
            d,
            density: 1.0,
            noise: 0.1,
            support: d.div_ceil(10),
            seed: 0,
            condition: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidParameter("synthetic n and d must be at least 1".into()));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "density must lie in (0, 1], got {}",
                self.density
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise must be nonnegative, got {}", self.noise)));
        }
        if self.support > self.d {
            return Err(Error::InvalidParameter(format!(
                "support {} exceeds d = {}",
                self.support, self.d
            )));
        }
        if !(self.condition >= 1.0 && self.condition.is_finite()) {
            return Err(Error::InvalidParameter(format!("condition must be >= 1, got {}", self.condition)));
        }
        Ok(())
    }
}

/// `kind:key=value,…`, e.g. `lasso:n=200,d=50,density=0.1,noise=0.01,support=5,seed=3`.
impl FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let kind = match kind {
            "lasso" => SyntheticKind::Lasso,
            "ridge-logistic" | "logistic" => SyntheticKind::RidgeLogistic,
            other => return Err(Error::Config(format!("unknown synthetic kind '{}'", other))),
        };
        let mut spec = SyntheticSpec::new(kind, 100, 10);
        let mut support = None;
        for kv in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got '{}'", kv)))?;
            let bad = |_| Error::Config(format!("bad value for {}: '{}'", k, v));
            match k {
                "n" => spec.n = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "d" => spec.d = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "density" => spec.density = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "noise" => spec.noise = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "support" => support = Some(v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?),
                "seed" => spec.seed = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "condition" => {
                    spec.condition = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                }
                other => return Err(Error::Config(format!("unknown synthetic key '{}'", other))),
            }
        }
        spec.support = support.unwrap_or(spec.d.div_ceil(10));
        spec.validate()?;
        Ok(spec)
    }
}

/// Draws a design with standard-normal nonzeros and labels from a sparse
/// ground-truth vector. Deterministic in `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Vec<f64>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, d) = (spec.n, spec.d);

    let mut truth = vec![0.0; d];
    for j in sample(&mut rng, d, spec.support).iter() {
        let v: f64 = rng.sample(StandardNormal);
        truth[j] = if v >= 0.0 { 1.0 + v } else { v - 1.0 };
    }
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            if d == 1 {
                1.0
            } else {
                spec.condition.powf(-(j as f64) / (d - 1) as f64)
            }
        })
        .collect();

    let per_row = Binomial::new(d as u64, spec.density).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut builder = DatasetBuilder::with_capacity(n, (n as f64 * d as f64 * spec.density) as usize);
    let mut cols: Vec<usize> = Vec::new();
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for _ in 0..n {
        let k = per_row.sample(&mut rng) as usize;
        cols.clear();
        cols.extend(sample(&mut rng, d, k).iter());
        cols.sort_unstable();
        entries.clear();
        let mut t = 0.0;
        for &j in &cols {
            let v: f64 = rng.sample::<f64, _>(StandardNormal) * scale[j];
            t += v * truth[j];
            entries.push((j, v));
        }
        let label = match spec.kind {
            SyntheticKind::Lasso => t + spec.noise * rng.sample::<f64, _>(StandardNormal),
            SyntheticKind::RidgeLogistic => {
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                let s = t + spec.noise * (u / (1.0 - u)).ln();
                if s >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        builder.push_row(entries.iter().copied(), label)?;
    }
    Ok((builder.finish(d)?, truth))
}

/// Shape and scale statistics of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    pub density: f64,
    pub max_row_nnz: usize,
    pub empty_rows: usize,
    pub mean_row_sq_norm: f64,
    pub max_row_sq_norm: f64,
    /// Fraction of labels that are positive.
    pub positive_fraction: f64,
}

impl DatasetSummary {
    pub fn of(data: &Dataset) -> Self {
        let n = data.rows();
        let norms: Vec<f64> = (0..n).map(|i| data.row(i).squared_norm()).collect();
        DatasetSummary {
            rows: n,
            cols: data.cols(),
            nnz: data.nnz(),
            density: data.density(),
            max_row_nnz: data.max_row_nnz(),
            empty_rows: (0..n).filter(|&i| data.row(i).nnz() == 0).count(),
            mean_row_sq_norm: norms.iter().sum::<f64>() / n as f64,
            max_row_sq_norm: norms.iter().copied().fold(0.0, f64::max),
            positive_fraction: data.labels().iter().filter(|&&b| b > 0.0).count() as f64 / n as f64,
        }
    }
}
