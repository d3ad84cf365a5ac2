//! Composite objective `P(x) = F(x) + R(x)` for linear models.
//!
//! `F(x) = (1/n) Σ ψ_i(a_iᵀx)` is a finite sum of smooth convex losses over the
//! rows of a sparse design matrix and `R` is a prox-friendly convex regularizer
//! (the elastic net unless a caller plugs in their own [`Regularizer`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothness constant assigned to rows without any nonzero feature.
pub const ZERO_ROW_SMOOTHNESS: f64 = 1e-12;

/// A borrowed sparse row: strictly increasing column indices and their values.
#[derive(Debug, Clone, Copy)]
pub struct SparseRow<'a> {
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

impl<'a> SparseRow<'a> {
    pub fn new(indices: &'a [usize], values: &'a [f64]) -> Self {
        debug_assert_eq!(indices.len(), values.len());
        SparseRow { indices, values }
    }

    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(self.values)
            .map(|(&j, &v)| v * x[j])
            .sum()
    }

    /// `out += scale * a`
    #[inline]
    pub fn axpy(&self, scale: f64, out: &mut [f64]) {
        for (&j, &v) in self.indices.iter().zip(self.values) {
            out[j] += scale * v;
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

/// Training examples `(a_i, b_i)` with the features stored row-major (CSR).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from per-row `(column, value)` lists.
    ///
    /// Column indices must be strictly increasing within each row and below
    /// `cols`. Explicit zeros are dropped.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>, cols: usize) -> Result<Self> {
        let mut builder = DatasetBuilder::with_capacity(rows.len(), 0);
        for (row, label) in rows.into_iter().zip(labels.iter()) {
            builder.push_row(row.into_iter(), *label)?;
        }
        if builder.rows() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} rows",
                labels.len(),
                builder.rows()
            )));
        }
        builder.finish(cols)
    }

    /// Builds a dataset from a dense row-major matrix.
    pub fn from_dense(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let sparse = rows
            .iter()
            .map(|r| r.iter().copied().enumerate().collect())
            .collect();
        Dataset::from_rows(sparse, labels, cols)
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Fraction of stored entries among the `n·d` cells.
    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.rows() as f64 * self.cols() as f64)
    }

    #[inline]
    pub fn row(&self, i: usize) -> SparseRow<'_> {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        SparseRow::new(&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn max_row_nnz(&self) -> usize {
        self.indptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// Raw CSR components `(indptr, indices, values)`.
    pub fn csr(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.indptr, &self.indices, &self.values)
    }

    /// Rescales every nonzero row to unit Euclidean norm.
    pub fn normalize_rows(&mut self) {
        for i in 0..self.rows() {
            let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
            let norm = self.values[lo..hi].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                self.values[lo..hi].iter_mut().for_each(|v| *v /= norm);
            }
        }
    }

    /// Replaces every label with `f(label)`.
    pub fn map_labels(&mut self, f: impl Fn(f64) -> f64) {
        self.labels.iter_mut().for_each(|b| *b = f(*b));
    }
}

/// Incremental CSR construction used by the loaders and generators.
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<f64>,
    max_col: Option<usize>,
}

impl DatasetBuilder {
    pub fn with_capacity(rows: usize, nnz: usize) -> Self {
        let mut indptr = Vec::with_capacity(rows + 1);
        indptr.push(0);
        DatasetBuilder {
            indptr,
            indices: Vec::with_capacity(nnz),
            values: Vec::with_capacity(nnz),
            labels: Vec::with_capacity(rows),
            max_col: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    /// Columns needed to hold every index pushed so far.
    pub fn min_cols(&self) -> usize {
        self.max_col.map_or(0, |c| c + 1)
    }

    pub fn push_row(&mut self, entries: impl Iterator<Item = (usize, f64)>, label: f64) -> Result<()> {
        let start = self.indices.len();
        let mut last: Option<usize> = None;
        for (j, v) in entries {
            if let Some(prev) = last.replace(j) {
                if j <= prev {
                    self.indices.truncate(start);
                    self.values.truncate(start);
                    return Err(Error::InvalidDataset(format!(
                        "row {}: column indices not strictly increasing ({} after {})",
                        self.rows(),
                        j,
                        prev
                    )));
                }
            }
            if !v.is_finite() {
                self.indices.truncate(start);
                self.values.truncate(start);
                return Err(Error::InvalidDataset(format!(
                    "row {}: non-finite value at column {}",
                    self.rows(),
                    j
                )));
            }
            if v != 0.0 {
                self.indices.push(j);
                self.values.push(v);
                self.max_col = Some(self.max_col.map_or(j, |m| m.max(j)));
            }
        }
        if !label.is_finite() {
            self.indices.truncate(start);
            self.values.truncate(start);
            return Err(Error::InvalidDataset(format!("row {}: non-finite label", self.rows())));
        }
        self.indptr.push(self.indices.len());
        self.labels.push(label);
        Ok(())
    }

    pub fn finish(self, cols: usize) -> Result<Dataset> {
        if self.labels.is_empty() {
            return Err(Error::InvalidDataset("no rows".into()));
        }
        if cols == 0 {
            return Err(Error::InvalidDataset("zero columns".into()));
        }
        if let Some(m) = self.max_col {
            if m >= cols {
                return Err(Error::InvalidDataset(format!(
                    "column index {} out of range for d = {}",
                    m, cols
                )));
            }
        }
        Ok(Dataset {
            cols,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
            labels: self.labels,
        })
    }
}

/// Per-example loss `ψ_i(t)` of a linear model with `t = a_iᵀx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `(1/2)(t − b)²`
    Squared,
    /// `log(1 + exp(−b t))`
    Logistic,
    /// Hinge loss smoothed over a width `nu` below the margin.
    SmoothedHinge { nu: f64 },
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::SmoothedHinge { nu } if !(nu > 0.0 && nu.is_finite()) => Err(
                Error::InvalidParameter(format!("smoothed hinge width must be positive, got {}", nu)),
            ),
            _ => Ok(()),
        }
    }

    /// Whether labels must be ±1.
    pub fn is_classification(&self) -> bool {
        !matches!(self, LossKind::Squared)
    }

    /// Upper bound on `ψ''`.
    pub fn curvature(&self) -> f64 {
        match *self {
            LossKind::Squared => 1.0,
            LossKind::Logistic => 0.25,
            LossKind::SmoothedHinge { nu } => 1.0 / nu,
        }
    }

    #[inline]
    pub fn value(&self, t: f64, label: f64) -> f64 {
        match *self {
            LossKind::Squared => {
                let r = t - label;
                0.5 * r * r
            }
            LossKind::Logistic => softplus(-label * t),
            LossKind::SmoothedHinge { nu } => {
                let z = label * t;
                if z >= 1.0 {
                    0.0
                } else if z <= 1.0 - nu {
                    1.0 - z - 0.5 * nu
                } else {
                    let r = 1.0 - z;
                    r * r / (2.0 * nu)
                }
            }
        }
    }

    /// `dψ/dt`
    #[inline]
    pub fn derivative(&self, t: f64, label: f64) -> f64 {
        match *self {
            LossKind::Squared => t - label,
            LossKind::Logistic => -label * sigmoid(-label * t),
            LossKind::SmoothedHinge { nu } => {
                let z = label * t;
                if z >= 1.0 {
                    0.0
                } else if z <= 1.0 - nu {
                    -label
                } else {
                    -label * (1.0 - z) / nu
                }
            }
        }
    }
}

/// `squared`, `logistic` or `smoothed-hinge:NU`.
impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let loss = match s.split_once(':') {
            None if s == "squared" => LossKind::Squared,
            None if s == "logistic" => LossKind::Logistic,
            Some(("smoothed-hinge", nu)) => LossKind::SmoothedHinge {
                nu: nu
                    .parse()
                    .map_err(|_| Error::Config(format!("bad smoothed hinge width '{}'", nu)))?,
            },
            None if s == "smoothed-hinge" => LossKind::SmoothedHinge { nu: 1.0 },
            _ => return Err(Error::Config(format!("unknown loss '{}'", s))),
        };
        loss.validate()?;
        Ok(loss)
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossKind::Squared => write!(f, "squared"),
            LossKind::Logistic => write!(f, "logistic"),
            LossKind::SmoothedHinge { nu } => write!(f, "smoothed-hinge:{}", nu),
        }
    }
}

#[inline]
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `ψ(t)` with input validation.
pub fn loss_value(loss: LossKind, t: f64, label: f64) -> Result<f64> {
    loss.validate()?;
    if !t.is_finite() || !label.is_finite() {
        return Err(Error::NonFiniteMargin);
    }
    Ok(loss.value(t, label))
}

/// `ψ'(t)` with input validation.
pub fn loss_derivative(loss: LossKind, t: f64, label: f64) -> Result<f64> {
    loss.validate()?;
    if !t.is_finite() || !label.is_finite() {
        return Err(Error::NonFiniteMargin);
    }
    Ok(loss.derivative(t, label))
}

/// Lipschitz constant of `∇f_i` for `f_i(x) = ψ(a_iᵀx)`.
pub fn smoothness_constant(loss: LossKind, row: SparseRow<'_>) -> f64 {
    let l = loss.curvature() * row.squared_norm();
    if l > 0.0 {
        l
    } else {
        ZERO_ROW_SMOOTHNESS
    }
}

/// One-dimensional soft-thresholding `sign(z)·max(|z| − λ, 0)`.
#[inline]
pub fn soft(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// A convex regularizer with a cheap proximal mapping.
pub trait Regularizer: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// Replaces `z` with `prox_{scale·R}(z)`.
    fn prox_in_place(&self, z: &mut [f64], scale: f64);

    /// The elastic-net weights, when this regularizer is one. Enables the
    /// lazy sparse engine.
    fn as_elastic_net(&self) -> Option<ElasticNet> {
        None
    }
}

/// `R(x) = λ1‖x‖₁ + (λ2/2)‖x‖²`
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ElasticNet {
    pub l1: f64,
    pub l2: f64,
}

impl ElasticNet {
    pub fn new(l1: f64, l2: f64) -> Result<Self> {
        let reg = ElasticNet { l1, l2 };
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l1 >= 0.0 && self.l1.is_finite() && self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "elastic net weights must be finite and nonnegative, got l1 = {}, l2 = {}",
                self.l1, self.l2
            )));
        }
        Ok(())
    }

    /// Scalar prox: `soft(z, τλ1) / (1 + τλ2)`.
    #[inline]
    pub fn prox_scalar(&self, z: f64, scale: f64) -> f64 {
        soft(z, scale * self.l1) / (1.0 + scale * self.l2)
    }
}

impl Regularizer for ElasticNet {
    fn value(&self, x: &[f64]) -> f64 {
        let (l1, l2) = x
            .iter()
            .fold((0.0, 0.0), |(a, b), &v| (a + v.abs(), b + v * v));
        self.l1 * l1 + 0.5 * self.l2 * l2
    }

    fn prox_in_place(&self, z: &mut [f64], scale: f64) {
        for v in z.iter_mut() {
            *v = self.prox_scalar(*v, scale);
        }
    }

    fn as_elastic_net(&self) -> Option<ElasticNet> {
        Some(*self)
    }
}

/// `prox_{τR}(z)` for the elastic net.
pub fn prox_elastic_net(z: &[f64], scale: f64, reg: &ElasticNet) -> Vec<f64> {
    debug_assert!(scale > 0.0);
    z.iter().map(|&v| reg.prox_scalar(v, scale)).collect()
}

/// The composite ERM problem together with its per-row smoothness constants.
#[derive(Debug, Clone)]
pub struct Problem<R = ElasticNet> {
    pub data: Dataset,
    pub loss: LossKind,
    pub reg: R,
    smoothness: Vec<f64>,
    mean_smoothness: f64,
    max_smoothness: f64,
}

impl Problem<ElasticNet> {
    pub fn new(data: Dataset, loss: LossKind, reg: ElasticNet) -> Result<Self> {
        reg.validate()?;
        Problem::with_regularizer(data, loss, reg)
    }
}

impl<R: Regularizer> Problem<R> {
    pub fn with_regularizer(data: Dataset, loss: LossKind, reg: R) -> Result<Self> {
        loss.validate()?;
        if loss.is_classification() {
            if let Some(i) = data.labels().iter().position(|&b| b != 1.0 && b != -1.0) {
                return Err(Error::InvalidDataset(format!(
                    "label {} at row {} is not ±1 (required by {:?})",
                    data.label(i),
                    i,
                    loss
                )));
            }
        }
        let smoothness: Vec<f64> = (0..data.rows())
            .map(|i| smoothness_constant(loss, data.row(i)))
            .collect();
        let mean_smoothness = smoothness.iter().sum::<f64>() / smoothness.len() as f64;
        let max_smoothness = smoothness.iter().copied().fold(0.0, f64::max);
        Ok(Problem {
            data,
            loss,
            reg,
            smoothness,
            mean_smoothness,
            max_smoothness,
        })
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    /// `L_i` for each row.
    pub fn smoothness(&self) -> &[f64] {
        &self.smoothness
    }

    /// `L̄ = (1/n) Σ L_i`
    pub fn mean_smoothness(&self) -> f64 {
        self.mean_smoothness
    }

    /// `L_max = max_i L_i`
    pub fn max_smoothness(&self) -> f64 {
        self.max_smoothness
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn margin(&self, i: usize, x: &[f64]) -> f64 {
        self.data.row(i).dot(x)
    }

    /// `ψ_i'(a_iᵀx)`
    #[inline]
    pub fn derivative_at(&self, i: usize, x: &[f64]) -> f64 {
        self.loss.derivative(self.margin(i, x), self.data.label(i))
    }

    /// `∇f_i(x) = ψ_i'(a_iᵀx)·a_i`, added into `out` after scaling by `scale`.
    #[inline]
    pub fn add_component_gradient(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let d = self.derivative_at(i, x);
        self.data.row(i).axpy(scale * d, out);
    }

    /// `∇F(x)` together with the per-row derivatives `ψ_i'(a_iᵀx)`.
    pub fn full_gradient_with_derivatives(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dim(x)?;
        let n = self.n();
        let derivs: Vec<f64> = (0..n).map(|i| self.derivative_at(i, x)).collect();
        let mut grad = vec![0.0; self.dim()];
        for (i, &g) in derivs.iter().enumerate() {
            self.data.row(i).axpy(g, &mut grad);
        }
        let inv_n = 1.0 / n as f64;
        grad.iter_mut().for_each(|g| *g *= inv_n);
        Ok((grad, derivs))
    }

    /// `F(x) = (1/n) Σ ψ_i(a_iᵀx)`
    pub fn smooth_value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let total: f64 = (0..self.n())
            .map(|i| self.loss.value(self.margin(i, x), self.data.label(i)))
            .sum();
        Ok(total / self.n() as f64)
    }
}

/// `∇F(x) = (1/n) Σ ψ_i'(a_iᵀx) a_i`, accumulated in row order.
pub fn full_gradient<R: Regularizer>(problem: &Problem<R>, x: &[f64]) -> Result<Vec<f64>> {
    problem.full_gradient_with_derivatives(x).map(|(g, _)| g)
}

/// `P(x) = F(x) + R(x)`
pub fn objective<R: Regularizer>(problem: &Problem<R>, x: &[f64]) -> Result<f64> {
    Ok(problem.smooth_value(x)? + problem.reg.value(x))
}
