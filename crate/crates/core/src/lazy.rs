//! Lazy (deferred per-coordinate) updates for one stage of accelerated SVRDA
//! with linear-model losses and the elastic net.
//!
//! Between two touches of coordinate `j` every stochastic gradient coordinate
//! equals the anchor gradient `∇̃_j`, so `z_{t,j}` has a closed form and the
//! weighted sum `Σ θ_{t−1} z_{t,j}` that defines `x_{t,j}` splits into at most
//! two intervals (where the soft threshold is active from above or below)
//! whose sums come from two prefix tables.
//!
//! Iterations are indexed by `t = 1..=m`; with `P_t = θ_tθ_{t−1} = t(t+1)/4`
//! the dense recursion reads
//! `G_t = G_{t−1} + θ_{t−1} g_t`,
//! `z_t = soft(z_0 − ηG_t, ηP_tλ1)/(1 + ηP_tλ2)`,
//! `P_t x_t = P_{t−1} x_{t−1} + θ_{t−1} z_t`.

use crate::error::{Error, Result};
use crate::estimator::{correction_coefficient, Anchor};
use crate::problem::{soft, ElasticNet, Problem, Regularizer};
use crate::sampling::{RngStream, SamplingScheme};
use crate::solver::{check_count, check_positive};

use crate::dasvrda::params::{theta, theta_product};

/// Inclusive integer range; empty when `start > end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: u64,
    pub end: u64,
}

impl Interval {
    pub const EMPTY: Interval = Interval { start: 1, end: 0 };

    pub fn new(start: u64, end: u64) -> Self {
        if start > end {
            Interval::EMPTY
        } else {
            Interval { start, end }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }

    pub fn len(&self) -> u64 {
        if self.is_empty() {
            0
        } else {
            self.end - self.start + 1
        }
    }

    pub fn contains(&self, t: u64) -> bool {
        self.start <= t && t <= self.end
    }

    fn shift(self, by: u64) -> Interval {
        if self.is_empty() {
            self
        } else {
            Interval::new(self.start + by, self.end + by)
        }
    }

    fn shift_back(self) -> Interval {
        if self.is_empty() {
            self
        } else {
            Interval::new(self.start - 1, self.end - 1)
        }
    }
}

/// Iterations where the soft threshold leaves a positive (`plus`) or a
/// negative (`minus`) value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KSets {
    pub plus: Interval,
    pub minus: Interval,
}

/// `S[t] = Σ_{s≤t} θ_{s−1}/(1 + ηP_sλ2)` and
/// `S'[t] = Σ_{s≤t} θ_{s−1}P_s/(1 + ηP_sλ2)` for `t = 0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixTables {
    weight: Vec<f64>,
    weighted_pair: Vec<f64>,
}

impl PrefixTables {
    pub fn new(eta: f64, l2: f64, m: usize) -> Self {
        let mut weight = Vec::with_capacity(m + 1);
        let mut weighted_pair = Vec::with_capacity(m + 1);
        weight.push(0.0);
        weighted_pair.push(0.0);
        let (mut a, mut b) = (0.0, 0.0);
        for s in 1..=m as u64 {
            let p = theta_product(s);
            let th = theta(s as i64 - 1);
            let shrink = 1.0 + eta * p * l2;
            a += th / shrink;
            b += th * p / shrink;
            weight.push(a);
            weighted_pair.push(b);
        }
        PrefixTables { weight, weighted_pair }
    }

    pub fn len(&self) -> usize {
        self.weight.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn weighted_pair(&self) -> &[f64] {
        &self.weighted_pair
    }

    /// `(Σ_{t∈I} θ_{t−1}/(1+ηP_tλ2), Σ_{t∈I} θ_{t−1}P_t/(1+ηP_tλ2))`
    pub fn interval_sums(&self, iv: Interval) -> (f64, f64) {
        if iv.is_empty() {
            return (0.0, 0.0);
        }
        let (a, b) = (iv.start as usize - 1, iv.end as usize);
        (self.weight[b] - self.weight[a], self.weighted_pair[b] - self.weighted_pair[a])
    }
}

/// Closed-form `z` coordinate at iteration `t` for a coordinate last touched
/// at `t_j`: `soft(z_0 − ηG_{t_j} − η(P_t − P_{t_j})∇̃, ηP_tλ1)/(1 + ηP_tλ2)`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn lazy_z(z0: f64, gsum: f64, tilde_grad: f64, eta: f64, l1: f64, l2: f64, pair: f64, pair_at_last: f64) -> f64 {
    let u = z0 - eta * gsum - eta * (pair - pair_at_last) * tilde_grad;
    soft(u, eta * pair * l1) / (1.0 + eta * pair * l2)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Sense {
    Below,
    Above,
}

/// `{t ∈ [lo, hi] : coef·t(t+1) + offset < target}` (or `> target`). The
/// left side is monotone in `t ≥ 0`, so the set is a prefix or a suffix;
/// its boundary is estimated from the quadratic and then checked pointwise.
fn quadratic_region(coef: f64, offset: f64, target: f64, sense: Sense, lo: u64, hi: u64) -> Interval {
    if lo > hi {
        return Interval::EMPTY;
    }
    let pred = |t: u64| {
        let lhs = coef * (t as f64 * (t as f64 + 1.0)) + offset;
        match sense {
            Sense::Below => lhs < target,
            Sense::Above => lhs > target,
        }
    };
    if coef == 0.0 || !coef.is_finite() {
        return if pred(lo) { Interval::new(lo, hi) } else { Interval::EMPTY };
    }
    // Root of t(t+1) = r in the stable form 2r/(1 + √(1+4r)).
    let r = (target - offset) / coef;
    let disc = 1.0 + 4.0 * r;
    let guess = if disc >= 0.0 && disc.is_finite() {
        2.0 * r / (1.0 + disc.sqrt())
    } else if disc.is_finite() {
        lo as f64
    } else {
        hi as f64
    };
    let increasing = coef > 0.0;
    let prefix = increasing == (sense == Sense::Below);
    if prefix {
        match last_true(lo, hi, guess.floor(), &pred) {
            Some(t) => Interval::new(lo, t),
            None => Interval::EMPTY,
        }
    } else {
        let not = |t: u64| !pred(t);
        match last_true(lo, hi, guess.floor(), &not) {
            Some(t) if t == hi => Interval::EMPTY,
            Some(t) => Interval::new(t + 1, hi),
            None => Interval::new(lo, hi),
        }
    }
}

/// Largest `t ∈ [lo, hi]` with `pred(t)` for a predicate true on a prefix.
fn last_true(lo: u64, hi: u64, guess: f64, pred: &impl Fn(u64) -> bool) -> Option<u64> {
    if !pred(lo) {
        return None;
    }
    if pred(hi) {
        return Some(hi);
    }
    let mut t = if guess.is_nan() {
        lo
    } else {
        guess.clamp(lo as f64, (hi - 1) as f64) as u64
    };
    for _ in 0..4 {
        if pred(t) {
            if !pred(t + 1) {
                return Some(t);
            }
            t += 1;
        } else {
            t -= 1;
        }
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > 1 {
        let mid = a + (b - a) / 2;
        if pred(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Some(a)
}

/// Interval sets for the deferred `x` update, indexed by `k' ∈ [k_j + 2, k]`
/// with thresholds `M±_{k'} = (c1 ± c2)k'(k'−1) + c3`:
/// `K⁺ = {k' : z0 > M⁺_{k'}}` and `K⁻ = {k' : z0 < M⁻_{k'}}`, where
/// `c1 = η∇̃/4`, `c2 = ηλ1/4` and `c3 = ηG_{k_j} − ηP_{k_j}∇̃`.
pub fn compute_k_sets(c1: f64, c2: f64, c3: f64, z0: f64, kj: u64, k: u64) -> KSets {
    if k < kj + 2 {
        return KSets {
            plus: Interval::EMPTY,
            minus: Interval::EMPTY,
        };
    }
    // With t = k' − 1, k'(k'−1) = t(t+1).
    let (lo, hi) = (kj + 1, k - 1);
    KSets {
        plus: quadratic_region(c1 + c2, c3, z0, Sense::Below, lo, hi).shift(1),
        minus: quadratic_region(c1 - c2, c3, z0, Sense::Above, lo, hi).shift(1),
    }
}

/// State of one coordinate as of its last touch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordState {
    pub last: u64,
    pub x: f64,
    pub z: f64,
    /// `G = Σ θ_{t−1} g_t` through iteration `last`.
    pub gsum: f64,
}

/// Constants shared by every coordinate of a stage.
#[derive(Debug, Clone)]
pub struct LazyContext {
    pub eta: f64,
    pub reg: ElasticNet,
    pub tables: PrefixTables,
}

impl LazyContext {
    pub fn new(eta: f64, reg: ElasticNet, m: usize) -> Self {
        LazyContext {
            eta,
            reg,
            tables: PrefixTables::new(eta, reg.l2, m),
        }
    }

    /// Advances a coordinate whose stochastic gradients equal `tilde_grad`
    /// on every iteration after `state.last`, through iteration `t`.
    pub fn advance(&self, state: CoordState, z0: f64, tilde_grad: f64, t: u64) -> CoordState {
        if t <= state.last {
            return state;
        }
        let eta = self.eta;
        let (l1, l2) = (self.reg.l1, self.reg.l2);
        let p_last = theta_product(state.last);
        let p_t = theta_product(t);
        let z = lazy_z(z0, state.gsum, tilde_grad, eta, l1, l2, p_t, p_last);
        let x = lazy_x(state.x, state.last, t, state.gsum, z0, tilde_grad, self);
        CoordState {
            last: t,
            x,
            z,
            gsum: state.gsum + (p_t - p_last) * tilde_grad,
        }
    }
}

/// `x_t` from `x_{t_j}` for a coordinate untouched on `(t_j, t]`:
/// `(P_{t_j} x_{t_j} + Σ_{s∈(t_j,t]} θ_{s−1} z_s)/P_t`, with the sum split
/// into the two soft-threshold regions and read off the prefix tables.
pub fn lazy_x(x_at_last: f64, last: u64, t: u64, gsum: f64, z0: f64, tilde_grad: f64, ctx: &LazyContext) -> f64 {
    if t <= last {
        return x_at_last;
    }
    let eta = ctx.eta;
    let l1 = ctx.reg.l1;
    let p_last = theta_product(last);
    let c3 = eta * gsum - eta * p_last * tilde_grad;
    let c = z0 - c3;
    let sets = compute_k_sets(eta * tilde_grad / 4.0, eta * l1 / 4.0, c3, z0, last, t + 1);
    let (ap, bp) = ctx.tables.interval_sums(sets.plus.shift_back());
    let (am, bm) = ctx.tables.interval_sums(sets.minus.shift_back());
    let sum = (c * ap - eta * (tilde_grad + l1) * bp) + (c * am - eta * (tilde_grad - l1) * bm);
    (p_last * x_at_last + sum) / theta_product(t)
}

/// Work counters of a lazy stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LazyStats {
    /// Coordinates updated across all iterations (excluding the final sweep).
    pub touched: u64,
    /// Largest active set seen in one iteration.
    pub max_active: usize,
    /// Coordinates brought up to date by the final sweep.
    pub swept: u64,
}

/// One stage of accelerated SVRDA whose per-iteration work is proportional
/// to the nonzeros of the sampled rows.
pub struct LazyStage<'a, R> {
    problem: &'a Problem<R>,
    scheme: &'a SamplingScheme,
    anchor: Anchor,
    ctx: LazyContext,
    b: usize,
    m: usize,
    k: u64,
    z0: Vec<f64>,
    coords: Vec<CoordState>,
    y: Vec<f64>,
    g: Vec<f64>,
    stamp: Vec<u64>,
    active: Vec<usize>,
    batch: Vec<usize>,
    stats: LazyStats,
}

impl<'a, R: Regularizer> LazyStage<'a, R> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        problem: &'a Problem<R>,
        scheme: &'a SamplingScheme,
        start: &[f64],
        anchor: &[f64],
        eta: f64,
        m: usize,
        b: usize,
    ) -> Result<Self> {
        let reg = problem.reg.as_elastic_net().ok_or(Error::LazyUnsupported)?;
        check_positive("eta", eta)?;
        check_count("m", m)?;
        scheme.check_batch(b)?;
        problem.check_dim(start)?;
        let anchor = Anchor::new(problem, anchor)?;
        let d = problem.dim();
        let coords = start
            .iter()
            .map(|&v| CoordState {
                last: 0,
                x: v,
                z: v,
                gsum: 0.0,
            })
            .collect();
        Ok(LazyStage {
            problem,
            scheme,
            anchor,
            ctx: LazyContext::new(eta, reg, m),
            b,
            m,
            k: 0,
            z0: start.to_vec(),
            coords,
            y: vec![0.0; d],
            g: vec![0.0; d],
            stamp: vec![0; d],
            active: Vec::new(),
            batch: Vec::with_capacity(b),
            stats: LazyStats::default(),
        })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn stats(&self) -> LazyStats {
        self.stats
    }

    pub fn batch(&self) -> &[usize] {
        &self.batch
    }

    /// Coordinates updated in the most recent iteration.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn context(&self) -> &LazyContext {
        &self.ctx
    }

    /// Runs inner iteration `k + 1`.
    pub fn step(&mut self, rng: &mut RngStream) -> Result<()> {
        let k = self.k + 1;
        if k > self.m as u64 {
            return Err(Error::InvalidParameter(format!(
                "lazy stage sized for {} iterations cannot run iteration {}",
                self.m, k
            )));
        }
        self.scheme.draw_into(rng, self.b, &mut self.batch)?;
        let data = &self.problem.data;
        self.active.clear();
        for &i in &self.batch {
            for (j, _) in data.row(i).iter() {
                if self.stamp[j] != k {
                    self.stamp[j] = k;
                    self.active.push(j);
                }
            }
        }
        let w = 1.0 / theta(k as i64);
        for &j in &self.active {
            let st = self.ctx.advance(self.coords[j], self.z0[j], self.anchor.grad[j], k - 1);
            self.coords[j] = st;
            self.y[j] = (1.0 - w) * st.x + w * st.z;
            self.g[j] = self.anchor.grad[j];
        }
        let inv_b = 1.0 / self.batch.len() as f64;
        for &i in &self.batch {
            let row = data.row(i);
            let c = correction_coefficient(self.problem, &self.anchor, self.scheme, i, row.dot(&self.y), inv_b);
            row.axpy(c, &mut self.g);
        }
        let th = theta(k as i64 - 1);
        let tau = self.ctx.eta * theta_product(k);
        for &j in &self.active {
            let st = &mut self.coords[j];
            st.gsum += th * self.g[j];
            st.z = self.ctx.reg.prox_scalar(self.z0[j] - self.ctx.eta * st.gsum, tau);
            st.x = (1.0 - w) * st.x + w * st.z;
            st.last = k;
        }
        self.stats.touched += self.active.len() as u64;
        self.stats.max_active = self.stats.max_active.max(self.active.len());
        self.k = k;
        Ok(())
    }

    fn coord_now(&self, j: usize) -> CoordState {
        self.ctx.advance(self.coords[j], self.z0[j], self.anchor.grad[j], self.k)
    }

    /// Dense `(x_k, z_k)` at the current iteration, leaving the deferred state
    /// untouched.
    pub fn materialize(&self) -> (Vec<f64>, Vec<f64>) {
        (0..self.coords.len())
            .map(|j| {
                let st = self.coord_now(j);
                (st.x, st.z)
            })
            .unzip()
    }

    /// `Σ_{t≤k} θ_{t−1} g_t` for every coordinate at the current iteration.
    pub fn gradient_sums(&self) -> Vec<f64> {
        (0..self.coords.len()).map(|j| self.coord_now(j).gsum).collect()
    }

    /// Catches every coordinate up to the current iteration and returns `(x, z)`.
    pub fn finish(mut self) -> (Vec<f64>, Vec<f64>, LazyStats) {
        let k = self.k;
        for j in 0..self.coords.len() {
            if self.coords[j].last < k {
                self.coords[j] = self.coord_now(j);
                self.stats.swept += 1;
            }
        }
        let (x, z) = self.coords.iter().map(|c| (c.x, c.z)).unzip();
        (x, z, self.stats)
    }
}

/// Lazy counterpart of the dense one-stage routine; same inputs, same random
/// draws, same outputs up to floating-point reassociation.
#[allow(clippy::too_many_arguments)]
pub fn lazy_one_stage_accsvrda<R: Regularizer>(
    problem: &Problem<R>,
    start: &[f64],
    anchor: &[f64],
    eta: f64,
    m: usize,
    b: usize,
    scheme: &SamplingScheme,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut stage = LazyStage::new(problem, scheme, start, anchor, eta, m, b)?;
    for _ in 0..m {
        stage.step(rng)?;
    }
    let (x, z, _) = stage.finish();
    Ok((x, z))
}

/// Whether the lazy engine pays off for this problem: sparse data and an
/// elastic-net regularizer.
pub fn lazy_recommended<R: Regularizer>(problem: &Problem<R>) -> bool {
    problem.reg.as_elastic_net().is_some() && problem.data.density() < 0.25
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_basics() {
        assert!(Interval::new(3, 2).is_empty());
        assert_eq!(Interval::new(2, 5).len(), 4);
        assert!(Interval::new(2, 5).contains(5));
        assert_eq!(Interval::EMPTY.len(), 0);
    }

    #[test]
    fn prefix_tables_match_direct_sums() {
        let t = PrefixTables::new(0.03, 0.7, 50);
        let iv = Interval::new(7, 31);
        let (a, b) = t.interval_sums(iv);
        let mut da = 0.0;
        let mut db = 0.0;
        for s in 7..=31u64 {
            let p = theta_product(s);
            let sh = 1.0 + 0.03 * p * 0.7;
            da += (s as f64 / 2.0) / sh;
            db += (s as f64 / 2.0) * p / sh;
        }
        assert!((a - da).abs() <= 1e-12 * da.abs());
        assert!((b - db).abs() <= 1e-12 * db.abs());
    }

    #[test]
    fn lazy_z_special_cases() {
        assert_eq!(lazy_z(2.0, 0.0, 0.0, 0.1, 0.0, 0.5, 3.0, 0.0), 2.0 / (1.0 + 0.1 * 3.0 * 0.5));
        let v = lazy_z(1.0, 0.4, 0.2, 0.1, 0.0, 0.0, 5.0, 1.5);
        assert!((v - (1.0 - 0.04 - 0.1 * 3.5 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn k_sets_trivial_cases() {
        let s = compute_k_sets(0.0, 0.0, 0.0, 1.0, 3, 10);
        assert_eq!(s.plus, Interval::new(5, 10));
        assert!(s.minus.is_empty());
        let s = compute_k_sets(0.0, 0.0, 1.0, 1.0, 3, 10);
        assert!(s.plus.is_empty() && s.minus.is_empty());
        let s = compute_k_sets(0.3, 0.1, 0.0, 1.0, 3, 4);
        assert!(s.plus.is_empty() && s.minus.is_empty());
    }

    #[test]
    fn k_sets_prefix_and_suffix() {
        // (c1+c2)·k'(k'−1) < 30 for k' ≤ 6.
        let s = compute_k_sets(0.5, 0.5, 0.0, 30.5, 0, 20);
        assert_eq!(s.plus, Interval::new(2, 6));
        // Negative slope: z0 < (c1−c2)k'(k'−1) + c3 never, and K⁺ is a suffix.
        let s = compute_k_sets(-1.0, 0.0, 0.0, -30.5, 0, 20);
        assert_eq!(s.plus, Interval::new(7, 20));
        assert_eq!(s.minus, Interval::new(2, 6));
    }

    #[test]
    fn advance_single_step_matches_recursion() {
        let ctx = LazyContext::new(0.2, ElasticNet { l1: 0.05, l2: 0.1 }, 10);
        let st = CoordState {
            last: 2,
            x: 0.3,
            z: 0.1,
            gsum: 0.7,
        };
        let (z0, gt) = (0.4, -0.25);
        let next = ctx.advance(st, z0, gt, 3);
        let gsum = 0.7 + theta(2) * gt;
        let z = ctx.reg.prox_scalar(z0 - 0.2 * gsum, 0.2 * theta_product(3));
        let w = 1.0 / theta(3);
        let x = (1.0 - w) * 0.3 + w * z;
        assert!((next.gsum - gsum).abs() < 1e-15);
        assert!((next.z - z).abs() < 1e-15);
        assert!((next.x - x).abs() < 1e-14);
    }
}
