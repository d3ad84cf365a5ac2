//! Momentum schedules and parameter formulas.

use crate::error::{Error, Result};
use crate::solver::{check_count, check_positive};

/// Inner momentum weight `θ_k = (k + 1)/2` (so `θ_0 = 1/2`, `θ_{−1} = 0`).
#[inline]
pub fn theta(k: i64) -> f64 {
    (k + 1) as f64 / 2.0
}

/// `θ_k θ_{k−1} = k(k + 1)/4`, formed from the integer product.
#[inline]
pub fn theta_product(k: u64) -> f64 {
    (k * (k + 1)) as f64 / 4.0
}

/// Outer momentum weight `θ̃_s = (1 − 1/γ)(s + 2)/2`; `θ̃_0 = 1 − 1/γ`.
#[inline]
pub fn outer_theta(gamma: f64, s: u64) -> f64 {
    (1.0 - 1.0 / gamma) * (s as f64 + 2.0) / 2.0
}

/// The `γ` minimizing `(1 + γ(m+1)/b)/(1 − 1/γ)²`:
/// `(3 + √(9 + 8b/(m+1)))/2`.
pub fn gamma_star(m: usize, b: usize) -> f64 {
    let ratio = b as f64 / (m as f64 + 1.0);
    (3.0 + (9.0 + 8.0 * ratio).sqrt()) / 2.0
}

/// `g(γ) = (1 + γ(m+1)/b)/(1 − 1/γ)²`, the `γ`-dependent factor of the rate.
pub fn gamma_objective(gamma: f64, m: usize, b: usize) -> f64 {
    let r = 1.0 - 1.0 / gamma;
    (1.0 + gamma * (m as f64 + 1.0) / b as f64) / (r * r)
}

/// `η = 1/((1 + γ(m+1)/b) L)`
pub fn eta_default(gamma: f64, m: usize, b: usize, smoothness: f64) -> f64 {
    1.0 / ((1.0 + gamma * (m as f64 + 1.0) / b as f64) * smoothness)
}

/// Restart contraction factor
/// `ρ(S) = 4{(1−1/γ)² + 4/(η(m+1)mμ)} / {(1−1/γ)²(S+2)²}`.
pub fn restart_rho(gamma: f64, eta: f64, m: usize, mu: f64, stages: u64) -> f64 {
    let r2 = (1.0 - 1.0 / gamma).powi(2);
    let m = m as f64;
    let s2 = (stages as f64 + 2.0).powi(2);
    4.0 * (r2 + 4.0 / (eta * (m + 1.0) * m * mu)) / (r2 * s2)
}

/// Smallest `S ≥ 1` with `ρ(S) ≤ target`.
pub fn choose_stages_for_rho(gamma: f64, eta: f64, m: usize, mu: f64, target: f64) -> Result<u64> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "strong convexity parameter must be positive, got {}",
            mu
        )));
    }
    check_positive("target rho", target)?;
    check_positive("eta", eta)?;
    check_count("m", m)?;
    if !(gamma > 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must exceed 1, got {}", gamma)));
    }
    // ρ(S)(S+2)² is constant in S.
    let c = restart_rho(gamma, eta, m, mu, 0) * 4.0;
    let guess = ((c / target).sqrt() - 2.0).ceil();
    if !guess.is_finite() || guess > 1e15 {
        return Err(Error::InvalidParameter("required restart interval overflows".into()));
    }
    let mut s = guess.max(1.0) as u64;
    while s > 1 && restart_rho(gamma, eta, m, mu, s - 1) <= target {
        s -= 1;
    }
    while restart_rho(gamma, eta, m, mu, s) > target {
        s += 1;
    }
    Ok(s)
}

/// Right-hand side of the non-strongly-convex rate:
/// `4/(S+2)² · gap₀ + 8/((1−1/γ)² η (S+2)² (m+1) m) · ‖z̃₀ − x*‖²`.
pub fn ns_gap_bound(gap0: f64, dist_sq: f64, gamma: f64, eta: f64, m: usize, stages: u64) -> f64 {
    let s2 = (stages as f64 + 2.0).powi(2);
    let r2 = (1.0 - 1.0 / gamma).powi(2);
    let m = m as f64;
    4.0 / s2 * gap0 + 8.0 / (r2 * eta * s2 * (m + 1.0) * m) * dist_sq
}

/// `m_u = ⌈√(γ (m_{u−1} + 1) m_{u−1})⌉`
pub fn warm_next_len(gamma: f64, prev: usize) -> usize {
    let p = prev as f64;
    (gamma * (p + 1.0) * p).sqrt().ceil() as usize
}

/// `m' = ⌈√((m_U + 1) m_U)/(1 − 1/γ)⌉`
pub fn warm_tail_len(gamma: f64, last: usize) -> usize {
    let l = last as f64;
    (((l + 1.0) * l).sqrt() / (1.0 - 1.0 / gamma)).ceil() as usize
}

/// `U = ⌈log_{√γ}(m/m₀)⌉`, zero when `m₀ ≥ m`.
pub fn warm_default_rounds(gamma: f64, m0: usize, m: usize) -> usize {
    if m0 >= m {
        return 0;
    }
    let u = (2.0 * (m as f64 / m0 as f64).ln() / gamma.ln()).ceil();
    u.max(0.0) as usize
}

/// Inner lengths `m_1, …, m_U` followed by the tail length `m'`.
pub fn warm_schedule(gamma: f64, m0: usize, rounds: usize) -> (Vec<usize>, usize) {
    let mut lens = Vec::with_capacity(rounds);
    let mut prev = m0;
    for _ in 0..rounds {
        prev = warm_next_len(gamma, prev);
        lens.push(prev);
    }
    (lens, warm_tail_len(gamma, prev))
}

/// Scalar schedule of one DASVRDA configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageParams {
    pub gamma: f64,
    pub eta: f64,
    /// Inner iterations per stage.
    pub m: usize,
    /// Mini-batch size.
    pub b: usize,
}

impl StageParams {
    /// `γ = γ*` and the default `η` for smoothness `L` (usually `L̄`).
    pub fn auto(m: usize, b: usize, smoothness: f64) -> Result<Self> {
        check_count("m", m)?;
        check_count("b", b)?;
        check_positive("smoothness", smoothness)?;
        let gamma = gamma_star(m, b);
        Ok(StageParams {
            gamma,
            eta: eta_default(gamma, m, b, smoothness),
            m,
            b,
        })
    }

    /// Explicit parameters. `γ ≥ 3` is enforced in theory mode; otherwise any
    /// `γ > 1` is accepted with a warning below 3.
    pub fn new(gamma: f64, eta: f64, m: usize, b: usize, theory_mode: bool) -> Result<Self> {
        check_count("m", m)?;
        check_count("b", b)?;
        check_positive("eta", eta)?;
        if !(gamma > 1.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must exceed 1, got {}", gamma)));
        }
        if gamma < 3.0 {
            if theory_mode {
                return Err(Error::InvalidParameter(format!(
                    "gamma = {} is below 3; convergence guarantees require gamma >= 3",
                    gamma
                )));
            }
            log::warn!("gamma = {} is below 3; running without convergence guarantees", gamma);
        }
        Ok(StageParams { gamma, eta, m, b })
    }

    pub fn outer_theta(&self, s: u64) -> f64 {
        outer_theta(self.gamma, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_star_values() {
        assert_relative_eq!(gamma_star(1_000_000_000, 1), 3.0, epsilon = 1e-8);
        assert_relative_eq!(gamma_star(9, 10), (3.0 + 17f64.sqrt()) / 2.0, epsilon = 1e-15);
        assert_relative_eq!(gamma_star(180, 180), 3.558_871_1, epsilon = 1e-7);
        assert!(gamma_star(1, 1) > 3.0);
    }

    #[test]
    fn eta_values() {
        assert_relative_eq!(eta_default(3.0, 1, 1, 1.0), 1.0 / 7.0);
        assert!(eta_default(3.0, 1 << 40, 1, 1.0) < 1e-12);
        assert!(eta_default(3.56, 10, 4, 2.0) < 1.0 / 2.0);
    }

    #[test]
    fn outer_theta_start() {
        assert_relative_eq!(outer_theta(3.0, 0), 2.0 / 3.0);
        assert_relative_eq!(outer_theta(3.0, 1), 1.0);
    }

    #[test]
    fn theta_products_are_exact() {
        for k in 1..10_000u64 {
            assert_eq!(theta_product(k), theta(k as i64) * theta(k as i64 - 1));
        }
        assert_eq!(theta(-1), 0.0);
        assert_eq!(theta(0), 0.5);
    }

    #[test]
    fn rho_stage_choice() {
        // Huge μ and m: ρ(S) ≈ 4/(S+2)², already below 1 at S = 1.
        assert_eq!(choose_stages_for_rho(3.0, 1.0, 1_000_000, 1e12, 1.0).unwrap(), 1);
        assert!(choose_stages_for_rho(3.0, 1.0, 10, 0.0, 0.5).is_err());
        let gamma = 3.56;
        let eta = eta_default(gamma, 10, 10, 1.0);
        let s = choose_stages_for_rho(gamma, eta, 10, 1e-6, 0.5).unwrap();
        assert!(restart_rho(gamma, eta, 10, 1e-6, s) <= 0.5);
        assert!(restart_rho(gamma, eta, 10, 1e-6, s - 1) > 0.5);
    }

    #[test]
    fn warm_schedule_arithmetic() {
        assert_eq!(warm_next_len(4.0, 2), 5);
        let (lens, tail) = warm_schedule(4.0, 2, 0);
        assert!(lens.is_empty());
        assert_eq!(tail, ((6f64).sqrt() / 0.75).ceil() as usize);
    }

    #[test]
    fn params_validation() {
        assert!(StageParams::new(0.5, 0.1, 1, 1, false).is_err());
        assert!(StageParams::new(2.0, 0.1, 1, 1, true).is_err());
        assert!(StageParams::new(2.0, 0.1, 1, 1, false).is_ok());
        assert!(StageParams::new(3.0, 0.0, 1, 1, false).is_err());
        let p = StageParams::auto(9, 10, 2.0).unwrap();
        assert_relative_eq!(p.eta, eta_default(p.gamma, 9, 10, 2.0));
    }
}
