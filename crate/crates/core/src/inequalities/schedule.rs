use crate::error::{Error, Result};
use crate::mixture::Mixture;

/// Multipliers for the Θ(·) constants. `literal()` sets all of them to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConstants {
    pub l0: f64,
    pub t: f64,
    pub h: f64,
    pub eps_score: f64,
    pub m: f64,
}

impl ScheduleConstants {
    pub fn literal() -> Self {
        Self { l0: 1.0, t: 1.0, h: 1.0, eps_score: 1.0, m: 1.0 }
    }

    pub fn is_literal(&self) -> bool {
        *self == Self::literal()
    }
}

impl Default for ScheduleConstants {
    fn default() -> Self {
        Self::literal()
    }
}

/// Recommended early-stopping schedule for LMC on a cluster of components
/// with nearby modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleParams {
    pub constants: ScheduleConstants,
    pub eps_tv: f64,
    pub tau: f64,
    pub k: usize,
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub p_star: f64,
    pub d_radius: f64,
    /// `κ² K √d (ln(10κ) + e^K ln(d / (p_* ε)))`.
    pub l0: f64,
    /// `L₀ / (κ K)`, the mode-distance scale of the cluster graph.
    pub l: f64,
    /// The inverse of Γ inside the time bound, raised to `exponent`.
    pub gamma_inv: f64,
    /// `2((3/2)^(K-1) - 1)`.
    pub exponent: f64,
    /// Early-stopping time.
    pub t: f64,
    /// `ε⁴ / ((β L₀)⁴ d T)`.
    pub h_formula: f64,
    /// `ceil(T / h_formula)`; may exceed every integer type, hence `f64`.
    pub n_steps: f64,
    /// `T / n_steps`, so that `h · N = T`.
    pub h: f64,
    /// `p_*^{1/2} ε² √h / (7T)`.
    pub eps_score_budget: f64,
    /// `4000 p_*⁻¹ ε⁻⁴ K² ln(K/ε) ln(1/τ)`.
    pub m_min: f64,
}

pub fn schedule_params(m: &Mixture, eps_tv: f64, tau: f64, constants: ScheduleConstants) -> Result<ScheduleParams> {
    if !(eps_tv > 0.0 && eps_tv < 0.5 && tau > 0.0 && tau < 0.5) {
        return Err(Error::InvalidArgument(format!("eps_tv = {eps_tv} and tau = {tau} must lie in (0, 1/2)")));
    }
    let s = m.smoothness_summary();
    let (k, d) = (s.k as f64, s.dim as f64);
    let (alpha, beta, kappa, p) = (s.alpha, s.beta, s.kappa, s.p_star);
    let eps = eps_tv;

    let l0 = constants.l0 * kappa * kappa * k * d.sqrt() * ((10.0 * kappa).ln() + k.exp() * (d / (p * eps)).ln());
    let l = l0 / (kappa * k);
    let bl = beta * l0;
    let gamma_inv = 1e8 * d * bl.powi(3) * k.exp() * (1.0 / p).ln().powf(1.5)
        * (16.0 * d * bl * bl / (eps * tau * alpha)).ln().powi(5)
        / (p.powf(3.5) * eps.powi(3) * alpha.powf(1.5));
    let exponent = 2.0 * (1.5f64.powi(s.k as i32 - 1) - 1.0);
    let t = constants.t * k * k * (10.0 / p).ln() / (alpha * p) * gamma_inv.powf(exponent);
    let h_formula = constants.h * eps.powi(4) / (bl.powi(4) * d * t);
    let n_steps = (t / h_formula).ceil();
    let h = t / n_steps;
    let eps_score_budget = constants.eps_score * p.sqrt() * eps * eps * h.sqrt() / (7.0 * t);
    let m_min = constants.m * 4000.0 / p * eps.powi(-4) * k * k * (k / eps).ln() * (1.0 / tau).ln();

    Ok(ScheduleParams {
        constants,
        eps_tv,
        tau,
        k: s.k,
        dim: s.dim,
        alpha,
        beta,
        kappa,
        p_star: p,
        d_radius: s.d_radius,
        l0,
        l,
        gamma_inv,
        exponent,
        t,
        h_formula,
        n_steps,
        h,
        eps_score_budget,
        m_min,
    })
}
