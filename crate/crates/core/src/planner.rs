//! Budget planning: choosing `n` and `M` for a fixed complexity.
//!
//! One extrapolated path costs `κ(R) = n · R(R+1)/2` Euler steps, so a run of
//! `M` paths costs `N = M · n · R(R+1)/2` (unit cost per step). Balancing the
//! statistical error `Var/M` against the squared bias `c̃_R² n^{-2R}` gives
//!
//! ```text
//! n(N) = ((R+1)/4)^{-1/(2R+1)} (c̃²/Var)^{1/(2R+1)} N^{1/(2R+1)}
//! M(N) = 2/(R(R+1)) ((R+1)/4)^{1/(2R+1)} (Var/c̃²)^{1/(2R+1)} N^{2R/(2R+1)}
//! ```

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("budget {budget} cannot pay for one path at n = {steps}")]
    BudgetTooSmall { budget: f64, steps: usize },
}

/// Euler steps per extrapolated path, per macro step: `R(R+1)/2`.
pub fn steps_per_macro(order: usize) -> usize {
    order * (order + 1) / 2
}

/// Constant of the optimal error rate:
/// `2^{1/(2(2R+1))} R^{-1/(2R+1)} (1+1/R)^{R/(2R+1)} ((2R)^{-2R/(2R+1)} + (2R)^{1/(2R+1)})^{1/2}`.
pub fn theta(order: usize) -> f64 {
    let r = order as f64;
    let a = 2.0 * r + 1.0;
    2f64.powf(1.0 / (2.0 * a))
        * r.powf(-1.0 / a)
        * (1.0 + 1.0 / r).powf(r / a)
        * ((2.0 * r).powf(-2.0 * r / a) + (2.0 * r).powf(1.0 / a)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetPlan {
    pub budget: f64,
    pub order: usize,
    pub var_estimate: f64,
    pub c_tilde_estimate: f64,
    /// Unrounded optimal `n(N)`.
    pub n_continuous: f64,
    /// Asymptotic optimal `M(N)`.
    pub m_continuous: f64,
    /// `(1/(2R)) (Var/c̃²) n^{2R}` at `n_continuous`.
    pub m_from_relation: f64,
    pub n_star: usize,
    pub m_star: u64,
    pub theta: f64,
}

impl BudgetPlan {
    /// Complexity actually spent: `M · n · R(R+1)/2`.
    pub fn cost(&self) -> f64 {
        self.m_star as f64 * self.n_star as f64 * steps_per_macro(self.order) as f64
    }
}

/// Plans `(n, M)` for budget `N`.
///
/// `n` is the floor of the asymptotic optimum (at least 1); `M` is then the
/// largest sample count the remaining budget pays for.
pub fn plan_budget(order: usize, budget: f64, var_estimate: f64, c_tilde_estimate: f64) -> Result<BudgetPlan, PlanError> {
    if order == 0 {
        return Err(PlanError::NonPositive("order"));
    }
    for (name, v) in [("budget", budget), ("variance estimate", var_estimate), ("c_tilde estimate", c_tilde_estimate)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(PlanError::NonPositive(name));
        }
    }
    let r = order as f64;
    let a = 2.0 * r + 1.0;
    let ratio = c_tilde_estimate * c_tilde_estimate / var_estimate;
    let n_continuous = ((r + 1.0) / 4.0).powf(-1.0 / a) * ratio.powf(1.0 / a) * budget.powf(1.0 / a);
    let m_continuous =
        2.0 / (r * (r + 1.0)) * ((r + 1.0) / 4.0).powf(1.0 / a) * ratio.powf(-1.0 / a) * budget.powf(2.0 * r / a);
    let m_from_relation = n_continuous.powf(2.0 * r) / (2.0 * r * ratio);
    let n_star = (n_continuous.floor() as usize).max(1);
    let per_path = (n_star * steps_per_macro(order)) as f64;
    let m_star = (budget / per_path).floor() as u64;
    if m_star == 0 {
        return Err(PlanError::BudgetTooSmall { budget, steps: n_star });
    }
    Ok(BudgetPlan {
        budget,
        order,
        var_estimate,
        c_tilde_estimate,
        n_continuous,
        m_continuous,
        m_from_relation,
        n_star,
        m_star,
        theta: theta(order),
    })
}
