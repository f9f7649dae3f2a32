//! Black-Scholes closed forms used as reference prices.
//!
//! Argument order throughout is `(spot, strike, vol, rate, horizon)`.

use std::f64::consts::FRAC_1_SQRT_2;

use libm::erfc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("spot, volatility and horizon must be positive")]
    NonPositive,
    #[error("lookback closed form needs a positive rate, got {0}")]
    NonPositiveRate(f64),
    #[error("lookback coefficient must be positive, got {0}")]
    InvalidLambda(f64),
    #[error("barrier needs 0 <= K <= L, got K = {strike}, L = {barrier}")]
    InvalidBarrier { strike: f64, barrier: f64 },
}

/// Standard normal CDF, `½ erfc(-x/√2)`.
///
/// `libm`'s `erfc` (the musl/FreeBSD routine) keeps full relative accuracy
/// in the far lower tail.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

fn check(spot: f64, vol: f64, horizon: f64) -> Result<(), AnalyticError> {
    if spot > 0.0 && vol > 0.0 && horizon > 0.0 {
        Ok(())
    } else {
        Err(AnalyticError::NonPositive)
    }
}

fn call_unchecked(spot: f64, strike: f64, vol: f64, rate: f64, horizon: f64) -> f64 {
    if strike <= 0.0 {
        return spot;
    }
    let sd = vol * horizon.sqrt();
    let d1 = ((spot / strike).ln() + (rate + 0.5 * vol * vol) * horizon) / sd;
    let d2 = d1 - sd;
    spot * norm_cdf(d1) - strike * (-rate * horizon).exp() * norm_cdf(d2)
}

// Direct formula: parity cancels catastrophically for deep out-of-the-money puts.
fn put_unchecked(spot: f64, strike: f64, vol: f64, rate: f64, horizon: f64) -> f64 {
    if spot.is_infinite() {
        return 0.0;
    }
    let sd = vol * horizon.sqrt();
    let d1 = ((spot / strike).ln() + (rate + 0.5 * vol * vol) * horizon) / sd;
    let d2 = d1 - sd;
    let disc = strike * (-rate * horizon).exp() * norm_cdf(-d2);
    let forward = norm_cdf(-d1);
    (disc - if forward == 0.0 { 0.0 } else { spot * forward }).max(0.0)
}

pub fn bs_call(spot: f64, strike: f64, vol: f64, rate: f64, horizon: f64) -> Result<f64, AnalyticError> {
    check(spot, vol, horizon)?;
    Ok(call_unchecked(spot, strike, vol, rate, horizon))
}

pub fn bs_put(spot: f64, strike: f64, vol: f64, rate: f64, horizon: f64) -> Result<f64, AnalyticError> {
    check(spot, vol, horizon)?;
    Ok(put_unchecked(spot, strike, vol, rate, horizon))
}

/// Partial lookback call `e^{-rT} E (X_T - λ min X)_+`.
///
/// ```text
/// S0 · Call(1, λ, σ, r, T) + λ σ²/(2r) · S0 · Put(λ^{2r/σ²}, 1, 2r/σ, r, T)
/// ```
pub fn bs_partial_lookback(spot: f64, lambda: f64, vol: f64, rate: f64, horizon: f64) -> Result<f64, AnalyticError> {
    check(spot, vol, horizon)?;
    if !(rate > 0.0) {
        return Err(AnalyticError::NonPositiveRate(rate));
    }
    if !(lambda > 0.0) {
        return Err(AnalyticError::InvalidLambda(lambda));
    }
    let mu = 2.0 * rate / (vol * vol);
    let call = call_unchecked(1.0, lambda, vol, rate, horizon);
    let put = put_unchecked(lambda.powf(mu), 1.0, 2.0 * rate / vol, rate, horizon);
    Ok(spot * call + lambda * vol * vol / (2.0 * rate) * spot * put)
}

/// Up-and-out call with strike `K` and barrier `L`, monitored continuously.
///
/// ```text
/// C(K) - C(L) - e^{-rT}(L-K) Φ(d⁻(L))
///   - (L/S0)^{1+μ} [ C(K') - C(L') - e^{-rT}(L'-K') Φ(d⁻(L')) ]
/// K' = K (S0/L)²,  L' = L (S0/L)²,  μ = 2r/σ²
/// d⁻(L) = (ln(S0/L) + (r - σ²/2) T) / (σ √T)
/// ```
///
/// Returns zero when the spot already sits at or above the barrier.
pub fn bs_up_out(spot: f64, strike: f64, barrier: f64, vol: f64, rate: f64, horizon: f64) -> Result<f64, AnalyticError> {
    check(spot, vol, horizon)?;
    if !(strike >= 0.0 && strike <= barrier) {
        return Err(AnalyticError::InvalidBarrier { strike, barrier });
    }
    if spot >= barrier {
        return Ok(0.0);
    }
    let disc = (-rate * horizon).exp();
    let mu = 2.0 * rate / (vol * vol);
    let d_minus = |level: f64| ((spot / level).ln() + (rate - 0.5 * vol * vol) * horizon) / (vol * horizon.sqrt());
    let spread = |k: f64, l: f64| {
        call_unchecked(spot, k, vol, rate, horizon)
            - call_unchecked(spot, l, vol, rate, horizon)
            - disc * (l - k) * norm_cdf(d_minus(l))
    };
    let ratio = spot / barrier;
    let k_refl = strike * ratio * ratio;
    let l_refl = barrier * ratio * ratio;
    Ok(spread(strike, barrier) - (barrier / spot).powf(1.0 + mu) * spread(k_refl, l_refl))
}
