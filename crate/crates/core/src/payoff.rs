//! Discounted payoff functionals evaluated on one level of a bundle.
//!
//! Payoffs read component 0 of the state.

use serde::Serialize;
use thiserror::Error;

use crate::scheme::CoupledPathBundle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PayoffError {
    #[error("bridged payoff evaluated on a bundle simulated without bridging")]
    MissingExtrema,
    #[error("invalid payoff parameters: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffKind {
    VanillaCall { strike: f64 },
    /// `(X_T - λ min X)_+`.
    PartialLookbackCall { lambda: f64 },
    /// `(X_T - K)_+ 1{max X ≤ L}`.
    UpOutCall { strike: f64, barrier: f64 },
}

impl PayoffKind {
    pub fn is_path_dependent(&self) -> bool {
        !matches!(self, PayoffKind::VanillaCall { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PayoffKind::VanillaCall { .. } => "call",
            PayoffKind::PartialLookbackCall { .. } => "lookback",
            PayoffKind::UpOutCall { .. } => "up-out",
        }
    }
}

/// Where path extrema come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremaSource {
    /// Extrema over the Euler grid states.
    DiscreteGrid,
    /// Brownian-bridge extrema sampled between grid states.
    Bridged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PayoffSpec {
    pub kind: PayoffKind,
    pub rate: f64,
    pub horizon: f64,
    pub extrema: ExtremaSource,
}

impl PayoffSpec {
    pub fn new(kind: PayoffKind, rate: f64, horizon: f64, extrema: ExtremaSource) -> Result<Self, PayoffError> {
        match kind {
            PayoffKind::VanillaCall { strike } if !(strike >= 0.0) => {
                return Err(PayoffError::Invalid("strike must be non-negative"))
            }
            PayoffKind::PartialLookbackCall { lambda } if !(lambda > 0.0) => {
                return Err(PayoffError::Invalid("lambda must be positive"))
            }
            PayoffKind::UpOutCall { strike, barrier } if !(strike >= 0.0 && barrier >= strike) => {
                return Err(PayoffError::Invalid("up-and-out needs 0 <= K <= L"))
            }
            _ => {}
        }
        if !(horizon > 0.0) {
            return Err(PayoffError::Invalid("horizon must be positive"));
        }
        Ok(PayoffSpec { kind, rate, horizon, extrema })
    }

    pub fn discount(&self) -> f64 {
        (-self.rate * self.horizon).exp()
    }

    /// Undiscounted payoff from terminal value and path extrema.
    pub fn raw(&self, terminal: f64, min: f64, max: f64) -> f64 {
        match self.kind {
            PayoffKind::VanillaCall { strike } => (terminal - strike).max(0.0),
            PayoffKind::PartialLookbackCall { lambda } => (terminal - lambda * min).max(0.0),
            PayoffKind::UpOutCall { strike, barrier } => {
                if max > barrier {
                    0.0
                } else {
                    (terminal - strike).max(0.0)
                }
            }
        }
    }

    /// Discounted payoff of level `r`.
    pub fn evaluate(&self, bundle: &CoupledPathBundle, r: usize) -> Result<f64, PayoffError> {
        let terminal = bundle.terminal(r)[0];
        let (min, max) = if !self.kind.is_path_dependent() {
            (terminal, terminal)
        } else {
            match self.extrema {
                ExtremaSource::DiscreteGrid => bundle.grid_extrema(r, 0),
                ExtremaSource::Bridged => {
                    let e = bundle.bridged_extrema(r).ok_or(PayoffError::MissingExtrema)?;
                    (e.min[0], e.max[0])
                }
            }
        };
        Ok(self.discount() * self.raw(terminal, min, max))
    }
}
