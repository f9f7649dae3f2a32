//! Multi-step Richardson-Romberg extrapolation of Euler-scheme Monte Carlo.
//!
//! The crate combines `R` Euler schemes with steps `T/n, T/(2n), ..., T/(Rn)`,
//! all driven by one Brownian path, into an estimator whose discretization
//! bias vanishes to order `n^{-R}` while its variance stays close to the
//! variance of the payoff itself.
//!
//! Modules, bottom-up:
//!
//! - [`weights`]: extrapolation weights (integer and half-order error scales).
//! - [`noise`]: consistent Gaussian increments shared by all levels.
//! - [`model`] and [`scheme`]: SDE models, Euler steps, coupled path bundles and
//!   Brownian-bridge extrema.
//! - [`payoff`] and [`analytic`]: payoff functionals and Black-Scholes closed forms.
//! - [`estimator`] and [`planner`]: the Monte Carlo engine and the budget planner.
//! - [`cli`]: the `rr` experiment runner.
//!
//! ```
//! use romberg::weights::standard_weights;
//!
//! let w = standard_weights(3).unwrap();
//! assert_eq!(w.weights(), &[0.5, -4.0, 4.5]);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cli;
pub mod estimator;
pub mod model;
pub mod noise;
pub mod payoff;
pub mod planner;
pub mod scheme;
pub mod stats;
pub mod weights;

pub use estimator::{estimate, EstimateReport, EstimatorConfig, EstimatorError};
pub use model::{BlackScholes, SdeModel};
pub use noise::{IncrementBlock, IncrementSchedule, RandomSource, ScheduleKind};
pub use payoff::{ExtremaSource, PayoffKind, PayoffSpec};
pub use scheme::{CoupledPathBundle, Coupling, SchemeError};
pub use weights::{ErrorScale, WeightVector};

// Book chapters are compiled as doc-tests so the guide cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/scheme.md")]
    mod scheme {}
    #[doc = include_str!("../../../book/src/payoffs.md")]
    mod payoffs {}
    #[doc = include_str!("../../../book/src/estimator.md")]
    mod estimator {}
    #[doc = include_str!("../../../book/src/planner.md")]
    mod planner {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
