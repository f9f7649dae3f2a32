//! The multi-step Richardson-Romberg Monte Carlo engine.
//!
//! Each path yields one value per level; the per-path estimator is
//! `Y = Σ_r α_r f(X̄^(r))`. Paths are processed in fixed batches of
//! [`BATCH_SIZE`], each batch accumulating its own [`RunningStats`]; batch
//! results are merged in batch order, so the output does not depend on the
//! number of workers.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytic::{bs_call, bs_partial_lookback, bs_up_out};
use crate::model::{BlackScholes, SdeModel};
use crate::noise::{derive_seed, RandomSource, ScheduleKind};
use crate::payoff::{ExtremaSource, PayoffError, PayoffKind, PayoffSpec};
use crate::scheme::{CoupledSimulator, Coupling, SchemeError, SimulationBuffers, SimulationPlan};
use crate::stats::RunningStats;
use crate::weights::{weights_for, ErrorScale, WeightsError, MAX_ORDER};

/// Paths per batch. Part of the reproducibility contract.
pub const BATCH_SIZE: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Scheme(SchemeError),
    #[error(transparent)]
    Payoff(#[from] PayoffError),
    #[error("{count} of {samples} paths blew up (first: {first})")]
    BlowUp { count: u64, samples: u64, first: SchemeError },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl From<SchemeError> for EstimatorError {
    fn from(e: SchemeError) -> Self {
        EstimatorError::Scheme(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Stepwise constant Euler scheme; extrema over grid states.
    Discrete,
    /// Continuous Euler scheme through Brownian-bridge extrema.
    Bridged,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Discrete => "discrete",
            Scheme::Bridged => "bridged",
        }
    }

    pub fn extrema_source(&self) -> ExtremaSource {
        match self {
            Scheme::Discrete => ExtremaSource::DiscreteGrid,
            Scheme::Bridged => ExtremaSource::Bridged,
        }
    }
}

/// Anything that produces one value per level for a given path index.
pub trait LevelSampler: Sync {
    type Scratch: Send;

    fn order(&self) -> usize;

    fn scratch(&self) -> Self::Scratch;

    /// Writes the `R` level values of path `path` into `levels`.
    fn sample(&self, path: u64, scratch: &mut Self::Scratch, levels: &mut [f64]) -> Result<(), SchemeError>;
}

/// Coupled Euler bundles evaluated through a payoff.
pub struct PathSampler<'m, M: SdeModel + ?Sized> {
    pub simulator: CoupledSimulator<'m, M>,
    pub payoff: PayoffSpec,
}

impl<M: SdeModel + ?Sized> LevelSampler for PathSampler<'_, M> {
    type Scratch = SimulationBuffers;

    fn order(&self) -> usize {
        self.simulator.plan().order
    }

    fn scratch(&self) -> SimulationBuffers {
        self.simulator.buffers()
    }

    fn sample(&self, path: u64, buf: &mut SimulationBuffers, levels: &mut [f64]) -> Result<(), SchemeError> {
        self.simulator.simulate(path, buf)?;
        for (r, v) in levels.iter_mut().enumerate() {
            // extrema presence is checked at configuration time
            *v = self.payoff.evaluate(&buf.bundle, r + 1).unwrap_or(f64::NAN);
        }
        Ok(())
    }
}

/// Synthetic per-level "payoff" with a planted weak-error expansion:
/// `μ + Σ_k c_k (rn)^{-k·unit} + σ_noise · Z`, with `Z` shared by all levels.
///
/// With `unit = 1` it mimics the integer scale, with `unit = 0.5` the
/// half-order scale.
#[derive(Debug, Clone)]
pub struct SyntheticExpansion {
    pub mean: f64,
    pub coefficients: Vec<f64>,
    pub exponent_unit: f64,
    pub order: usize,
    pub steps: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SyntheticExpansion {
    /// Expected value of level `r`.
    pub fn level_mean(&self, r: usize) -> f64 {
        let h = (r * self.steps) as f64;
        self.coefficients
            .iter()
            .enumerate()
            .fold(self.mean, |acc, (k, c)| acc + c * h.powf(-((k + 1) as f64) * self.exponent_unit))
    }
}

impl LevelSampler for SyntheticExpansion {
    type Scratch = ();

    fn order(&self) -> usize {
        self.order
    }

    fn scratch(&self) {}

    fn sample(&self, path: u64, _: &mut (), levels: &mut [f64]) -> Result<(), SchemeError> {
        let z = if self.noise_sd > 0.0 { RandomSource::new(self.seed, path).standard_normal() } else { 0.0 };
        for (r, v) in levels.iter_mut().enumerate() {
            *v = self.level_mean(r + 1) + self.noise_sd * z;
        }
        Ok(())
    }
}

/// Raw output of [`run_extrapolation`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub combined: RunningStats,
    pub levels: Vec<RunningStats>,
}

#[derive(Debug)]
struct BatchResult {
    combined: RunningStats,
    levels: Vec<RunningStats>,
    blow_ups: u64,
    first: Option<SchemeError>,
}

/// `Σ a_i v_i` with compensated products and sums (Ogita-Rump-Oishi `Dot2`).
///
/// The result is as accurate as if computed in twice the working precision,
/// which matters because high-order weights are large and alternate in sign.
pub fn weighted_sum(weights: &[f64], values: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (a, v) in weights.iter().zip(values) {
        let p = a * v;
        let p_err = a.mul_add(*v, -p);
        let t = sum + p;
        let b = t - sum;
        comp += (sum - (t - b)) + (p - b) + p_err;
        sum = t;
    }
    sum + comp
}

fn run_batch<S: LevelSampler>(sampler: &S, weights: &[f64], start: u64, end: u64) -> BatchResult {
    let order = sampler.order();
    let mut scratch = sampler.scratch();
    let mut values = vec![0.0; order];
    let mut out = BatchResult {
        combined: RunningStats::new(),
        levels: vec![RunningStats::new(); order],
        blow_ups: 0,
        first: None,
    };
    for path in start..end {
        match sampler.sample(path, &mut scratch, &mut values) {
            Ok(()) => {
                let y = weighted_sum(weights, &values);
                out.combined.push(y);
                for (s, v) in out.levels.iter_mut().zip(&values) {
                    s.push(*v);
                }
            }
            Err(e) => {
                out.blow_ups += 1;
                out.first.get_or_insert(e);
            }
        }
    }
    out
}

/// Runs `samples` paths of `sampler` and combines levels with `weights`.
///
/// Any blown-up path aborts the run with [`EstimatorError::BlowUp`]; such
/// paths are never silently dropped.
pub fn run_extrapolation<S: LevelSampler>(
    sampler: &S,
    weights: &[f64],
    samples: u64,
    workers: Option<usize>,
) -> Result<RunSummary, EstimatorError> {
    if weights.len() != sampler.order() {
        return Err(EstimatorError::Config(format!(
            "{} weights for {} levels",
            weights.len(),
            sampler.order()
        )));
    }
    let batches = samples.div_ceil(BATCH_SIZE);
    let work = || -> Vec<BatchResult> {
        (0..batches)
            .into_par_iter()
            .map(|b| run_batch(sampler, weights, b * BATCH_SIZE, ((b + 1) * BATCH_SIZE).min(samples)))
            .collect()
    };
    let results = match workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| EstimatorError::Pool(e.to_string()))?
            .install(work),
        None => work(),
    };

    let mut summary = RunSummary { combined: RunningStats::new(), levels: vec![RunningStats::new(); sampler.order()] };
    let mut blow_ups = 0;
    let mut first = None;
    for b in results {
        summary.combined.merge(&b.combined);
        for (s, l) in summary.levels.iter_mut().zip(&b.levels) {
            s.merge(l);
        }
        blow_ups += b.blow_ups;
        if first.is_none() {
            first = b.first;
        }
    }
    match first {
        Some(first) => Err(EstimatorError::BlowUp { count: blow_ups, samples, first }),
        None => Ok(summary),
    }
}

/// Full description of one extrapolated Monte Carlo run.
#[derive(Debug, Clone)]
pub struct EstimatorConfig<M> {
    pub model: M,
    pub payoff: PayoffSpec,
    pub order: usize,
    pub steps: usize,
    pub samples: u64,
    pub scale: ErrorScale,
    pub coupling: Coupling,
    pub scheme: Scheme,
    pub schedule: ScheduleKind,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool. Never affects results.
    pub workers: Option<usize>,
}

impl<M: SdeModel> EstimatorConfig<M> {
    /// Consistent, sparing, discrete, integer-scale defaults.
    pub fn new(model: M, payoff: PayoffSpec, order: usize, steps: usize, samples: u64) -> Self {
        EstimatorConfig {
            model,
            payoff,
            order,
            steps,
            samples,
            scale: ErrorScale::Integer,
            coupling: Coupling::Consistent,
            scheme: Scheme::Discrete,
            schedule: ScheduleKind::Sparing,
            seed: 1,
            workers: None,
        }
    }

    /// Checks sizes and the allowed scale/scheme pairings.
    ///
    /// Path-dependent payoffs run either on the discrete scheme with the
    /// half-order scale, or on the bridged scheme with the integer scale.
    /// Terminal payoffs use the integer scale. Custom scales are accepted
    /// everywhere.
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let fail = |m: &str| Err(EstimatorError::Config(m.to_string()));
        if self.samples == 0 {
            return fail("sample count must be at least 1");
        }
        if self.steps == 0 {
            return fail("macro step count must be at least 1");
        }
        if self.order == 0 || self.order > MAX_ORDER {
            return fail("order must lie in 1..=20");
        }
        if self.model.dim() == 0 || self.model.initial_state().len() != self.model.dim() {
            return fail("model state dimension mismatch");
        }
        if self.payoff.extrema != self.scheme.extrema_source() && self.payoff.kind.is_path_dependent() {
            return fail("payoff extrema source does not match the scheme");
        }
        let path_dep = self.payoff.kind.is_path_dependent();
        match (&self.scale, self.scheme, path_dep) {
            (ErrorScale::Custom(_), _, _) => Ok(()),
            (ErrorScale::HalfOrder, Scheme::Discrete, true) => Ok(()),
            (ErrorScale::Integer, Scheme::Bridged, true) => Ok(()),
            (ErrorScale::Integer, _, false) => Ok(()),
            (ErrorScale::HalfOrder, _, false) => fail("half-order scale applies to path-dependent payoffs only"),
            (ErrorScale::HalfOrder, Scheme::Bridged, true) => fail("bridged scheme uses the integer scale"),
            (ErrorScale::Integer, Scheme::Discrete, true) => {
                fail("discrete path-dependent payoffs use the half-order scale")
            }
        }
    }

    fn plan(&self) -> SimulationPlan {
        SimulationPlan {
            order: self.order,
            steps: self.steps,
            horizon: self.payoff.horizon,
            coupling: self.coupling,
            schedule: self.schedule,
            bridged: self.scheme == Scheme::Bridged,
        }
    }
}

/// Result of one estimator run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub mean: f64,
    /// Sample variance of the per-path combined estimator.
    pub variance: f64,
    pub std_err: f64,
    pub samples: u64,
    pub steps: usize,
    pub order: usize,
    pub scale: String,
    pub coupling: Coupling,
    pub scheme: Scheme,
    pub seed: u64,
    pub wall_ms: f64,
    pub normals: u64,
    pub uniforms: u64,
    pub weights: Vec<f64>,
    pub level_means: Vec<f64>,
    pub analytic: Option<f64>,
    /// `mean - analytic`.
    pub signed_error: Option<f64>,
}

impl EstimateReport {
    pub fn with_reference(mut self, analytic: f64) -> Self {
        self.analytic = Some(analytic);
        self.signed_error = Some(self.mean - analytic);
        self
    }
}

/// Runs the extrapolated estimator described by `config`.
pub fn estimate<M: SdeModel>(config: &EstimatorConfig<M>) -> Result<EstimateReport, EstimatorError> {
    config.validate()?;
    let started = Instant::now();
    let weights = weights_for(&config.scale, config.order)?;
    let simulator = CoupledSimulator::new(&config.model, config.plan(), config.seed)?;
    let normals = simulator.normals_per_path() * config.samples;
    let uniforms = simulator.uniforms_per_path() * config.samples;
    let sampler = PathSampler { simulator, payoff: config.payoff };
    let run = run_extrapolation(&sampler, weights.weights(), config.samples, config.workers)?;
    Ok(EstimateReport {
        mean: run.combined.mean(),
        variance: run.combined.variance(),
        std_err: run.combined.std_err(),
        samples: config.samples,
        steps: config.steps,
        order: config.order,
        scale: config.scale.name().to_string(),
        coupling: config.coupling,
        scheme: config.scheme,
        seed: config.seed,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        normals,
        uniforms,
        weights: weights.weights().to_vec(),
        level_means: run.levels.iter().map(|s| s.mean()).collect(),
        analytic: None,
        signed_error: None,
    })
}

/// Closed-form continuous-monitoring price of `payoff` under `model`.
pub fn black_scholes_reference(model: &BlackScholes, payoff: &PayoffSpec) -> Option<f64> {
    let (s, v, r, t) = (model.spot(), model.vol, model.rate, payoff.horizon);
    match payoff.kind {
        PayoffKind::VanillaCall { strike } => bs_call(s, strike, v, r, t).ok(),
        PayoffKind::PartialLookbackCall { lambda } => bs_partial_lookback(s, lambda, v, r, t).ok(),
        PayoffKind::UpOutCall { strike, barrier } => bs_up_out(s, strike, barrier, v, r, t).ok(),
    }
}

/// [`estimate`] with the Black-Scholes closed form attached when one exists.
pub fn estimate_black_scholes(config: &EstimatorConfig<BlackScholes>) -> Result<EstimateReport, EstimatorError> {
    let report = estimate(config)?;
    Ok(match black_scholes_reference(&config.model, &config.payoff) {
        Some(v) => report.with_reference(v),
        None => report,
    })
}

/// One row of the coupling comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRatioRow {
    pub steps: usize,
    pub consistent: EstimateReport,
    pub independent: EstimateReport,
    /// Independent over consistent estimator variance.
    pub ratio: f64,
}

/// Estimator variance under consistent vs independent coupling for each `n`.
///
/// Both runs of a row use the configured seed.
pub fn variance_ratio_experiment<M: SdeModel + Clone>(
    config: &EstimatorConfig<M>,
    n_grid: &[usize],
) -> Result<Vec<VarianceRatioRow>, EstimatorError> {
    n_grid
        .iter()
        .map(|&steps| {
            let mut c = config.clone();
            c.steps = steps;
            c.coupling = Coupling::Consistent;
            let consistent = estimate(&c)?;
            c.coupling = Coupling::Independent;
            let independent = estimate(&c)?;
            let ratio = if consistent.variance > 0.0 {
                independent.variance / consistent.variance
            } else if independent.variance == 0.0 {
                1.0
            } else {
                f64::INFINITY
            };
            Ok(VarianceRatioRow { steps, consistent, independent, ratio })
        })
        .collect()
}

/// Pilot estimate of `|c̃_R|`, the leading uncancelled bias coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PilotEstimate {
    pub c_tilde: f64,
    pub std_err: f64,
    /// The standard error exceeds the estimate itself.
    pub noisy: bool,
}

impl PilotEstimate {
    /// The pilot value, or `fallback` when the pilot is too noisy to use.
    pub fn resolve(&self, fallback: f64) -> f64 {
        if self.noisy {
            fallback
        } else {
            self.c_tilde
        }
    }
}

/// Turns combined estimates at `n` and `2n` into `|c̃_R|`.
///
/// The combined bias is `c̃_R n^{-R}` to leading order, so
/// `|c̃_R| ≈ |E_n - E_{2n}| · n^R / (1 - 2^{-R})`. The two runs are assumed
/// independent.
pub fn pilot_from_pair(order: usize, steps: usize, coarse: (f64, f64), fine: (f64, f64)) -> PilotEstimate {
    let scale = (steps as f64).powi(order as i32) / (1.0 - 0.5f64.powi(order as i32));
    let c_tilde = (coarse.0 - fine.0).abs() * scale;
    let std_err = (coarse.1 * coarse.1 + fine.1 * fine.1).sqrt() * scale;
    PilotEstimate { c_tilde, std_err, noisy: std_err > c_tilde }
}

/// Pilot `|c̃_R|` from two small runs of `config` at `n` and `2n`.
///
/// The pilot runs use seeds derived from `config.seed`, independent of the
/// main run. This is a heuristic: the estimate carries its own standard error.
pub fn pilot_estimate_c<M: SdeModel + Clone>(
    config: &EstimatorConfig<M>,
    pilot_samples: u64,
) -> Result<PilotEstimate, EstimatorError> {
    if pilot_samples < 1000 {
        return Err(EstimatorError::Config("pilot needs at least 1000 samples".into()));
    }
    let mut c = config.clone();
    c.samples = pilot_samples;
    c.seed = derive_seed(config.seed, "pilot/coarse");
    let coarse = estimate(&c)?;
    c.steps = 2 * config.steps;
    c.seed = derive_seed(config.seed, "pilot/fine");
    let fine = estimate(&c)?;
    Ok(pilot_from_pair(config.order, config.steps, (coarse.mean, coarse.std_err), (fine.mean, fine.std_err)))
}
