//! Coupled Euler schemes and Brownian-bridge extrema.
//!
//! A [`CoupledSimulator`] advances `R` Euler schemes with steps `T/(rn)` over
//! `n` macro steps. Each macro step draws one [`IncrementBlock`]; level `r`
//! consumes its `r` increments in order.
//!
//! With bridging enabled, every fine interval `[t_k, t_{k+1}]` of every level
//! also gets a conditional maximum and minimum of the continuous Euler
//! scheme, sampled by inverting the Brownian-bridge extremum law with the
//! diffusion frozen at the left endpoint. Bridge uniforms are drawn from a
//! per-level substream, so extrema are independent across levels while the
//! skeletons stay coupled.
//!
//! Random stream layout for path `p` under seed `s`:
//!
//! - increments: `RandomSource::new(s, p)`;
//! - bridge uniforms of level `r`: `RandomSource::labeled(s, "bridge/r", p)`,
//!   consumed per fine interval, per component, maximum first then minimum.

use serde::Serialize;
use thiserror::Error;

use crate::model::SdeModel;
use crate::noise::{
    derive_seed, sample_independent_block_into, IncrementBlock, IncrementSchedule, NoiseError,
    RandomSource, ScheduleKind,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemeError {
    #[error("numerical blow-up at t = {t}: state {x:?}")]
    BlowUp { t: f64, x: Vec<f64> },
    #[error("bridge uniform must lie in (0, 1], got {0}")]
    InvalidUniform(f64),
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("macro step count and order must be at least 1")]
    EmptyGrid,
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// All levels share one Brownian path.
    Consistent,
    /// Each level draws its own noise.
    Independent,
}

impl Coupling {
    pub fn name(&self) -> &'static str {
        match self {
            Coupling::Consistent => "consistent",
            Coupling::Independent => "independent",
        }
    }
}

/// Scratch space for one Euler step.
#[derive(Debug, Clone)]
pub struct StepBuffers {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
}

impl StepBuffers {
    pub fn new(dim: usize, noise_dim: usize) -> Self {
        StepBuffers { drift: vec![0.0; dim], diffusion: vec![0.0; dim * noise_dim] }
    }

    /// `σ(t, x)` evaluated by the most recent step, row-major.
    pub fn diffusion(&self) -> &[f64] {
        &self.diffusion
    }
}

/// `x + b(t, x) dt + σ(t, x) dW`, in place into `out`.
pub fn euler_step_into<M: SdeModel + ?Sized>(
    model: &M,
    t: f64,
    x: &[f64],
    dt: f64,
    dw: &[f64],
    buf: &mut StepBuffers,
    out: &mut [f64],
) -> Result<(), SchemeError> {
    let q = model.noise_dim();
    model.drift(t, x, &mut buf.drift);
    model.diffusion(t, x, &mut buf.diffusion);
    for i in 0..x.len() {
        let row = &buf.diffusion[i * q..(i + 1) * q];
        let noise: f64 = row.iter().zip(dw).map(|(s, w)| s * w).sum();
        out[i] = x[i] + buf.drift[i] * dt + noise;
    }
    if out.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SchemeError::BlowUp { t, x: x.to_vec() })
    }
}

/// One Euler step with raw Brownian increment `dw` (`= √dt · U`).
pub fn euler_step<M: SdeModel + ?Sized>(
    model: &M,
    t: f64,
    x: &[f64],
    dt: f64,
    dw: &[f64],
) -> Result<Vec<f64>, SchemeError> {
    if !(dt > 0.0) {
        return Err(SchemeError::InvalidStep(dt));
    }
    let mut buf = StepBuffers::new(model.dim(), model.noise_dim());
    let mut out = vec![0.0; x.len()];
    euler_step_into(model, t, x, dt, dw, &mut buf, &mut out)?;
    Ok(out)
}

fn bridge_radius(x: f64, y: f64, sigma_left: f64, dt: f64, u: f64) -> f64 {
    ((y - x) * (y - x) - 2.0 * dt * sigma_left * sigma_left * u.ln()).sqrt()
}

fn check_bridge_args(dt: f64, u: f64) -> Result<(), SchemeError> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(SchemeError::InvalidUniform(u));
    }
    if !(dt > 0.0) {
        return Err(SchemeError::InvalidStep(dt));
    }
    Ok(())
}

/// Conditional maximum of a Brownian bridge from `x` to `y` over a step `dt`
/// with frozen volatility `sigma_left`: `½(x + y + √((y-x)² - 2 dt σ² ln u))`.
pub fn bridge_max_sample(x: f64, y: f64, sigma_left: f64, dt: f64, u: f64) -> Result<f64, SchemeError> {
    check_bridge_args(dt, u)?;
    Ok(0.5 * (x + y + bridge_radius(x, y, sigma_left, dt, u)))
}

/// Conditional minimum: `½(x + y - √((y-x)² - 2 dt σ² ln u))`.
pub fn bridge_min_sample(x: f64, y: f64, sigma_left: f64, dt: f64, u: f64) -> Result<f64, SchemeError> {
    check_bridge_args(dt, u)?;
    Ok(0.5 * (x + y - bridge_radius(x, y, sigma_left, dt, u)))
}

/// Running extrema of one level, per state component.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrema {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Extrema {
    fn reset(&mut self, x0: &[f64]) {
        self.min.clear();
        self.min.extend_from_slice(x0);
        self.max.clear();
        self.max.extend_from_slice(x0);
    }
}

/// `R` Euler paths over `[0, T]`, level `r` on the grid `kT/(rn)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPathBundle {
    order: usize,
    steps: usize,
    horizon: f64,
    dim: usize,
    coupling: Coupling,
    // level r-1: (rn+1)·d states
    paths: Vec<Vec<f64>>,
    bridged: Option<Vec<Extrema>>,
}

impl CoupledPathBundle {
    pub fn new(order: usize, steps: usize, horizon: f64, dim: usize, coupling: Coupling, bridged: bool) -> Self {
        CoupledPathBundle {
            order,
            steps,
            horizon,
            dim,
            coupling,
            paths: (1..=order).map(|r| vec![0.0; (r * steps + 1) * dim]).collect(),
            bridged: bridged.then(|| {
                (0..order).map(|_| Extrema { min: vec![0.0; dim], max: vec![0.0; dim] }).collect()
            }),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    /// Number of states on level `r`: `rn + 1`.
    pub fn state_count(&self, r: usize) -> usize {
        r * self.steps + 1
    }

    /// Time of state `k` on level `r`.
    pub fn time(&self, r: usize, k: usize) -> f64 {
        self.horizon * k as f64 / (r * self.steps) as f64
    }

    pub fn state(&self, r: usize, k: usize) -> &[f64] {
        &self.paths[r - 1][k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self, r: usize) -> &[f64] {
        self.state(r, r * self.steps)
    }

    /// Minimum and maximum of component `c` over the grid states of level `r`.
    pub fn grid_extrema(&self, r: usize, c: usize) -> (f64, f64) {
        self.paths[r - 1]
            .iter()
            .skip(c)
            .step_by(self.dim)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Bridged extrema of level `r`, when the bundle was simulated with bridging.
    pub fn bridged_extrema(&self, r: usize) -> Option<&Extrema> {
        self.bridged.as_ref().map(|e| &e[r - 1])
    }
}

/// Static description of a coupled simulation.
#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub order: usize,
    pub steps: usize,
    pub horizon: f64,
    pub coupling: Coupling,
    pub schedule: ScheduleKind,
    pub bridged: bool,
}

/// Per-worker mutable state for [`CoupledSimulator::simulate`].
#[derive(Debug, Clone)]
pub struct SimulationBuffers {
    pub bundle: CoupledPathBundle,
    block: IncrementBlock,
    step: StepBuffers,
    dw: Vec<f64>,
}

/// Runs coupled bundles for one model and plan. Shareable across workers.
#[derive(Debug)]
pub struct CoupledSimulator<'m, M: SdeModel + ?Sized> {
    model: &'m M,
    plan: SimulationPlan,
    schedule: IncrementSchedule,
    bridge_seeds: Vec<u64>,
    seed: u64,
}

impl<'m, M: SdeModel + ?Sized> CoupledSimulator<'m, M> {
    pub fn new(model: &'m M, plan: SimulationPlan, seed: u64) -> Result<Self, SchemeError> {
        if plan.order == 0 || plan.steps == 0 {
            return Err(SchemeError::EmptyGrid);
        }
        if !(plan.horizon > 0.0) {
            return Err(SchemeError::InvalidStep(plan.horizon));
        }
        let schedule = IncrementSchedule::new(plan.order, plan.schedule)?;
        let bridge_seeds = (1..=plan.order).map(|r| derive_seed(seed, &format!("bridge/{r}"))).collect();
        Ok(CoupledSimulator { model, plan, schedule, bridge_seeds, seed })
    }

    pub fn plan(&self) -> &SimulationPlan {
        &self.plan
    }

    pub fn schedule(&self) -> &IncrementSchedule {
        &self.schedule
    }

    pub fn buffers(&self) -> SimulationBuffers {
        let (d, q) = (self.model.dim(), self.model.noise_dim());
        SimulationBuffers {
            bundle: CoupledPathBundle::new(
                self.plan.order,
                self.plan.steps,
                self.plan.horizon,
                d,
                self.plan.coupling,
                self.plan.bridged,
            ),
            block: IncrementBlock::new(self.plan.order, q),
            step: StepBuffers::new(d, q),
            dw: vec![0.0; q],
        }
    }

    /// Normal variates consumed per path.
    pub fn normals_per_path(&self) -> u64 {
        let q = self.model.noise_dim() as u64;
        let per_step = match self.plan.coupling {
            Coupling::Consistent => self.schedule.atom_count() as u64,
            Coupling::Independent => (self.plan.order * (self.plan.order + 1) / 2) as u64,
        };
        per_step * q * self.plan.steps as u64
    }

    /// Bridge uniforms consumed per path.
    pub fn uniforms_per_path(&self) -> u64 {
        if self.plan.bridged {
            (2 * self.model.dim() * self.plan.steps * self.plan.order * (self.plan.order + 1) / 2) as u64
        } else {
            0
        }
    }

    /// Simulates path `path` into `buf.bundle`.
    pub fn simulate(&self, path: u64, buf: &mut SimulationBuffers) -> Result<(), SchemeError> {
        let plan = &self.plan;
        let d = self.model.dim();
        let x0 = self.model.initial_state();
        let mut noise = RandomSource::new(self.seed, path);
        let mut bridges: Vec<RandomSource> = if plan.bridged {
            self.bridge_seeds.iter().map(|&s| RandomSource::new(s, path)).collect()
        } else {
            Vec::new()
        };

        let SimulationBuffers { bundle, block, step, dw } = buf;
        for (r, p) in bundle.paths.iter_mut().enumerate() {
            p[..d].copy_from_slice(x0);
            if let Some(ext) = bundle.bridged.as_mut() {
                ext[r].reset(x0);
            }
        }

        for j in 0..plan.steps {
            match plan.coupling {
                Coupling::Consistent => self.schedule.sample_block_into(&mut noise, block),
                Coupling::Independent => sample_independent_block_into(&mut noise, block),
            }
            for r in 1..=plan.order {
                let dt = plan.horizon / (r * plan.steps) as f64;
                let sqrt_dt = dt.sqrt();
                let path_r = &mut bundle.paths[r - 1];
                for k in 1..=r {
                    let idx = j * r + k - 1;
                    let t = idx as f64 * dt;
                    for (w, u) in dw.iter_mut().zip(block.increment(r, k)) {
                        *w = sqrt_dt * u;
                    }
                    let (left, right) = path_r.split_at_mut((idx + 1) * d);
                    let x = &left[idx * d..];
                    let y = &mut right[..d];
                    euler_step_into(self.model, t, x, dt, dw, step, y)?;
                    if let Some(ext) = bundle.bridged.as_mut() {
                        let q = self.model.noise_dim();
                        let e = &mut ext[r - 1];
                        let rng = &mut bridges[r - 1];
                        for c in 0..d {
                            let row = &step.diffusion[c * q..(c + 1) * q];
                            let sigma = row.iter().map(|s| s * s).sum::<f64>().sqrt();
                            let hi = 0.5 * (x[c] + y[c] + bridge_radius(x[c], y[c], sigma, dt, rng.open_unit()));
                            let lo = 0.5 * (x[c] + y[c] - bridge_radius(x[c], y[c], sigma, dt, rng.open_unit()));
                            e.max[c] = e.max[c].max(hi);
                            e.min[c] = e.min[c].min(lo);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Convenience wrapper: simulate one bundle with fresh buffers.
pub fn simulate_coupled<M: SdeModel + ?Sized>(
    model: &M,
    plan: SimulationPlan,
    seed: u64,
    path: u64,
) -> Result<CoupledPathBundle, SchemeError> {
    let sim = CoupledSimulator::new(model, plan, seed)?;
    let mut buf = sim.buffers();
    sim.simulate(path, &mut buf)?;
    Ok(buf.bundle)
}
