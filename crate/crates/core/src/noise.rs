//! Consistent Brownian increments for all extrapolation levels.
//!
//! Within one macro step of length `T/n`, level `r` needs the `r` increments
//! over `[(k-1)/r, k/r]` (in units of the macro step). Every level must see
//! the same Brownian path. The union of all level grids is the Farey set
//!
//! ```text
//! S_R = { ℓ/r : 1 ≤ ℓ ≤ r ≤ R, gcd(ℓ, r) = 1 }
//! ```
//!
//! so one draws a single standard normal per *atom*, the subinterval between
//! two consecutive points of `S_R`, scales it by the square root of the atom
//! length, and sums atoms into level increments. The lazy alternative uses
//! `lcm(1..R)` equal atoms, which is simpler but wastes variates.
//!
//! Increments are stored normalized: `U^(r)_k = √(rn/T) · ΔW`, so each is
//! exactly `N(0, I_q)`.

use std::ops::Range;

use num::integer::{gcd, lcm};
use num::rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::weights::MAX_ORDER;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NoiseError {
    #[error("order {0} outside the supported range 1..=20")]
    OrderOutOfRange(usize),
}

/// Deterministic, substreamed randomness.
///
/// A `(seed, stream)` pair keys a ChaCha8 generator: the seed fills the key and
/// the stream selects one of its 2^64 independent streams. Normals come from
/// the ziggurat sampler of `rand_distr::StandardNormal`, so a pair reproduces
/// the same variates bit-for-bit for a fixed lockfile.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomSource { seed, stream, rng }
    }

    /// Source keyed by `seed` mixed with a text label.
    pub fn labeled(seed: u64, label: &str, stream: u64) -> Self {
        Self::new(derive_seed(seed, label), stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.rng.sample(StandardNormal);
        }
    }

    /// Uniform on `(0, 1]`, safe to pass to `ln`.
    pub fn open_unit(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }
}

/// Mixes a label into a seed (FNV-1a over the label, then a splitmix64 finalizer).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `Σ_{r=1..R} φ(r)`, the number of points in the Farey set `S_R`.
pub fn totient_cardinality(order: usize) -> usize {
    (1..=order).map(|r| (1..=r).filter(|&l| gcd(l, r) == 1).count()).sum()
}

/// `lcm(1, ..., R)`, the number of atoms of the lazy schedule.
pub fn lcm_atoms(order: usize) -> u64 {
    (1..=order as u64).fold(1, lcm)
}

/// Length of the overlap of `[(k-1)/r, k/r]` and `[(j-1)/s, j/s]`.
pub fn interval_overlap(r: usize, k: usize, s: usize, j: usize) -> Ratio<u64> {
    let lo = Ratio::new((k - 1) as u64, r as u64).max(Ratio::new((j - 1) as u64, s as u64));
    let hi = Ratio::new(k as u64, r as u64).min(Ratio::new(j as u64, s as u64));
    if hi > lo {
        hi - lo
    } else {
        Ratio::from_integer(0)
    }
}

/// Covariance of `U^(r)_k` and `U^(s)_j`: `√(rs) · |overlap|`.
pub fn overlap_covariance(r: usize, k: usize, s: usize, j: usize) -> f64 {
    let o = interval_overlap(r, k, s, j);
    ((r * s) as f64).sqrt() * (*o.numer() as f64 / *o.denom() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `lcm(1..R)` equal atoms per macro step.
    Lazy,
    /// One atom per gap of the Farey set.
    Sparing,
}

#[derive(Debug, Clone)]
enum AtomLayout {
    Uniform { atoms: usize },
    Farey { breakpoints: Vec<Ratio<u64>> },
}

/// Per-macro-step plan mapping atoms onto the increments of every level.
#[derive(Debug, Clone)]
pub struct IncrementSchedule {
    order: usize,
    kind: ScheduleKind,
    layout: AtomLayout,
    // level r (index r-1) has r+1 atom boundaries
    level_bounds: Vec<Vec<usize>>,
    // √(length) of each atom; a single entry for the uniform layout
    atom_scale: Vec<f64>,
}

impl IncrementSchedule {
    pub fn new(order: usize, kind: ScheduleKind) -> Result<Self, NoiseError> {
        if order == 0 || order > MAX_ORDER {
            return Err(NoiseError::OrderOutOfRange(order));
        }
        let (layout, level_bounds, atom_scale) = match kind {
            ScheduleKind::Lazy => {
                let atoms = lcm_atoms(order) as usize;
                let bounds = (1..=order)
                    .map(|r| {
                        let m = atoms / r;
                        (0..=r).map(|k| k * m).collect()
                    })
                    .collect();
                (AtomLayout::Uniform { atoms }, bounds, vec![(1.0 / atoms as f64).sqrt()])
            }
            ScheduleKind::Sparing => {
                let mut breakpoints: Vec<Ratio<u64>> = (1..=order as u64)
                    .flat_map(|r| (1..=r).filter(move |&l| gcd(l, r) == 1).map(move |l| Ratio::new(l, r)))
                    .collect();
                breakpoints.sort();
                let bounds = (1..=order as u64)
                    .map(|r| {
                        (0..=r)
                            .map(|k| {
                                if k == 0 {
                                    0
                                } else {
                                    // every k/r is a Farey point by construction
                                    breakpoints.binary_search(&Ratio::new(k, r)).map(|i| i + 1).unwrap_or(0)
                                }
                            })
                            .collect()
                    })
                    .collect();
                let mut prev = Ratio::from_integer(0);
                let scale = breakpoints
                    .iter()
                    .map(|&b| {
                        let len = b - prev;
                        prev = b;
                        (*len.numer() as f64 / *len.denom() as f64).sqrt()
                    })
                    .collect();
                (AtomLayout::Farey { breakpoints }, bounds, scale)
            }
        };
        Ok(IncrementSchedule { order, kind, layout, level_bounds, atom_scale })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Number of atoms, i.e. normal vectors consumed per macro step.
    pub fn atom_count(&self) -> usize {
        match &self.layout {
            AtomLayout::Uniform { atoms } => *atoms,
            AtomLayout::Farey { breakpoints } => breakpoints.len(),
        }
    }

    /// Right endpoints of the atoms, in units of the macro step.
    ///
    /// Materializes `lcm(1..R)` values for the lazy layout.
    pub fn breakpoints(&self) -> Vec<Ratio<u64>> {
        match &self.layout {
            AtomLayout::Uniform { atoms } => {
                (1..=*atoms as u64).map(|i| Ratio::new(i, *atoms as u64)).collect()
            }
            AtomLayout::Farey { breakpoints } => breakpoints.clone(),
        }
    }

    pub fn atom_length(&self, i: usize) -> Ratio<u64> {
        match &self.layout {
            AtomLayout::Uniform { atoms } => Ratio::new(1, *atoms as u64),
            AtomLayout::Farey { breakpoints } => {
                let prev = if i == 0 { Ratio::from_integer(0) } else { breakpoints[i - 1] };
                breakpoints[i] - prev
            }
        }
    }

    /// Sum of all atom lengths, exactly.
    pub fn total_length(&self) -> Ratio<u64> {
        (0..self.atom_count()).fold(Ratio::from_integer(0), |acc, i| acc + self.atom_length(i))
    }

    /// Atoms spanned by increment `k` (1-based) of level `r`.
    pub fn level_span(&self, r: usize, k: usize) -> Range<usize> {
        let b = &self.level_bounds[r - 1];
        b[k - 1]..b[k]
    }

    fn scale_of(&self, atom: usize) -> f64 {
        match self.layout {
            AtomLayout::Uniform { .. } => self.atom_scale[0],
            AtomLayout::Farey { .. } => self.atom_scale[atom],
        }
    }

    /// Draws one consistent block.
    pub fn sample_block(&self, rng: &mut RandomSource, dim: usize) -> IncrementBlock {
        let mut block = IncrementBlock::new(self.order, dim);
        self.sample_block_into(rng, &mut block);
        block
    }

    /// Draws one consistent block into an existing buffer of matching shape.
    ///
    /// Atom `i`, component `c` is the `(i·q + c)`-th normal drawn.
    pub fn sample_block_into(&self, rng: &mut RandomSource, block: &mut IncrementBlock) {
        debug_assert_eq!(block.order, self.order);
        let q = block.dim;
        let atoms = self.atom_count();
        block.atoms.resize(atoms * q, 0.0);
        rng.fill_standard_normal(&mut block.atoms);
        for r in 1..=self.order {
            let level_norm = (r as f64).sqrt();
            for k in 1..=r {
                let span = self.level_span(r, k);
                let off = block.offset(r, k);
                for c in 0..q {
                    let mut acc = 0.0;
                    for i in span.clone() {
                        acc += self.scale_of(i) * block.atoms[i * q + c];
                    }
                    block.increments[off + c] = acc * level_norm;
                }
            }
        }
        block.coupled = true;
    }
}

/// Draws a block whose levels are mutually independent (no coupling).
///
/// Level `r` consumes `r·q` fresh normals, in level order.
pub fn sample_independent_block(order: usize, rng: &mut RandomSource, dim: usize) -> IncrementBlock {
    let mut block = IncrementBlock::new(order, dim);
    sample_independent_block_into(rng, &mut block);
    block
}

pub fn sample_independent_block_into(rng: &mut RandomSource, block: &mut IncrementBlock) {
    block.atoms.clear();
    rng.fill_standard_normal(&mut block.increments);
    block.coupled = false;
}

/// Normalized increments `U^(r)_k` for every level of one macro step.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementBlock {
    order: usize,
    dim: usize,
    coupled: bool,
    // level-major: level r starts at q·r(r-1)/2
    increments: Vec<f64>,
    atoms: Vec<f64>,
}

impl IncrementBlock {
    pub fn new(order: usize, dim: usize) -> Self {
        IncrementBlock {
            order,
            dim,
            coupled: false,
            increments: vec![0.0; dim * order * (order + 1) / 2],
            atoms: Vec::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether the block came from a consistent schedule.
    pub fn is_coupled(&self) -> bool {
        self.coupled
    }

    fn offset(&self, r: usize, k: usize) -> usize {
        self.dim * (r * (r - 1) / 2 + (k - 1))
    }

    /// `U^(r)_k` (1-based `r` and `k`).
    pub fn increment(&self, r: usize, k: usize) -> &[f64] {
        let off = self.offset(r, k);
        &self.increments[off..off + self.dim]
    }

    /// All `r` increments of level `r`, concatenated.
    pub fn level(&self, r: usize) -> &[f64] {
        let off = self.offset(r, 1);
        &self.increments[off..off + r * self.dim]
    }

    /// The atom normals of a consistent block (empty for independent blocks).
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// `Σ_k U^(r)_k / √r`: the macro increment seen by level `r`, in units of `√(T/n)`.
    pub fn macro_increment(&self, r: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let norm = 1.0 / (r as f64).sqrt();
        for k in 1..=r {
            for (o, u) in out.iter_mut().zip(self.increment(r, k)) {
                *o += u * norm;
            }
        }
        out
    }

    /// Largest disagreement between the macro increments of any two levels.
    pub fn consistency_gap(&self) -> f64 {
        let base = self.macro_increment(1);
        (2..=self.order)
            .flat_map(|r| {
                let m = self.macro_increment(r);
                base.iter().zip(m).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }
}

/// Where audited blocks come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSource {
    Consistent(ScheduleKind),
    Independent,
}

/// Empirical cross-level covariance of `U^(r)_k` (first noise component)
/// against the overlap oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAudit {
    /// `(r, k)` of each row/column, level-major.
    pub labels: Vec<(usize, usize)>,
    /// Row-major empirical covariances.
    pub empirical: Vec<f64>,
    /// Row-major oracle covariances (identity for independent blocks' diagonal
    /// blocks; the overlap formula otherwise).
    pub oracle: Vec<f64>,
    pub samples: u64,
    pub max_consistency_gap: f64,
}

impl CovarianceAudit {
    /// Standard error of an empirical covariance between two unit-variance
    /// Gaussians with correlation `rho`: `√((1 + ρ²)/N)`.
    pub fn std_err(&self, i: usize) -> f64 {
        let rho = self.oracle[i];
        ((1.0 + rho * rho) / self.samples as f64).sqrt()
    }

    /// Largest `|empirical - oracle| / std_err` over all entries.
    pub fn max_z(&self) -> f64 {
        (0..self.empirical.len())
            .map(|i| (self.empirical[i] - self.oracle[i]).abs() / self.std_err(i))
            .fold(0.0, f64::max)
    }
}

/// Oracle covariance between increments `a = (r, k)` and `b = (s, j)`.
pub fn oracle_covariance(source: BlockSource, a: (usize, usize), b: (usize, usize)) -> f64 {
    match source {
        BlockSource::Consistent(_) => overlap_covariance(a.0, a.1, b.0, b.1),
        BlockSource::Independent => {
            if a == b {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Samples `samples` blocks from stream `(seed, 0)` and compares their
/// covariance matrix with the oracle.
pub fn covariance_audit(order: usize, source: BlockSource, samples: u64, seed: u64) -> Result<CovarianceAudit, NoiseError> {
    let schedule = match source {
        BlockSource::Consistent(kind) => Some(IncrementSchedule::new(order, kind)?),
        BlockSource::Independent if order == 0 || order > MAX_ORDER => return Err(NoiseError::OrderOutOfRange(order)),
        BlockSource::Independent => None,
    };
    let labels: Vec<(usize, usize)> = (1..=order).flat_map(|r| (1..=r).map(move |k| (r, k))).collect();
    let m = labels.len();
    let mut rng = RandomSource::new(seed, 0);
    let mut block = IncrementBlock::new(order, 1);
    let mut sum = vec![0.0; m];
    let mut cross = vec![0.0; m * m];
    let mut gap: f64 = 0.0;
    for _ in 0..samples {
        match &schedule {
            Some(s) => {
                s.sample_block_into(&mut rng, &mut block);
                gap = gap.max(block.consistency_gap());
            }
            None => sample_independent_block_into(&mut rng, &mut block),
        }
        let u = &block.increments;
        for i in 0..m {
            sum[i] += u[i];
            for j in 0..m {
                cross[i * m + j] += u[i] * u[j];
            }
        }
    }
    let n = samples as f64;
    let mut empirical = vec![0.0; m * m];
    let mut oracle = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            empirical[i * m + j] = (cross[i * m + j] - sum[i] * sum[j] / n) / (n - 1.0);
            oracle[i * m + j] = oracle_covariance(source, labels[i], labels[j]);
        }
    }
    Ok(CovarianceAudit { labels, empirical, oracle, samples, max_consistency_gap: gap })
}
