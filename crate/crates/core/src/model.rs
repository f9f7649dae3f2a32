//! SDE models `dX_t = b(t, X_t) dt + σ(t, X_t) dW_t`.

/// A `d`-dimensional diffusion driven by a `q`-dimensional Brownian motion.
///
/// Evaluation must be pure: the engine calls the same model from many
/// workers at once.
pub trait SdeModel: Sync {
    /// State dimension `d`.
    fn dim(&self) -> usize;

    /// Noise dimension `q`.
    fn noise_dim(&self) -> usize;

    fn initial_state(&self) -> &[f64];

    /// Writes `b(t, x)` into `out` (length `d`).
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// Writes `σ(t, x)` row-major into `out` (length `d·q`).
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);
}

/// Risk-neutral Black-Scholes dynamics `dX = X (r dt + σ dW)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlackScholes {
    spot: [f64; 1],
    pub rate: f64,
    pub vol: f64,
}

impl BlackScholes {
    pub fn new(spot: f64, rate: f64, vol: f64) -> Self {
        BlackScholes { spot: [spot], rate, vol }
    }

    pub fn spot(&self) -> f64 {
        self.spot[0]
    }
}

impl SdeModel for BlackScholes {
    fn dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn initial_state(&self) -> &[f64] {
        &self.spot
    }

    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.rate * x[0];
    }

    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.vol * x[0];
    }
}

impl<M: SdeModel + ?Sized> SdeModel for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn noise_dim(&self) -> usize {
        (**self).noise_dim()
    }
    fn initial_state(&self) -> &[f64] {
        (**self).initial_state()
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (**self).drift(t, x, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (**self).diffusion(t, x, out)
    }
}
