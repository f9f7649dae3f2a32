//! Extrapolation weights.
//!
//! Level `r` of an `R`-level extrapolation runs the Euler scheme with step
//! `T/(rn)`. If its weak error expands as `Σ_k c_k (rn)^{-γ_k}`, the weights
//! `α_1..α_R` must satisfy
//!
//! ```text
//! Σ_r α_r             = 1
//! Σ_r α_r r^{-γ_ℓ}    = 0      ℓ = 1..R-1
//! ```
//!
//! For the integer scale (`γ_ℓ = ℓ`) and the half-order scale (`γ_ℓ = ℓ/2`)
//! this is a Vandermonde system in the nodes `x_r = 1/r` and `x_r = 1/√r`
//! respectively. Its solution is the vector of Lagrange basis polynomials
//! evaluated at zero,
//!
//! ```text
//! α_r = Π_{j≠r} (0 - x_j) / (x_r - x_j)
//! ```
//!
//! which needs no matrix inversion and is exact over the rationals.

use std::ops::Neg;

use num::{BigInt, BigRational, Num, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Largest order accepted by the closed-form weight routines.
pub const MAX_ORDER: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightsError {
    #[error("extrapolation order must be at least 1")]
    ZeroOrder,
    #[error("order {order} outside the supported range 1..={max}")]
    OrderOutOfRange { order: usize, max: usize },
    #[error("expected {expected} nodes, got {got}")]
    NodeCount { expected: usize, got: usize },
    #[error("nodes must be finite and positive")]
    InvalidNode,
    #[error("degenerate Vandermonde: nodes {0} and {1} coincide")]
    Degenerate(usize, usize),
    #[error("custom scale needs {expected} strictly increasing positive exponents")]
    InvalidExponents { expected: usize },
    #[error("singular custom-scale system")]
    Singular,
}

/// Shape of the weak-error expansion the weights are built to cancel.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorScale {
    /// Exponents `1, 2, ..., R-1`.
    Integer,
    /// Exponents `1/2, 1, ..., (R-1)/2`.
    HalfOrder,
    /// Explicit exponents `γ_1 < ... < γ_{R-1}`, all positive.
    Custom(Vec<f64>),
}

impl ErrorScale {
    /// Error exponents `γ_1..γ_{R-1}` for an `order`-level extrapolation.
    pub fn exponents(&self, order: usize) -> Vec<f64> {
        match self {
            ErrorScale::Integer => (1..order).map(|l| l as f64).collect(),
            ErrorScale::HalfOrder => (1..order).map(|l| l as f64 / 2.0).collect(),
            ErrorScale::Custom(g) => g.clone(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ErrorScale::Integer => "integer",
            ErrorScale::HalfOrder => "half",
            ErrorScale::Custom(_) => "custom",
        }
    }
}

/// Weights `α_1..α_R` together with the per-level nodes they were solved on.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    order: usize,
    scale: Option<ErrorScale>,
    weights: Vec<f64>,
    nodes: Vec<f64>,
}

impl WeightVector {
    pub fn order(&self) -> usize {
        self.order
    }

    /// The error scale, or `None` for weights solved on caller-supplied nodes.
    pub fn scale(&self) -> Option<&ErrorScale> {
        self.scale.as_ref()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Largest violation of the consistency and cancellation equations.
    ///
    /// For a custom scale the equations read `Σ α_r r^{-γ_ℓ}`; otherwise they
    /// are the monomial moments `Σ α_r x_r^ℓ` of the nodes.
    pub fn max_residual(&self) -> f64 {
        let (bases, exponents): (Vec<f64>, Vec<f64>) = match &self.scale {
            Some(ErrorScale::Custom(g)) => ((1..=self.order).map(|r| 1.0 / r as f64).collect(), g.clone()),
            _ => (self.nodes.clone(), (1..self.order).map(|l| l as f64).collect()),
        };
        let sum: f64 = self.weights.iter().sum();
        exponents.iter().fold((sum - 1.0).abs(), |worst, &e| {
            let m: f64 = self.weights.iter().zip(&bases).map(|(a, x)| a * x.powf(e)).sum();
            worst.max(m.abs())
        })
    }
}

/// Lagrange basis at zero: the unique `α` with `Σ α_r x_r^ℓ = δ_{ℓ0}` for `ℓ < R`.
///
/// Works in any field; with [`BigRational`] the result is exact.
pub fn lagrange_at_zero<T>(nodes: &[T]) -> Result<Vec<T>, WeightsError>
where
    T: Clone + Num + Neg<Output = T>,
{
    if nodes.is_empty() {
        return Err(WeightsError::ZeroOrder);
    }
    let mut out = Vec::with_capacity(nodes.len());
    for (r, xr) in nodes.iter().enumerate() {
        let mut num = T::one();
        let mut den = T::one();
        for (j, xj) in nodes.iter().enumerate() {
            if j == r {
                continue;
            }
            let diff = xr.clone() - xj.clone();
            if diff.is_zero() {
                return Err(WeightsError::Degenerate(r.min(j), r.max(j)));
            }
            num = num * (-xj.clone());
            den = den * diff;
        }
        out.push(num / den);
    }
    Ok(out)
}

/// Solves the Vandermonde system on arbitrary distinct positive nodes.
pub fn solve_weights(order: usize, nodes: &[f64]) -> Result<WeightVector, WeightsError> {
    if order == 0 {
        return Err(WeightsError::ZeroOrder);
    }
    if nodes.len() != order {
        return Err(WeightsError::NodeCount { expected: order, got: nodes.len() });
    }
    if nodes.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(WeightsError::InvalidNode);
    }
    let weights = lagrange_at_zero(nodes)?;
    Ok(WeightVector { order, scale: None, weights, nodes: nodes.to_vec() })
}

/// Exact counterpart of [`solve_weights`].
pub fn solve_weights_exact(nodes: &[BigRational]) -> Result<Vec<BigRational>, WeightsError> {
    if nodes.iter().any(|x| !x.is_positive()) {
        return Err(WeightsError::InvalidNode);
    }
    lagrange_at_zero(nodes)
}

fn check_order(order: usize) -> Result<(), WeightsError> {
    match order {
        0 => Err(WeightsError::ZeroOrder),
        r if r > MAX_ORDER => Err(WeightsError::OrderOutOfRange { order: r, max: MAX_ORDER }),
        _ => Ok(()),
    }
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Closed form `α_r = (-1)^{R-r} r^R / (r! (R-r)!)`, exactly.
pub fn standard_weights_exact(order: usize) -> Result<Vec<BigRational>, WeightsError> {
    check_order(order)?;
    Ok((1..=order)
        .map(|r| {
            let num = num::pow(BigInt::from(r), order);
            let den = factorial(r) * factorial(order - r);
            let a = BigRational::new(num, den);
            if (order - r) % 2 == 1 {
                -a
            } else {
                a
            }
        })
        .collect())
}

/// Integer-scale weights for nodes `1/r`.
pub fn standard_weights(order: usize) -> Result<WeightVector, WeightsError> {
    let exact = standard_weights_exact(order)?;
    Ok(WeightVector {
        order,
        scale: Some(ErrorScale::Integer),
        weights: exact.iter().map(rational_to_f64).collect(),
        nodes: (1..=order).map(|r| 1.0 / r as f64).collect(),
    })
}

/// Half-order weights for nodes `1/√r`:
/// `α_r = ((-1)^{R-r}/2) · r^R/(r!(R-r)!) · Π_{k=1..R} (1 + √(k/r))`.
pub fn half_order_weights(order: usize) -> Result<WeightVector, WeightsError> {
    check_order(order)?;
    let base = standard_weights_exact(order)?;
    let weights = base
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let r = (i + 1) as f64;
            let prod: f64 = (1..=order).map(|k| 1.0 + (k as f64 / r).sqrt()).product();
            0.5 * rational_to_f64(a) * prod
        })
        .collect();
    Ok(WeightVector {
        order,
        scale: Some(ErrorScale::HalfOrder),
        weights,
        nodes: (1..=order).map(|r| 1.0 / (r as f64).sqrt()).collect(),
    })
}

/// Weights for an explicit exponent list.
///
/// Non-monomial exponents do not reduce to a Vandermonde system, so this
/// path uses Gaussian elimination with partial pivoting.
pub fn custom_weights(order: usize, exponents: &[f64]) -> Result<WeightVector, WeightsError> {
    check_order(order)?;
    let increasing = exponents.windows(2).all(|w| w[0] < w[1]);
    if exponents.len() != order - 1
        || !increasing
        || exponents.iter().any(|g| !g.is_finite() || *g <= 0.0)
    {
        return Err(WeightsError::InvalidExponents { expected: order - 1 });
    }
    // Row 0: Σ α_r = 1; row ℓ: Σ α_r r^{-γ_ℓ} = 0.
    let mut a = vec![vec![0.0; order + 1]; order];
    for r in 1..=order {
        a[0][r - 1] = 1.0;
        for (l, g) in exponents.iter().enumerate() {
            a[l + 1][r - 1] = (r as f64).powf(-g);
        }
    }
    a[0][order] = 1.0;
    let weights = gauss_solve(a)?;
    Ok(WeightVector {
        order,
        scale: Some(ErrorScale::Custom(exponents.to_vec())),
        weights,
        nodes: (1..=order).map(|r| 1.0 / r as f64).collect(),
    })
}

fn gauss_solve(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>, WeightsError> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[pivot][col].abs() < 1e-300 {
            return Err(WeightsError::Singular);
        }
        a.swap(col, pivot);
        let (top, bottom) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for row in bottom {
            let f = row[col] / pivot_row[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][n] - s) / a[row][row];
    }
    Ok(x)
}

/// Weights for the given scale and order.
pub fn weights_for(scale: &ErrorScale, order: usize) -> Result<WeightVector, WeightsError> {
    match scale {
        ErrorScale::Integer => standard_weights(order),
        ErrorScale::HalfOrder => half_order_weights(order),
        ErrorScale::Custom(g) => custom_weights(order, g),
    }
}

/// `Σ_r α_r / r^R` for the integer-scale weights; equals `(-1)^{R-1}/R!`.
///
/// This is the factor multiplying the first uncancelled coefficient `c_R`.
pub fn leading_coefficient_factor(order: usize) -> Result<f64, WeightsError> {
    let w = standard_weights(order)?;
    Ok(w
        .weights()
        .iter()
        .enumerate()
        .map(|(i, a)| a / ((i + 1) as f64).powi(order as i32))
        .sum())
}

pub fn leading_coefficient_factor_exact(order: usize) -> Result<BigRational, WeightsError> {
    let w = standard_weights_exact(order)?;
    Ok(w.iter().enumerate().fold(BigRational::zero(), |acc, (i, a)| {
        acc + a / BigRational::from_integer(num::pow(BigInt::from(i + 1), order))
    }))
}

/// `Σ α_r²`, the variance inflation of the combined estimator for independent levels.
pub fn sum_of_squares(w: &WeightVector) -> f64 {
    w.weights().iter().map(|a| a * a).sum()
}

pub fn sum_of_squares_exact(w: &[BigRational]) -> BigRational {
    w.iter().fold(BigRational::zero(), |acc, a| acc + a * a)
}

pub(crate) fn rational_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn r2_nodes_one_half() {
        let w = solve_weights(2, &[1.0, 0.5]).unwrap();
        assert_eq!(w.weights(), &[-1.0, 2.0]);
    }

    #[test]
    fn single_level_weight_is_one() {
        assert_eq!(solve_weights(1, &[1.0]).unwrap().weights(), &[1.0]);
        assert_eq!(standard_weights(1).unwrap().weights(), &[1.0]);
        assert_eq!(half_order_weights(1).unwrap().weights(), &[1.0]);
    }

    #[test]
    fn half_order_r3_surds() {
        let (s2, s3) = (2f64.sqrt(), 3f64.sqrt());
        let d = 2.0 * s2 - s3 - 1.0;
        let expect = [(s3 - s2) / d, -2.0 * (s3 - 1.0) / d, 3.0 * (s2 - 1.0) / d];
        let nodes = [1.0, 1.0 / s2, 1.0 / s3];
        let solved = solve_weights(3, &nodes).unwrap();
        let closed = half_order_weights(3).unwrap();
        for ((s, c), e) in solved.weights().iter().zip(closed.weights()).zip(expect) {
            assert!((s - e).abs() < 1e-10);
            assert!((c - e).abs() < 1e-10);
        }
    }

    #[test]
    fn duplicate_nodes_are_degenerate() {
        assert_eq!(solve_weights(3, &[1.0, 0.5, 0.5]), Err(WeightsError::Degenerate(1, 2)));
        assert_eq!(solve_weights(0, &[]), Err(WeightsError::ZeroOrder));
        assert!(matches!(solve_weights(2, &[1.0]), Err(WeightsError::NodeCount { .. })));
        assert_eq!(solve_weights(2, &[1.0, -0.5]), Err(WeightsError::InvalidNode));
    }

    #[test]
    fn standard_golden_vectors() {
        let r4 = standard_weights_exact(4).unwrap();
        assert_eq!(r4, vec![q(-1, 6), q(4, 1), q(-27, 2), q(32, 3)]);
        let r5 = standard_weights_exact(5).unwrap();
        assert_eq!(r5, vec![q(1, 24), q(-8, 3), q(81, 4), q(-128, 3), q(625, 24)]);
    }

    #[test]
    fn order_range_is_enforced() {
        assert_eq!(
            standard_weights(21),
            Err(WeightsError::OrderOutOfRange { order: 21, max: MAX_ORDER })
        );
        assert_eq!(half_order_weights(0), Err(WeightsError::ZeroOrder));
        assert!(standard_weights(20).is_ok());
    }

    #[test]
    fn half_order_r2_and_r4_displays() {
        let (s2, s3) = (2f64.sqrt(), 3f64.sqrt());
        let w2 = half_order_weights(2).unwrap();
        assert!((w2.weights()[0] + (1.0 + s2)).abs() < 1e-12);
        assert!((w2.weights()[1] - s2 * (1.0 + s2)).abs() < 1e-12);
        let w4 = half_order_weights(4).unwrap();
        let expect = [
            -(1.0 + s2) * (1.0 + s3) / 2.0,
            4.0 * (1.5 + s2) * (s3 + s2),
            -1.5 * (s3 + s2) * (2.0 + s3) * (3.0 + s3),
            4.0 * (2.0 + s2) * (2.0 + s3),
        ];
        for (a, e) in w4.weights().iter().zip(expect) {
            assert!((a - e).abs() < 1e-10, "{a} vs {e}");
        }
        // Σ α² ≈ 10 900 for the half-order R = 4 vector.
        assert!((sum_of_squares(&w4) - 10900.2288887).abs() < 1e-4);
    }

    #[test]
    fn leading_factor_values() {
        assert!((leading_coefficient_factor(2).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(leading_coefficient_factor(1).unwrap(), 1.0);
        assert!((leading_coefficient_factor(5).unwrap() - 1.0 / 120.0).abs() < 1e-12);
        assert_eq!(leading_coefficient_factor_exact(5).unwrap(), q(1, 120));
    }

    #[test]
    fn sums_of_squares() {
        assert_eq!(sum_of_squares(&standard_weights(2).unwrap()), 5.0);
        assert_eq!(sum_of_squares_exact(&standard_weights_exact(3).unwrap()), q(73, 2));
        assert_eq!(sum_of_squares_exact(&standard_weights_exact(4).unwrap()), q(5617, 18));
        assert!((sum_of_squares(&standard_weights(4).unwrap()) - 312.0555).abs() < 1e-3);
    }

    #[test]
    fn custom_scale_matches_builtin_scales() {
        for order in 1..=6 {
            let c = custom_weights(order, &ErrorScale::Integer.exponents(order)).unwrap();
            let s = standard_weights(order).unwrap();
            for (a, b) in c.weights().iter().zip(s.weights()) {
                assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
            }
            let c = custom_weights(order, &ErrorScale::HalfOrder.exponents(order)).unwrap();
            let h = half_order_weights(order).unwrap();
            for (a, b) in c.weights().iter().zip(h.weights()) {
                assert!((a - b).abs() < 1e-8 * b.abs().max(1.0));
            }
            assert!(c.max_residual() < 1e-9);
        }
        assert!(custom_weights(3, &[2.0, 1.0]).is_err());
        assert!(custom_weights(3, &[1.0]).is_err());
    }

    #[test]
    fn exact_solver_recovers_standard_weights() {
        for order in 1..=10 {
            let nodes: Vec<BigRational> = (1..=order as i64).map(|r| q(1, r)).collect();
            assert_eq!(solve_weights_exact(&nodes).unwrap(), standard_weights_exact(order).unwrap());
        }
    }
}
