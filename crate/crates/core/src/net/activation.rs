use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Slope used by [`ActivationKind::LeakyRelu`] on the negative half-line.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    /// Exponential linear unit with alpha = 1.
    Elu,
    LeakyRelu,
    Sigmoid,
    Identity,
}

impl ActivationKind {
    #[inline]
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            ActivationKind::Relu => x.max(S::zero()),
            ActivationKind::Elu => {
                if x >= S::zero() {
                    x
                } else {
                    x.exp_m1()
                }
            }
            ActivationKind::LeakyRelu => {
                if x >= S::zero() {
                    x
                } else {
                    S::of(LEAKY_SLOPE) * x
                }
            }
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Identity => x,
        }
    }

    /// Derivative at `x`; the right derivative is taken at kinks.
    #[inline]
    pub fn derivative<S: Scalar>(self, x: S) -> S {
        match self {
            ActivationKind::Relu => {
                if x >= S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            ActivationKind::Elu => {
                if x >= S::zero() {
                    S::one()
                } else {
                    x.exp()
                }
            }
            ActivationKind::LeakyRelu => {
                if x >= S::zero() {
                    S::one()
                } else {
                    S::of(LEAKY_SLOPE)
                }
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (S::one() - s)
            }
            ActivationKind::Identity => S::one(),
        }
    }

    /// Convex and non-decreasing on the whole real line.
    pub fn is_convex_nondecreasing(self) -> bool {
        !matches!(self, ActivationKind::Sigmoid)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Elu => "elu",
            ActivationKind::LeakyRelu => "leaky_relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Identity => "identity",
        }
    }
}

/// Logistic function whose value is `>= 0.5` exactly when `x >= 0`.
///
/// Rounding would otherwise map tiny negative inputs to exactly 0.5 and flip
/// the thresholded decision.
#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    let half = S::of(0.5);
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        (e / (S::one() + e)).min(half.next_down())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elu_at_minus_one() {
        let v = ActivationKind::Elu.apply(-1.0f64);
        assert!((v - (-0.632_120_558_828_557_7)).abs() < 1e-15);
        let d = ActivationKind::Elu.derivative(-1.0f64);
        assert!((d - 0.367_879_441_171_442_33).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_threshold_is_sign_consistent() {
        for &x in &[-1e-300f64, -1e-17, -f64::MIN_POSITIVE, 0.0, 1e-17, -40.0, 40.0] {
            assert_eq!(sigmoid(x) >= 0.5, x >= 0.0, "x = {x}");
        }
        assert_eq!(sigmoid(0.0f64), 0.5);
    }

    #[test]
    fn leaky_relu_slope() {
        assert_eq!(ActivationKind::LeakyRelu.apply(-2.0f64), -0.02);
        assert_eq!(ActivationKind::LeakyRelu.derivative(-2.0f64), 0.01);
    }
}
