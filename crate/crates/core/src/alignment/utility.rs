use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::{Error, Result};

/// Logistic sigmoid, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log σ(x) = -softplus(-x)`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// A monotone value function applied to the reward margin.
pub trait Utility {
    fn value(&self, v: f64) -> f64;
    fn derivative(&self, v: f64) -> f64;
}

/// The three value functions, all centered so that `U(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    /// `log σ(v) + log 2`: concave.
    LossAverse,
    /// `-log σ(-v) - log 2`: convex.
    RiskSeeking,
    /// `σ(v) - 1/2`: convex for losses, concave for gains.
    KahnemanTversky,
}

impl UtilityKind {
    pub const ALL: [UtilityKind; 3] = [
        UtilityKind::LossAverse,
        UtilityKind::RiskSeeking,
        UtilityKind::KahnemanTversky,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UtilityKind::LossAverse => "loss_averse",
            UtilityKind::RiskSeeking => "risk_seeking",
            UtilityKind::KahnemanTversky => "kahneman_tversky",
        }
    }
}

impl std::str::FromStr for UtilityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        UtilityKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown utility {s:?}")))
    }
}

impl std::fmt::Display for UtilityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl Utility for UtilityKind {
    fn value(&self, v: f64) -> f64 {
        utility_value(*self, v)
    }

    fn derivative(&self, v: f64) -> f64 {
        utility_derivative(*self, v)
    }
}

pub fn utility_value(kind: UtilityKind, v: f64) -> f64 {
    match kind {
        UtilityKind::LossAverse => log_sigmoid(v) + LN_2,
        UtilityKind::RiskSeeking => softplus(v) - LN_2,
        UtilityKind::KahnemanTversky => sigmoid(v) - 0.5,
    }
}

pub fn utility_derivative(kind: UtilityKind, v: f64) -> f64 {
    match kind {
        UtilityKind::LossAverse => sigmoid(-v),
        UtilityKind::RiskSeeking => sigmoid(v),
        UtilityKind::KahnemanTversky => sigmoid(v) * sigmoid(-v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn centered_at_zero() {
        for k in UtilityKind::ALL {
            assert_eq!(utility_value(k, 0.0), 0.0, "{k}");
        }
    }

    #[test]
    fn kt_asymptote_and_odd_symmetry() {
        let k = UtilityKind::KahnemanTversky;
        assert!((utility_value(k, 800.0) - 0.5).abs() < 1e-15);
        for x in [0.1, 1.0, 3.7, 25.0] {
            assert!((utility_value(k, -x) + utility_value(k, x)).abs() < 1e-15);
        }
        assert_eq!(utility_derivative(k, 0.0), 0.25);
    }

    #[test]
    fn loss_averse_at_one_by_hand() {
        let expected = -(1.0 + (-1.0f64).exp()).ln() + 2.0f64.ln();
        assert!((utility_value(UtilityKind::LossAverse, 1.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn saturating_derivatives() {
        assert!(utility_derivative(UtilityKind::LossAverse, 60.0) < 1e-25);
        assert!(utility_derivative(UtilityKind::RiskSeeking, -60.0) < 1e-25);
        // huge arguments stay finite
        for k in UtilityKind::ALL {
            for v in [-1e6, 1e6] {
                assert!(utility_value(k, v).is_finite());
                assert!(utility_derivative(k, v).is_finite());
            }
        }
    }

    #[test]
    fn derivative_matches_central_difference_at_one() {
        let h = 1e-5;
        for k in UtilityKind::ALL {
            let fd = (utility_value(k, 1.0 + h) - utility_value(k, 1.0 - h)) / (2.0 * h);
            assert!((fd - utility_derivative(k, 1.0)).abs() < 1e-8, "{k}");
        }
    }

    proptest! {
        #[test]
        fn derivative_positive_and_value_increasing(v in -30.0f64..30.0, dv in 1e-3f64..1.0) {
            for k in UtilityKind::ALL {
                prop_assert!(utility_derivative(k, v) > 0.0);
                prop_assert!(utility_value(k, v + dv) > utility_value(k, v));
            }
        }
    }
}
