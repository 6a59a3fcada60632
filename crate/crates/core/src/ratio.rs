//! Rational detection of frequency ratios by continued fractions.

use serde::{Deserialize, Serialize};

/// Largest denominator accepted as "rational".
pub const DENOMINATOR_CAP: u64 = 1_000_000;

/// Relative tolerance for a convergent to count as an exact match.
///
/// Tighter than 1e-12: the golden ratio has a convergent with denominator
/// 832040 that lies 6.5e-13 away, which would otherwise be accepted.
pub const RELATIVE_TOLERANCE: f64 = 1e-13;

/// A convergent closer than this in units of `1/q²` triggers a
/// near-commensurability warning even when no convergent matches exactly.
pub const NEAR_RATIONAL_SCORE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub value: f64,
    /// Reduced fraction `p/q` when the value is rational within the cap.
    pub fraction: Option<(u64, u64)>,
    /// The convergent that triggered a near-commensurability warning.
    pub near_rational: Option<(u64, u64)>,
}

impl RatioReport {
    pub fn is_rational(&self) -> bool {
        self.fraction.is_some()
    }

    pub fn warning(&self) -> Option<String> {
        self.near_rational.map(|(p, q)| {
            format!(
                "ratio {} lies within {:.1e} of {p}/{q}; it behaves as commensurable until times of order {:.1e}",
                self.value,
                (self.value - p as f64 / q as f64).abs(),
                1.0 / (self.value - p as f64 / q as f64).abs().max(f64::MIN_POSITIVE)
            )
        })
    }
}

/// Classifies a positive ratio.
pub fn classify(x: f64) -> RatioReport {
    assert!(
        x.is_finite() && x > 0.0,
        "ratio must be positive and finite"
    );
    let mut report = RatioReport {
        value: x,
        fraction: None,
        near_rational: None,
    };

    // Convergents h_k / k_k of the continued fraction of x.
    let (mut h_prev, mut h) = (1u128, x.floor() as u128);
    let (mut k_prev, mut k) = (0u128, 1u128);
    let mut rest = x - x.floor();
    loop {
        let approx = h as f64 / k as f64;
        let err = (x - approx).abs();
        if err <= RELATIVE_TOLERANCE * x {
            report.fraction = Some((h as u64, k as u64));
            return report;
        }
        let score = (k as f64).powi(2) * err / x;
        if score < NEAR_RATIONAL_SCORE && report.near_rational.is_none() {
            report.near_rational = Some((h as u64, k as u64));
        }
        if rest <= 0.0 {
            // Floating-point expansion terminated without a match.
            break;
        }
        let inv = 1.0 / rest;
        let a = inv.floor();
        rest = inv - a;
        if !a.is_finite() || a > 1e18 {
            break;
        }
        let a = a as u128;
        let k_next = a * k + k_prev;
        if k_next > DENOMINATOR_CAP as u128 {
            break;
        }
        let h_next = a * h + h_prev;
        (h_prev, h) = (h, h_next);
        (k_prev, k) = (k, k_next);
    }
    report
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
