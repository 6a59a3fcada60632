//! Intervals for unknown diagonal elements from `|ρ(n,n′)|² ≤ ρ(n,n)ρ(n′,n′)`
//! and unit trace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{EntryStatus, PartialDensityMatrix};

/// Widening applied to every returned interval to absorb rounding in the
/// known elements.
pub const SCHWARTZ_SLACK: f64 = 1e-9;

const MAX_SWEEPS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalBound {
    pub labels: Vec<i64>,
    pub lo: f64,
    pub hi: f64,
}

/// Interval propagation to a fixpoint. Per pair with `c = |ρ_ij|² > 0` and
/// `S = 1 − Σ_{k≠i,j} lo_k`, `d_i` must satisfy `d_i(S − d_i) ≥ c` and
/// `d_i ≥ c/hi_j`; the trace gives `hi_i ≤ 1 − Σ_{k≠i} lo_k` and
/// `lo_i ≥ 1 − Σ_{k≠i} hi_k`.
pub fn schwartz_bounds(partial: &PartialDensityMatrix) -> Result<Vec<DiagonalBound>> {
    let d = partial.dim();
    let mut lo = vec![0.0f64; d];
    let mut hi = vec![1.0f64; d];
    for i in 0..d {
        match partial.entry(i, i) {
            EntryStatus::Known { re, .. } => {
                lo[i] = *re;
                hi[i] = *re;
            }
            EntryStatus::Bounded { lo: a, hi: b } => {
                lo[i] = a.max(0.0);
                hi[i] = b.min(1.0);
            }
            EntryStatus::Unknown { .. } => {}
        }
    }
    // Strongest constraint per unordered pair.
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let a = partial.entry(i, j).value().map(|v| v.norm_sqr());
            let b = partial.entry(j, i).value().map(|v| v.norm_sqr());
            let c = match (a, b) {
                (Some(x), Some(y)) => x.max(y),
                (Some(x), None) | (None, Some(x)) => x,
                (None, None) => continue,
            };
            if c > 0.0 {
                pairs.push((i, j, c));
            }
        }
    }
    let inconsistent = |msg: String| Error::InconsistentData(msg);
    for _ in 0..MAX_SWEEPS {
        let mut changed = 0.0f64;
        let sum_lo: f64 = lo.iter().sum();
        let sum_hi: f64 = hi.iter().sum();
        for i in 0..d {
            let new_hi = hi[i].min(1.0 - (sum_lo - lo[i]));
            let new_lo = lo[i].max(1.0 - (sum_hi - hi[i]));
            changed = changed.max(hi[i] - new_hi).max(new_lo - lo[i]);
            hi[i] = new_hi;
            lo[i] = new_lo.max(0.0);
        }
        let sum_lo: f64 = lo.iter().sum();
        for &(i, j, c) in &pairs {
            let s = 1.0 - (sum_lo - lo[i] - lo[j]);
            let disc = s * s - 4.0 * c;
            if disc < -1e-12 {
                return Err(inconsistent(format!(
                    "|rho({}, {})|^2 = {c:.6} exceeds the largest product {:.6} allowed by the trace",
                    label(partial, i),
                    label(partial, j),
                    s * s / 4.0
                )));
            }
            let root = disc.max(0.0).sqrt();
            let (r_lo, r_hi) = (0.5 * (s - root), 0.5 * (s + root));
            for (a, b) in [(i, j), (j, i)] {
                let mut new_lo = lo[a].max(r_lo);
                if hi[b] > 0.0 {
                    new_lo = new_lo.max(c / hi[b]);
                }
                let new_hi = hi[a].min(r_hi);
                changed = changed.max(new_lo - lo[a]).max(hi[a] - new_hi);
                lo[a] = new_lo;
                hi[a] = new_hi;
            }
        }
        for i in 0..d {
            if lo[i] > hi[i] + 1e-12 {
                return Err(inconsistent(format!(
                    "diagonal {} has empty interval [{:.6}, {:.6}]",
                    label(partial, i),
                    lo[i],
                    hi[i]
                )));
            }
        }
        if changed <= 1e-15 {
            break;
        }
    }
    Ok((0..d)
        .map(|i| DiagonalBound {
            labels: partial.labels(i),
            lo: (lo[i].min(hi[i]) - SCHWARTZ_SLACK).max(0.0),
            hi: (hi[i].max(lo[i]) + SCHWARTZ_SLACK).min(1.0),
        })
        .collect())
}

fn label(partial: &PartialDensityMatrix, i: usize) -> String {
    format!("{:?}", partial.labels(i))
}

/// Replaces unknown diagonal entries by their intervals.
pub fn apply_schwartz_bounds(partial: &mut PartialDensityMatrix) -> Result<Vec<DiagonalBound>> {
    let bounds = schwartz_bounds(partial)?;
    let d = partial.dim();
    for (i, b) in bounds.iter().enumerate() {
        if matches!(partial.entries[i * d + i], EntryStatus::Unknown { .. }) {
            partial.entries[i * d + i] = EntryStatus::Bounded { lo: b.lo, hi: b.hi };
        }
    }
    Ok(bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::BasisTag;

    fn two_level(off: f64) -> PartialDensityMatrix {
        let mut p = PartialDensityMatrix::unknown(
            vec![BasisTag::PlaneWave { n_min: 0, n_max: 1 }],
            "diagonal",
        );
        p.set(
            &[0],
            &[1],
            EntryStatus::Known {
                re: off,
                im: 0.0,
                bound: None,
            },
        )
        .unwrap();
        p.set(
            &[1],
            &[0],
            EntryStatus::Known {
                re: off,
                im: 0.0,
                bound: None,
            },
        )
        .unwrap();
        p
    }

    #[test]
    fn forced_equal_split() {
        let b = schwartz_bounds(&two_level(0.5)).unwrap();
        for x in &b {
            assert!((x.lo - 0.5).abs() <= 2e-9 && (x.hi - 0.5).abs() <= 2e-9);
        }
    }

    #[test]
    fn zero_coherence_gives_unit_intervals() {
        let b = schwartz_bounds(&two_level(0.0)).unwrap();
        assert!(b.iter().all(|x| x.lo == 0.0 && x.hi == 1.0));
    }

    #[test]
    fn excessive_coherence_is_inconsistent() {
        assert!(matches!(
            schwartz_bounds(&two_level(0.8)),
            Err(Error::InconsistentData(_))
        ));
    }

    #[test]
    fn apply_marks_diagonal() {
        let mut p = two_level(0.3);
        apply_schwartz_bounds(&mut p).unwrap();
        match p.get(&[0], &[0]).unwrap() {
            EntryStatus::Bounded { lo, hi } => {
                // d(1 − d) ≥ 0.09 ⇒ d ∈ [0.1, 0.9].
                assert!((lo - 0.1).abs() < 1e-8 && (hi - 0.9).abs() < 1e-8);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
