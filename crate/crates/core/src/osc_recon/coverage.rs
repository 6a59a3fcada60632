//! Which phase pairs `(θ_i, θ_j)` a time sweep visits.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::osc_forward::OscillatorSystem;
use crate::ratio::{self, RatioReport};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RatioClass {
    /// Equal frequencies: only the diagonal is visited.
    Equal,
    /// Reduced ratio `numerator/denominator` of the smaller to the larger
    /// frequency. The trajectory consists of `line_count` parallel segments,
    /// one per integer `k` with `α₂θ₁ − α₁θ₂ = kπ`, which is `α₁ + α₂ − 1`.
    RationalLines {
        numerator: u64,
        denominator: u64,
        line_count: u64,
    },
    IrrationalDense,
}

/// Classifies a pair of positive frequencies, with an optional warning when
/// an irrational ratio lies suspiciously close to a small fraction.
pub fn classify_pair(w1: f64, w2: f64) -> (RatioClass, Option<String>) {
    let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
    let report: RatioReport = ratio::classify(lo / hi);
    let class = match report.fraction {
        Some((1, 1)) => RatioClass::Equal,
        Some((p, q)) => RatioClass::RationalLines {
            numerator: p,
            denominator: q,
            line_count: p + q - 1,
        },
        None => RatioClass::IrrationalDense,
    };
    (class, report.warning())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCoverage {
    pub modes: (usize, usize),
    pub class: RatioClass,
    /// Largest distance from a point of the phase square to the visited set,
    /// at the requested resolution.
    pub gap_estimate: f64,
    #[serde(default)]
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaCoverageReport {
    pub observation_time: f64,
    pub resolution: usize,
    pub pairs: Vec<PairCoverage>,
}

impl ThetaCoverageReport {
    /// Worst gap over all pairs.
    pub fn gap_estimate(&self) -> f64 {
        self.pairs
            .iter()
            .map(|p| p.gap_estimate)
            .fold(0.0, f64::max)
    }

    pub fn all_dense(&self) -> bool {
        self.pairs
            .iter()
            .all(|p| p.class == RatioClass::IrrationalDense)
    }
}

/// Classifies every frequency pair and estimates the covering gap of the
/// sweep `t ∈ [0, T]` on a `resolution × resolution` raster of `[0, π)²`.
pub fn theta_coverage(
    system: &OscillatorSystem,
    observation_time: f64,
    resolution: usize,
) -> Result<ThetaCoverageReport> {
    system.validate()?;
    let n = system.omegas.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "phase coverage needs at least two modes".into(),
        ));
    }
    if !(observation_time > 0.0) || resolution < 2 {
        return Err(Error::InvalidParameter(
            "need T > 0 and resolution >= 2".into(),
        ));
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (w1, w2) = (system.omegas[i], system.omegas[j]);
            let (class, warning) = classify_pair(w1, w2);
            let gap_estimate = sweep_gap(w1, w2, observation_time, resolution);
            pairs.push(PairCoverage {
                modes: (i, j),
                class,
                gap_estimate,
                warning,
            });
        }
    }
    Ok(ThetaCoverageReport {
        observation_time,
        resolution,
        pairs,
    })
}

fn sweep_gap(w1: f64, w2: f64, t_max: f64, res: usize) -> f64 {
    let cell = PI / res as f64;
    let speed = (w1 * w1 + w2 * w2).sqrt();
    let dt = 0.5 * cell / speed;
    let steps = (t_max / dt).ceil() as usize;
    let mut hit = vec![false; res * res];
    for k in 0..=steps {
        let t = (k as f64 * dt).min(t_max);
        let a = ((w1 * t).rem_euclid(PI) / cell) as usize;
        let b = ((w2 * t).rem_euclid(PI) / cell) as usize;
        hit[a.min(res - 1) * res + b.min(res - 1)] = true;
    }
    squared_distance_transform(&hit, res)
        .into_iter()
        .fold(0.0, f64::max)
        .sqrt()
        * cell
}

/// Exact squared Euclidean distance (in cells) from every cell to the
/// nearest marked cell, by two passes of the lower-envelope algorithm.
fn squared_distance_transform(marked: &[bool], n: usize) -> Vec<f64> {
    const INF: f64 = 1e12;
    let mut f: Vec<f64> = marked.iter().map(|&m| if m { 0.0 } else { INF }).collect();
    let mut buf = vec![0.0; n];
    for row in 0..n {
        buf.copy_from_slice(&f[row * n..(row + 1) * n]);
        let d = edt_1d(&buf);
        f[row * n..(row + 1) * n].copy_from_slice(&d);
    }
    for col in 0..n {
        for row in 0..n {
            buf[row] = f[row * n + col];
        }
        let d = edt_1d(&buf);
        for row in 0..n {
            f[row * n + col] = d[row];
        }
    }
    f
}

fn edt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        let mut s = inter(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut d = vec![0.0; n];
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *out = (q as f64 - p as f64).powi(2) + f[p];
    }
    d
}

/// One point of the scatter of visited phase pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub t: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// Line index `k = α₁F₂ − α₂F₁` for commensurable pairs.
    pub line: Option<i64>,
}

/// Samples the trajectory of modes `(i, j)` at `n_points` equally spaced
/// times in `[0, T]`.
pub fn coverage_scatter(
    system: &OscillatorSystem,
    modes: (usize, usize),
    observation_time: f64,
    n_points: usize,
) -> Result<Vec<ScatterPoint>> {
    system.validate()?;
    let (i, j) = modes;
    if i >= system.omegas.len() || j >= system.omegas.len() || i == j {
        return Err(Error::InvalidParameter(format!(
            "invalid mode pair {modes:?}"
        )));
    }
    let (w1, w2) = (system.omegas[i], system.omegas[j]);
    let (class, _) = classify_pair(w1, w2);
    // (α₁, α₂) with ω₁/ω₂ = α₁/α₂ in the order of the requested modes.
    let alphas = match class {
        RatioClass::Equal => Some((1i64, 1i64)),
        RatioClass::RationalLines {
            numerator,
            denominator,
            ..
        } => Some(if w1 <= w2 {
            (numerator as i64, denominator as i64)
        } else {
            (denominator as i64, numerator as i64)
        }),
        RatioClass::IrrationalDense => None,
    };
    let dt = if n_points > 1 {
        observation_time / (n_points - 1) as f64
    } else {
        0.0
    };
    Ok((0..n_points)
        .map(|k| {
            let t = k as f64 * dt;
            let f1 = (w1 * t / PI).floor();
            let f2 = (w2 * t / PI).floor();
            ScatterPoint {
                t,
                theta1: w1 * t - f1 * PI,
                theta2: w2 * t - f2 * PI,
                line: alphas.map(|(a1, a2)| a1 * f2 as i64 - a2 * f1 as i64),
            }
        })
        .collect())
}
