//! One-mode characteristic function from a record, and the Wigner function
//! by filtered backprojection.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::c;
use crate::osc_forward::{CharGrid, WignerGrid};
use crate::record::{BlockData, MeasurementRecord};

/// Largest phase spacing accepted for a one-mode reconstruction.
pub const MAX_THETA_SPACING: f64 = PI / 64.0;
/// Largest characteristic-function magnitude tolerated at the η edges.
pub const EDGE_TOL: f64 = 1e-8;

/// `w̃(η, θ)` for every block of a one-mode record.
///
/// Blocks recorded after an odd number of half periods carry the
/// distribution of `−x̂(θ)`; their η axis is mirrored. Blocks that share a
/// folded phase are averaged.
pub fn char_from_record_1d(record: &MeasurementRecord, eta_axis: &[f64]) -> Result<CharGrid> {
    record.validate()?;
    if record.modes() != 1 {
        return Err(Error::Shape(format!(
            "expected a one-mode record, got {} modes",
            record.modes()
        )));
    }
    let grid = &record.header.grids[0];
    let xs = grid.points();
    let ws = grid.weights();
    let mut rows: Vec<(f64, Vec<Complex64>)> = record
        .blocks
        .par_iter()
        .map(|b| {
            if b.theta.len() != 1 {
                return Err(Error::Shape(
                    "oscillator blocks need a phase and fold count".into(),
                ));
            }
            let sign = if b.folds[0].rem_euclid(2) == 0 {
                1.0
            } else {
                -1.0
            };
            let vals = match &b.data {
                BlockData::Distribution(p) => eta_axis
                    .iter()
                    .map(|&e| {
                        xs.iter()
                            .zip(&ws)
                            .zip(p)
                            .map(|((x, w), pr)| Complex64::from_polar(w * pr, sign * e * x))
                            .sum()
                    })
                    .collect(),
                BlockData::Samples(s) => {
                    let m = s.len().max(1) as f64;
                    eta_axis
                        .iter()
                        .map(|&e| {
                            s.iter()
                                .map(|x| Complex64::from_polar(1.0, sign * e * x))
                                .sum::<Complex64>()
                                / m
                        })
                        .collect()
                }
            };
            Ok((b.theta[0], vals))
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Merge repeated phases.
    let mut thetas: Vec<f64> = Vec::new();
    let mut sums: Vec<(Vec<Complex64>, f64)> = Vec::new();
    for (th, vals) in rows {
        match thetas.last() {
            Some(&last) if (th - last).abs() < 1e-12 => {
                let (acc, n) = sums.last_mut().unwrap();
                for (a, v) in acc.iter_mut().zip(vals) {
                    *a += v;
                }
                *n += 1.0;
            }
            _ => {
                thetas.push(th);
                sums.push((vals, 1.0));
            }
        }
    }
    check_theta_spacing(&thetas)?;

    let ne = eta_axis.len();
    let nt = thetas.len();
    let mut values = vec![c(0.0, 0.0); ne * nt];
    for (ti, (acc, n)) in sums.iter().enumerate() {
        for ei in 0..ne {
            values[ei * nt + ti] = acc[ei] / *n;
        }
    }
    Ok(CharGrid {
        eta_axes: vec![eta_axis.to_vec()],
        theta_axes: vec![thetas],
        filled: vec![true; ne * nt],
        inpainted: vec![false; ne * nt],
        values,
        attained_theta: None,
    })
}

fn check_theta_spacing(thetas: &[f64]) -> Result<()> {
    if thetas.is_empty() {
        return Err(Error::Coverage("record has no blocks".into()));
    }
    let mut worst = thetas[0] + PI - thetas[thetas.len() - 1];
    for w in thetas.windows(2) {
        worst = worst.max(w[1] - w[0]);
    }
    if worst > MAX_THETA_SPACING * (1.0 + 1e-9) {
        return Err(Error::Coverage(format!(
            "largest phase gap is {worst:.4} rad, need at most pi/64 = {MAX_THETA_SPACING:.4}"
        )));
    }
    Ok(())
}

/// Wigner function from a one-mode characteristic function by
/// `W(x,p) = (2π)⁻² ∫dη ∫₀^π dθ |η| w̃(η,θ) e^{−iη(x cosθ + p sinθ)}`.
///
/// The η integral runs over `η ≥ 0` using `w̃(−η, θ) = conj w̃(η, θ)`, with
/// the trapezoid rule plus its end correction for the kink of `|η|` at the
/// origin. The θ integral uses the periodic trapezoid rule.
pub fn wigner_backprojection_1d(
    char: &CharGrid,
    x_axis: &[f64],
    p_axis: &[f64],
) -> Result<WignerGrid> {
    if char.modes() != 1 {
        return Err(Error::Shape(
            "backprojection needs a one-mode characteristic function".into(),
        ));
    }
    if char.filled.iter().any(|f| !f) {
        return Err(Error::Coverage(
            "characteristic function has unfilled cells".into(),
        ));
    }
    let eta = &char.eta_axes[0];
    let thetas = &char.theta_axes[0];
    let ne = eta.len();
    let nt = thetas.len();
    if ne < 3 {
        return Err(Error::InvalidParameter(
            "eta axis needs at least 3 points".into(),
        ));
    }
    let h = eta[1] - eta[0];
    for k in 0..ne {
        let mirror = eta[ne - 1 - k];
        if (eta[k] + mirror).abs() > 1e-9 * h.abs()
            || (k > 0 && ((eta[k] - eta[k - 1]) - h).abs() > 1e-9 * h.abs())
        {
            return Err(Error::InvalidParameter(
                "eta axis must be uniform and symmetric about 0".into(),
            ));
        }
    }
    let zero = eta
        .iter()
        .position(|&e| e.abs() < 1e-12 * h.abs())
        .ok_or_else(|| {
            Error::InvalidParameter("eta axis must contain 0 (use an odd number of points)".into())
        })?;
    let edge = (0..nt)
        .map(|t| {
            char.values[t]
                .norm()
                .max(char.values[(ne - 1) * nt + t].norm())
        })
        .fold(0.0, f64::max);
    if edge > EDGE_TOL {
        return Err(Error::FilterTruncation { edge });
    }

    // Periodic trapezoid weights in θ (period π).
    let tw: Vec<f64> = (0..nt)
        .map(|k| {
            let prev = if k == 0 {
                thetas[nt - 1] - PI
            } else {
                thetas[k - 1]
            };
            let next = if k + 1 == nt {
                thetas[0] + PI
            } else {
                thetas[k + 1]
            };
            0.5 * (next - prev)
        })
        .collect();
    // Filtered projection samples g(η_k, θ) = η_k w̃ with trapezoid weights.
    let pos: Vec<usize> = (zero..ne).collect();
    let last = *pos.last().unwrap();
    let cos_sin: Vec<(f64, f64)> = thetas.iter().map(|t| (t.cos(), t.sin())).collect();

    let np = p_axis.len();
    let values: Vec<f64> = (0..x_axis.len() * np)
        .into_par_iter()
        .map(|flat| {
            let x = x_axis[flat / np];
            let p = p_axis[flat % np];
            let mut total = 0.0;
            for t in 0..nt {
                let (co, si) = cos_sin[t];
                let u = x * co + p * si;
                let mut acc = c(0.0, 0.0);
                for &k in &pos {
                    let w = if k == zero || k == last { 0.5 * h } else { h };
                    acc += char.values[k * nt + t] * Complex64::from_polar(w * eta[k], -eta[k] * u);
                }
                // Euler–Maclaurin end correction: −h²/12 [g′]₀^∞ with g′(0) = w̃(0,θ).
                acc += char.values[zero * nt + t] * (h * h / 12.0);
                total += tw[t] * acc.re;
            }
            total / (2.0 * PI * PI)
        })
        .collect();
    Ok(WignerGrid {
        x_axes: vec![x_axis.to_vec()],
        p_axes: vec![p_axis.to_vec()],
        values,
    })
}
