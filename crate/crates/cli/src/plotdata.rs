//! Columnar plot data: probability heatmaps, Wigner grids, phase coverage
//! scatter and error-versus-Tcap curves.

use std::collections::BTreeSet;

use ndtomo::grid::{tensor_len, unravel};
use ndtomo::osc_forward::{wigner_oracle, OscillatorSystem};
use ndtomo::osc_recon::{coverage_scatter, theta_coverage, ThetaCoverageReport};
use ndtomo::record::{histogram, BlockData, MeasurementRecord};
use ndtomo::states::DensityMatrix;

use crate::error::{CliResult, Context};
use crate::reconstruct::symmetric_axis;
use crate::sweep::TcapPoint;
use crate::table::Table;

/// `Pr(x, t)` for every block; samples are histogrammed on the record grid.
pub fn heatmap_table(record: &MeasurementRecord) -> CliResult<Table> {
    record.validate().context("record")?;
    let grids = &record.header.grids;
    let n = grids.len();
    let mut cols: Vec<String> = vec!["t".into()];
    cols.extend((1..=n).map(|j| format!("x{j}")));
    cols.push("pr".into());
    let names: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = Table::new(&names);
    let dims: Vec<usize> = grids.iter().map(|g| g.n_points).collect();
    let points: Vec<Vec<f64>> = grids.iter().map(|g| g.points()).collect();
    for b in &record.blocks {
        let density = match &b.data {
            BlockData::Distribution(p) => p.clone(),
            BlockData::Samples(s) => histogram(grids, s),
        };
        for flat in 0..tensor_len(grids) {
            let idx = unravel(flat, &dims);
            let mut row = Vec::with_capacity(n + 2);
            row.push(b.t);
            row.extend(idx.iter().enumerate().map(|(j, &k)| points[j][k]));
            row.push(density[flat]);
            table.push(row);
        }
    }
    Ok(table)
}

/// Exact Wigner function of a one-mode Fock-basis state on a square grid.
pub fn wigner_table(state: &DensityMatrix, x_max: f64, points: usize) -> CliResult<Table> {
    let xs = symmetric_axis(x_max, points);
    let w = wigner_oracle(state, std::slice::from_ref(&xs), std::slice::from_ref(&xs)).context("Wigner function")?;
    let mut table = Table::new(&["x", "p", "w"]);
    for (i, x) in xs.iter().enumerate() {
        for (j, p) in xs.iter().enumerate() {
            table.push(vec![*x, *p, w.values[i * xs.len() + j]]);
        }
    }
    Ok(table)
}

/// Largest deviation of a Wigner table from rotational symmetry: pairs of
/// grid points at equal radius are compared through bilinear interpolation
/// along the circle.
pub fn wigner_asymmetry(table: &Table) -> Option<f64> {
    let x = table.column("x")?;
    let w = table.column("w")?;
    let n = (x.len() as f64).sqrt().round() as usize;
    if n * n != x.len() || n < 2 {
        return None;
    }
    let axis: Vec<f64> = (0..n).map(|i| x[i * n]).collect();
    let h = axis[1] - axis[0];
    let at = |px: f64, pp: f64| -> Option<f64> {
        let fx = (px - axis[0]) / h;
        let fp = (pp - axis[0]) / h;
        if fx < 0.0 || fp < 0.0 || fx > (n - 1) as f64 || fp > (n - 1) as f64 {
            return None;
        }
        let (i, j) = (
            (fx.floor() as usize).min(n - 2),
            (fp.floor() as usize).min(n - 2),
        );
        let (a, b) = (fx - i as f64, fp - j as f64);
        let v = |i: usize, j: usize| w[i * n + j];
        Some(
            (1.0 - a) * (1.0 - b) * v(i, j)
                + a * (1.0 - b) * v(i + 1, j)
                + (1.0 - a) * b * v(i, j + 1)
                + a * b * v(i + 1, j + 1),
        )
    };
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (px, pp) = (axis[i], axis[j]);
            // Quarter turns map grid points onto grid points of a symmetric axis.
            for (qx, qp) in [(-pp, px), (-px, -pp), (pp, -px)] {
                if let Some(v) = at(qx, qp) {
                    worst = worst.max((v - w[i * n + j]).abs());
                }
            }
        }
    }
    Some(worst)
}

/// Phase trajectory of modes 0 and 1 with its line index (`NaN` when the
/// frequencies are incommensurable).
pub fn coverage_scatter_table(omegas: &[f64], t_max: f64, n_points: usize) -> CliResult<Table> {
    let system = OscillatorSystem::new(omegas.to_vec()).context("frequencies")?;
    let pts = coverage_scatter(&system, (0, 1), t_max, n_points).context("phase scatter")?;
    let mut table = Table::new(&["t", "theta1", "theta2", "line"]);
    for p in pts {
        table.push(vec![
            p.t,
            p.theta1,
            p.theta2,
            p.line.map_or(f64::NAN, |k| k as f64),
        ]);
    }
    Ok(table)
}

/// Number of distinct line segments in a coverage table, or `None` for a
/// dense (unlabelled) trajectory.
pub fn count_lines(table: &Table) -> Option<usize> {
    let lines = table.column("line")?;
    if lines.is_empty() || lines.iter().any(|v| v.is_nan()) {
        return None;
    }
    Some(
        lines
            .iter()
            .map(|v| *v as i64)
            .collect::<BTreeSet<_>>()
            .len(),
    )
}

pub fn coverage_report(
    omegas: &[f64],
    t_max: f64,
    resolution: usize,
) -> CliResult<ThetaCoverageReport> {
    let system = OscillatorSystem::new(omegas.to_vec()).context("frequencies")?;
    theta_coverage(&system, t_max, resolution).context("phase coverage")
}

pub fn tcap_table(points: &[TcapPoint]) -> Table {
    let mut table = Table::new(&["tcap", "error", "max_error", "max_bound"]);
    for p in points {
        table.push(vec![p.tcap, p.error, p.max_error, p.max_bound]);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndtomo::states::make_fock;

    #[test]
    fn commensurable_lines() {
        let t = coverage_scatter_table(&[1.0, 1.0], 50.0, 2000).unwrap();
        assert_eq!(count_lines(&t), Some(1));
        let t = coverage_scatter_table(&[1.0, 2.0], 50.0, 2000).unwrap();
        assert_eq!(count_lines(&t), Some(2));
        let t = coverage_scatter_table(&[2.0, 3.0], 50.0, 2000).unwrap();
        assert_eq!(count_lines(&t), Some(4));
        let t = coverage_scatter_table(&[1.0, 2f64.sqrt()], 50.0, 2000).unwrap();
        assert_eq!(count_lines(&t), None);
    }

    #[test]
    fn fock_wigner_is_symmetric() {
        let t = wigner_table(&make_fock(2, 4).unwrap(), 4.0, 41).unwrap();
        assert!(wigner_asymmetry(&t).unwrap() < 1e-12);
    }
}
