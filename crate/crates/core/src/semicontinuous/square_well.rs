//! Particle in a box.
//!
//! `Pr(x,t) = Σ ρ(n,n′) (1/L)[cos(Δn πx/L) − cos(n̄ πx/L)] e^{−iΩ′ n̄ Δn t}`.
//! For `β ≠ 0`, `2∫cos(βπx/L)·` keeps `|Δn| = |β|` and `n̄ = |β|`; the
//! time average at `ν > |β|` then isolates `ρ(n, n′)`. For `β = 0` the same
//! projection only returns the trace, so the diagonal uses
//! `−2∫cos(νπx/L)·`, which keeps `n̄ = ν` with the time average selecting
//! `Δn = 0`.

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::record::{MeasurementRecord, SystemSpec};
use crate::states::{BasisTag, DensityMatrix};

use super::engine::{check_exact_times, NdProjector, SemicontinuousRecorder};
use super::periodic::window_blocks;
use super::{
    incommensurability_check, BoxSystem, EntryStatus, IndexPair, NdReconstruction,
    PartialDensityMatrix,
};

pub fn box_forward(
    rho: &DensityMatrix,
    system: &BoxSystem,
    times: &[f64],
    grids: &[SpatialGrid],
    shots: Option<u64>,
    seed: u64,
) -> Result<MeasurementRecord> {
    SemicontinuousRecorder::new(rho, &SystemSpec::Box(system.clone()), grids, shots, seed)?
        .record(times)
}

fn system_of(record: &MeasurementRecord) -> Result<BoxSystem> {
    record.validate()?;
    match &record.header.system {
        SystemSpec::Box(s) => Ok(s.clone()),
        other => Err(Error::Basis(format!(
            "record holds a {} system, not a box",
            other.kind()
        ))),
    }
}

/// Smallest box window holding every pair.
pub fn pair_window(pairs: &[IndexPair], modes: usize) -> Vec<BasisTag> {
    (0..modes)
        .map(|j| {
            let n_max = pairs
                .iter()
                .flat_map(|p| [p.row()[j], p.col()[j]])
                .max()
                .unwrap_or(1)
                .max(1) as usize;
            BasisTag::BoxSine { n_max }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct BoxReconstruction {
    pub partial: PartialDensityMatrix,
    /// Projected state, when every element of the window was requested.
    pub state: Option<DensityMatrix>,
    pub projection_distance: Option<f64>,
}

fn finish(partial: PartialDensityMatrix) -> Result<BoxReconstruction> {
    if partial.is_complete() {
        let (state, dist) = partial.to_state()?;
        Ok(BoxReconstruction {
            partial,
            state: Some(state),
            projection_distance: Some(dist),
        })
    } else {
        Ok(BoxReconstruction {
            partial,
            state: None,
            projection_distance: None,
        })
    }
}

/// Exact one-mode reconstruction from a record spanning whole periods
/// `2π/Ω′`; diagonal elements included.
pub fn box_recon_1d(record: &MeasurementRecord, pairs: &[IndexPair]) -> Result<BoxReconstruction> {
    let system = system_of(record)?;
    if system.modes.len() != 1 {
        return Err(Error::Shape(format!(
            "one-mode reconstruction of a {}-mode record",
            system.modes.len()
        )));
    }
    for p in pairs {
        p.check_box(1)?;
    }
    let mut blocks: Vec<_> = record.blocks.iter().collect();
    blocks.sort_by(|a, b| a.t.total_cmp(&b.t));
    let times: Vec<f64> = blocks.iter().map(|b| b.t).collect();
    let window = pair_window(pairs, 1);
    let n_max = window[0].dim() as i64;
    check_exact_times(&times, system.period(0), 2 * (n_max * n_max - 1))?;
    let mut proj = NdProjector::well(&system, &record.header.grids, pairs)?;
    for b in blocks {
        proj.push_block(b)?;
    }
    let values = proj.averages()?;
    let mut partial = PartialDensityMatrix::unknown(window, "not requested");
    for (p, v) in pairs.iter().zip(values) {
        partial.set(
            &p.row(),
            &p.col(),
            EntryStatus::Known {
                re: v.re,
                im: v.im,
                bound: None,
            },
        )?;
    }
    finish(partial)
}

/// Per-mode elements `(n, n′)` that survive the spatial projection of `pair`.
fn surviving(pair: &IndexPair, j: usize, n_max: i64) -> Vec<(i64, i64)> {
    let inside = |n: i64| (1..=n_max).contains(&n);
    let (nu, beta) = (pair.nu[j], pair.beta[j]);
    let mut out = Vec::new();
    let by_difference = |d: i64, out: &mut Vec<(i64, i64)>| {
        for n in 1..=n_max {
            if inside(n - d) {
                out.push((n, n - d));
            }
        }
    };
    let by_sum = |s: i64, out: &mut Vec<(i64, i64)>| {
        for n in 1..s {
            if inside(n) && inside(s - n) {
                out.push((n, s - n));
            }
        }
    };
    if beta != 0 {
        by_difference(beta, &mut out);
        by_difference(-beta, &mut out);
        by_sum(beta.abs(), &mut out);
    } else {
        by_sum(nu, &mut out);
        by_difference(nu, &mut out);
        by_difference(-nu, &mut out);
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Smallest `|Σ_j Ω′_j (ν_jβ_j − n̄_jΔn_j)|` over the other elements that
/// survive the spatial projection of `pair`.
fn box_delta_min(pair: &IndexPair, window: &[BasisTag], scales: &[f64]) -> Result<Option<f64>> {
    let n = scales.len();
    let target = (pair.row(), pair.col());
    let options: Vec<Vec<(i64, i64)>> = (0..n)
        .map(|j| surviving(pair, j, window[j].dim() as i64))
        .collect();
    let contrib: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            options[j]
                .iter()
                .map(|&(a, b)| scales[j] * (pair.nu[j] * pair.beta[j] - (a + b) * (a - b)) as f64)
                .collect()
        })
        .collect();
    let scale: f64 = contrib
        .iter()
        .flatten()
        .map(|v| v.abs())
        .fold(1.0, f64::max);
    let mut best: Option<f64> = None;
    let mut idx = vec![0usize; n];
    if options.iter().any(Vec::is_empty) {
        return Ok(None);
    }
    'outer: loop {
        let row: Vec<i64> = (0..n).map(|j| options[j][idx[j]].0).collect();
        let col: Vec<i64> = (0..n).map(|j| options[j][idx[j]].1).collect();
        if (row.clone(), col.clone()) != target {
            let d: f64 = (0..n).map(|j| contrib[j][idx[j]]).sum();
            if d.abs() <= 1e-9 * scale {
                return Err(Error::Incommensurability(format!(
                    "element {pair} shares its time key with rho({row:?}, {col:?})"
                )));
            }
            best = Some(best.map_or(d.abs(), |b: f64| b.min(d.abs())));
        }
        for j in (0..n).rev() {
            idx[j] += 1;
            if idx[j] < options[j].len() {
                continue 'outer;
            }
            idx[j] = 0;
        }
        break;
    }
    Ok(best)
}

/// Leakage bounds `3^N/(Δ_min·Tcap)` per pair: each mode's projection keeps
/// three families of elements, each of total modulus at most one.
pub fn box_leakage_bounds(system: &BoxSystem, pairs: &[IndexPair], tcap: f64) -> Result<Vec<f64>> {
    let n = system.modes.len();
    let window = pair_window(pairs, n);
    let amplitude = 3f64.powi(n as i32);
    pairs
        .iter()
        .map(|p| {
            p.check_box(n)?;
            Ok(
                box_delta_min(p, &window, &system.omegas())?
                    .map_or(0.0, |d| amplitude / (d * tcap)),
            )
        })
        .collect()
}

/// Builds the reconstruction from a projector that has consumed exactly the
/// window `[t₀, t₀ + 2·Tcap]`.
pub fn box_nd_from_projector(
    system: &BoxSystem,
    proj: &NdProjector,
    tcap: f64,
) -> Result<NdReconstruction> {
    let report = incommensurability_check(&system.omegas());
    report.require_incommensurable()?;
    let span = proj.span();
    if (span - 2.0 * tcap).abs() > 1e-9 * span.max(1.0) {
        return Err(Error::TimeGrid(format!(
            "projector spans {span}, expected 2 Tcap = {}",
            2.0 * tcap
        )));
    }
    let pairs = proj.pairs();
    let bounds = box_leakage_bounds(system, pairs, tcap)?;
    let values = proj.averages()?;
    let mut partial =
        PartialDensityMatrix::unknown(pair_window(pairs, system.modes.len()), "not requested");
    for ((p, v), b) in pairs.iter().zip(values).zip(&bounds) {
        partial.set(
            &p.row(),
            &p.col(),
            EntryStatus::Known {
                re: v.re,
                im: v.im,
                bound: Some(*b),
            },
        )?;
    }
    let max_bound = bounds.iter().copied().fold(0.0, f64::max);
    Ok(NdReconstruction {
        partial,
        tcap,
        max_bound,
        incommensurability: report,
    })
}

/// Finite-time multi-mode reconstruction over `[t₀, t₀ + 2·Tcap]`.
pub fn box_recon_nd(
    record: &MeasurementRecord,
    pairs: &[IndexPair],
    tcap: f64,
    tolerance: Option<f64>,
) -> Result<NdReconstruction> {
    let system = system_of(record)?;
    incommensurability_check(&system.omegas()).require_incommensurable()?;
    if let Some(tol) = tolerance {
        let bound = box_leakage_bounds(&system, pairs, tcap)?
            .into_iter()
            .fold(0.0, f64::max);
        if bound > tol {
            return Err(Error::InsufficientTimeSpan {
                bound,
                tolerance: tol,
            });
        }
    }
    let mut proj = NdProjector::well(&system, &record.header.grids, pairs)?;
    for b in window_blocks(record, tcap)? {
        proj.push_block(b)?;
    }
    box_nd_from_projector(&system, &proj, tcap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, CMatrix, CVector};
    use crate::record::BlockData;
    use crate::semicontinuous::WellMode;
    use std::f64::consts::PI;

    fn well(l: f64, w: f64) -> BoxSystem {
        BoxSystem::new(vec![WellMode {
            length: l,
            omega_prime: w,
        }])
        .unwrap()
    }

    fn pure(amps: &[(usize, f64)], n_max: usize) -> DensityMatrix {
        let mut v = CVector::zeros(n_max);
        for &(n, a) in amps {
            v[n - 1] = c(a, 0.0);
        }
        DensityMatrix::from_pure(vec![BasisTag::BoxSine { n_max }], &v).unwrap()
    }

    fn density(rec: &MeasurementRecord, i: usize) -> &[f64] {
        match &rec.blocks[i].data {
            BlockData::Distribution(p) => p,
            _ => panic!("expected a distribution"),
        }
    }

    #[test]
    fn ground_state_profile() {
        let l = 2.0;
        let g = SpatialGrid::new(0.0, l, 101).unwrap();
        let rec = box_forward(
            &pure(&[(1, 1.0)], 3),
            &well(l, 1.0),
            &[0.0, 3.7],
            std::slice::from_ref(&g),
            None,
            0,
        )
        .unwrap();
        for i in 0..2 {
            for (k, x) in g.points().iter().enumerate() {
                let want = 2.0 / l * (PI * x / l).sin().powi(2);
                assert!((density(&rec, i)[k] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn breathing_superposition() {
        let (l, w) = (1.0, 0.8);
        let g = SpatialGrid::new(0.0, l, 81).unwrap();
        let s = 0.5f64.sqrt();
        let rho = pure(&[(1, s), (2, s)], 2);
        let period = 2.0 * PI / (3.0 * w);
        let rec = box_forward(
            &rho,
            &well(l, w),
            &[0.3, 0.3 + period, 0.3 + period / 2.0],
            &[g],
            None,
            0,
        )
        .unwrap();
        let (a, b, h) = (density(&rec, 0), density(&rec, 1), density(&rec, 2));
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(a.iter().zip(h).any(|(x, y)| (x - y).abs() > 0.1));
        assert!(a[0].abs() < 1e-10 && a[a.len() - 1].abs() < 1e-10);
    }

    fn exact_record(rho: &DensityMatrix, sys: &BoxSystem, n_max: usize) -> MeasurementRecord {
        let g = SpatialGrid::new(0.0, sys.modes[0].length, 8 * n_max + 1).unwrap();
        let k = 8 * (n_max * n_max);
        let times: Vec<f64> = (0..=k)
            .map(|i| i as f64 * sys.period(0) / k as f64)
            .collect();
        box_forward(rho, sys, &times, &[g], None, 0).unwrap()
    }

    #[test]
    fn mixed_diagonal_round_trip() {
        let sys = well(1.0, 1.0);
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.6, 0.0), c(0.4, 0.0)]));
        let rho = DensityMatrix::from_matrix(vec![BasisTag::BoxSine { n_max: 2 }], m).unwrap();
        let rec = exact_record(&rho, &sys, 2);
        let out = box_recon_1d(&rec, &IndexPair::window(rho.bases(), false)).unwrap();
        let est = out.partial.to_matrix().unwrap();
        assert!(crate::linalg::max_abs_diff(&est, rho.matrix()) < 1e-8);
        assert!(out.projection_distance.unwrap() < 1e-8);
    }

    #[test]
    fn superposition_coherence() {
        let sys = well(1.3, 0.7);
        let s = 0.5f64.sqrt();
        let rho = pure(&[(1, s), (2, s)], 3);
        let rec = exact_record(&rho, &sys, 3);
        let out = box_recon_1d(&rec, &[IndexPair::new(vec![3], vec![-1])]).unwrap();
        let v = out.partial.get(&[1], &[2]).unwrap().value().unwrap();
        assert!((v - c(0.5, 0.0)).norm() < 1e-10);
        assert!(out.state.is_none());
        assert!(matches!(
            box_recon_1d(&rec, &[IndexPair::new(vec![1], vec![2])]),
            Err(Error::Parity(_))
        ));
        assert!(matches!(
            box_recon_1d(&rec, &[IndexPair::new(vec![2], vec![2])]),
            Err(Error::IndexDomain(_))
        ));
    }

    #[test]
    fn surviving_families() {
        // beta = 1 at nu = 3 in a 3-level window.
        let s = surviving(&IndexPair::new(vec![3], vec![1]), 0, 3);
        assert_eq!(s, vec![(1, 2), (2, 1), (2, 3), (3, 2)]);
        // beta = 0 at nu = 4: n-bar = 4 or |dn| = 4 (none inside).
        let s = surviving(&IndexPair::new(vec![4], vec![0]), 0, 3);
        assert_eq!(s, vec![(1, 3), (2, 2), (3, 1)]);
    }

    #[test]
    fn commensurable_box_is_rejected() {
        let sys = BoxSystem::new(vec![
            WellMode {
                length: 1.0,
                omega_prime: 1.0,
            },
            WellMode {
                length: 1.0,
                omega_prime: 3.0,
            },
        ])
        .unwrap();
        let g = SpatialGrid::new(0.0, 1.0, 33).unwrap();
        let a = pure(&[(1, 1.0)], 2);
        let rho = crate::states::tensor_product(&a, &a);
        let rec = box_forward(&rho, &sys, &[0.0, 1.0], &[g.clone(), g], None, 0).unwrap();
        let r = box_recon_nd(&rec, &[IndexPair::new(vec![2, 2], vec![0, 0])], 0.5, None);
        assert!(matches!(r, Err(Error::Incommensurability(_))));
    }

    #[test]
    fn separable_diagonal_state_recovered_in_nd() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let sys = BoxSystem::new(vec![
            WellMode {
                length: 1.0,
                omega_prime: 1.0,
            },
            WellMode {
                length: 1.0,
                omega_prime: phi,
            },
        ])
        .unwrap();
        let g = SpatialGrid::new(0.0, 1.0, 17).unwrap();
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.7, 0.0), c(0.3, 0.0)]));
        let a = DensityMatrix::from_matrix(vec![BasisTag::BoxSine { n_max: 2 }], m).unwrap();
        let rho = crate::states::tensor_product(&a, &a);
        let tcap: f64 = 100.0;
        let dt = 0.02;
        let times: Vec<f64> = (0..=(2.0 * tcap / dt).round() as usize)
            .map(|k| k as f64 * dt)
            .collect();
        let rec = box_forward(&rho, &sys, &times, &[g.clone(), g], None, 0).unwrap();
        let out = box_recon_nd(&rec, &IndexPair::window(rho.bases(), false), tcap, None).unwrap();
        let est = out.partial.to_matrix().unwrap();
        let d = rho.dim();
        for r in 0..d {
            for col in 0..d {
                let EntryStatus::Known { bound, .. } = out.partial.entry(r, col) else {
                    panic!()
                };
                assert!((est[(r, col)] - rho.matrix()[(r, col)]).norm() <= bound.unwrap() + 1e-6);
            }
        }
        let (state, _) = out.partial.to_state().unwrap();
        assert!(crate::states::compare(&state, &rho).unwrap().fidelity > 0.99);
    }
}
