//! Free particle on a ring.
//!
//! `Pr(x,t) = Σ ρ(n,n′) (1/L) e^{2πi(n−n′)x/L} e^{−iΩ(n²−n′²)t}`. Projecting on
//! `e^{−2πiβx/L}` keeps `n − n′ = β`; averaging against `e^{iΩνβt}` then keeps
//! `n + n′ = ν`. With `β = 0` the projection is the trace, so the diagonal is
//! invisible.

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::record::{MeasurementRecord, SystemSpec};
use crate::states::{BasisTag, DensityMatrix};

use super::engine::{check_exact_times, NdProjector, SemicontinuousRecorder};
use super::{
    incommensurability_check, EntryStatus, IndexPair, NdReconstruction, PartialDensityMatrix,
    PeriodicSystem,
};

pub const DIAGONAL_NOTE: &str = "beta = 0 projects onto the trace and always integrates to 1";

pub fn periodic_forward(
    rho: &DensityMatrix,
    system: &PeriodicSystem,
    times: &[f64],
    grids: &[SpatialGrid],
    shots: Option<u64>,
    seed: u64,
) -> Result<MeasurementRecord> {
    SemicontinuousRecorder::new(
        rho,
        &SystemSpec::Periodic(system.clone()),
        grids,
        shots,
        seed,
    )?
    .record(times)
}

fn system_of(record: &MeasurementRecord) -> Result<PeriodicSystem> {
    record.validate()?;
    match &record.header.system {
        SystemSpec::Periodic(s) => Ok(s.clone()),
        other => Err(Error::Basis(format!(
            "record holds a {} system, not a periodic one",
            other.kind()
        ))),
    }
}

/// Smallest plane-wave window (containing 0) that holds every pair.
pub fn pair_window(pairs: &[IndexPair], modes: usize) -> Vec<BasisTag> {
    (0..modes)
        .map(|j| {
            let labels = pairs.iter().flat_map(|p| [p.row()[j], p.col()[j]]);
            let (lo, hi) = labels.fold((0i64, 0i64), |(lo, hi), n| (lo.min(n), hi.max(n)));
            BasisTag::PlaneWave {
                n_min: lo,
                n_max: hi,
            }
        })
        .collect()
}

fn diagonal_reason() -> String {
    format!("diagonal unrecoverable: {DIAGONAL_NOTE}")
}

fn mark_unknowns(partial: &mut PartialDensityMatrix) {
    let d = partial.dim();
    for r in 0..d {
        let lr = partial.labels(r);
        for col in 0..d {
            let lc = partial.labels(col);
            if lr.iter().zip(&lc).any(|(a, b)| a == b) {
                partial.entries[r * d + col] = EntryStatus::Unknown {
                    reason: diagonal_reason(),
                };
            } else {
                partial.entries[r * d + col] = EntryStatus::Unknown {
                    reason: "not requested".into(),
                };
            }
        }
    }
}

fn sorted_blocks(record: &MeasurementRecord) -> Result<Vec<&crate::record::RecordBlock>> {
    let mut blocks: Vec<_> = record.blocks.iter().collect();
    blocks.sort_by(|a, b| a.t.total_cmp(&b.t));
    if blocks.windows(2).any(|w| w[0].t == w[1].t) {
        return Err(Error::TimeGrid("record has repeated times".into()));
    }
    Ok(blocks)
}

/// Exact one-mode reconstruction of the requested off-diagonal elements
/// from a record spanning whole periods `2π/Ω`.
pub fn periodic_recon_1d(
    record: &MeasurementRecord,
    pairs: &[IndexPair],
) -> Result<PartialDensityMatrix> {
    let system = system_of(record)?;
    if system.modes.len() != 1 {
        return Err(Error::Shape(format!(
            "one-mode reconstruction of a {}-mode record",
            system.modes.len()
        )));
    }
    for p in pairs {
        p.check(1)?;
        if p.beta[0] == 0 {
            return Err(Error::DiagonalUnrecoverable(format!(
                "{p}: {DIAGONAL_NOTE}"
            )));
        }
    }
    let blocks = sorted_blocks(record)?;
    let times: Vec<f64> = blocks.iter().map(|b| b.t).collect();
    let kmax = 2 * pairs
        .iter()
        .map(|p| (p.nu[0] * p.beta[0]).abs())
        .max()
        .unwrap_or(0);
    check_exact_times(&times, system.period(0), kmax)?;
    let mut proj = NdProjector::periodic(&system, &record.header.grids, pairs)?;
    for b in &blocks {
        proj.push_block(b)?;
    }
    let values = proj.averages()?;
    let mut partial = PartialDensityMatrix::unknown(pair_window(pairs, 1), "not requested");
    mark_unknowns(&mut partial);
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
    Ok(partial)
}

/// Smallest nonzero `|Σ_j Ω_j β_j (ν_j − n̄_j)|` over the other elements in the
/// window sharing the projection `β`, or `None` if there are none.
fn ring_delta_min(pair: &IndexPair, window: &[BasisTag], omegas: &[f64]) -> Result<Option<f64>> {
    let n = omegas.len();
    let mut options: Vec<Vec<i64>> = Vec::with_capacity(n);
    for j in 0..n {
        let (lo, hi) = match window[j] {
            BasisTag::PlaneWave { n_min, n_max } => (n_min, n_max),
            _ => unreachable!("plane-wave window"),
        };
        let b = pair.beta[j];
        options.push(
            (lo..=hi)
                .filter(|&m| (lo..=hi).contains(&(m - b)))
                .map(|m| 2 * m - b)
                .collect(),
        );
    }
    let scale: f64 = omegas
        .iter()
        .zip(&pair.beta)
        .zip(&pair.nu)
        .map(|((w, b), v)| w * (b * v).abs() as f64)
        .sum::<f64>()
        .max(1.0);
    let mut best: Option<f64> = None;
    let mut idx = vec![0usize; n];
    'outer: loop {
        let nbar: Vec<i64> = (0..n).map(|j| options[j][idx[j]]).collect();
        if nbar != pair.nu {
            let d: f64 = (0..n)
                .map(|j| omegas[j] * (pair.beta[j] * (pair.nu[j] - nbar[j])) as f64)
                .sum();
            if d.abs() <= 1e-9 * scale {
                return Err(Error::Incommensurability(format!(
                    "element {pair} shares its time key with n-bar {nbar:?}"
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

/// Blocks with `t ∈ [t₀, t₀ + 2·Tcap]`, after checking the record reaches the
/// end of the window.
pub(crate) fn window_blocks(
    record: &MeasurementRecord,
    tcap: f64,
) -> Result<Vec<&crate::record::RecordBlock>> {
    if !(tcap > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Tcap must be positive, got {tcap}"
        )));
    }
    let blocks = sorted_blocks(record)?;
    let t0 = blocks
        .first()
        .map(|b| b.t)
        .ok_or_else(|| Error::TimeGrid("empty record".into()))?;
    let end = t0 + 2.0 * tcap;
    let tol = 1e-9 * end.abs().max(1.0);
    let used: Vec<_> = blocks.into_iter().filter(|b| b.t <= end + tol).collect();
    let last = used.last().map(|b| b.t).unwrap_or(t0);
    if last < end - tol {
        return Err(Error::TimeGrid(format!(
            "record ends at t = {last}, before t0 + 2 Tcap = {end}"
        )));
    }
    Ok(used)
}

/// Finite-time multi-mode reconstruction. Elements with a vanishing `β_j`
/// are flagged unrecoverable; the rest carry the bound `1/(Δ_min·Tcap)` on
/// leakage from other elements (averaging window `[t₀, t₀ + 2·Tcap]`).
pub fn periodic_recon_nd(
    record: &MeasurementRecord,
    pairs: &[IndexPair],
    tcap: f64,
    tolerance: Option<f64>,
) -> Result<NdReconstruction> {
    let system = system_of(record)?;
    let n = system.modes.len();
    incommensurability_check(&system.omegas()).require_incommensurable()?;
    for p in pairs {
        p.check(n)?;
    }
    let (good, bad): (Vec<IndexPair>, Vec<IndexPair>) = pairs
        .iter()
        .cloned()
        .partition(|p| p.beta.iter().all(|&b| b != 0));
    if good.is_empty() {
        let first = bad.first().map(|p| p.to_string()).unwrap_or_default();
        return Err(Error::DiagonalUnrecoverable(format!(
            "every requested element has a vanishing beta, e.g. {first}: {DIAGONAL_NOTE}"
        )));
    }
    if let Some(tol) = tolerance {
        let bound = ring_leakage_bounds(&system, &good, pairs, tcap)?
            .into_iter()
            .fold(0.0, f64::max);
        if bound > tol {
            return Err(Error::InsufficientTimeSpan {
                bound,
                tolerance: tol,
            });
        }
    }
    let mut proj = NdProjector::periodic(&system, &record.header.grids, &good)?;
    for b in window_blocks(record, tcap)? {
        proj.push_block(b)?;
    }
    let mut out = nd_from_projector(&system, &proj, pairs, tcap)?;
    for p in &bad {
        out.partial.set(
            &p.row(),
            &p.col(),
            EntryStatus::Unknown {
                reason: diagonal_reason(),
            },
        )?;
    }
    Ok(out)
}

fn ring_leakage_bounds(
    system: &PeriodicSystem,
    good: &[IndexPair],
    all: &[IndexPair],
    tcap: f64,
) -> Result<Vec<f64>> {
    let window = pair_window(all, system.modes.len());
    let omegas = system.omegas();
    good.iter()
        .map(|p| Ok(ring_delta_min(p, &window, &omegas)?.map_or(0.0, |d| 1.0 / (d * tcap))))
        .collect()
}

/// Builds the reconstruction from a projector that has consumed exactly the
/// window `[t₀, t₀ + 2·Tcap]`.
pub fn periodic_nd_from_projector(
    system: &PeriodicSystem,
    proj: &NdProjector,
    tcap: f64,
) -> Result<NdReconstruction> {
    nd_from_projector(system, proj, proj.pairs(), tcap)
}

fn nd_from_projector(
    system: &PeriodicSystem,
    proj: &NdProjector,
    all: &[IndexPair],
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
    let good = proj.pairs();
    let bounds = ring_leakage_bounds(system, good, all, tcap)?;
    let max_bound = bounds.iter().copied().fold(0.0, f64::max);
    let values = proj.averages()?;
    let mut partial =
        PartialDensityMatrix::unknown(pair_window(all, system.modes.len()), "not requested");
    mark_unknowns(&mut partial);
    for ((p, v), bound) in good.iter().zip(values).zip(bounds) {
        partial.set(
            &p.row(),
            &p.col(),
            EntryStatus::Known {
                re: v.re,
                im: v.im,
                bound: Some(bound),
            },
        )?;
    }
    Ok(NdReconstruction {
        partial,
        tcap,
        max_bound,
        incommensurability: report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, CVector};
    use crate::osc_forward::integrate;
    use crate::semicontinuous::RingMode;
    use std::f64::consts::PI;

    fn ring(l: f64, w: f64) -> PeriodicSystem {
        PeriodicSystem::new(vec![RingMode {
            length: l,
            omega: w,
        }])
        .unwrap()
    }

    fn basis(n: i64) -> Vec<BasisTag> {
        vec![BasisTag::PlaneWave {
            n_min: -n,
            n_max: n,
        }]
    }

    fn superposition(a: i64, b: i64, n: i64) -> DensityMatrix {
        let bases = basis(n);
        let mut v = CVector::zeros(bases[0].dim());
        v[bases[0].position(a).unwrap()] += c(1.0, 0.0);
        v[bases[0].position(b).unwrap()] += c(1.0, 0.0);
        v /= c(v.norm(), 0.0);
        DensityMatrix::from_pure(bases, &v).unwrap()
    }

    fn exact_times(period: f64, k: usize) -> Vec<f64> {
        (0..=k).map(|i| i as f64 * period / k as f64).collect()
    }

    #[test]
    fn eigenstates_are_flat() {
        let sys = ring(2.0, 1.3);
        let g = SpatialGrid::periodic(0.0, 2.0, 64).unwrap();
        for n in [-2, 0, 3] {
            let rho = superposition(n, n, 3);
            let rec =
                periodic_forward(&rho, &sys, &[0.0, 0.7, 5.0], std::slice::from_ref(&g), None, 0).unwrap();
            for b in &rec.blocks {
                let crate::record::BlockData::Distribution(p) = &b.data else {
                    panic!()
                };
                assert!(p.iter().all(|v| (v - 0.5).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn two_term_superposition_matches_hand_expansion() {
        let (l, w) = (1.5, 0.9);
        let sys = ring(l, w);
        let g = SpatialGrid::periodic(0.0, l, 48).unwrap();
        let rho = superposition(0, 1, 2);
        for &t in &[0.0, 0.4, 2.2] {
            let rec = periodic_forward(&rho, &sys, &[t], std::slice::from_ref(&g), None, 0).unwrap();
            let crate::record::BlockData::Distribution(p) = &rec.blocks[0].data else {
                panic!()
            };
            for (i, x) in g.points().iter().enumerate() {
                let want = (1.0 + (2.0 * PI * x / l - w * t).cos()) / l;
                assert!((p[i] - want).abs() < 1e-12);
            }
            assert!((integrate(std::slice::from_ref(&g), p) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn one_mode_round_trip() {
        let sys = ring(1.0, 1.0);
        let g = SpatialGrid::periodic(0.0, 1.0, 64).unwrap();
        let rho = superposition(1, 2, 3);
        let rec =
            periodic_forward(&rho, &sys, &exact_times(sys.period(0), 128), &[g], None, 0).unwrap();
        let pairs = vec![
            IndexPair::new(vec![3], vec![-1]),
            IndexPair::new(vec![3], vec![1]),
            IndexPair::new(vec![1], vec![-3]),
        ];
        let part = periodic_recon_1d(&rec, &pairs).unwrap();
        let v = part.get(&[1], &[2]).unwrap().value().unwrap();
        assert!((v - c(0.5, 0.0)).norm() < 1e-10);
        assert!(part.get(&[-1], &[2]).unwrap().value().unwrap().norm() < 1e-10);
        assert!(matches!(
            part.get(&[1], &[1]).unwrap(),
            EntryStatus::Unknown { .. }
        ));
        let diag = periodic_recon_1d(&rec, &[IndexPair::new(vec![2], vec![0])]);
        assert!(matches!(diag, Err(Error::DiagonalUnrecoverable(_))));
    }

    #[test]
    fn eigenstate_has_no_coherences() {
        let sys = ring(1.0, 2.0);
        let g = SpatialGrid::periodic(0.0, 1.0, 64).unwrap();
        let rho = superposition(2, 2, 3);
        let rec =
            periodic_forward(&rho, &sys, &exact_times(sys.period(0), 128), &[g], None, 0).unwrap();
        let pairs = IndexPair::window(&basis(3), true);
        let part = periodic_recon_1d(&rec, &pairs).unwrap();
        assert!(part.max_known_error(&rho).unwrap() < 1e-10);
    }

    #[test]
    fn incomplete_period_is_rejected() {
        let sys = ring(1.0, 1.0);
        let g = SpatialGrid::periodic(0.0, 1.0, 64).unwrap();
        let rho = superposition(0, 1, 2);
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.05).collect();
        let rec = periodic_forward(&rho, &sys, &times, &[g], None, 0).unwrap();
        assert!(matches!(
            periodic_recon_1d(&rec, &[IndexPair::new(vec![1], vec![-1])]),
            Err(Error::TimeGrid(_))
        ));
    }

    #[test]
    fn commensurable_nd_is_rejected() {
        let sys = PeriodicSystem::new(vec![
            RingMode {
                length: 1.0,
                omega: 1.0,
            },
            RingMode {
                length: 1.0,
                omega: 2.0,
            },
        ])
        .unwrap();
        let g = SpatialGrid::periodic(0.0, 1.0, 32).unwrap();
        let a = superposition(0, 1, 1);
        let rho = crate::states::tensor_product(&a, &a);
        let rec = periodic_forward(&rho, &sys, &[0.0, 1.0], &[g.clone(), g], None, 0).unwrap();
        let r = periodic_recon_nd(&rec, &[IndexPair::new(vec![1, 1], vec![1, 1])], 0.5, None);
        assert!(matches!(r, Err(Error::Incommensurability(_))));
    }

    #[test]
    fn nd_round_trip_within_bound() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let sys = PeriodicSystem::new(vec![
            RingMode {
                length: 1.0,
                omega: 1.0,
            },
            RingMode {
                length: 1.0,
                omega: phi,
            },
        ])
        .unwrap();
        let g = SpatialGrid::periodic(0.0, 1.0, 32).unwrap();
        let a = superposition(0, 1, 1);
        let rho = crate::states::tensor_product(&a, &a);
        let tcap: f64 = 200.0;
        let dt = 0.02;
        let times: Vec<f64> = (0..=(2.0 * tcap / dt).round() as usize)
            .map(|k| k as f64 * dt)
            .collect();
        let rec = periodic_forward(&rho, &sys, &times, &[g.clone(), g], None, 0).unwrap();
        let pairs = IndexPair::window(rho.bases(), false);
        let out = periodic_recon_nd(&rec, &pairs, tcap, None).unwrap();
        let d = out.partial.dim();
        let mut checked = 0;
        for r in 0..d {
            for col in 0..d {
                if let EntryStatus::Known { re, im, bound } = out.partial.entry(r, col) {
                    let err = (c(*re, *im) - rho.matrix()[(r, col)]).norm();
                    assert!(
                        err <= bound.unwrap() + 1e-6,
                        "entry {r},{col}: {err} > {bound:?}"
                    );
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, 36);
        let only_diag =
            periodic_recon_nd(&rec, &[IndexPair::new(vec![0, 1], vec![0, 1])], tcap, None);
        assert!(matches!(only_diag, Err(Error::DiagonalUnrecoverable(_))));
        assert!(matches!(
            periodic_recon_nd(&rec, &pairs, tcap, Some(1e-9)),
            Err(Error::InsufficientTimeSpan { .. })
        ));
    }
}
