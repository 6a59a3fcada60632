use ndtomo::osc_forward::{evolve_and_record, OscillatorSystem};
use ndtomo::record::MeasurementRecord;
use ndtomo::semicontinuous::{
    periodic_forward, periodic_recon_1d, IndexPair, PeriodicSystem, RingMode,
};
use ndtomo::states::{make_coherent, make_fock, tensor_product, BasisTag, DensityMatrix};
use ndtomo::SpatialGrid;
use num_complex::Complex64;

fn two_mode_record(shots: Option<u64>) -> MeasurementRecord {
    let rho = tensor_product(
        &make_coherent(Complex64::new(0.4, -0.2), 8).unwrap(),
        &make_fock(1, 4).unwrap(),
    );
    let grid = SpatialGrid::new(-7.0, 7.0, 57).unwrap();
    let system = OscillatorSystem::new(vec![1.0, 2.0f64.sqrt()]).unwrap();
    evolve_and_record(
        &rho,
        &system,
        &[0.0, 0.3, 1.7],
        &[grid.clone(), grid],
        shots,
        9,
    )
    .unwrap()
}

#[test]
fn binary_round_trip_is_exact() {
    for shots in [None, Some(50)] {
        let rec = two_mode_record(shots);
        let mut buf = Vec::new();
        rec.write_binary(&mut buf).unwrap();
        assert_eq!(MeasurementRecord::read_binary(buf.as_slice()).unwrap(), rec);
    }
}

#[test]
fn csv_round_trip_is_exact() {
    for shots in [None, Some(50)] {
        let rec = two_mode_record(shots);
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        assert_eq!(MeasurementRecord::read_csv(buf.as_slice()).unwrap(), rec);
    }
}

#[test]
fn truncated_binary_is_rejected() {
    let rec = two_mode_record(None);
    let mut buf = Vec::new();
    rec.write_binary(&mut buf).unwrap();
    buf.truncate(buf.len() - 5);
    assert!(MeasurementRecord::read_binary(buf.as_slice()).is_err());
}

#[test]
fn ring_record_reconstructs_coherences_after_round_trip() {
    let basis = BasisTag::PlaneWave {
        n_min: -2,
        n_max: 2,
    };
    let amps = [0.3, -0.5, 0.6, 0.2, 0.4];
    let psi = ndtomo::linalg::CVector::from_iterator(
        5,
        amps.iter()
            .enumerate()
            .map(|(k, &a)| Complex64::new(a, 0.1 * k as f64)),
    );
    let psi = &psi / Complex64::new(psi.norm(), 0.0);
    let rho = DensityMatrix::from_pure(vec![basis], &psi).unwrap();
    let system = PeriodicSystem::new(vec![RingMode {
        length: 1.0,
        omega: 1.1,
    }])
    .unwrap();
    let grid = SpatialGrid {
        x_min: 0.0,
        x_max: 1.0,
        n_points: 48,
        periodic: true,
    };
    let period = system.period(0);
    let times: Vec<f64> = (0..=256).map(|k| period * k as f64 / 256.0).collect();
    let rec = periodic_forward(&rho, &system, &times, &[grid], None, 0).unwrap();
    let mut buf = Vec::new();
    rec.write_binary(&mut buf).unwrap();
    let rec = MeasurementRecord::read_binary(buf.as_slice()).unwrap();
    let pairs = IndexPair::window(rho.bases(), true);
    let partial = periodic_recon_1d(&rec, &pairs).unwrap();
    for r in -2..=2i64 {
        for c in -2..=2i64 {
            if r == c {
                continue;
            }
            let got = partial.get(&[r], &[c]).unwrap().value().unwrap();
            let want = rho.element(&[r], &[c]).unwrap();
            assert!((got - want).norm() < 1e-10, "({r},{c}): {got} vs {want}");
        }
    }
}
