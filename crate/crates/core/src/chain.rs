//! Ring of identical oscillators with nearest-neighbour hopping, and its
//! normal modes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::osc_forward::{OscillatorRecorder, OscillatorSystem};
use crate::osc_recon::coverage::{classify_pair, RatioClass};
use crate::record::{BlockData, MeasurementRecord, RecordBlock, RecordHeader, SystemSpec};
use crate::states::make_gaussian;

/// Eigenvalues closer than this are treated as one degenerate frequency.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    #[default]
    Ring,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSystem {
    pub n: usize,
    pub omega: f64,
    pub kappa: f64,
    #[serde(default)]
    pub topology: Topology,
}

impl ChainSystem {
    pub fn new(n: usize, omega: f64, kappa: f64) -> Result<Self> {
        let s = Self {
            n,
            omega,
            kappa,
            topology: Topology::Ring,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "a chain needs at least 2 sites, got {}",
                self.n
            )));
        }
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        if !self.kappa.is_finite() || self.kappa.abs() > self.omega {
            return Err(Error::InvalidParameter(format!(
                "need |kappa| <= omega, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Coupling matrix `𝒟`: `ω` on the diagonal, `κ` between ring neighbours.
    pub fn coupling_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut d = DMatrix::from_diagonal_element(n, n, self.omega);
        for j in 0..n {
            let k = (j + 1) % n;
            d[(j, k)] += self.kappa;
            d[(k, j)] += self.kappa;
        }
        d
    }

    /// `ω + 2κ cos(2πj/N)` for `j = 1…N`, ascending.
    pub fn closed_form_spectrum(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (1..=self.n)
            .map(|j| self.omega + 2.0 * self.kappa * (2.0 * PI * j as f64 / self.n as f64).cos())
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Spectrum `ω + 2κ cos(jπ/(N+1))` of an open chain, for comparison.
pub fn line_spectrum(n: usize, omega: f64, kappa: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (1..=n)
        .map(|j| omega + 2.0 * kappa * (j as f64 * PI / (n + 1) as f64).cos())
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalModeBasis {
    /// Ascending eigenfrequencies `ω′_j`.
    pub eigenfrequencies: Vec<f64>,
    /// Orthogonal matrix whose columns are the eigenvectors of `𝒟`.
    pub mode_matrix: DMatrix<f64>,
    pub degeneracy_groups: Vec<Vec<usize>>,
}

impl NormalModeBasis {
    pub fn identity(omegas: &[f64]) -> Self {
        let n = omegas.len();
        Self {
            eigenfrequencies: omegas.to_vec(),
            mode_matrix: DMatrix::identity(n, n),
            degeneracy_groups: group_degenerate(omegas),
        }
    }

    pub fn modes(&self) -> usize {
        self.eigenfrequencies.len()
    }

    /// Phase-space map `(x, p) ↦ (Uᵀx, Uᵀp)` in interleaved order.
    pub fn symplectic(&self) -> DMatrix<f64> {
        self.mode_matrix
            .transpose()
            .kronecker(&DMatrix::<f64>::identity(2, 2))
    }
}

fn group_degenerate(sorted: &[f64]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &w) in sorted.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (w - sorted[*g.last().unwrap()]).abs() <= DEGENERACY_TOL => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

pub fn normal_modes(system: &ChainSystem) -> Result<NormalModeBasis> {
    system.validate()?;
    let d = system.coupling_matrix();
    let eig = d.clone().symmetric_eigen();
    let n = system.n;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let freqs: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut u = DMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    // Fix the sign convention: largest-magnitude component of each column positive.
    for k in 0..n {
        let col = u.column(k);
        let imax = col.iamax();
        if col[imax] < 0.0 {
            u.column_mut(k).neg_mut();
        }
    }
    let closed = system.closed_form_spectrum();
    let worst = freqs
        .iter()
        .zip(&closed)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if worst > 1e-10 {
        return Err(Error::NumericalRank(format!(
            "eigensolver deviates from the ring spectrum by {worst:.3e}"
        )));
    }
    Ok(NormalModeBasis {
        degeneracy_groups: group_degenerate(&freqs),
        eigenfrequencies: freqs,
        mode_matrix: u,
    })
}

/// Blocking status of one pair of normal modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub modes: (usize, usize),
    pub class: RatioClass,
    pub blocking: bool,
    #[serde(default)]
    pub warning: Option<String>,
}

/// Classifies every pair of normal-mode frequencies; equal or rational
/// ratios block full reconstruction.
pub fn reconstructability_check(basis: &NormalModeBasis) -> Vec<PairCheck> {
    let w = &basis.eigenfrequencies;
    let mut out = Vec::new();
    for i in 0..w.len() {
        for j in i + 1..w.len() {
            let (class, warning) = classify_pair(w[i], w[j]);
            let blocking = !matches!(class, RatioClass::IrrationalDense);
            out.push(PairCheck {
                modes: (i, j),
                class,
                blocking,
                warning,
            });
        }
    }
    out
}

/// Rotates joint position samples into normal coordinates `x′ = Uᵀx`.
pub fn to_normal_coordinates(
    record: &MeasurementRecord,
    basis: &NormalModeBasis,
) -> Result<MeasurementRecord> {
    let n = basis.modes();
    if record.modes() != n {
        return Err(Error::Shape(format!(
            "{}-mode record, {n}-mode basis",
            record.modes()
        )));
    }
    if !record.has_samples() {
        return Err(Error::NeedsJointSamples);
    }
    let ut = basis.mode_matrix.transpose();
    let system = OscillatorSystem::new(basis.eigenfrequencies.clone())?;
    let blocks = record
        .blocks
        .iter()
        .map(|b| {
            let BlockData::Samples(s) = &b.data else {
                unreachable!("checked above")
            };
            let mut out = Vec::with_capacity(s.len());
            for xs in s.chunks_exact(n) {
                let v = &ut * DVector::from_column_slice(xs);
                out.extend(v.iter());
            }
            let (theta, folds) = system.fold(b.t);
            RecordBlock {
                t: b.t,
                theta,
                folds,
                data: BlockData::Samples(out),
            }
        })
        .collect();
    let mut header = record.header.clone();
    header.system = SystemSpec::Oscillator(system);
    header.normal_modes = Some(basis.clone());
    header.normal_coordinates = true;
    Ok(MeasurementRecord { header, blocks })
}

/// Simulates joint site-position samples of a Gaussian chain state given by
/// its site-coordinate mean and covariance. The state is evolved exactly in
/// normal modes and the samples rotated back to sites.
#[allow(clippy::too_many_arguments)]
pub fn simulate_gaussian_chain(
    system: &ChainSystem,
    mean: &[f64],
    cov: &DMatrix<f64>,
    cutoff: usize,
    times: &[f64],
    normal_grids: &[SpatialGrid],
    shots: u64,
    seed: u64,
) -> Result<MeasurementRecord> {
    let basis = normal_modes(system)?;
    let n = system.n;
    if mean.len() != 2 * n || cov.nrows() != 2 * n {
        return Err(Error::Shape(format!(
            "a {n}-site chain needs a {}-vector mean",
            2 * n
        )));
    }
    let s = basis.symplectic();
    let mean_nm: Vec<f64> = (&s * DVector::from_column_slice(mean))
        .iter()
        .copied()
        .collect();
    let cov_nm = &s * cov * s.transpose();
    let rho = make_gaussian(&mean_nm, &cov_nm, cutoff)?;
    let osc = OscillatorSystem::new(basis.eigenfrequencies.clone())?;
    let rec = OscillatorRecorder::new(&rho, &osc, normal_grids, Some(shots), seed)?;
    let u = &basis.mode_matrix;
    let blocks = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let b = rec.block(t, i as u64);
            let BlockData::Samples(s) = b.data else {
                unreachable!("shots were requested")
            };
            let mut out = Vec::with_capacity(s.len());
            for xs in s.chunks_exact(n) {
                out.extend((u * DVector::from_column_slice(xs)).iter());
            }
            RecordBlock {
                t,
                theta: Vec::new(),
                folds: Vec::new(),
                data: BlockData::Samples(out),
            }
        })
        .collect();
    let header = RecordHeader {
        system: SystemSpec::Chain(system.clone()),
        grids: normal_grids.to_vec(),
        seed: Some(seed),
        shots: Some(shots),
        provenance: Default::default(),
        normal_modes: Some(basis),
        normal_coordinates: false,
    };
    Ok(MeasurementRecord { header, blocks })
}

/// Sample mean and covariance of joint positions, over all blocks.
pub fn sample_position_covariance(record: &MeasurementRecord) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = record.modes();
    let mut count = 0usize;
    let mut sum = DVector::<f64>::zeros(n);
    let mut outer = DMatrix::<f64>::zeros(n, n);
    for b in &record.blocks {
        let BlockData::Samples(s) = &b.data else {
            return Err(Error::NeedsJointSamples);
        };
        for xs in s.chunks_exact(n) {
            let v = DVector::from_column_slice(xs);
            sum += &v;
            outer += &v * v.transpose();
            count += 1;
        }
    }
    if count < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let m = count as f64;
    let mean = &sum / m;
    let cov = (outer - &mean * mean.transpose() * m) / (m - 1.0);
    Ok((mean.iter().copied().collect(), cov))
}
