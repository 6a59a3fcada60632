//! Forward model of the N-mode harmonic oscillator: rotated-quadrature
//! distributions, characteristic functions and the Wigner function, all
//! evaluated directly from a Fock-basis density matrix.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{tensor_weights, SpatialGrid};
use crate::linalg::{self, c, CMatrix};
use crate::record::{
    sample_distribution, BlockData, MeasurementRecord, RecordBlock, RecordHeader, SystemSpec,
};
use crate::states::{DensityMatrix, MAX_CUTOFF};

/// Largest Gram-matrix deviation accepted for a wavefunction grid.
pub const GRAM_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorSystem {
    pub omegas: Vec<f64>,
}

impl OscillatorSystem {
    pub fn new(omegas: Vec<f64>) -> Result<Self> {
        let s = Self { omegas };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.omegas.is_empty() || self.omegas.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "frequencies must be positive, got {:?}",
                self.omegas
            )));
        }
        Ok(())
    }

    /// Folded phases `ω_j t mod π` and fold counts `⌊ω_j t/π⌋`.
    pub fn fold(&self, t: f64) -> (Vec<f64>, Vec<i64>) {
        self.omegas
            .iter()
            .map(|&w| {
                let phase = w * t;
                let f = (phase / PI).floor();
                let theta = (phase - f * PI).clamp(0.0, PI.next_down());
                (theta, f as i64)
            })
            .unzip()
    }
}

/// Samples of the characteristic function on a per-mode (η, θ) grid.
///
/// `values` is indexed by `(η₁, θ₁, η₂, θ₂, …)` with the last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharGrid {
    pub eta_axes: Vec<Vec<f64>>,
    pub theta_axes: Vec<Vec<f64>>,
    pub values: Vec<Complex64>,
    /// Cells that hold data (all `true` for a fully sampled grid).
    #[serde(default)]
    pub filled: Vec<bool>,
    /// Cells filled by nearest-neighbour inpainting rather than data.
    #[serde(default)]
    pub inpainted: Vec<bool>,
    /// Phase actually attained for each θ-cell (flat over θ axes), when the
    /// grid was assembled by binning a time series.
    #[serde(default)]
    pub attained_theta: Option<Vec<Vec<f64>>>,
}

impl CharGrid {
    pub fn modes(&self) -> usize {
        self.eta_axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.eta_axes
            .iter()
            .zip(&self.theta_axes)
            .flat_map(|(e, t)| [e.len(), t.len()])
            .collect()
    }

    pub fn theta_cells(&self) -> usize {
        self.theta_axes.iter().map(Vec::len).product()
    }

    pub fn eta_cells(&self) -> usize {
        self.eta_axes.iter().map(Vec::len).product()
    }

    /// Flat index from per-mode η and θ indices.
    pub fn index(&self, eta_idx: &[usize], theta_idx: &[usize]) -> usize {
        let mut flat = 0;
        for j in 0..self.modes() {
            flat = flat * self.eta_axes[j].len() + eta_idx[j];
            flat = flat * self.theta_axes[j].len() + theta_idx[j];
        }
        flat
    }

    /// Per-mode (η, θ) indices of a flat index.
    pub fn split(&self, flat: usize) -> (Vec<usize>, Vec<usize>) {
        let idx = crate::grid::unravel(flat, &self.shape());
        let eta = idx.iter().step_by(2).copied().collect();
        let theta = idx.iter().skip(1).step_by(2).copied().collect();
        (eta, theta)
    }

    pub fn get(&self, eta_idx: &[usize], theta_idx: &[usize]) -> Complex64 {
        self.values[self.index(eta_idx, theta_idx)]
    }

    pub fn fill_fraction(&self) -> f64 {
        if self.filled.is_empty() {
            return 1.0;
        }
        self.filled.iter().filter(|&&f| f).count() as f64 / self.filled.len() as f64
    }

    /// Checks `w̃(0, θ) = 1` and `|w̃| ≤ 1` on filled cells.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        for flat in 0..self.values.len() {
            if !self.filled.is_empty() && !self.filled[flat] {
                continue;
            }
            let (ei, _) = self.split(flat);
            let v = self.values[flat];
            if v.norm() > 1.0 + tol {
                return Err(Error::Inversion(format!("|w| = {} exceeds one", v.norm())));
            }
            let at_origin = ei.iter().zip(&self.eta_axes).all(|(&i, ax)| ax[i] == 0.0);
            if at_origin && (v - c(1.0, 0.0)).norm() > tol {
                return Err(Error::Inversion(format!("w(0) = {v} is not one")));
            }
        }
        Ok(())
    }
}

/// Phase-space samples of the Wigner function, indexed `(x₁, p₁, x₂, p₂, …)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub x_axes: Vec<Vec<f64>>,
    pub p_axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl WignerGrid {
    pub fn shape(&self) -> Vec<usize> {
        self.x_axes
            .iter()
            .zip(&self.p_axes)
            .flat_map(|(x, p)| [x.len(), p.len()])
            .collect()
    }

    /// Riemann-sum integral over phase space.
    pub fn integral(&self) -> f64 {
        let cell: f64 = self
            .x_axes
            .iter()
            .chain(&self.p_axes)
            .map(|a| if a.len() > 1 { a[1] - a[0] } else { 1.0 })
            .product();
        self.values.iter().sum::<f64>() * cell
    }

    pub fn max_abs_diff(&self, other: &WignerGrid) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `ψ_n(x_k)` for `n < cutoff`, as a `cutoff × n_points` matrix.
///
/// The recurrence runs on a rescaled sequence and carries the exponent
/// separately, so high orders at large `|x|` neither overflow nor flush to
/// zero prematurely.
pub fn hermite_wavefunctions(cutoff: usize, grid: &SpatialGrid) -> Result<DMatrix<f64>> {
    if cutoff == 0 || cutoff > MAX_CUTOFF {
        return Err(Error::InvalidParameter(format!(
            "cutoff must lie in [1, {MAX_CUTOFF}], got {cutoff}"
        )));
    }
    grid.validate()?;
    let xs = grid.points();
    let psi = hermite_at(cutoff, &xs);
    let w = grid.weights();
    let mut worst = 0.0f64;
    for m in 0..cutoff {
        for n in m..cutoff {
            let g: f64 = (0..xs.len())
                .map(|k| psi[(m, k)] * psi[(n, k)] * w[k])
                .sum();
            let target = if m == n { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    if worst > GRAM_TOL {
        return Err(Error::GridCoverage(format!(
            "Gram matrix of {cutoff} wavefunctions on [{}, {}] with {} points deviates by {worst:.3e}",
            grid.x_min, grid.x_max, grid.n_points
        )));
    }
    Ok(psi)
}

/// Unchecked wavefunction table at arbitrary points.
pub fn hermite_at(cutoff: usize, xs: &[f64]) -> DMatrix<f64> {
    const BIG: f64 = 1e150;
    let ln_big = BIG.ln();
    let mut psi = DMatrix::zeros(cutoff, xs.len());
    let norm0 = PI.powf(-0.25);
    for (k, &x) in xs.iter().enumerate() {
        let mut log_scale = -0.5 * x * x;
        let mut prev = 0.0;
        let mut cur = norm0;
        psi[(0, k)] = cur * log_scale.exp();
        for n in 0..cutoff.saturating_sub(1) {
            let nf = n as f64;
            let mut next = (2.0 / (nf + 1.0)).sqrt() * x * cur - (nf / (nf + 1.0)).sqrt() * prev;
            if next.abs() > BIG {
                next /= BIG;
                cur /= BIG;
                log_scale += ln_big;
            }
            prev = cur;
            cur = next;
            psi[(n + 1, k)] = cur * log_scale.exp();
        }
    }
    psi
}

/// `⟨m|D(ξ)|n⟩` for `m, n < cutoff` with `D(ξ) = exp(ξa† − ξ̄a)`.
///
/// These are the exact matrix elements of the untruncated operator.
pub fn displacement_matrix(xi: Complex64, cutoff: usize) -> CMatrix {
    let mut d = CMatrix::zeros(cutoff, cutoff);
    let sq: Vec<f64> = (0..=cutoff).map(|k| (k as f64).sqrt()).collect();
    let mut v = c((-0.5 * xi.norm_sqr()).exp(), 0.0);
    for m in 0..cutoff {
        d[(m, 0)] = v;
        v *= xi / sq[m + 1];
    }
    let xc = xi.conj();
    for n in 1..cutoff {
        for m in 0..cutoff {
            let up = if m > 0 {
                sq[m] * d[(m - 1, n - 1)]
            } else {
                c(0.0, 0.0)
            };
            d[(m, n)] = (up - xc * d[(m, n - 1)]) / sq[n];
        }
    }
    d
}

/// Parity-weighted displacement `D(ξ)(−1)^{a†a}`.
fn displaced_parity(xi: Complex64, cutoff: usize) -> CMatrix {
    let mut d = displacement_matrix(xi, cutoff);
    for n in (1..cutoff).step_by(2) {
        for m in 0..cutoff {
            d[(m, n)] = -d[(m, n)];
        }
    }
    d
}

/// Applies `mat` (`out × in`) along `axis` of a row-major tensor.
pub fn apply_along_axis(
    tensor: &[Complex64],
    shape: &[usize],
    axis: usize,
    mat: &CMatrix,
) -> (Vec<Complex64>, Vec<usize>) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let din = shape[axis];
    let dout = mat.nrows();
    debug_assert_eq!(mat.ncols(), din);
    let mut out = vec![c(0.0, 0.0); outer * dout * inner];
    for o in 0..outer {
        let src = &tensor[o * din * inner..(o + 1) * din * inner];
        let dst = &mut out[o * dout * inner..(o + 1) * dout * inner];
        for k in 0..din {
            let row = &src[k * inner..(k + 1) * inner];
            for i in 0..dout {
                let m = mat[(i, k)];
                if m == c(0.0, 0.0) {
                    continue;
                }
                let d = &mut dst[i * inner..(i + 1) * inner];
                for (a, b) in d.iter_mut().zip(row) {
                    *a += m * b;
                }
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = dout;
    (out, new_shape)
}

/// Spectral form of a Fock-basis state, for fast expectation values of
/// per-mode product operators.
#[derive(Clone, Debug)]
pub struct SpectralState {
    pub cutoffs: Vec<usize>,
    /// `(λ_k, v_k)` for eigenvalues above a relative threshold.
    pub components: Vec<(f64, Vec<Complex64>)>,
    matrix: CMatrix,
}

impl SpectralState {
    pub fn new(rho: &DensityMatrix) -> Result<Self> {
        let cutoffs = rho.require_fock()?;
        let (vals, vecs) = linalg::eigh(rho.matrix());
        let top = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let components = vals
            .iter()
            .enumerate()
            .filter(|(_, &l)| l.abs() > 1e-15 * top.max(1e-300))
            .map(|(k, &l)| (l, vecs.column(k).iter().copied().collect()))
            .collect();
        Ok(Self {
            cutoffs,
            components,
            matrix: rho.matrix().clone(),
        })
    }

    pub fn modes(&self) -> usize {
        self.cutoffs.len()
    }

    /// `Tr[ρ ⊗_j M_j]` for square per-mode matrices.
    pub fn expect(&self, mats: &[CMatrix]) -> Complex64 {
        if mats.len() == 1 {
            let m = &mats[0];
            let d = self.matrix.nrows();
            let mut acc = c(0.0, 0.0);
            for a in 0..d {
                for b in 0..d {
                    acc += self.matrix[(a, b)] * m[(b, a)];
                }
            }
            return acc;
        }
        let mut total = c(0.0, 0.0);
        for (l, v) in &self.components {
            let mut t = v.clone();
            let mut shape = self.cutoffs.clone();
            for (j, m) in mats.iter().enumerate() {
                (t, shape) = apply_along_axis(&t, &shape, j, m);
            }
            let ip: Complex64 = v.iter().zip(&t).map(|(a, b)| a.conj() * b).sum();
            total += ip * *l;
        }
        total
    }

    /// Density on the tensor grid for per-mode quadrature phases `θ_j`.
    pub fn distribution(&self, psi: &[DMatrix<f64>], theta: &[f64]) -> Vec<f64> {
        let mats: Vec<CMatrix> = psi
            .iter()
            .zip(theta)
            .map(|(p, &th)| {
                CMatrix::from_fn(p.ncols(), p.nrows(), |k, m| {
                    c(p[(m, k)], 0.0) * Complex64::from_polar(1.0, -(m as f64) * th)
                })
            })
            .collect();
        let npts: usize = psi.iter().map(|p| p.ncols()).product();
        let mut out = vec![0.0; npts];
        for (l, v) in &self.components {
            let mut t = v.clone();
            let mut shape = self.cutoffs.clone();
            for (j, m) in mats.iter().enumerate() {
                (t, shape) = apply_along_axis(&t, &shape, j, m);
            }
            for (o, a) in out.iter_mut().zip(&t) {
                *o += l * a.norm_sqr();
            }
        }
        out
    }
}

/// Wavefunction tables for every mode, checked against the grids.
pub fn mode_wavefunctions(cutoffs: &[usize], grids: &[SpatialGrid]) -> Result<Vec<DMatrix<f64>>> {
    if cutoffs.len() != grids.len() {
        return Err(Error::Shape(format!(
            "{} modes but {} grids",
            cutoffs.len(),
            grids.len()
        )));
    }
    cutoffs
        .iter()
        .zip(grids)
        .map(|(&n, g)| hermite_wavefunctions(n, g))
        .collect()
}

/// `Pr(x⃗; θ⃗)` on the tensor-product grid (first mode slowest).
pub fn quadrature_distribution(
    rho: &DensityMatrix,
    theta: &[f64],
    grids: &[SpatialGrid],
) -> Result<Vec<f64>> {
    let spec = SpectralState::new(rho)?;
    if theta.len() != spec.modes() {
        return Err(Error::Shape(format!(
            "{} phases for {} modes",
            theta.len(),
            spec.modes()
        )));
    }
    let psi = mode_wavefunctions(&spec.cutoffs, grids)?;
    Ok(spec.distribution(&psi, theta))
}

/// Rotated-quadrature displacement argument `ξ = iηe^{iθ}/√2`.
pub fn xi(eta: f64, theta: f64) -> Complex64 {
    Complex64::new(0.0, eta * FRAC_1_SQRT_2) * Complex64::from_polar(1.0, theta)
}

/// Exact characteristic function at one point `(η⃗, θ⃗)`.
pub fn char_at(spec: &SpectralState, eta: &[f64], theta: &[f64]) -> Complex64 {
    let mats: Vec<CMatrix> = spec
        .cutoffs
        .iter()
        .enumerate()
        .map(|(j, &n)| displacement_matrix(xi(eta[j], theta[j]), n))
        .collect();
    spec.expect(&mats)
}

/// `w̃(η⃗, θ⃗) = Tr[e^{iΣη_j x̂_j(θ_j)} ρ]` on the full per-mode grid.
pub fn char_function(
    rho: &DensityMatrix,
    eta_axes: &[Vec<f64>],
    theta_axes: &[Vec<f64>],
) -> Result<CharGrid> {
    let spec = SpectralState::new(rho)?;
    let n = spec.modes();
    if eta_axes.len() != n || theta_axes.len() != n {
        return Err(Error::Shape(format!(
            "axes for {} / {} modes, state has {n}",
            eta_axes.len(),
            theta_axes.len()
        )));
    }
    // Per-mode displacement tables, indexed [eta][theta].
    let tables: Vec<Vec<CMatrix>> = (0..n)
        .map(|j| {
            eta_axes[j]
                .iter()
                .flat_map(|&e| theta_axes[j].iter().map(move |&t| (e, t)))
                .map(|(e, t)| displacement_matrix(xi(e, t), spec.cutoffs[j]))
                .collect()
        })
        .collect();
    let per_mode: Vec<usize> = (0..n)
        .map(|j| eta_axes[j].len() * theta_axes[j].len())
        .collect();
    let total: usize = per_mode.iter().product();
    let values: Vec<Complex64> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let idx = crate::grid::unravel(flat, &per_mode);
            let mats: Vec<CMatrix> = (0..n).map(|j| tables[j][idx[j]].clone()).collect();
            spec.expect(&mats)
        })
        .collect();
    Ok(CharGrid {
        eta_axes: eta_axes.to_vec(),
        theta_axes: theta_axes.to_vec(),
        filled: vec![true; values.len()],
        inpainted: vec![false; values.len()],
        values,
        attained_theta: None,
    })
}

/// Wigner function on a phase-space grid, from the displaced-parity formula
/// `W = π^{−N} Tr[ρ ⊗_j D(2α_j)(−1)^{n_j}]`, `α_j = (x_j + ip_j)/√2`.
pub fn wigner_oracle(
    rho: &DensityMatrix,
    x_axes: &[Vec<f64>],
    p_axes: &[Vec<f64>],
) -> Result<WignerGrid> {
    let spec = SpectralState::new(rho)?;
    let n = spec.modes();
    if x_axes.len() != n || p_axes.len() != n {
        return Err(Error::Shape(format!(
            "phase-space axes for {} modes, state has {n}",
            x_axes.len()
        )));
    }
    let tables: Vec<Vec<CMatrix>> = (0..n)
        .map(|j| {
            x_axes[j]
                .iter()
                .flat_map(|&x| p_axes[j].iter().map(move |&p| (x, p)))
                .map(|(x, p)| displaced_parity(c(x, p) * (2.0 * FRAC_1_SQRT_2), spec.cutoffs[j]))
                .collect()
        })
        .collect();
    let per_mode: Vec<usize> = (0..n).map(|j| x_axes[j].len() * p_axes[j].len()).collect();
    let total: usize = per_mode.iter().product();
    let norm = PI.powi(-(n as i32));
    let values = (0..total)
        .into_par_iter()
        .map(|flat| {
            let idx = crate::grid::unravel(flat, &per_mode);
            let mats: Vec<CMatrix> = (0..n).map(|j| tables[j][idx[j]].clone()).collect();
            spec.expect(&mats).re * norm
        })
        .collect();
    Ok(WignerGrid {
        x_axes: x_axes.to_vec(),
        p_axes: p_axes.to_vec(),
        values,
    })
}

/// Reusable forward model: precomputes the spectral state and wavefunctions
/// so that many time blocks can be generated cheaply, one at a time.
pub struct OscillatorRecorder {
    pub system: OscillatorSystem,
    pub grids: Vec<SpatialGrid>,
    spec: SpectralState,
    psi: Vec<DMatrix<f64>>,
    pub shots: Option<u64>,
    pub seed: u64,
}

impl OscillatorRecorder {
    pub fn new(
        rho: &DensityMatrix,
        system: &OscillatorSystem,
        grids: &[SpatialGrid],
        shots: Option<u64>,
        seed: u64,
    ) -> Result<Self> {
        system.validate()?;
        let spec = SpectralState::new(rho)?;
        if system.omegas.len() != spec.modes() {
            return Err(Error::Shape(format!(
                "{} frequencies for a {}-mode state",
                system.omegas.len(),
                spec.modes()
            )));
        }
        if shots == Some(0) {
            return Err(Error::InvalidParameter("shots must be positive".into()));
        }
        let psi = mode_wavefunctions(&spec.cutoffs, grids)?;
        Ok(Self {
            system: system.clone(),
            grids: grids.to_vec(),
            spec,
            psi,
            shots,
            seed,
        })
    }

    pub fn header(&self) -> RecordHeader {
        RecordHeader {
            system: SystemSpec::Oscillator(self.system.clone()),
            grids: self.grids.clone(),
            seed: self.shots.map(|_| self.seed),
            shots: self.shots,
            provenance: Default::default(),
            normal_modes: None,
            normal_coordinates: false,
        }
    }

    /// Exact density at time `t` (phases `ω_j t`, unfolded).
    pub fn density(&self, t: f64) -> Vec<f64> {
        let phases: Vec<f64> = self.system.omegas.iter().map(|w| w * t).collect();
        self.spec.distribution(&self.psi, &phases)
    }

    /// The block recorded at time `t`; `index` selects the random stream.
    pub fn block(&self, t: f64, index: u64) -> RecordBlock {
        let (theta, folds) = self.system.fold(t);
        let density = self.density(t);
        let data = match self.shots {
            None => BlockData::Distribution(density),
            Some(m) => BlockData::Samples(sample_distribution(
                &self.grids,
                &density,
                m,
                self.seed,
                index,
            )),
        };
        RecordBlock {
            t,
            theta,
            folds,
            data,
        }
    }
}

/// Records the state at each time; exact densities or `shots` samples per
/// block.
pub fn evolve_and_record(
    rho: &DensityMatrix,
    system: &OscillatorSystem,
    times: &[f64],
    grids: &[SpatialGrid],
    shots: Option<u64>,
    seed: u64,
) -> Result<MeasurementRecord> {
    if let Some(&bad) = times.iter().find(|&&t| !(t >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "times must be nonnegative, got {bad}"
        )));
    }
    let rec = OscillatorRecorder::new(rho, system, grids, shots, seed)?;
    let blocks = times
        .par_iter()
        .enumerate()
        .map(|(i, &t)| rec.block(t, i as u64))
        .collect();
    Ok(MeasurementRecord {
        header: rec.header(),
        blocks,
    })
}

/// Quadrature-weighted integral of a density on the tensor grid.
pub fn integrate(grids: &[SpatialGrid], density: &[f64]) -> f64 {
    tensor_weights(grids)
        .iter()
        .zip(density)
        .map(|(w, p)| w * p)
        .sum()
}
