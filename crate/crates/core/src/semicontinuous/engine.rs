//! Shared forward model and streaming time-averaged projector.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DMatrixView};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ravel, unravel, SpatialGrid};
use crate::linalg::{self, c};
use crate::record::{
    histogram, sample_distribution, BlockData, MeasurementRecord, RecordBlock, RecordHeader,
    SystemSpec,
};
use crate::states::{BasisTag, DensityMatrix};

use super::{BoxSystem, IndexPair, PeriodicSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Potential {
    Ring,
    Well,
}

impl Potential {
    fn name(self) -> &'static str {
        match self {
            Potential::Ring => "periodic",
            Potential::Well => "box",
        }
    }
}

/// Per-mode `(length, energy scale)` of a ring or box system.
pub(crate) fn mode_params(spec: &SystemSpec) -> Result<(Potential, Vec<(f64, f64)>)> {
    match spec {
        SystemSpec::Periodic(s) => {
            s.validate()?;
            Ok((
                Potential::Ring,
                s.modes.iter().map(|m| (m.length, m.omega)).collect(),
            ))
        }
        SystemSpec::Box(s) => {
            s.validate()?;
            Ok((
                Potential::Well,
                s.modes.iter().map(|m| (m.length, m.omega_prime)).collect(),
            ))
        }
        other => Err(Error::Basis(format!(
            "expected a periodic or box system, got {}",
            other.kind()
        ))),
    }
}

fn check_grid(potential: Potential, grid: &SpatialGrid, length: f64, mode: usize) -> Result<()> {
    grid.validate()?;
    let ok_len = (grid.length() - length).abs() <= 1e-9 * length;
    match potential {
        Potential::Ring if !grid.periodic || !ok_len => Err(Error::GridCoverage(format!(
            "mode {}: periodic system needs a periodic grid spanning [x0, x0 + {length})",
            mode + 1
        ))),
        Potential::Well if grid.periodic || !ok_len || grid.x_min.abs() > 1e-12 * length => {
            Err(Error::GridCoverage(format!(
                "mode {}: box system needs a closed grid spanning [0, {length}]",
                mode + 1
            )))
        }
        _ => Ok(()),
    }
}

/// A per-mode linear map `out × in`, possibly complex.
#[derive(Clone, Debug)]
struct Table {
    re: DMatrix<f64>,
    im: Option<DMatrix<f64>>,
}

/// A complex tensor stored as separate real and imaginary parts.
struct Tensor {
    re: Vec<f64>,
    im: Option<Vec<f64>>,
    shape: Vec<usize>,
}

fn contract_real(t: &[f64], shape: &[usize], axis: usize, mat: &DMatrix<f64>) -> Vec<f64> {
    let pre: usize = shape[..axis].iter().product();
    let old = shape[axis];
    let post: usize = shape[axis + 1..].iter().product();
    let new = mat.nrows();
    if post == 1 {
        let view = DMatrixView::from_slice(t, old, pre);
        return (mat * view).as_slice().to_vec();
    }
    let mt = mat.transpose();
    let mut out = vec![0.0; pre * new * post];
    for p in 0..pre {
        let view = DMatrixView::from_slice(&t[p * old * post..(p + 1) * old * post], post, old);
        let r = view * &mt;
        out[p * new * post..(p + 1) * new * post].copy_from_slice(r.as_slice());
    }
    out
}

impl Tensor {
    fn apply(self, axis: usize, table: &Table) -> Tensor {
        let c_ = |v: &[f64], m: &DMatrix<f64>| contract_real(v, &self.shape, axis, m);
        let (re, im) = match (&self.im, &table.im) {
            (None, None) => (c_(&self.re, &table.re), None),
            (Some(i), None) => (c_(&self.re, &table.re), Some(c_(i, &table.re))),
            (None, Some(gi)) => (c_(&self.re, &table.re), Some(c_(&self.re, gi))),
            (Some(i), Some(gi)) => {
                let rr = c_(&self.re, &table.re);
                let ii = c_(i, gi);
                let ri = c_(&self.re, gi);
                let ir = c_(i, &table.re);
                (
                    rr.iter().zip(&ii).map(|(a, b)| a - b).collect(),
                    Some(ri.iter().zip(&ir).map(|(a, b)| a + b).collect()),
                )
            }
        };
        let mut shape = self.shape;
        shape[axis] = table.re.nrows();
        Tensor { re, im, shape }
    }
}

fn eigenfunction_table(
    potential: Potential,
    basis: &BasisTag,
    grid: &SpatialGrid,
    length: f64,
) -> Result<Table> {
    let pts = grid.points();
    let d = basis.dim();
    match (potential, basis) {
        (Potential::Ring, BasisTag::PlaneWave { .. }) => {
            let norm = 1.0 / length.sqrt();
            let phase = |i: usize, k: usize| {
                2.0 * PI * basis.label(k) as f64 * (pts[i] - grid.x_min) / length
            };
            Ok(Table {
                re: DMatrix::from_fn(pts.len(), d, |i, k| norm * phase(i, k).cos()),
                im: Some(DMatrix::from_fn(pts.len(), d, |i, k| {
                    norm * phase(i, k).sin()
                })),
            })
        }
        (Potential::Well, BasisTag::BoxSine { .. }) => {
            let norm = (2.0 / length).sqrt();
            Ok(Table {
                re: DMatrix::from_fn(pts.len(), d, |i, k| {
                    norm * (basis.label(k) as f64 * PI * pts[i] / length).sin()
                }),
                im: None,
            })
        }
        _ => Err(Error::Basis(format!(
            "{} system needs {} bases",
            potential.name(),
            match potential {
                Potential::Ring => "plane-wave",
                Potential::Well => "box-sine",
            }
        ))),
    }
}

/// Exact `Pr(x, t)` of a ring or box state on a tensor grid.
pub struct SemicontinuousRecorder {
    system: SystemSpec,
    grids: Vec<SpatialGrid>,
    dims: Vec<usize>,
    components: Vec<(f64, Vec<Complex64>)>,
    tables: Vec<Table>,
    energies: Vec<f64>,
    pub shots: Option<u64>,
    pub seed: u64,
}

impl SemicontinuousRecorder {
    pub fn new(
        rho: &DensityMatrix,
        system: &SystemSpec,
        grids: &[SpatialGrid],
        shots: Option<u64>,
        seed: u64,
    ) -> Result<Self> {
        let (potential, params) = mode_params(system)?;
        let n = params.len();
        if rho.modes() != n || grids.len() != n {
            return Err(Error::Shape(format!(
                "{n}-mode system, {}-mode state, {} grids",
                rho.modes(),
                grids.len()
            )));
        }
        if shots == Some(0) {
            return Err(Error::InvalidParameter("shots must be positive".into()));
        }
        let mut tables = Vec::with_capacity(n);
        for (j, ((&(length, _), g), b)) in params.iter().zip(grids).zip(rho.bases()).enumerate() {
            check_grid(potential, g, length, j)?;
            tables.push(eigenfunction_table(potential, b, g, length)?);
        }
        let dims = rho.dims();
        let energies = (0..rho.dim())
            .map(|k| {
                unravel(k, &dims)
                    .iter()
                    .zip(rho.bases())
                    .zip(&params)
                    .map(|((&i, b), &(_, w))| w * (b.label(i) as f64).powi(2))
                    .sum()
            })
            .collect();
        let (vals, vecs) = linalg::eigh(rho.matrix());
        let top = vals.iter().copied().fold(0.0, f64::max);
        let components = vals
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 1e-15 * top)
            .map(|(k, &l)| (l, vecs.column(k).iter().copied().collect()))
            .collect();
        Ok(Self {
            system: system.clone(),
            grids: grids.to_vec(),
            dims,
            components,
            tables,
            energies,
            shots,
            seed,
        })
    }

    pub fn header(&self) -> RecordHeader {
        RecordHeader {
            system: self.system.clone(),
            grids: self.grids.clone(),
            seed: self.shots.map(|_| self.seed),
            shots: self.shots,
            provenance: Default::default(),
            normal_modes: None,
            normal_coordinates: false,
        }
    }

    pub fn grids(&self) -> &[SpatialGrid] {
        &self.grids
    }

    /// `Σ_c λ_c |Σ_k v_ck e^{−iE_k t} φ_k(x)|²` on the tensor grid.
    pub fn density(&self, t: f64) -> Vec<f64> {
        let npts: usize = self.grids.iter().map(|g| g.n_points).product();
        let mut out = vec![0.0; npts];
        for (l, v) in &self.components {
            let (re, im): (Vec<f64>, Vec<f64>) = v
                .iter()
                .zip(&self.energies)
                .map(|(a, &e)| {
                    let z = a * Complex64::from_polar(1.0, -e * t);
                    (z.re, z.im)
                })
                .unzip();
            let mut psi = Tensor {
                re,
                im: Some(im),
                shape: self.dims.clone(),
            };
            for (j, table) in self.tables.iter().enumerate() {
                psi = psi.apply(j, table);
            }
            let im = psi.im.expect("complex amplitudes");
            for ((o, a), b) in out.iter_mut().zip(&psi.re).zip(&im) {
                *o += l * (a * a + b * b);
            }
        }
        out
    }

    pub fn block(&self, t: f64, index: u64) -> RecordBlock {
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
            theta: Vec::new(),
            folds: Vec::new(),
            data,
        }
    }

    pub fn record(&self, times: &[f64]) -> Result<MeasurementRecord> {
        use rayon::prelude::*;
        if let Some(&bad) = times.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite time {bad}")));
        }
        let blocks = times
            .par_iter()
            .enumerate()
            .map(|(i, &t)| self.block(t, i as u64))
            .collect();
        Ok(MeasurementRecord {
            header: self.header(),
            blocks,
        })
    }
}

/// One requested element in projector form.
#[derive(Clone, Debug)]
struct Plan {
    proj: usize,
    q: Vec<usize>,
    sign: f64,
}

/// Streaming estimator of `⟨e^{iΣ w_j ν_j β_j t} ∫ Π_j g_j(x_j) Pr(x,t) dx⟩_t`
/// for a list of index pairs, with trapezoid time weights.
pub struct NdProjector {
    potential: Potential,
    grids: Vec<SpatialGrid>,
    scales: Vec<f64>,
    tables: Vec<Table>,
    qvals: Vec<Vec<i64>>,
    plans: Vec<Plan>,
    pairs: Vec<IndexPair>,
    acc: Vec<Complex64>,
    prev: Vec<Complex64>,
    t_first: Option<f64>,
    t_last: f64,
    pushes: usize,
}

impl NdProjector {
    pub fn periodic(
        system: &PeriodicSystem,
        grids: &[SpatialGrid],
        pairs: &[IndexPair],
    ) -> Result<Self> {
        Self::new(&SystemSpec::Periodic(system.clone()), grids, pairs)
    }

    pub fn well(system: &BoxSystem, grids: &[SpatialGrid], pairs: &[IndexPair]) -> Result<Self> {
        Self::new(&SystemSpec::Box(system.clone()), grids, pairs)
    }

    /// Pairs must already be validated for the potential; ring pairs need
    /// `β_j ≠ 0`.
    pub fn new(system: &SystemSpec, grids: &[SpatialGrid], pairs: &[IndexPair]) -> Result<Self> {
        let (potential, params) = mode_params(system)?;
        let n = params.len();
        if grids.len() != n {
            return Err(Error::Shape(format!("{} grids for {n} modes", grids.len())));
        }
        if pairs.is_empty() {
            return Err(Error::InvalidParameter("no index pairs requested".into()));
        }
        for p in pairs {
            match potential {
                Potential::Ring => {
                    p.check(n)?;
                    if p.beta.contains(&0) {
                        return Err(Error::DiagonalUnrecoverable(p.to_string()));
                    }
                }
                Potential::Well => p.check_box(n)?,
            }
        }
        // Spatial function index per mode: β for the ring, the cosine index
        // (|β|, or ν when β = 0) for the box.
        let spatial = |p: &IndexPair, j: usize| -> i64 {
            match potential {
                Potential::Ring => p.beta[j],
                Potential::Well if p.beta[j] == 0 => p.nu[j],
                Potential::Well => p.beta[j].abs(),
            }
        };
        let mut kvals: Vec<Vec<i64>> = vec![Vec::new(); n];
        let mut qvals: Vec<Vec<i64>> = vec![Vec::new(); n];
        for p in pairs {
            for j in 0..n {
                kvals[j].push(spatial(p, j));
                qvals[j].push(p.nu[j] * p.beta[j]);
            }
        }
        for v in kvals.iter_mut().chain(qvals.iter_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        let mut tables = Vec::with_capacity(n);
        for j in 0..n {
            let (length, _) = params[j];
            let g = &grids[j];
            check_grid(potential, g, length, j)?;
            let kmax = kvals[j].iter().map(|k| k.abs()).max().unwrap_or(0) as usize;
            let enough = match potential {
                Potential::Ring => g.n_points >= 8 * kmax,
                Potential::Well => g.n_points > 4 * kmax,
            };
            if !enough {
                return Err(Error::GridCoverage(format!(
                    "mode {}: {} points do not resolve spatial index {kmax} at 8 points per oscillation",
                    j + 1,
                    g.n_points
                )));
            }
            let pts = g.points();
            let w = g.weights();
            let ks = &kvals[j];
            let table = match potential {
                Potential::Ring => {
                    let arg =
                        |r: usize, i: usize| -2.0 * PI * ks[r] as f64 * (pts[i] - g.x_min) / length;
                    Table {
                        re: DMatrix::from_fn(ks.len(), pts.len(), |r, i| w[i] * arg(r, i).cos()),
                        im: Some(DMatrix::from_fn(ks.len(), pts.len(), |r, i| {
                            w[i] * arg(r, i).sin()
                        })),
                    }
                }
                Potential::Well => Table {
                    re: DMatrix::from_fn(ks.len(), pts.len(), |r, i| {
                        2.0 * w[i] * (ks[r] as f64 * PI * pts[i] / length).cos()
                    }),
                    im: None,
                },
            };
            tables.push(table);
        }
        let kdims: Vec<usize> = kvals.iter().map(Vec::len).collect();
        let plans = pairs
            .iter()
            .map(|p| {
                let kidx: Vec<usize> = (0..n)
                    .map(|j| kvals[j].binary_search(&spatial(p, j)).expect("listed"))
                    .collect();
                let q = (0..n)
                    .map(|j| {
                        qvals[j]
                            .binary_search(&(p.nu[j] * p.beta[j]))
                            .expect("listed")
                    })
                    .collect();
                let flips = p.beta.iter().filter(|&&b| b == 0).count();
                let sign = if potential == Potential::Well && flips % 2 == 1 {
                    -1.0
                } else {
                    1.0
                };
                Plan {
                    proj: ravel(&kidx, &kdims),
                    q,
                    sign,
                }
            })
            .collect();
        let m = pairs.len();
        Ok(Self {
            potential,
            grids: grids.to_vec(),
            scales: params.iter().map(|p| p.1).collect(),
            tables,
            qvals,
            plans,
            pairs: pairs.to_vec(),
            acc: vec![c(0.0, 0.0); m],
            prev: vec![c(0.0, 0.0); m],
            t_first: None,
            t_last: 0.0,
            pushes: 0,
        })
    }

    pub fn pairs(&self) -> &[IndexPair] {
        &self.pairs
    }

    pub fn is_box(&self) -> bool {
        self.potential == Potential::Well
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Adds the density measured at time `t` (strictly after the previous one).
    pub fn push(&mut self, t: f64, density: &[f64]) -> Result<()> {
        let npts: usize = self.grids.iter().map(|g| g.n_points).product();
        if density.len() != npts {
            return Err(Error::Shape(format!(
                "{} density values for a grid of {npts}",
                density.len()
            )));
        }
        if self.t_first.is_some() && !(t > self.t_last) {
            return Err(Error::TimeGrid(format!(
                "times must increase strictly; got {t} after {}",
                self.t_last
            )));
        }
        let mut proj = Tensor {
            re: density.to_vec(),
            im: None,
            shape: self.grids.iter().map(|g| g.n_points).collect(),
        };
        for (j, table) in self.tables.iter().enumerate() {
            proj = proj.apply(j, table);
        }
        let phases: Vec<Vec<Complex64>> = self
            .qvals
            .iter()
            .zip(&self.scales)
            .map(|(qs, &w)| {
                qs.iter()
                    .map(|&q| Complex64::from_polar(1.0, w * q as f64 * t))
                    .collect()
            })
            .collect();
        let half = if self.t_first.is_some() {
            0.5 * (t - self.t_last)
        } else {
            0.0
        };
        let im = proj.im.as_deref();
        for ((plan, acc), prev) in self
            .plans
            .iter()
            .zip(self.acc.iter_mut())
            .zip(self.prev.iter_mut())
        {
            let mut v = c(proj.re[plan.proj], im.map_or(0.0, |i| i[plan.proj])) * plan.sign;
            for (j, &qi) in plan.q.iter().enumerate() {
                v *= phases[j][qi];
            }
            *acc += (*prev + v) * half;
            *prev = v;
        }
        if self.t_first.is_none() {
            self.t_first = Some(t);
        }
        self.t_last = t;
        self.pushes += 1;
        Ok(())
    }

    /// Pushes one record block, binning samples if necessary.
    pub fn push_block(&mut self, block: &RecordBlock) -> Result<()> {
        match &block.data {
            BlockData::Distribution(p) => self.push(block.t, p),
            BlockData::Samples(s) => {
                let h = histogram(&self.grids, s);
                self.push(block.t, &h)
            }
        }
    }

    pub fn span(&self) -> f64 {
        self.t_first.map_or(0.0, |t0| self.t_last - t0)
    }

    pub fn first_time(&self) -> Option<f64> {
        self.t_first
    }

    pub fn last_time(&self) -> f64 {
        self.t_last
    }

    /// Time averages of every requested element so far.
    pub fn averages(&self) -> Result<Vec<Complex64>> {
        if self.pushes < 2 || !(self.span() > 0.0) {
            return Err(Error::TimeGrid("need at least two distinct times".into()));
        }
        let s = self.span();
        Ok(self.acc.iter().map(|a| a / s).collect())
    }
}

/// Uniform time grid covering `[t0, t0 + cycles·period]`; returns the number
/// of cycles and intervals after checking exactness for keys up to `kmax`
/// (in units of the base frequency).
pub(crate) fn check_exact_times(times: &[f64], period: f64, kmax: i64) -> Result<(usize, usize)> {
    if times.len() < 3 {
        return Err(Error::TimeGrid("need at least three time samples".into()));
    }
    let span = times[times.len() - 1] - times[0];
    let cycles = (span / period).round();
    if cycles < 1.0 || (span / period - cycles).abs() > 1e-9 {
        return Err(Error::TimeGrid(format!(
            "record spans {span} but exact averaging needs a whole number of periods {period}"
        )));
    }
    let intervals = times.len() - 1;
    let dt = span / intervals as f64;
    for (k, &t) in times.iter().enumerate() {
        if (t - times[0] - k as f64 * dt).abs() > 1e-9 * period {
            return Err(Error::TimeGrid(
                "exact averaging needs uniformly spaced times".into(),
            ));
        }
    }
    let per_cycle = intervals as f64 / cycles;
    if per_cycle < (2 * kmax + 1) as f64 {
        return Err(Error::TimeGrid(format!(
            "{per_cycle} samples per period cannot resolve frequency keys up to {kmax}; need at least {}",
            2 * kmax + 1
        )));
    }
    Ok((cycles as usize, intervals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contraction_matches_direct_sum() {
        let shape = vec![3, 4, 5];
        let t: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        let m = DMatrix::from_fn(2, 4, |r, k| (r * 4 + k) as f64 - 3.5);
        let out = contract_real(&t, &shape, 1, &m);
        for a in 0..3 {
            for r in 0..2 {
                for b in 0..5 {
                    let direct: f64 = (0..4).map(|k| m[(r, k)] * t[(a * 4 + k) * 5 + b]).sum();
                    assert!((out[(a * 2 + r) * 5 + b] - direct).abs() < 1e-12);
                }
            }
        }
        let last = contract_real(
            &t,
            &shape,
            2,
            &DMatrix::from_fn(3, 5, |r, k| (r + k) as f64),
        );
        for a in 0..12 {
            for r in 0..3 {
                let direct: f64 = (0..5).map(|k| (r + k) as f64 * t[a * 5 + k]).sum();
                assert!((last[a * 3 + r] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_time_checks() {
        let p = 2.0 * PI;
        let good: Vec<f64> = (0..=40).map(|k| k as f64 * p / 40.0).collect();
        assert_eq!(check_exact_times(&good, p, 10).unwrap(), (1, 40));
        assert!(check_exact_times(&good, p, 30).is_err());
        assert!(check_exact_times(&good[..30], p, 2).is_err());
    }
}
