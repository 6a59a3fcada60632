//! Truncated density matrices in the Fock, plane-wave and box-sine bases.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ravel, unravel};
use crate::linalg::{self, c, CMatrix, CVector};

/// Pre-normalization mass a constructor may discard.
pub const TRUNCATION_LIMIT: f64 = 1e-6;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;
/// Largest Fock cutoff per mode.
pub const MAX_CUTOFF: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisTag {
    /// Number states `|0⟩ … |cutoff−1⟩`.
    Fock { cutoff: usize },
    /// Ring momentum states `|n_min⟩ … |n_max⟩`.
    PlaneWave { n_min: i64, n_max: i64 },
    /// Box eigenstates `|1⟩ … |n_max⟩`.
    BoxSine { n_max: usize },
}

impl BasisTag {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BasisTag::Fock { cutoff } if !(2..=MAX_CUTOFF).contains(&cutoff) => {
                Err(Error::InvalidParameter(format!(
                    "Fock cutoff must lie in [2, {MAX_CUTOFF}], got {cutoff}"
                )))
            }
            BasisTag::PlaneWave { n_min, n_max } if n_min > 0 || n_max < 0 => {
                Err(Error::InvalidParameter(format!(
                    "plane-wave range must contain 0, got [{n_min}, {n_max}]"
                )))
            }
            BasisTag::BoxSine { n_max } if n_max < 1 => {
                Err(Error::InvalidParameter("box basis needs n_max >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            BasisTag::Fock { cutoff } => cutoff,
            BasisTag::PlaneWave { n_min, n_max } => (n_max - n_min + 1) as usize,
            BasisTag::BoxSine { n_max } => n_max,
        }
    }

    /// Quantum number of the `i`-th basis vector.
    pub fn label(&self, i: usize) -> i64 {
        match *self {
            BasisTag::Fock { .. } => i as i64,
            BasisTag::PlaneWave { n_min, .. } => n_min + i as i64,
            BasisTag::BoxSine { .. } => i as i64 + 1,
        }
    }

    /// Position of the basis vector with quantum number `n`.
    pub fn position(&self, n: i64) -> Option<usize> {
        let i = match *self {
            BasisTag::Fock { .. } => n,
            BasisTag::PlaneWave { n_min, .. } => n - n_min,
            BasisTag::BoxSine { .. } => n - 1,
        };
        (i >= 0 && (i as usize) < self.dim()).then_some(i as usize)
    }

    pub fn same_kind(&self, other: &BasisTag) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

/// A density matrix over the tensor product of per-mode truncated bases,
/// first mode slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityMatrixDto", into = "DensityMatrixDto")]
pub struct DensityMatrix {
    bases: Vec<BasisTag>,
    matrix: CMatrix,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityMatrixDto {
    bases: Vec<BasisTag>,
    dims: Vec<usize>,
    /// Row-major `[re, im, re, im, …]`.
    elements: Vec<f64>,
}

impl From<DensityMatrix> for DensityMatrixDto {
    fn from(rho: DensityMatrix) -> Self {
        let d = rho.matrix.nrows();
        let mut elements = Vec::with_capacity(2 * d * d);
        for r in 0..d {
            for col in 0..d {
                let z = rho.matrix[(r, col)];
                elements.push(z.re);
                elements.push(z.im);
            }
        }
        let dims = rho.dims();
        Self {
            bases: rho.bases,
            dims,
            elements,
        }
    }
}

impl TryFrom<DensityMatrixDto> for DensityMatrix {
    type Error = Error;

    fn try_from(dto: DensityMatrixDto) -> Result<Self> {
        let dims: Vec<usize> = dto.bases.iter().map(BasisTag::dim).collect();
        if dims != dto.dims {
            return Err(Error::Shape(format!(
                "dims {:?} disagree with bases {:?}",
                dto.dims, dims
            )));
        }
        let d: usize = dims.iter().product();
        if dto.elements.len() != 2 * d * d {
            return Err(Error::Shape(format!(
                "expected {} numbers, got {}",
                2 * d * d,
                dto.elements.len()
            )));
        }
        let matrix = CMatrix::from_fn(d, d, |r, col| {
            let k = 2 * (r * d + col);
            c(dto.elements[k], dto.elements[k + 1])
        });
        DensityMatrix::from_matrix(dto.bases, matrix)
    }
}

/// Agreement between two states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMetrics {
    pub fidelity: f64,
    pub trace_distance: f64,
    pub elementwise_max_error: f64,
}

impl DensityMatrix {
    /// Validates a matrix against the state invariants and wraps it.
    pub fn from_matrix(bases: Vec<BasisTag>, matrix: CMatrix) -> Result<Self> {
        if bases.is_empty() {
            return Err(Error::Shape("a state needs at least one mode".into()));
        }
        for b in &bases {
            b.validate()?;
        }
        let d: usize = bases.iter().map(BasisTag::dim).product();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Shape(format!(
                "matrix is {}x{}, bases need {d}x{d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let herm = linalg::max_abs_diff(&matrix, &matrix.adjoint());
        if herm > HERMITIAN_TOL {
            return Err(Error::NotAQuantumState(format!(
                "not Hermitian (deviation {herm:.3e})"
            )));
        }
        let rho = Self::unchecked(bases, matrix);
        let tr = rho.matrix.trace();
        if (tr - c(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::NotAQuantumState(format!("trace is {tr}")));
        }
        let min_eig = rho.min_eigenvalue();
        if min_eig < -PSD_TOL {
            return Err(Error::NotAQuantumState(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(rho)
    }

    /// Wraps a matrix without checks, enforcing exact Hermiticity.
    pub(crate) fn unchecked(bases: Vec<BasisTag>, matrix: CMatrix) -> Self {
        let matrix = (&matrix + matrix.adjoint()) * c(0.5, 0.0);
        Self { bases, matrix }
    }

    /// `|ψ⟩⟨ψ|` for a normalized vector.
    pub fn from_pure(bases: Vec<BasisTag>, psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotAQuantumState(format!(
                "state vector has norm {norm}"
            )));
        }
        Self::from_matrix(bases, psi * psi.adjoint())
    }

    pub fn bases(&self) -> &[BasisTag] {
        &self.bases
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn modes(&self) -> usize {
        self.bases.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.bases.iter().map(BasisTag::dim).collect()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Element `⟨m|ρ|n⟩` addressed by per-mode quantum numbers.
    pub fn element(&self, m: &[i64], n: &[i64]) -> Result<Complex64> {
        Ok(self.matrix[(self.flat_index(m)?, self.flat_index(n)?)])
    }

    pub fn flat_index(&self, labels: &[i64]) -> Result<usize> {
        if labels.len() != self.modes() {
            return Err(Error::Shape(format!(
                "{} labels for {} modes",
                labels.len(),
                self.modes()
            )));
        }
        let idx = labels
            .iter()
            .zip(&self.bases)
            .map(|(&n, b)| {
                b.position(n)
                    .ok_or_else(|| Error::IndexOutOfBasis(format!("{n} not in {b:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ravel(&idx, &self.dims()))
    }

    /// Per-mode quantum numbers of a flat index.
    pub fn labels(&self, flat: usize) -> Vec<i64> {
        unravel(flat, &self.dims())
            .iter()
            .zip(&self.bases)
            .map(|(&i, b)| b.label(i))
            .collect()
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::eigh(&self.matrix).0[0]
    }

    pub fn require_fock(&self) -> Result<Vec<usize>> {
        self.bases
            .iter()
            .map(|b| match *b {
                BasisTag::Fock { cutoff } => Ok(cutoff),
                other => Err(Error::Basis(format!(
                    "expected a Fock basis, found {other:?}"
                ))),
            })
            .collect()
    }
}

pub fn make_fock(n: usize, cutoff: usize) -> Result<DensityMatrix> {
    let basis = BasisTag::Fock { cutoff };
    basis.validate()?;
    if n >= cutoff {
        return Err(Error::IndexOutOfBasis(format!(
            "Fock state {n} with cutoff {cutoff}"
        )));
    }
    let mut m = CMatrix::zeros(cutoff, cutoff);
    m[(n, n)] = c(1.0, 0.0);
    Ok(DensityMatrix::unchecked(vec![basis], m))
}

pub fn make_coherent(alpha: Complex64, cutoff: usize) -> Result<DensityMatrix> {
    let basis = BasisTag::Fock { cutoff };
    basis.validate()?;
    let mut amp = Vec::with_capacity(cutoff);
    let mut a = c((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..cutoff {
        amp.push(a);
        a *= alpha / ((n + 1) as f64).sqrt();
    }
    let kept: f64 = amp.iter().map(|z| z.norm_sqr()).sum();
    check_truncation(1.0 - kept)?;
    let psi = CVector::from_vec(amp) / c(kept.sqrt(), 0.0);
    Ok(DensityMatrix::unchecked(vec![basis], &psi * psi.adjoint()))
}

pub fn make_thermal(nbar: f64, cutoff: usize) -> Result<DensityMatrix> {
    let basis = BasisTag::Fock { cutoff };
    basis.validate()?;
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "mean occupation must be >= 0, got {nbar}"
        )));
    }
    let q = nbar / (1.0 + nbar);
    check_truncation(q.powi(cutoff as i32))?;
    let weights: Vec<f64> = (0..cutoff)
        .map(|n| q.powi(n as i32) / (1.0 + nbar))
        .collect();
    let total: f64 = weights.iter().sum();
    let m = CMatrix::from_diagonal(&CVector::from_iterator(
        cutoff,
        weights.iter().map(|w| c(w / total, 0.0)),
    ));
    Ok(DensityMatrix::unchecked(vec![basis], m))
}

fn check_truncation(lost: f64) -> Result<()> {
    if lost > TRUNCATION_LIMIT {
        Err(Error::Truncation {
            lost,
            limit: TRUNCATION_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Block-diagonal symplectic form for interleaved `(x₁, p₁, x₂, p₂, …)`.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut om = DMatrix::zeros(2 * modes, 2 * modes);
    for j in 0..modes {
        om[(2 * j, 2 * j + 1)] = 1.0;
        om[(2 * j + 1, 2 * j)] = -1.0;
    }
    om
}

/// Checks `V = Vᵀ` and `V + (i/2)Ω ⪰ 0`.
pub fn validate_covariance(cov: &DMatrix<f64>) -> Result<()> {
    let n2 = cov.nrows();
    if n2 == 0 || !n2.is_multiple_of(2) || cov.ncols() != n2 {
        return Err(Error::Shape(format!(
            "covariance must be 2N x 2N, got {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let asym = (cov - cov.transpose()).abs().max();
    if asym > 1e-12 {
        return Err(Error::NotAQuantumState(format!(
            "covariance not symmetric (deviation {asym:.3e})"
        )));
    }
    let om = symplectic_form(n2 / 2);
    let m = CMatrix::from_fn(n2, n2, |r, k| c(cov[(r, k)], 0.5 * om[(r, k)]));
    let min = linalg::eigh(&m).0[0];
    if min < -1e-12 {
        return Err(Error::NotAQuantumState(format!(
            "covariance violates the uncertainty relation (min eigenvalue of V + iΩ/2 is {min:.3e})"
        )));
    }
    Ok(())
}

/// Fock-basis Gaussian state with first moments `mean` and symmetrized
/// covariance `cov`, both in interleaved `(x₁, p₁, …)` order.
///
/// Built from the generating function `Σ ρ_mn ū^m v^n/√(m!n!)`, which is
/// `exp(½zᵀAz + bᵀz + c)` for Gaussian states; the Fock elements follow from
/// the derivative recurrence of that exponential.
pub fn make_gaussian(mean: &[f64], cov: &DMatrix<f64>, cutoff: usize) -> Result<DensityMatrix> {
    validate_covariance(cov)?;
    let n2 = cov.nrows();
    let modes = n2 / 2;
    if mean.len() != n2 {
        return Err(Error::Shape(format!(
            "mean has {} entries, covariance needs {n2}",
            mean.len()
        )));
    }
    let basis = BasisTag::Fock { cutoff };
    basis.validate()?;
    let total = cutoff
        .checked_pow(n2 as u32)
        .filter(|&t| t <= 1 << 26)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "{modes} modes at cutoff {cutoff} is too large for a Gaussian build"
            ))
        })?;

    // Husimi covariance and the map r = L z from (ū_j, v_j) to (x_j, p_j).
    let sigma = cov + DMatrix::<f64>::identity(n2, n2) * 0.5;
    let sigma_inv = sigma
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotAQuantumState("singular covariance".into()))?;
    let det = sigma.determinant();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut l = CMatrix::zeros(n2, n2);
    for j in 0..modes {
        l[(2 * j, 2 * j)] = c(s, 0.0);
        l[(2 * j, 2 * j + 1)] = c(s, 0.0);
        l[(2 * j + 1, 2 * j)] = c(0.0, s);
        l[(2 * j + 1, 2 * j + 1)] = c(0.0, -s);
    }
    let to_c = |m: &DMatrix<f64>| m.map(|v| c(v, 0.0));
    let d = CVector::from_iterator(n2, mean.iter().map(|&v| c(v, 0.0)));
    let eye = DMatrix::<f64>::identity(n2, n2);
    let a = l.transpose() * to_c(&(eye - &sigma_inv)) * &l;
    let b = l.transpose() * to_c(&sigma_inv) * &d;
    let quad = (d.transpose() * to_c(&sigma_inv) * &d)[(0, 0)].re;
    let c0 = (-0.5 * quad - 0.5 * det.ln()).exp();

    // h over the multi-index k = (m₁, n₁, m₂, n₂, …), built in lexicographic
    // order so every predecessor is ready.
    let dims = vec![cutoff; n2];
    let sqrt: Vec<f64> = (0..=cutoff).map(|k| (k as f64).sqrt()).collect();
    let mut h = vec![c(0.0, 0.0); total];
    h[0] = c(1.0, 0.0);
    for flat in 1..total {
        let k = unravel(flat, &dims);
        // Step down along the last nonzero coordinate.
        let i = (0..n2).rev().find(|&i| k[i] > 0).expect("flat > 0");
        let mut prev = k.clone();
        prev[i] -= 1;
        let mut acc = b[i] * h[ravel(&prev, &dims)];
        for j in 0..n2 {
            if prev[j] > 0 && a[(i, j)] != c(0.0, 0.0) {
                let mut pj = prev.clone();
                pj[j] -= 1;
                acc += a[(i, j)] * sqrt[prev[j]] * h[ravel(&pj, &dims)];
            }
        }
        h[flat] = acc / sqrt[k[i]];
    }

    let dim = cutoff.pow(modes as u32);
    let mode_dims = vec![cutoff; modes];
    let mut m = CMatrix::zeros(dim, dim);
    let mut idx = vec![0usize; n2];
    for r in 0..dim {
        let mr = unravel(r, &mode_dims);
        for col in 0..dim {
            let nc = unravel(col, &mode_dims);
            for j in 0..modes {
                idx[2 * j] = mr[j];
                idx[2 * j + 1] = nc[j];
            }
            m[(r, col)] = h[ravel(&idx, &dims)] * c0;
        }
    }
    let tr = m.trace().re;
    check_truncation(1.0 - tr)?;
    m /= c(tr, 0.0);
    let rho = DensityMatrix::unchecked(vec![basis; modes], m);
    let min = rho.min_eigenvalue();
    if min < -PSD_TOL {
        return Err(Error::Truncation {
            lost: -min,
            limit: PSD_TOL,
        });
    }
    Ok(rho)
}

pub fn tensor_product(a: &DensityMatrix, b: &DensityMatrix) -> DensityMatrix {
    let mut bases = a.bases.clone();
    bases.extend_from_slice(&b.bases);
    DensityMatrix::unchecked(bases, linalg::kron(&a.matrix, &b.matrix))
}

/// Reduced state on the modes listed in `keep` (kept in ascending order).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho.modes();
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&bad) = keep.iter().find(|&&k| k >= n) {
        return Err(Error::IndexOutOfBasis(format!(
            "mode {bad} of a {n}-mode state"
        )));
    }
    if keep.is_empty() {
        return Err(Error::Shape("must keep at least one mode".into()));
    }
    let dims = rho.dims();
    let traced: Vec<usize> = (0..n).filter(|j| !keep.contains(j)).collect();
    let kdims: Vec<usize> = keep.iter().map(|&j| dims[j]).collect();
    let tdims: Vec<usize> = traced.iter().map(|&j| dims[j]).collect();
    let kd: usize = kdims.iter().product();
    let td: usize = tdims.iter().product();
    let mut out = CMatrix::zeros(kd, kd);
    let mut full = vec![0usize; n];
    let compose = |full: &mut Vec<usize>, ki: &[usize], ti: &[usize]| {
        for (p, &j) in keep.iter().enumerate() {
            full[j] = ki[p];
        }
        for (p, &j) in traced.iter().enumerate() {
            full[j] = ti[p];
        }
        ravel(full, &dims)
    };
    for r in 0..kd {
        let kr = unravel(r, &kdims);
        for col in 0..kd {
            let kc = unravel(col, &kdims);
            let mut acc = c(0.0, 0.0);
            for t in 0..td {
                let ti = unravel(t, &tdims);
                let fr = compose(&mut full, &kr, &ti);
                let fc = compose(&mut full, &kc, &ti);
                acc += rho.matrix[(fr, fc)];
            }
            out[(r, col)] = acc;
        }
    }
    let bases = keep.iter().map(|&j| rho.bases[j]).collect();
    Ok(DensityMatrix::unchecked(bases, out))
}

/// Zero-pads a Fock-basis state to larger per-mode cutoffs.
pub fn embed_fock(rho: &DensityMatrix, cutoffs: &[usize]) -> Result<DensityMatrix> {
    let old = rho.require_fock()?;
    if cutoffs.len() != old.len() || cutoffs.iter().zip(&old).any(|(n, o)| n < o) {
        return Err(Error::Shape(format!(
            "cannot embed cutoffs {old:?} into {cutoffs:?}"
        )));
    }
    let new_bases: Vec<BasisTag> = cutoffs
        .iter()
        .map(|&cutoff| BasisTag::Fock { cutoff })
        .collect();
    let d: usize = cutoffs.iter().product();
    let mut m = CMatrix::zeros(d, d);
    let od = rho.dim();
    let map: Vec<usize> = (0..od).map(|i| ravel(&unravel(i, &old), cutoffs)).collect();
    for r in 0..od {
        for col in 0..od {
            m[(map[r], map[col])] = rho.matrix[(r, col)];
        }
    }
    Ok(DensityMatrix::unchecked(new_bases, m))
}

pub fn compare(a: &DensityMatrix, b: &DensityMatrix) -> Result<StateMetrics> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "dims {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    if a.bases != b.bases {
        return Err(Error::Basis(format!("{:?} vs {:?}", a.bases, b.bases)));
    }
    Ok(StateMetrics {
        fidelity: linalg::fidelity(&a.matrix, &b.matrix).clamp(0.0, 1.0),
        trace_distance: linalg::trace_distance(&a.matrix, &b.matrix).clamp(0.0, 1.0),
        elementwise_max_error: linalg::max_abs_diff(&a.matrix, &b.matrix),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_state(rho: &DensityMatrix) {
        DensityMatrix::from_matrix(rho.bases().to_vec(), rho.matrix().clone()).unwrap();
    }

    #[test]
    fn fock_states() {
        let r = make_fock(0, 8).unwrap();
        assert_eq!(r.matrix()[(0, 0)], c(1.0, 0.0));
        assert_eq!(r.matrix().iter().filter(|z| z.norm() > 0.0).count(), 1);
        assert_eq!(make_fock(1, 8).unwrap().matrix()[(1, 1)], c(1.0, 0.0));
        assert!(matches!(make_fock(7, 4), Err(Error::IndexOutOfBasis(_))));
    }

    #[test]
    fn coherent_vacuum_weight_matches_series() {
        let r = make_coherent(c(1.0, 0.0), 16).unwrap();
        // Independent series oracle: Σ_{n<16} e^{-1}/n! is the kept mass.
        let mut kept = 0.0;
        let mut term = (-1.0f64).exp();
        for n in 0..16 {
            kept += term;
            term /= (n + 1) as f64;
        }
        let expected = (-1.0f64).exp() / kept;
        assert!((r.matrix()[(0, 0)].re - expected).abs() < 1e-15);
        assert!((r.matrix()[(0, 0)].re - 0.36788).abs() < 1e-4);
        assert_state(&r);
        assert_eq!(
            make_coherent(c(0.0, 0.0), 8).unwrap(),
            make_fock(0, 8).unwrap()
        );
    }

    #[test]
    fn coherent_truncation_error() {
        // Poisson(9) mass at n >= 8 is far above the limit.
        let mut tail = 1.0;
        let mut term = (-9.0f64).exp();
        for n in 0..8 {
            tail -= term;
            term *= 9.0 / (n + 1) as f64;
        }
        assert!(tail > 0.5);
        assert!(matches!(
            make_coherent(c(3.0, 0.0), 8),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn thermal_states() {
        let r = make_thermal(0.5, 32).unwrap();
        assert!((r.matrix()[(0, 0)].re - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(make_thermal(0.0, 8).unwrap(), make_fock(0, 8).unwrap());
        assert!(matches!(
            make_thermal(10.0, 8),
            Err(Error::Truncation { .. })
        ));
        // (1/3)^12 is above the limit, (1/3)^16 below.
        assert!(make_thermal(0.5, 12).is_err());
        assert!(make_thermal(0.5, 16).is_ok());
    }

    #[test]
    fn gaussian_vacuum_and_coherent() {
        let v = make_gaussian(&[0.0; 4], &(DMatrix::identity(4, 4) * 0.5), 10).unwrap();
        let vac = make_fock(0, 10).unwrap();
        let vv = tensor_product(&vac, &vac);
        assert!(linalg::max_abs_diff(v.matrix(), vv.matrix()) < 1e-14);

        let g = make_gaussian(&[2f64.sqrt(), 0.0], &(DMatrix::identity(2, 2) * 0.5), 16).unwrap();
        let coh = make_coherent(c(1.0, 0.0), 16).unwrap();
        assert!(compare(&g, &coh).unwrap().fidelity > 1.0 - 1e-8);
    }

    #[test]
    fn gaussian_thermal_matches_geometric() {
        let g = make_gaussian(&[0.0, 0.0], &(DMatrix::identity(2, 2) * 1.0), 32).unwrap();
        let t = make_thermal(0.5, 32).unwrap();
        assert!(linalg::max_abs_diff(g.matrix(), t.matrix()) < 1e-12);
    }

    #[test]
    fn gaussian_rejects_invalid_covariance() {
        let cov = DMatrix::from_diagonal_element(2, 2, 0.1);
        assert!(matches!(
            make_gaussian(&[0.0, 0.0], &cov, 8),
            Err(Error::NotAQuantumState(_))
        ));
    }

    #[test]
    fn squeezed_vacuum_has_even_support() {
        let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.25, 1.0]));
        let g = make_gaussian(&[0.0, 0.0], &cov, 24).unwrap();
        assert_state(&g);
        for n in (1..24).step_by(2) {
            assert!(g.matrix()[(n, n)].norm() < 1e-14);
        }
        // Pure state: purity one.
        let purity = (g.matrix() * g.matrix()).trace().re;
        assert!((purity - 1.0).abs() < 1e-8);
    }

    #[test]
    fn partial_trace_basics() {
        let vac = make_fock(0, 4).unwrap();
        let pt = partial_trace(&tensor_product(&vac, &vac), &[1]).unwrap();
        assert_eq!(pt, vac);
        let a = make_thermal(0.3, 12).unwrap();
        let b = make_coherent(c(0.5, 0.2), 8).unwrap();
        let ab = tensor_product(&a, &b);
        assert!(
            linalg::max_abs_diff(partial_trace(&ab, &[0]).unwrap().matrix(), a.matrix()) < 1e-14
        );
        assert!(
            linalg::max_abs_diff(partial_trace(&ab, &[1]).unwrap().matrix(), b.matrix()) < 1e-14
        );
        assert!(matches!(
            partial_trace(&ab, &[2]),
            Err(Error::IndexOutOfBasis(_))
        ));
    }

    #[test]
    fn partial_trace_of_correlated_gaussian_is_marginal_gaussian() {
        #[rustfmt::skip]
        let cov = DMatrix::from_row_slice(4, 4, &[
            0.8, 0.1, 0.3, 0.0,
            0.1, 0.6, 0.0, -0.2,
            0.3, 0.0, 0.7, 0.05,
            0.0, -0.2, 0.05, 0.9,
        ]);
        let mean = [0.3, -0.2, 0.1, 0.4];
        let g = make_gaussian(&mean, &cov, 18).unwrap();
        let reduced = partial_trace(&g, &[1]).unwrap();
        let sub = cov.view((2, 2), (2, 2)).into_owned();
        let direct = make_gaussian(&mean[2..], &sub, 18).unwrap();
        assert!(linalg::max_abs_diff(reduced.matrix(), direct.matrix()) < 1e-6);
    }

    #[test]
    fn compare_examples() {
        let a = make_fock(0, 6).unwrap();
        let b = make_fock(1, 6).unwrap();
        let same = compare(&a, &a).unwrap();
        assert!((same.fidelity - 1.0).abs() < 1e-12 && same.trace_distance < 1e-12);
        let orth = compare(&a, &b).unwrap();
        assert!(orth.fidelity < 1e-12 && (orth.trace_distance - 1.0).abs() < 1e-12);

        // Commuting diagonal states: F = (Σ √(p_n q_n))², here only n = 0 overlaps.
        let t = make_thermal(0.1, 6).unwrap();
        let p0 = t.matrix()[(0, 0)].re;
        let m = compare(&a, &t).unwrap();
        assert!((m.fidelity - p0).abs() < 1e-12);
        assert!((m.trace_distance - (1.0 - p0)).abs() < 1e-12);

        let small = make_fock(0, 4).unwrap();
        assert!(matches!(compare(&a, &small), Err(Error::Shape(_))));
    }

    #[test]
    fn json_round_trip() {
        let r = make_coherent(c(0.3, -0.4), 6).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: DensityMatrix = serde_json::from_str(&s).unwrap();
        assert!(linalg::max_abs_diff(r.matrix(), back.matrix()) < 1e-15);
        assert!(
            serde_json::from_str::<DensityMatrix>(&s.replace("\"dims\":[6]", "\"dims\":[5]"))
                .is_err()
        );
    }

    #[test]
    fn embed_pads_with_zeros() {
        let r = make_coherent(c(0.5, 0.0), 8).unwrap();
        let e = embed_fock(&r, &[12]).unwrap();
        assert_eq!(e.dim(), 12);
        assert_eq!(e.matrix()[(3, 2)], r.matrix()[(3, 2)]);
        assert_eq!(e.matrix()[(10, 10)], c(0.0, 0.0));
    }
}
