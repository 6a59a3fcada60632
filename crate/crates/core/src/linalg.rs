//! Small dense linear-algebra helpers on complex matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Eigen-decomposition of a Hermitian matrix; eigenvalues ascending.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    // nalgebra's Hermitian QR iteration can return NaN on matrices with many
    // exactly-zero rows (Fock-diagonal products), so this goes through faer.
    use faer::complex_native::c64;
    let n = m.nrows();
    let herm = faer::Mat::<c64>::from_fn(n, n, |r, k| {
        let z = (m[(r, k)] + m[(k, r)].conj()) * 0.5;
        c64::new(z.re, z.im)
    });
    let eig = herm.selfadjoint_eigendecomposition(faer::Side::Lower);
    let s = eig.s().column_vector();
    let u = eig.u();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.read(a).re.total_cmp(&s.read(b).re));
    let vals = order.iter().map(|&i| s.read(i).re).collect();
    let vecs = CMatrix::from_fn(n, n, |r, k| {
        let z = u.read(r, order[k]);
        c(z.re, z.im)
    });
    (vals, vecs)
}

/// Rebuilds `V diag(f(λ)) V†`.
pub fn apply_spectral(vals: &[f64], vecs: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let n = vals.len();
    let mut scaled = vecs.clone();
    for k in 0..n {
        let s = f(vals[k]);
        for r in 0..n {
            scaled[(r, k)] *= s;
        }
    }
    &scaled * vecs.adjoint()
}

/// Square root of a positive semidefinite Hermitian matrix (negative
/// eigenvalues clipped to zero).
pub fn sqrt_psd(m: &CMatrix) -> CMatrix {
    let (vals, vecs) = eigh(m);
    apply_spectral(&vals, &vecs, |l| l.max(0.0).sqrt())
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Frobenius-nearest positive semidefinite unit-trace matrix, and the
/// Frobenius distance moved.
pub fn project_density(m: &CMatrix) -> (CMatrix, f64) {
    let (vals, vecs) = eigh(m);
    let proj = project_simplex(&vals);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for k in 0..n {
        for r in 0..n {
            scaled[(r, k)] *= proj[k];
        }
    }
    let out = &scaled * vecs.adjoint();
    let dist = (&out - m).norm();
    (out, dist)
}

/// Kronecker product, first factor slowest.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Trace distance ½‖a − b‖₁ of two Hermitian matrices.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let (vals, _) = eigh(&(a - b));
    0.5 * vals.iter().map(|l| l.abs()).sum::<f64>()
}

/// Squared Uhlmann fidelity (Tr √(√a b √a))².
pub fn fidelity(a: &CMatrix, b: &CMatrix) -> f64 {
    let sa = sqrt_psd(a);
    let inner = &sa * b * &sa;
    let (vals, _) = eigh(&inner);
    let f: f64 = vals.iter().map(|l| l.max(0.0).sqrt()).sum();
    f * f
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Singular-value decomposition based least squares. Returns the solution,
/// the singular values (descending) and the condition number.
pub struct LeastSquares {
    svd: nalgebra::SVD<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    pub singular_values: Vec<f64>,
    pub condition: f64,
}

impl LeastSquares {
    pub fn new(a: CMatrix) -> Self {
        let svd = a.svd(true, true);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let condition = match (sv.first(), sv.last()) {
            (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
            (Some(_), Some(_)) => f64::INFINITY,
            _ => 1.0,
        };
        Self {
            svd,
            singular_values: sv,
            condition,
        }
    }

    pub fn solve(&self, b: &CVector) -> CVector {
        let cutoff = self.singular_values.first().copied().unwrap_or(0.0) * 1e-14;
        self.svd
            .solve(b, cutoff)
            .expect("SVD computed with both factors")
    }

    /// Number of singular values above `rel` times the largest.
    pub fn rank(&self, rel: f64) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .filter(|&&s| s > rel * top)
            .count()
    }
}

/// Orthonormal basis of the null space of a real matrix, using `rel` as the
/// relative singular-value threshold.
pub fn null_space_real(a: &DMatrix<f64>, rel: f64) -> Vec<DVector<f64>> {
    let cols = a.ncols();
    // Pad to at least square so that the full right singular basis is returned.
    let rows = a.nrows().max(cols);
    let mut padded = DMatrix::<f64>::zeros(rows, cols);
    padded.view_mut((0, 0), (a.nrows(), cols)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    (0..cols)
        .filter(|&k| svd.singular_values[k] <= rel * top.max(f64::MIN_POSITIVE))
        .map(|k| vt.row(k).transpose())
        .collect()
}
