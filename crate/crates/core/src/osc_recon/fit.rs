//! Density matrix from a sampled characteristic function by linear least
//! squares on Fock matrix elements, followed by projection onto states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, LeastSquares};
use crate::osc_forward::{displacement_matrix, xi, CharGrid};
use crate::states::{BasisTag, DensityMatrix};

/// Fits with a larger condition number are refused.
pub const MAX_CONDITION: f64 = 1e10;
/// Projection distances above this flag the input as inconsistent with a state.
pub const PROJECTION_FLAG: f64 = 0.1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub state: DensityMatrix,
    /// Hermitian part of the raw least-squares solution, before projection.
    #[serde(skip)]
    pub unprojected: Option<CMatrix>,
    pub projection_distance: f64,
    pub flagged: bool,
    pub condition: f64,
    pub residual_rms: f64,
}

/// Precomputed design matrix for one sampling layout, reusable across many
/// data sets with the same cells.
pub struct CharFitter {
    cutoffs: Vec<usize>,
    rows: Vec<usize>,
    ls: LeastSquares,
    design: CMatrix,
}

impl CharFitter {
    pub fn new(layout: &CharGrid, cutoffs: &[usize]) -> Result<Self> {
        let n = layout.modes();
        if cutoffs.len() != n {
            return Err(Error::Shape(format!(
                "{} cutoffs for {n} modes",
                cutoffs.len()
            )));
        }
        if layout
            .filled
            .iter()
            .zip(&layout.inpainted)
            .any(|(f, i)| !f && !i)
            && !layout.filled.is_empty()
        {
            return Err(Error::Coverage(
                "characteristic function has unfilled cells".into(),
            ));
        }
        let rows: Vec<usize> = (0..layout.values.len()).collect();
        let dim: usize = cutoffs.iter().product();
        let theta_dims: Vec<usize> = layout.theta_axes.iter().map(Vec::len).collect();
        let mut design = CMatrix::zeros(rows.len(), dim * dim);
        for (r, &flat) in rows.iter().enumerate() {
            let (ei, ti) = layout.split(flat);
            let theta: Vec<f64> = match &layout.attained_theta {
                Some(att) => att[crate::grid::ravel(&ti, &theta_dims)].clone(),
                None => ti
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| layout.theta_axes[j][k])
                    .collect(),
            };
            let mats: Vec<CMatrix> = (0..n)
                .map(|j| displacement_matrix(xi(layout.eta_axes[j][ei[j]], theta[j]), cutoffs[j]))
                .collect();
            for m in 0..dim {
                let mi = crate::grid::unravel(m, cutoffs);
                for k in 0..dim {
                    let ki = crate::grid::unravel(k, cutoffs);
                    let mut v = c(1.0, 0.0);
                    for j in 0..n {
                        v *= mats[j][(ki[j], mi[j])];
                    }
                    design[(r, m * dim + k)] = v;
                }
            }
        }
        let ls = LeastSquares::new(design.clone());
        if !(ls.condition <= MAX_CONDITION) {
            return Err(Error::Inversion(format!(
                "design matrix condition number {:.3e} exceeds {MAX_CONDITION:.0e}; widen the eta range or lower the cutoff",
                ls.condition
            )));
        }
        Ok(Self {
            cutoffs: cutoffs.to_vec(),
            rows,
            ls,
            design,
        })
    }

    pub fn condition(&self) -> f64 {
        self.ls.condition
    }

    /// Raw least-squares matrix (Hermitian part).
    pub fn solve_raw(&self, char: &CharGrid) -> Result<(CMatrix, f64)> {
        if char.values.len() != self.design.nrows() {
            return Err(Error::Shape(
                "characteristic grid does not match the fitter layout".into(),
            ));
        }
        let b = CVector::from_iterator(self.rows.len(), self.rows.iter().map(|&r| char.values[r]));
        let x = self.ls.solve(&b);
        let residual = (&self.design * &x - &b).norm() / (b.len() as f64).sqrt();
        let dim: usize = self.cutoffs.iter().product();
        let m = CMatrix::from_fn(dim, dim, |r, col| x[r * dim + col]);
        Ok(((&m + m.adjoint()) * c(0.5, 0.0), residual))
    }

    pub fn fit(&self, char: &CharGrid) -> Result<FitReport> {
        let (raw, residual_rms) = self.solve_raw(char)?;
        let (projected, projection_distance) = linalg::project_density(&raw);
        let bases = self
            .cutoffs
            .iter()
            .map(|&cutoff| BasisTag::Fock { cutoff })
            .collect();
        let state = DensityMatrix::from_matrix(bases, projected)?;
        Ok(FitReport {
            state,
            unprojected: Some(raw),
            projection_distance,
            flagged: projection_distance > PROJECTION_FLAG,
            condition: self.ls.condition,
            residual_rms,
        })
    }
}

/// One-shot fit; see [`CharFitter`] to reuse the factorization.
pub fn rho_from_char(char: &CharGrid, cutoffs: &[usize]) -> Result<FitReport> {
    CharFitter::new(char, cutoffs)?.fit(char)
}
