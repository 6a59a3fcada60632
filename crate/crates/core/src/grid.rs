//! Uniform one-dimensional grids and tensor-product helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of points a grid may have.
pub const MIN_POINTS: usize = 16;

/// A uniform grid over one coordinate.
///
/// A closed grid includes both end points and integrates with the trapezoid
/// rule. A periodic grid omits `x_max` (it is identified with `x_min`) and
/// integrates with equal weights, which is exact for trigonometric
/// polynomials below the Nyquist index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    #[serde(default)]
    pub periodic: bool,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        let grid = Self {
            x_min,
            x_max,
            n_points,
            periodic: false,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn periodic(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        let grid = Self {
            x_min,
            x_max,
            n_points,
            periodic: true,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid needs x_min < x_max, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if self.n_points < MIN_POINTS {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least {MIN_POINTS} points, got {}",
                self.n_points
            )));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            self.length() / self.n_points as f64
        } else {
            self.length() / (self.n_points - 1) as f64
        }
    }

    pub fn point(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Quadrature weights matching [`SpatialGrid::points`].
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n_points];
        if !self.periodic {
            w[0] *= 0.5;
            w[self.n_points - 1] *= 0.5;
        }
        w
    }

    /// Index of the grid point equal to `x` (within 1e-9 of the spacing).
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let h = self.spacing();
        let f = (x - self.x_min) / h;
        let i = f.round();
        if i < 0.0 || i >= self.n_points as f64 || (f - i).abs() > 1e-9 {
            None
        } else {
            Some(i as usize)
        }
    }
}

/// Number of points of the tensor-product grid.
pub fn tensor_len(grids: &[SpatialGrid]) -> usize {
    grids.iter().map(|g| g.n_points).product()
}

/// Quadrature weights of the tensor-product grid, first mode slowest.
pub fn tensor_weights(grids: &[SpatialGrid]) -> Vec<f64> {
    let mut out = vec![1.0];
    for g in grids {
        let w = g.weights();
        out = out
            .iter()
            .flat_map(|a| w.iter().map(move |b| a * b))
            .collect();
    }
    out
}

/// Converts a flat tensor index into per-mode indices (first mode slowest).
pub fn unravel(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        idx[k] = flat % dims[k];
        flat /= dims[k];
    }
    idx
}

pub fn ravel(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (i, d)| acc * d + i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_grid_has_endpoints() {
        let g = SpatialGrid::new(-1.0, 1.0, 21).unwrap();
        assert_eq!(g.point(0), -1.0);
        assert!((g.point(20) - 1.0).abs() < 1e-15);
        let w: f64 = g.weights().iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn periodic_grid_omits_endpoint() {
        let g = SpatialGrid::periodic(0.0, 2.0, 16).unwrap();
        assert!((g.point(15) - 2.0 + 0.125).abs() < 1e-15);
        let w: f64 = g.weights().iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_small_or_inverted_grids() {
        assert!(SpatialGrid::new(0.0, 1.0, 8).is_err());
        assert!(SpatialGrid::new(1.0, 0.0, 32).is_err());
    }

    #[test]
    fn ravel_round_trip() {
        let dims = [3, 4, 5];
        for flat in 0..60 {
            assert_eq!(ravel(&unravel(flat, &dims), &dims), flat);
        }
    }

    #[test]
    fn index_of_matches_points() {
        let g = SpatialGrid::new(-3.0, 3.0, 61).unwrap();
        for i in 0..61 {
            assert_eq!(g.index_of(g.point(i)), Some(i));
        }
        assert_eq!(g.index_of(0.05), None);
    }
}
