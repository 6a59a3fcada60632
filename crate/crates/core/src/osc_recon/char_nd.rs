//! N-mode characteristic function assembled from a time series by binning
//! the visited phases.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::linalg::{c, CMatrix};
use crate::osc_forward::{apply_along_axis, CharGrid};
use crate::record::{BlockData, MeasurementRecord, RecordBlock};

/// Default number of θ bins per axis (width π/64).
pub const DEFAULT_BINS: usize = 64;

#[derive(Clone, Debug)]
pub struct CharNdOptions {
    pub eta_axes: Vec<Vec<f64>>,
    pub bins: usize,
    /// Minimum fraction of θ cells that must be visited.
    pub min_fill: f64,
    /// Fill unvisited cells from the nearest visited one (flagged).
    pub inpaint: bool,
}

impl CharNdOptions {
    pub fn new(eta_axes: Vec<Vec<f64>>) -> Self {
        Self {
            eta_axes,
            bins: DEFAULT_BINS,
            min_fill: 0.95,
            inpaint: false,
        }
    }
}

/// Streaming accumulator: feed blocks one at a time, then [`finish`].
///
/// Each θ cell keeps the block whose folded phases lie closest to the cell
/// centre, together with the phases it actually attained.
///
/// [`finish`]: CharAccumulator::finish
pub struct CharAccumulator {
    opts: CharNdOptions,
    grids: Vec<SpatialGrid>,
    points: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    cells: Vec<Option<Cell>>,
    blocks_seen: usize,
}

struct Cell {
    dist2: f64,
    theta: Vec<f64>,
    values: Vec<Complex64>,
}

impl CharAccumulator {
    pub fn new(opts: CharNdOptions, grids: &[SpatialGrid]) -> Result<Self> {
        let n = grids.len();
        if opts.eta_axes.len() != n {
            return Err(Error::Shape(format!(
                "{} eta axes for {n} modes",
                opts.eta_axes.len()
            )));
        }
        if opts.bins < 1 {
            return Err(Error::InvalidParameter("need at least one bin".into()));
        }
        let cells = opts
            .bins
            .checked_pow(n as u32)
            .ok_or_else(|| Error::InvalidParameter("too many cells".into()))?;
        Ok(Self {
            points: grids.iter().map(SpatialGrid::points).collect(),
            weights: grids.iter().map(SpatialGrid::weights).collect(),
            grids: grids.to_vec(),
            cells: (0..cells).map(|_| None).collect(),
            opts,
            blocks_seen: 0,
        })
    }

    fn cell_of(&self, theta: &[f64]) -> (usize, f64) {
        let w = PI / self.opts.bins as f64;
        let mut flat = 0;
        let mut d2 = 0.0;
        for &th in theta {
            let k = ((th / w) as usize).min(self.opts.bins - 1);
            let centre = (k as f64 + 0.5) * w;
            d2 += (th - centre).powi(2);
            flat = flat * self.opts.bins + k;
        }
        (flat, d2)
    }

    pub fn push(&mut self, block: &RecordBlock) -> Result<()> {
        let n = self.grids.len();
        if block.theta.len() != n || block.folds.len() != n {
            return Err(Error::Shape(
                "oscillator blocks need per-mode phases and fold counts".into(),
            ));
        }
        self.blocks_seen += 1;
        let (flat, d2) = self.cell_of(&block.theta);
        if matches!(&self.cells[flat], Some(cell) if cell.dist2 <= d2) {
            return Ok(());
        }
        let signs: Vec<f64> = block
            .folds
            .iter()
            .map(|f| if f.rem_euclid(2) == 0 { 1.0 } else { -1.0 })
            .collect();
        let values = match &block.data {
            BlockData::Distribution(p) => {
                let mut t: Vec<Complex64> = p.iter().map(|&v| c(v, 0.0)).collect();
                let mut shape: Vec<usize> = self.grids.iter().map(|g| g.n_points).collect();
                for j in 0..n {
                    let eta = &self.opts.eta_axes[j];
                    let m = CMatrix::from_fn(eta.len(), self.points[j].len(), |e, k| {
                        Complex64::from_polar(
                            self.weights[j][k],
                            signs[j] * eta[e] * self.points[j][k],
                        )
                    });
                    (t, shape) = apply_along_axis(&t, &shape, j, &m);
                }
                t
            }
            BlockData::Samples(s) => {
                let dims: Vec<usize> = self.opts.eta_axes.iter().map(Vec::len).collect();
                let total: usize = dims.iter().product();
                let shots = (s.len() / n).max(1) as f64;
                let mut out = vec![c(0.0, 0.0); total];
                for xs in s.chunks_exact(n) {
                    for (flat, o) in out.iter_mut().enumerate() {
                        let idx = crate::grid::unravel(flat, &dims);
                        let phase: f64 = (0..n)
                            .map(|j| signs[j] * self.opts.eta_axes[j][idx[j]] * xs[j])
                            .sum();
                        *o += Complex64::from_polar(1.0, phase);
                    }
                }
                out.iter().map(|v| v / shots).collect()
            }
        };
        self.cells[flat] = Some(Cell {
            dist2: d2,
            theta: block.theta.clone(),
            values,
        });
        Ok(())
    }

    pub fn fill_fraction(&self) -> f64 {
        self.cells.iter().filter(|c| c.is_some()).count() as f64 / self.cells.len() as f64
    }

    pub fn finish(self) -> Result<CharGrid> {
        let fill = self.fill_fraction();
        if fill < self.opts.min_fill {
            return Err(Error::Coverage(format!(
                "only {:.1}% of the {} phase cells were visited (need {:.1}%) after {} blocks",
                100.0 * fill,
                self.cells.len(),
                100.0 * self.opts.min_fill,
                self.blocks_seen
            )));
        }
        let n = self.grids.len();
        let bins = self.opts.bins;
        let w = PI / bins as f64;
        let theta_axes: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..bins).map(|k| (k as f64 + 0.5) * w).collect())
            .collect();
        let eta_dims: Vec<usize> = self.opts.eta_axes.iter().map(Vec::len).collect();
        let theta_dims = vec![bins; n];
        let mut grid = CharGrid {
            eta_axes: self.opts.eta_axes.clone(),
            theta_axes,
            values: Vec::new(),
            filled: Vec::new(),
            inpainted: Vec::new(),
            attained_theta: None,
        };
        let total = grid.eta_cells() * grid.theta_cells();
        grid.values = vec![c(0.0, 0.0); total];
        grid.filled = vec![false; total];
        grid.inpainted = vec![false; total];

        // Nearest visited cell for inpainting, by θ-index distance.
        let visited: Vec<usize> = (0..self.cells.len())
            .filter(|&k| self.cells[k].is_some())
            .collect();
        let source = |cell: usize| -> Option<usize> {
            if self.cells[cell].is_some() {
                return Some(cell);
            }
            if !self.opts.inpaint {
                return None;
            }
            let me = crate::grid::unravel(cell, &theta_dims);
            visited.iter().copied().min_by_key(|&v| {
                let o = crate::grid::unravel(v, &theta_dims);
                me.iter()
                    .zip(&o)
                    .map(|(a, b)| (*a as i64 - *b as i64).pow(2))
                    .sum::<i64>()
            })
        };
        let mut attained = vec![vec![f64::NAN; n]; self.cells.len()];
        for cell in 0..self.cells.len() {
            let Some(src) = source(cell) else { continue };
            let data = self.cells[src].as_ref().expect("visited");
            attained[cell] = data.theta.clone();
            let tidx = crate::grid::unravel(cell, &theta_dims);
            for (e, v) in data.values.iter().enumerate() {
                let eidx = crate::grid::unravel(e, &eta_dims);
                let flat = grid.index(&eidx, &tidx);
                grid.values[flat] = *v;
                grid.filled[flat] = src == cell;
                grid.inpainted[flat] = src != cell;
            }
        }
        grid.attained_theta = Some(attained);
        Ok(grid)
    }
}

/// Bins every block of an N-mode record into a characteristic-function grid.
pub fn char_from_record_nd(record: &MeasurementRecord, opts: CharNdOptions) -> Result<CharGrid> {
    record.validate()?;
    let mut acc = CharAccumulator::new(opts, &record.header.grids)?;
    for b in &record.blocks {
        acc.push(b)?;
    }
    acc.finish()
}
