//! Free particle on a ring and particle in a box.
//!
//! Units: `h = 2π`, `ħ = 1`. Ring levels are `E = Ω n²` with plane waves
//! `e^{2πinx/L}/√L`; box levels are `E = Ω′ n²` with `√(2/L) sin(nπx/L)`.
//! Both reconstructions project `Pr(x, t)` onto one spatial function per mode
//! and time-average against `e^{iΣ_j Ω_j ν_j β_j t}`, where `ν = n + n′` and
//! `β = n − n′` label the matrix element `ρ(n, n′)`.

mod bounds;
mod engine;
pub mod periodic;
pub mod square_well;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ravel, unravel};
use crate::linalg::{self, c, CMatrix};
use crate::ratio::{self, RatioReport};
use crate::states::{BasisTag, DensityMatrix};

pub use bounds::{apply_schwartz_bounds, schwartz_bounds, DiagonalBound, SCHWARTZ_SLACK};
pub use engine::{NdProjector, SemicontinuousRecorder};
pub use periodic::{
    periodic_forward, periodic_nd_from_projector, periodic_recon_1d, periodic_recon_nd,
};
pub use square_well::{
    box_forward, box_leakage_bounds, box_nd_from_projector, box_recon_1d, box_recon_nd,
    BoxReconstruction,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingMode {
    pub length: f64,
    /// Energy scale `Ω` with `E = Ω n²`.
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicSystem {
    pub modes: Vec<RingMode>,
}

impl PeriodicSystem {
    pub fn new(modes: Vec<RingMode>) -> Result<Self> {
        let s = Self { modes };
        s.validate()?;
        Ok(s)
    }

    /// From per-mode `(mass, length)`: `Ω = πh/(mL²) = 2π²/(mL²)`.
    pub fn from_mass_length(pairs: &[(f64, f64)]) -> Result<Self> {
        let modes = pairs
            .iter()
            .map(|&(m, l)| RingMode {
                length: l,
                omega: 2.0 * std::f64::consts::PI.powi(2) / (m * l * l),
            })
            .collect();
        Self::new(modes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::InvalidParameter(
                "periodic system needs at least one mode".into(),
            ));
        }
        for (j, m) in self.modes.iter().enumerate() {
            if !(m.length > 0.0 && m.length.is_finite() && m.omega > 0.0 && m.omega.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "mode {}: need L > 0 and Omega > 0",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega).collect()
    }

    /// Period `2π/Ω` of a single mode.
    pub fn period(&self, mode: usize) -> f64 {
        2.0 * std::f64::consts::PI / self.modes[mode].omega
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellMode {
    pub length: f64,
    /// Energy scale `Ω′ = Ω/4` with `E = Ω′ n²`.
    pub omega_prime: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSystem {
    pub modes: Vec<WellMode>,
}

impl BoxSystem {
    pub fn new(modes: Vec<WellMode>) -> Result<Self> {
        let s = Self { modes };
        s.validate()?;
        Ok(s)
    }

    /// From per-mode `(mass, length)`: `Ω′ = πh/(4mL²) = π²/(2mL²)`.
    pub fn from_mass_length(pairs: &[(f64, f64)]) -> Result<Self> {
        let modes = pairs
            .iter()
            .map(|&(m, l)| WellMode {
                length: l,
                omega_prime: std::f64::consts::PI.powi(2) / (2.0 * m * l * l),
            })
            .collect();
        Self::new(modes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::InvalidParameter(
                "box system needs at least one mode".into(),
            ));
        }
        for (j, m) in self.modes.iter().enumerate() {
            if !(m.length > 0.0
                && m.length.is_finite()
                && m.omega_prime > 0.0
                && m.omega_prime.is_finite())
            {
                return Err(Error::InvalidParameter(format!(
                    "mode {}: need L > 0 and Omega' > 0",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega_prime).collect()
    }

    pub fn period(&self, mode: usize) -> f64 {
        2.0 * std::f64::consts::PI / self.modes[mode].omega_prime
    }
}

/// Matrix element `ρ(n, n′)` addressed by `ν = n + n′` and `β = n − n′`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexPair {
    pub nu: Vec<i64>,
    pub beta: Vec<i64>,
}

impl IndexPair {
    pub fn new(nu: Vec<i64>, beta: Vec<i64>) -> Self {
        Self { nu, beta }
    }

    pub fn from_labels(n: &[i64], n_prime: &[i64]) -> Self {
        Self {
            nu: n.iter().zip(n_prime).map(|(a, b)| a + b).collect(),
            beta: n.iter().zip(n_prime).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn modes(&self) -> usize {
        self.nu.len()
    }

    /// Per-mode `ν_j ≡ β_j (mod 2)`.
    pub fn parity_valid(&self) -> Vec<bool> {
        self.nu
            .iter()
            .zip(&self.beta)
            .map(|(n, b)| (n - b).rem_euclid(2) == 0)
            .collect()
    }

    pub fn check(&self, modes: usize) -> Result<()> {
        if self.nu.len() != modes || self.beta.len() != modes {
            return Err(Error::Shape(format!(
                "index pair {self} does not have {modes} modes"
            )));
        }
        if self.parity_valid().iter().any(|ok| !ok) {
            return Err(Error::Parity(format!(
                "{self}: nu and beta must share parity in every mode"
            )));
        }
        Ok(())
    }

    pub fn check_box(&self, modes: usize) -> Result<()> {
        self.check(modes)?;
        if self.nu.iter().zip(&self.beta).any(|(n, b)| *n <= b.abs()) {
            return Err(Error::IndexDomain(self.to_string()));
        }
        Ok(())
    }

    /// Row labels `n = (ν + β)/2`.
    pub fn row(&self) -> Vec<i64> {
        self.nu
            .iter()
            .zip(&self.beta)
            .map(|(n, b)| (n + b) / 2)
            .collect()
    }

    /// Column labels `n′ = (ν − β)/2`.
    pub fn col(&self) -> Vec<i64> {
        self.nu
            .iter()
            .zip(&self.beta)
            .map(|(n, b)| (n - b) / 2)
            .collect()
    }

    /// `Σ_j w_j ν_j β_j`, the time key selecting this element.
    pub fn key(&self, scales: &[f64]) -> f64 {
        self.nu
            .iter()
            .zip(&self.beta)
            .zip(scales)
            .map(|((n, b), w)| w * (n * b) as f64)
            .sum()
    }

    /// Every element of the window spanned by `bases`, optionally skipping
    /// those with a vanishing `β_j`.
    pub fn window(bases: &[BasisTag], skip_zero_beta: bool) -> Vec<IndexPair> {
        let dims: Vec<usize> = bases.iter().map(BasisTag::dim).collect();
        let d: usize = dims.iter().product();
        let mut out = Vec::new();
        for a in 0..d {
            let ra: Vec<i64> = unravel(a, &dims)
                .iter()
                .zip(bases)
                .map(|(&i, b)| b.label(i))
                .collect();
            for b in 0..d {
                let rb: Vec<i64> = unravel(b, &dims)
                    .iter()
                    .zip(bases)
                    .map(|(&i, bt)| bt.label(i))
                    .collect();
                let p = IndexPair::from_labels(&ra, &rb);
                if skip_zero_beta && p.beta.contains(&0) {
                    continue;
                }
                out.push(p);
            }
        }
        out
    }
}

impl std::fmt::Display for IndexPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(nu={:?}, beta={:?})", self.nu, self.beta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EntryStatus {
    Known {
        re: f64,
        im: f64,
        /// Certified bound on the leakage from other elements, if finite-time.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bound: Option<f64>,
    },
    Unknown {
        reason: String,
    },
    Bounded {
        lo: f64,
        hi: f64,
    },
}

impl EntryStatus {
    pub fn value(&self) -> Option<Complex64> {
        match *self {
            EntryStatus::Known { re, im, .. } => Some(c(re, im)),
            _ => None,
        }
    }
}

/// A density matrix with per-entry status, first mode slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialDensityMatrix {
    pub bases: Vec<BasisTag>,
    /// Row-major, `dim × dim`.
    pub entries: Vec<EntryStatus>,
}

impl PartialDensityMatrix {
    pub fn unknown(bases: Vec<BasisTag>, reason: &str) -> Self {
        let d: usize = bases.iter().map(BasisTag::dim).product();
        Self {
            bases,
            entries: vec![
                EntryStatus::Unknown {
                    reason: reason.to_string()
                };
                d * d
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.bases.iter().map(BasisTag::dim).product()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.bases.iter().map(BasisTag::dim).collect()
    }

    pub fn flat_index(&self, labels: &[i64]) -> Result<usize> {
        if labels.len() != self.bases.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} modes",
                labels.len(),
                self.bases.len()
            )));
        }
        let idx = labels
            .iter()
            .zip(&self.bases)
            .map(|(&n, b)| {
                b.position(n).ok_or_else(|| {
                    Error::IndexOutOfBasis(format!("label {n} outside {}", basis_label(b)))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ravel(&idx, &self.dims()))
    }

    pub fn labels(&self, flat: usize) -> Vec<i64> {
        unravel(flat, &self.dims())
            .iter()
            .zip(&self.bases)
            .map(|(&i, b)| b.label(i))
            .collect()
    }

    pub fn get(&self, row: &[i64], col: &[i64]) -> Result<&EntryStatus> {
        let (r, cidx) = (self.flat_index(row)?, self.flat_index(col)?);
        Ok(&self.entries[r * self.dim() + cidx])
    }

    pub fn set(&mut self, row: &[i64], col: &[i64], status: EntryStatus) -> Result<()> {
        let (r, cidx) = (self.flat_index(row)?, self.flat_index(col)?);
        let d = self.dim();
        self.entries[r * d + cidx] = status;
        Ok(())
    }

    pub fn entry(&self, r: usize, col: usize) -> &EntryStatus {
        &self.entries[r * self.dim() + col]
    }

    pub fn is_complete(&self) -> bool {
        self.entries
            .iter()
            .all(|e| matches!(e, EntryStatus::Known { .. }))
    }

    pub fn count_known(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e, EntryStatus::Known { .. }))
            .count()
    }

    /// The full matrix, if every entry is known.
    pub fn to_matrix(&self) -> Option<CMatrix> {
        let d = self.dim();
        if !self.is_complete() {
            return None;
        }
        Some(CMatrix::from_fn(d, d, |r, col| {
            self.entry(r, col).value().expect("complete")
        }))
    }

    /// Hermitian part of the complete matrix projected onto states, with the
    /// Frobenius distance moved.
    pub fn to_state(&self) -> Result<(DensityMatrix, f64)> {
        let m = self
            .to_matrix()
            .ok_or_else(|| Error::Inversion("matrix has unknown entries".into()))?;
        let herm = (&m + m.adjoint()) * c(0.5, 0.0);
        let (proj, dist) = linalg::project_density(&herm);
        Ok((DensityMatrix::from_matrix(self.bases.clone(), proj)?, dist))
    }

    /// Largest `|ρ̂ − ρ|` over known entries of the same window.
    pub fn max_known_error(&self, truth: &DensityMatrix) -> Result<f64> {
        if truth.bases() != self.bases.as_slice() {
            return Err(Error::Basis(
                "truth and reconstruction use different bases".into(),
            ));
        }
        let d = self.dim();
        let mut worst = 0.0f64;
        for r in 0..d {
            for col in 0..d {
                if let Some(v) = self.entry(r, col).value() {
                    worst = worst.max((v - truth.matrix()[(r, col)]).norm());
                }
            }
        }
        Ok(worst)
    }
}

fn basis_label(b: &BasisTag) -> String {
    match *b {
        BasisTag::Fock { cutoff } => format!("Fock(0..{})", cutoff - 1),
        BasisTag::PlaneWave { n_min, n_max } => format!("PlaneWave({n_min}..{n_max})"),
        BasisTag::BoxSine { n_max } => format!("BoxSine(1..{n_max})"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRatio {
    pub modes: (usize, usize),
    pub ratio: RatioReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncommensurabilityReport {
    pub pairs: Vec<PairRatio>,
    /// Some pair has a rational ratio within the denominator cap.
    pub commensurable: bool,
    pub warnings: Vec<String>,
}

impl IncommensurabilityReport {
    pub fn require_incommensurable(&self) -> Result<()> {
        if let Some(p) = self.pairs.iter().find(|p| p.ratio.is_rational()) {
            let (a, b) = p.ratio.fraction.expect("rational");
            return Err(Error::Incommensurability(format!(
                "modes {} and {} have ratio {a}/{b}",
                p.modes.0 + 1,
                p.modes.1 + 1
            )));
        }
        Ok(())
    }
}

/// Pairwise continued-fraction classification of energy scales (or of
/// `m_j L_j²`, whose ratios are the inverse ones).
pub fn incommensurability_check(values: &[f64]) -> IncommensurabilityReport {
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let (lo, hi) = if values[i] <= values[j] {
                (values[i], values[j])
            } else {
                (values[j], values[i])
            };
            let r = ratio::classify(lo / hi);
            if let Some(w) = r.warning() {
                warnings.push(format!("modes {} and {}: {w}", i + 1, j + 1));
            }
            pairs.push(PairRatio {
                modes: (i, j),
                ratio: r,
            });
        }
    }
    let commensurable = pairs.iter().any(|p| p.ratio.is_rational());
    IncommensurabilityReport {
        pairs,
        commensurable,
        warnings,
    }
}

/// Result of an N-D finite-time reconstruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NdReconstruction {
    pub partial: PartialDensityMatrix,
    pub tcap: f64,
    /// Largest per-entry leakage bound.
    pub max_bound: f64,
    pub incommensurability: IncommensurabilityReport,
}
