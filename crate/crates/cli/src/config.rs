//! Experiment configuration: one JSON document per run. Unknown keys are
//! rejected and every parse error names the offending field.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ndtomo::grid::SpatialGrid;
use ndtomo::linalg::{CMatrix, CVector};
use ndtomo::record::SystemSpec;
use ndtomo::semicontinuous::IndexPair;
use ndtomo::states::{
    make_coherent, make_fock, make_gaussian, make_thermal, tensor_product, BasisTag, DensityMatrix,
};

use crate::error::{CliError, CliResult, Context};

/// JSON schema of [`ExperimentConfig`].
pub const SCHEMA: &str = include_str!("../config.schema.json");

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub true_state: StateSpec,
    pub time_sampling: TimeSampling,
    /// One grid shared by every mode.
    #[serde(default)]
    pub grid: Option<SpatialGrid>,
    /// Per-mode grids; exclusive with `grid`.
    #[serde(default)]
    pub grids: Option<Vec<SpatialGrid>>,
    #[serde(default)]
    pub shots: Option<u64>,
    pub reconstruction: Reconstruction,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Fock {
        n: usize,
        cutoff: usize,
    },
    Coherent {
        alpha: [f64; 2],
        cutoff: usize,
    },
    Thermal {
        nbar: f64,
        cutoff: usize,
    },
    /// Multi-mode Gaussian with interleaved `(x₁, p₁, x₂, p₂, …)` mean and
    /// covariance. For chains the coordinates are site coordinates.
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
        cutoff: usize,
    },
    /// Pure state `Σ c_n |n⟩` in one basis, normalized on construction.
    Superposition {
        basis: BasisTag,
        amplitudes: Vec<Amplitude>,
    },
    /// `Σ w_k ρ_k` with weights normalized to one.
    Mixture {
        components: Vec<MixtureComponent>,
    },
    Product {
        factors: Vec<StateSpec>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Amplitude {
    pub n: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub state: StateSpec,
}

/// Either `times`, or `n_samples` equally spaced points from `t_min` to
/// `t_max` (or to `t_max_periods` periods of the first mode), end points
/// included.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSampling {
    #[serde(default)]
    pub t_min: Option<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub t_max_periods: Option<f64>,
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub times: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSpec {
    pub x_max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reconstruction {
    /// One-mode characteristic function, least-squares density matrix and
    /// optionally the backprojected Wigner function.
    #[serde(rename = "char_1d")]
    Char1d {
        eta_max: f64,
        eta_points: usize,
        cutoff: usize,
        #[serde(default)]
        wigner: Option<WignerSpec>,
    },
    /// Binned N-mode characteristic function, optionally fitted.
    CharNd {
        eta_max: f64,
        eta_points: usize,
        #[serde(default = "default_bins")]
        bins: usize,
        #[serde(default = "default_min_fill")]
        min_fill: f64,
        #[serde(default)]
        inpaint: bool,
        #[serde(default)]
        cutoffs: Option<Vec<usize>>,
    },
    /// Position moments, ladder moments and a Gaussian estimate.
    Moments {
        r_max: Vec<u32>,
        #[serde(default)]
        max_order: Option<u32>,
    },
    Periodic {
        #[serde(default)]
        pairs: Option<Vec<IndexPair>>,
        #[serde(default)]
        tcap: Option<f64>,
        #[serde(default)]
        tolerance: Option<f64>,
    },
    Box {
        #[serde(default)]
        pairs: Option<Vec<IndexPair>>,
        #[serde(default)]
        tcap: Option<f64>,
        #[serde(default)]
        tolerance: Option<f64>,
    },
}

fn default_bins() -> usize {
    ndtomo::osc_recon::char_nd::DEFAULT_BINS
}

fn default_min_fill() -> f64 {
    0.95
}

impl Reconstruction {
    pub fn tag(&self) -> &'static str {
        match self {
            Reconstruction::Char1d { .. } => "char_1d",
            Reconstruction::CharNd { .. } => "char_nd",
            Reconstruction::Moments { .. } => "moments",
            Reconstruction::Periodic { .. } => "periodic",
            Reconstruction::Box { .. } => "box",
        }
    }
}

/// Parsed configuration plus the SHA-256 of its bytes.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
}

pub fn load(path: &Path) -> CliResult<LoadedConfig> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse(&bytes)
}

pub fn parse(bytes: &[u8]) -> CliResult<LoadedConfig> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.inner()))
    })?;
    config.validate()?;
    Ok(LoadedConfig {
        config,
        hash: hex::encode(Sha256::digest(bytes)),
    })
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn modes(&self) -> usize {
        self.system.modes()
    }

    /// Checks the cross-field rules that the schema cannot express.
    pub fn validate(&self) -> CliResult<()> {
        let modes = self.modes();
        let kind = self.system.kind();
        let system_check = match &self.system {
            SystemSpec::Oscillator(s) => s.validate(),
            SystemSpec::Chain(s) => s.validate(),
            SystemSpec::Periodic(s) => s.validate(),
            SystemSpec::Box(s) => s.validate(),
        };
        system_check.map_err(|e| bad(format!("at `system`: {e}")))?;
        self.grids()?;
        self.times()?;

        let method = self.reconstruction.tag();
        let compatible = matches!(
            (&self.system, &self.reconstruction),
            (SystemSpec::Oscillator(_), Reconstruction::Char1d { .. })
                | (SystemSpec::Oscillator(_), Reconstruction::CharNd { .. })
                | (
                    SystemSpec::Oscillator(_) | SystemSpec::Chain(_),
                    Reconstruction::Moments { .. }
                )
                | (SystemSpec::Periodic(_), Reconstruction::Periodic { .. })
                | (SystemSpec::Box(_), Reconstruction::Box { .. })
        );
        if !compatible {
            return Err(bad(format!(
                "at `reconstruction.method`: method `{method}` does not apply to a {kind} system"
            )));
        }
        match &self.reconstruction {
            Reconstruction::Char1d {
                eta_points, cutoff, ..
            } => {
                if modes != 1 {
                    return Err(bad(format!(
                        "at `reconstruction`: char_1d needs one mode, the system has {modes}"
                    )));
                }
                if *eta_points < 3 || eta_points % 2 == 0 {
                    return Err(bad(
                        "at `reconstruction.eta_points`: need an odd count of at least 3",
                    ));
                }
                if *cutoff < 1 {
                    return Err(bad("at `reconstruction.cutoff`: must be positive"));
                }
            }
            Reconstruction::CharNd {
                eta_points,
                cutoffs,
                ..
            } => {
                if *eta_points < 1 {
                    return Err(bad("at `reconstruction.eta_points`: must be positive"));
                }
                if let Some(c) = cutoffs {
                    if c.len() != modes {
                        return Err(bad(format!(
                            "at `reconstruction.cutoffs`: {} entries for {modes} modes",
                            c.len()
                        )));
                    }
                }
            }
            Reconstruction::Moments { r_max, .. } => {
                if r_max.len() != modes {
                    return Err(bad(format!(
                        "at `reconstruction.r_max`: {} entries for {modes} modes",
                        r_max.len()
                    )));
                }
            }
            Reconstruction::Periodic { pairs, tcap, .. }
            | Reconstruction::Box { pairs, tcap, .. } => {
                if let Some(ps) = pairs {
                    if let Some((i, p)) = ps.iter().enumerate().find(|(_, p)| p.modes() != modes) {
                        return Err(bad(format!(
                            "at `reconstruction.pairs[{i}]`: {p} does not have {modes} modes"
                        )));
                    }
                }
                if modes > 1 && tcap.is_none() {
                    return Err(bad(
                        "at `reconstruction.tcap`: multi-mode reconstruction needs tcap",
                    ));
                }
                if let Some(t) = tcap {
                    if !(*t > 0.0) {
                        return Err(bad("at `reconstruction.tcap`: must be positive"));
                    }
                }
            }
        }
        if let SystemSpec::Chain(_) = self.system {
            if !matches!(self.true_state, StateSpec::Gaussian { .. }) {
                return Err(bad(
                    "at `true_state.kind`: chains are simulated from Gaussian states only",
                ));
            }
            if self.shots.is_none() {
                return Err(bad(
                    "at `shots`: chain simulation draws joint samples and needs a shot count",
                ));
            }
        }
        if self.shots == Some(0) {
            return Err(bad("at `shots`: must be positive"));
        }
        self.check_state_bases()
    }

    fn check_state_bases(&self) -> CliResult<()> {
        let modes = self.modes();
        let spec_modes =
            state_modes(&self.true_state).map_err(|e| bad(format!("at `true_state`: {e}")))?;
        if spec_modes != modes {
            return Err(bad(format!(
                "at `true_state`: state has {spec_modes} modes, the system has {modes}"
            )));
        }
        let expected = match self.system {
            SystemSpec::Oscillator(_) | SystemSpec::Chain(_) => "fock",
            SystemSpec::Periodic(_) => "plane_wave",
            SystemSpec::Box(_) => "box_sine",
        };
        let mut kinds = Vec::new();
        state_kinds(&self.true_state, &mut kinds);
        if let Some(k) = kinds.iter().find(|k| **k != expected) {
            return Err(bad(format!(
                "at `true_state`: {k} basis on a {} system (expected {expected})",
                self.system.kind()
            )));
        }
        Ok(())
    }

    pub fn grids(&self) -> CliResult<Vec<SpatialGrid>> {
        let modes = self.modes();
        let grids = match (&self.grid, &self.grids) {
            (Some(g), None) => vec![g.clone(); modes],
            (None, Some(gs)) => {
                if gs.len() != modes {
                    return Err(bad(format!(
                        "at `grids`: {} grids for {modes} modes",
                        gs.len()
                    )));
                }
                gs.clone()
            }
            (Some(_), Some(_)) => return Err(bad("`grid` and `grids` are exclusive")),
            (None, None) => return Err(bad("one of `grid` or `grids` is required")),
        };
        for (i, g) in grids.iter().enumerate() {
            g.validate()
                .map_err(|e| bad(format!("at `grids[{i}]`: {e}")))?;
        }
        Ok(grids)
    }

    /// Period of the first mode.
    pub fn period(&self) -> f64 {
        match &self.system {
            SystemSpec::Oscillator(s) => 2.0 * PI / s.omegas[0],
            SystemSpec::Chain(s) => 2.0 * PI / s.omega,
            SystemSpec::Periodic(s) => s.period(0),
            SystemSpec::Box(s) => s.period(0),
        }
    }

    pub fn times(&self) -> CliResult<Vec<f64>> {
        let ts = &self.time_sampling;
        if let Some(times) = &ts.times {
            if ts.t_max.is_some()
                || ts.t_max_periods.is_some()
                || ts.n_samples.is_some()
                || ts.t_min.is_some()
            {
                return Err(bad("at `time_sampling`: `times` excludes the other fields"));
            }
            if times.is_empty() || times.iter().any(|t| !(*t >= 0.0)) {
                return Err(bad("at `time_sampling.times`: need nonnegative times"));
            }
            return Ok(times.clone());
        }
        let t_min = ts.t_min.unwrap_or(0.0);
        let t_max =
            match (ts.t_max, ts.t_max_periods) {
                (Some(t), None) => t,
                (None, Some(p)) => p * self.period(),
                _ => return Err(bad(
                    "at `time_sampling`: give exactly one of `t_max`, `t_max_periods` or `times`",
                )),
            };
        let n = ts
            .n_samples
            .ok_or_else(|| bad("at `time_sampling.n_samples`: required with t_max"))?;
        if n < 1 || !(t_min >= 0.0) || !(t_max >= t_min) || (n == 1 && t_max > t_min) {
            return Err(bad(
                "at `time_sampling`: need 0 <= t_min <= t_max and n_samples >= 2 for a range",
            ));
        }
        if n == 1 {
            return Ok(vec![t_min]);
        }
        Ok((0..n)
            .map(|k| t_min + (t_max - t_min) * k as f64 / (n - 1) as f64)
            .collect())
    }

    /// The true state as a density matrix. For chains this is built in
    /// normal coordinates; see [`chain_gaussian`](Self::chain_gaussian).
    pub fn build_state(&self) -> CliResult<DensityMatrix> {
        build_state(&self.true_state).context("building the true state")
    }

    /// Site-coordinate mean, covariance and cutoff of a chain state.
    pub fn chain_gaussian(&self) -> CliResult<(Vec<f64>, DMatrix<f64>, usize)> {
        match &self.true_state {
            StateSpec::Gaussian { mean, cov, cutoff } => {
                Ok((mean.clone(), cov_matrix(cov).map_err(bad)?, *cutoff))
            }
            _ => Err(bad("at `true_state.kind`: expected a Gaussian state")),
        }
    }
}

fn cov_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err("covariance must be square".into());
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn state_modes(spec: &StateSpec) -> Result<usize, String> {
    Ok(match spec {
        StateSpec::Fock { .. }
        | StateSpec::Coherent { .. }
        | StateSpec::Thermal { .. }
        | StateSpec::Superposition { .. } => 1,
        StateSpec::Gaussian { mean, .. } => {
            if mean.len() % 2 != 0 {
                return Err("Gaussian mean needs an even number of entries".into());
            }
            mean.len() / 2
        }
        StateSpec::Mixture { components } => {
            let first = components.first().ok_or("mixture has no components")?;
            let m = state_modes(&first.state)?;
            for c in components {
                if state_modes(&c.state)? != m {
                    return Err("mixture components differ in mode count".into());
                }
            }
            m
        }
        StateSpec::Product { factors } => {
            factors.iter().map(state_modes).sum::<Result<usize, _>>()?
        }
    })
}

fn state_kinds(spec: &StateSpec, out: &mut Vec<&'static str>) {
    match spec {
        StateSpec::Fock { .. }
        | StateSpec::Coherent { .. }
        | StateSpec::Thermal { .. }
        | StateSpec::Gaussian { .. } => out.push("fock"),
        StateSpec::Superposition { basis, .. } => out.push(match basis {
            BasisTag::Fock { .. } => "fock",
            BasisTag::PlaneWave { .. } => "plane_wave",
            BasisTag::BoxSine { .. } => "box_sine",
        }),
        StateSpec::Mixture { components } => {
            components.iter().for_each(|c| state_kinds(&c.state, out))
        }
        StateSpec::Product { factors } => factors.iter().for_each(|f| state_kinds(f, out)),
    }
}

pub fn build_state(spec: &StateSpec) -> ndtomo::Result<DensityMatrix> {
    use ndtomo::Error;
    match spec {
        StateSpec::Fock { n, cutoff } => make_fock(*n, *cutoff),
        StateSpec::Coherent { alpha, cutoff } => {
            make_coherent(Complex64::new(alpha[0], alpha[1]), *cutoff)
        }
        StateSpec::Thermal { nbar, cutoff } => make_thermal(*nbar, *cutoff),
        StateSpec::Gaussian { mean, cov, cutoff } => {
            make_gaussian(mean, &cov_matrix(cov).map_err(Error::Shape)?, *cutoff)
        }
        StateSpec::Superposition { basis, amplitudes } => {
            basis.validate()?;
            let mut v = CVector::zeros(basis.dim());
            for a in amplitudes {
                let i = basis.position(a.n).ok_or_else(|| {
                    Error::IndexOutOfBasis(format!("{} is not in {basis:?}", a.n))
                })?;
                v[i] += Complex64::new(a.re, a.im);
            }
            let norm = v.norm();
            if !(norm > 0.0) {
                return Err(Error::NotAQuantumState(
                    "superposition has zero norm".into(),
                ));
            }
            DensityMatrix::from_pure(vec![*basis], &(v / Complex64::new(norm, 0.0)))
        }
        StateSpec::Mixture { components } => {
            let total: f64 = components.iter().map(|c| c.weight).sum();
            if components.iter().any(|c| !(c.weight >= 0.0)) || !(total > 0.0) {
                return Err(Error::NotAQuantumState(
                    "mixture weights must be nonnegative with a positive sum".into(),
                ));
            }
            let mut bases = None;
            let mut acc: Option<CMatrix> = None;
            for c in components {
                let rho = build_state(&c.state)?;
                if let Some(b) = &bases {
                    if b != rho.bases() {
                        return Err(Error::Basis(
                            "mixture components use different bases".into(),
                        ));
                    }
                } else {
                    bases = Some(rho.bases().to_vec());
                }
                let term = rho.matrix() * Complex64::new(c.weight / total, 0.0);
                acc = Some(match acc {
                    Some(a) => a + term,
                    None => term,
                });
            }
            DensityMatrix::from_matrix(bases.expect("non-empty"), acc.expect("non-empty"))
        }
        StateSpec::Product { factors } => {
            let mut it = factors.iter();
            let first = it
                .next()
                .ok_or_else(|| Error::Shape("product has no factors".into()))?;
            let mut rho = build_state(first)?;
            for f in it {
                rho = tensor_product(&rho, &build_state(f)?);
            }
            Ok(rho)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "system": {"kind": "oscillator", "omegas": [1.0]},
            "true_state": {"kind": "coherent", "alpha": [1.0, 0.0], "cutoff": 14},
            "time_sampling": {"t_max": 3.0, "n_samples": 64},
            "grid": {"x_min": -8.0, "x_max": 8.0, "n_points": 161},
            "reconstruction": {"method": "char_1d", "eta_max": 10.0, "eta_points": 81, "cutoff": 12},
            "seed": 7
        })
    }

    fn parse_value(v: &serde_json::Value) -> CliResult<LoadedConfig> {
        parse(&serde_json::to_vec(v).unwrap())
    }

    #[test]
    fn accepts_valid_config() {
        let c = parse_value(&base()).unwrap();
        assert_eq!(c.config.times().unwrap().len(), 64);
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn unknown_key_names_its_path() {
        let mut v = base();
        v["reconstruction"]["etamax"] = serde_json::json!(3.0);
        let err = parse_value(&v).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("reconstruction"), "{err}");
    }

    #[test]
    fn wrong_type_names_its_path() {
        let mut v = base();
        v["grid"]["n_points"] = serde_json::json!("many");
        let err = parse_value(&v).unwrap_err().to_string();
        assert!(err.contains("grid.n_points"), "{err}");
    }

    #[test]
    fn method_must_fit_system() {
        let mut v = base();
        v["system"] =
            serde_json::json!({"kind": "box", "modes": [{"length": 1.0, "omega_prime": 1.0}]});
        let err = parse_value(&v).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("char_1d"));
    }

    #[test]
    fn state_basis_must_fit_system() {
        let mut v = base();
        v["true_state"] = serde_json::json!({
            "kind": "superposition",
            "basis": {"kind": "plane_wave", "n_min": -1, "n_max": 1},
            "amplitudes": [{"n": 1, "re": 1.0}]
        });
        assert!(parse_value(&v)
            .unwrap_err()
            .to_string()
            .contains("plane_wave"));
    }

    #[test]
    fn period_based_sampling() {
        let mut v = base();
        v["time_sampling"] = serde_json::json!({"t_max_periods": 0.5, "n_samples": 3});
        let t = parse_value(&v).unwrap().config.times().unwrap();
        assert!((t[2] - PI).abs() < 1e-12);
    }

    #[test]
    fn mixture_normalizes_weights() {
        let spec = StateSpec::Mixture {
            components: vec![
                MixtureComponent {
                    weight: 3.0,
                    state: StateSpec::Fock { n: 0, cutoff: 3 },
                },
                MixtureComponent {
                    weight: 1.0,
                    state: StateSpec::Fock { n: 2, cutoff: 3 },
                },
            ],
        };
        let rho = build_state(&spec).unwrap();
        assert!((rho.matrix()[(0, 0)].re - 0.75).abs() < 1e-15);
        assert!((rho.matrix()[(2, 2)].re - 0.25).abs() < 1e-15);
    }

    #[test]
    fn schema_is_json() {
        let v: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        assert_eq!(v["type"], "object");
    }
}
