//! Parameter sweeps: reconstruction error against the averaging window
//! `Tcap`, and against the number of shots.

use serde::{Deserialize, Serialize};

use ndtomo::linalg::CMatrix;
use ndtomo::osc_forward::evolve_and_record;
use ndtomo::osc_recon::{char_from_record_1d, CharFitter};
use ndtomo::record::SystemSpec;
use ndtomo::semicontinuous::{
    box_nd_from_projector, periodic_nd_from_projector, IndexPair, NdProjector, NdReconstruction,
    SemicontinuousRecorder,
};
use ndtomo::states::compare;

use crate::config::{LoadedConfig, Reconstruction};
use crate::error::{CliError, CliResult, Context};
use crate::reconstruct::{common_fock, symmetric_axis, truth_value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcapPoint {
    pub tcap: f64,
    /// Frobenius distance from the truth over the reconstructed entries.
    pub error: f64,
    pub max_error: f64,
    pub max_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotsPoint {
    pub shots: u64,
    pub repeats: usize,
    /// Root-mean-square Frobenius error of the unprojected fit.
    pub rms_error: f64,
    pub mean_fidelity: f64,
}

/// Streams the configured ring or box system once over `[t₀, t₀ + 2·max Tcap]`
/// with the configured time step, reconstructing at every requested `Tcap`.
pub fn sweep_tcap(loaded: &LoadedConfig, tcaps: &[f64]) -> CliResult<Vec<TcapPoint>> {
    let cfg = &loaded.config;
    let pairs = match &cfg.reconstruction {
        Reconstruction::Periodic { pairs, .. } | Reconstruction::Box { pairs, .. } => pairs.clone(),
        _ => {
            return Err(CliError::Config(
                "tcap sweeps need a periodic or box reconstruction".into(),
            ))
        }
    };
    if tcaps.is_empty() || tcaps.iter().any(|t| !(*t > 0.0)) {
        return Err(CliError::Config("tcap values must be positive".into()));
    }
    let truth = cfg.build_state()?;
    let is_ring = matches!(cfg.system, SystemSpec::Periodic(_));
    let pairs: Vec<IndexPair> = pairs
        .unwrap_or_else(|| IndexPair::window(truth.bases(), is_ring))
        .into_iter()
        .filter(|p| !is_ring || p.beta.iter().all(|&b| b != 0))
        .collect();
    let times = cfg.times()?;
    if times.len() < 2 {
        return Err(CliError::Config(
            "at `time_sampling`: a sweep needs a uniform step".into(),
        ));
    }
    let t0 = times[0];
    let dt = times[1] - times[0];
    let mut sorted: Vec<f64> = tcaps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut stops = Vec::with_capacity(sorted.len());
    for &tc in &sorted {
        let steps = (2.0 * tc / dt).round();
        if (steps * dt - 2.0 * tc).abs() > 1e-9 * (2.0 * tc) {
            return Err(CliError::Config(format!(
                "2 Tcap = {} is not a multiple of the time step {dt}",
                2.0 * tc
            )));
        }
        stops.push(steps as usize);
    }
    let grids = cfg.grids()?;
    let recorder = SemicontinuousRecorder::new(&truth, &cfg.system, &grids, cfg.shots, cfg.seed)
        .context("recorder")?;
    let mut proj = NdProjector::new(&cfg.system, &grids, &pairs).context("projector")?;
    let mut out = Vec::with_capacity(stops.len());
    let mut next = 0;
    let last = *stops.last().expect("non-empty");
    for k in 0..=last {
        let t = t0 + k as f64 * dt;
        proj.push_block(&recorder.block(t, k as u64))
            .context("projection")?;
        while next < stops.len() && stops[next] == k {
            let tcap = sorted[next];
            let nd: NdReconstruction = match &cfg.system {
                SystemSpec::Periodic(sys) => periodic_nd_from_projector(sys, &proj, tcap),
                SystemSpec::Box(sys) => box_nd_from_projector(sys, &proj, tcap),
                _ => unreachable!("checked above"),
            }
            .context("finite-time reconstruction")?;
            let d = nd.partial.dim();
            let (mut sq, mut worst) = (0.0f64, 0.0f64);
            for r in 0..d {
                for c in 0..d {
                    if let Some(v) = nd.partial.entry(r, c).value() {
                        let e =
                            (v - truth_value(&truth, &nd.partial.labels(r), &nd.partial.labels(c)))
                                .norm();
                        sq += e * e;
                        worst = worst.max(e);
                    }
                }
            }
            out.push(TcapPoint {
                tcap,
                error: sq.sqrt(),
                max_error: worst,
                max_bound: nd.max_bound,
            });
            next += 1;
        }
    }
    Ok(out)
}

/// Repeats the one-mode oscillator reconstruction at each shot count with
/// seeds `seed, seed + 1, …`.
pub fn sweep_shots(
    loaded: &LoadedConfig,
    shots: &[u64],
    repeats: usize,
) -> CliResult<Vec<ShotsPoint>> {
    let cfg = &loaded.config;
    let (eta_max, eta_points, cutoff) = match (&cfg.system, &cfg.reconstruction) {
        (
            SystemSpec::Oscillator(_),
            Reconstruction::Char1d {
                eta_max,
                eta_points,
                cutoff,
                ..
            },
        ) => (*eta_max, *eta_points, *cutoff),
        _ => {
            return Err(CliError::Config(
                "shot sweeps need a one-mode oscillator with the char_1d method".into(),
            ))
        }
    };
    if shots.is_empty() || shots.contains(&0) || repeats == 0 {
        return Err(CliError::Config(
            "shot counts and repeats must be positive".into(),
        ));
    }
    let SystemSpec::Oscillator(system) = &cfg.system else {
        unreachable!("matched above")
    };
    let truth = cfg.build_state()?;
    let times = cfg.times()?;
    let grids = cfg.grids()?;
    let eta = symmetric_axis(eta_max, eta_points);
    let exact = evolve_and_record(&truth, system, &times, &grids, None, cfg.seed)
        .context("layout record")?;
    let layout = char_from_record_1d(&exact, &eta).context("characteristic function")?;
    let fitter = CharFitter::new(&layout, &[cutoff]).context("design matrix")?;
    let truth_cut = truth.dims()[0];
    let d = truth_cut.max(cutoff);
    let pad = |m: &CMatrix| {
        let mut out = CMatrix::zeros(d, d);
        out.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
        out
    };
    let truth_m = pad(truth.matrix());
    let mut points = Vec::with_capacity(shots.len());
    for &m in shots {
        let (mut sq, mut fid) = (0.0, 0.0);
        for r in 0..repeats {
            let rec = evolve_and_record(
                &truth,
                system,
                &times,
                &grids,
                Some(m),
                cfg.seed.wrapping_add(r as u64),
            )
            .context("sampled record")?;
            let chi = char_from_record_1d(&rec, &eta).context("characteristic function")?;
            let fit = fitter.fit(&chi).context("density-matrix fit")?;
            let raw = fit
                .unprojected
                .as_ref()
                .expect("fit keeps the raw solution");
            sq += (pad(raw) - &truth_m)
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>();
            let (a, b) = common_fock(&fit.state, &truth)?;
            fid += compare(&a, &b).context("fidelity")?.fidelity;
        }
        points.push(ShotsPoint {
            shots: m,
            repeats,
            rms_error: (sq / repeats as f64).sqrt(),
            mean_fidelity: fid / repeats as f64,
        });
    }
    Ok(points)
}

/// Least-squares slope of `ln error` against `ln shots`.
pub fn log_log_slope(points: &[ShotsPoint]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|p| ((p.shots as f64).ln(), p.rms_error.ln()))
        .collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}
