//! Dispatches a record to the reconstruction named in the config and scores
//! the result against the configured true state.

use num_complex::Complex64;
use serde_json::json;

use ndtomo::chain::{normal_modes, reconstructability_check, to_normal_coordinates};
use ndtomo::linalg::CMatrix;
use ndtomo::osc_forward::{char_at, wigner_oracle, CharGrid, SpectralState};
use ndtomo::osc_recon::moments::moment_label;
use ndtomo::osc_recon::{
    char_from_record_1d, char_from_record_nd, gaussian_from_moments, measure_position_moments,
    rho_from_char, second_moment_oracle, solve_moments, weyl_moment_oracle,
    wigner_backprojection_1d, CharNdOptions, GaussianEstimate, MomentStatus, MomentTable,
};
use ndtomo::ratio;
use ndtomo::record::{MeasurementRecord, SystemSpec};
use ndtomo::semicontinuous::periodic::DIAGONAL_NOTE;
use ndtomo::semicontinuous::{
    apply_schwartz_bounds, box_recon_1d, box_recon_nd, periodic_recon_1d, periodic_recon_nd,
    EntryStatus as Pdm, IndexPair, PartialDensityMatrix,
};
use ndtomo::states::{compare, embed_fock, DensityMatrix};
use ndtomo::Error;

use crate::config::{LoadedConfig, Reconstruction};
use crate::error::{CliError, CliResult, Context};
use crate::report::{EntryReport, EntryStatus, RunReport};
use crate::table::Table;

/// Everything a reconstruction produces besides the report.
#[derive(Debug)]
pub struct Artifacts {
    pub report: RunReport,
    pub state: Option<DensityMatrix>,
    pub partial: Option<PartialDensityMatrix>,
    pub moments: Option<serde_json::Value>,
    pub tables: Vec<(String, Table)>,
}

/// Symmetric axis `[-max, max]` with `points` samples.
pub fn symmetric_axis(max: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|k| -max + 2.0 * max * k as f64 / (points - 1) as f64)
        .collect()
}

pub fn reconstruct(record: &MeasurementRecord, loaded: &LoadedConfig) -> CliResult<Artifacts> {
    let cfg = &loaded.config;
    let rec_kind = record.header.system.kind();
    if rec_kind != cfg.system.kind() || record.modes() != cfg.modes() {
        return Err(CliError::Config(format!(
            "record holds a {}-mode {rec_kind} system, the config a {}-mode {}",
            record.modes(),
            cfg.modes(),
            cfg.system.kind()
        )));
    }
    let mut report = RunReport::new(cfg.reconstruction.tag(), cfg.system.kind());
    report
        .provenance
        .insert("config_sha256".into(), loaded.hash.clone());
    if let Some(h) = record.header.provenance.get("config_sha256") {
        report
            .provenance
            .insert("record_config_sha256".into(), h.clone());
    }
    if let Some(seed) = record.header.seed {
        report
            .provenance
            .insert("record_seed".into(), seed.to_string());
    }
    let mut out = Artifacts {
        report,
        state: None,
        partial: None,
        moments: None,
        tables: Vec::new(),
    };
    match &cfg.reconstruction {
        Reconstruction::Char1d {
            eta_max,
            eta_points,
            cutoff,
            wigner,
        } => {
            let truth = cfg.build_state()?;
            let eta = symmetric_axis(*eta_max, *eta_points);
            let chi = out
                .report
                .time("characteristic", || char_from_record_1d(record, &eta))
                .context("characteristic function")?;
            fit_and_score(&mut out, &chi, &[*cutoff], &truth)?;
            if let Some(w) = wigner {
                let xs = symmetric_axis(w.x_max, w.points);
                let est = out
                    .report
                    .time("backprojection", || {
                        wigner_backprojection_1d(&chi, &xs, &xs)
                    })
                    .context("Wigner backprojection")?;
                let oracle =
                    wigner_oracle(&truth, std::slice::from_ref(&xs), std::slice::from_ref(&xs)).context("Wigner oracle")?;
                out.report
                    .diag("wigner_max_error", est.max_abs_diff(&oracle));
                let mut t = Table::new(&["x", "p", "w", "w_true"]);
                for (i, x) in xs.iter().enumerate() {
                    for (j, p) in xs.iter().enumerate() {
                        let k = i * xs.len() + j;
                        t.push(vec![*x, *p, est.values[k], oracle.values[k]]);
                    }
                }
                out.tables.push(("wigner.tsv".into(), t));
            }
        }
        Reconstruction::CharNd {
            eta_max,
            eta_points,
            bins,
            min_fill,
            inpaint,
            cutoffs,
        } => {
            let truth = cfg.build_state()?;
            let axis = symmetric_axis(*eta_max, *eta_points);
            let opts = CharNdOptions {
                eta_axes: vec![axis; cfg.modes()],
                bins: *bins,
                min_fill: *min_fill,
                inpaint: *inpaint,
            };
            let chi = out
                .report
                .time("characteristic", || char_from_record_nd(record, opts))
                .context("characteristic function")?;
            score_char_cells(&mut out.report, &chi, &truth)?;
            if let Some(cut) = cutoffs {
                fit_and_score(&mut out, &chi, cut, &truth)?;
            }
        }
        Reconstruction::Moments { r_max, max_order } => {
            moments(&mut out, record, loaded, r_max, *max_order)?
        }
        Reconstruction::Periodic {
            pairs,
            tcap,
            tolerance,
        } => {
            let truth = cfg.build_state()?;
            let pairs = pairs
                .clone()
                .unwrap_or_else(|| IndexPair::window(truth.bases(), true));
            let mut partial = match tcap {
                None => out
                    .report
                    .time("projection", || periodic_recon_1d(record, &pairs))
                    .context("ring reconstruction")?,
                Some(t) => {
                    let nd = out
                        .report
                        .time("projection", || {
                            periodic_recon_nd(record, &pairs, *t, *tolerance)
                        })
                        .context("ring reconstruction")?;
                    out.report.diag("tcap", nd.tcap);
                    out.report.diag("max_leakage_bound", nd.max_bound);
                    out.report
                        .diag("incommensurability", &nd.incommensurability);
                    nd.partial
                }
            };
            out.report.diag("diagonal_unrecoverable", true);
            out.report.diag("diagonal_note", DIAGONAL_NOTE);
            let bounds = apply_schwartz_bounds(&mut partial).context("Schwartz bounds")?;
            out.report.diag("schwartz_intervals", &bounds);
            score_partial(&mut out.report, &partial, &truth)?;
            out.partial = Some(partial);
        }
        Reconstruction::Box {
            pairs,
            tcap,
            tolerance,
        } => {
            let truth = cfg.build_state()?;
            let pairs = pairs
                .clone()
                .unwrap_or_else(|| IndexPair::window(truth.bases(), false));
            let (partial, state) = match tcap {
                None => {
                    let r = out
                        .report
                        .time("projection", || box_recon_1d(record, &pairs))
                        .context("box reconstruction")?;
                    if let Some(d) = r.projection_distance {
                        out.report.diag("projection_distance", d);
                    }
                    (r.partial, r.state)
                }
                Some(t) => {
                    let nd = out
                        .report
                        .time("projection", || {
                            box_recon_nd(record, &pairs, *t, *tolerance)
                        })
                        .context("box reconstruction")?;
                    out.report.diag("tcap", nd.tcap);
                    out.report.diag("max_leakage_bound", nd.max_bound);
                    out.report
                        .diag("incommensurability", &nd.incommensurability);
                    let state = if nd.partial.is_complete() {
                        let (s, d) = nd
                            .partial
                            .to_state()
                            .context("projecting the box reconstruction")?;
                        out.report.diag("projection_distance", d);
                        Some(s)
                    } else {
                        None
                    };
                    (nd.partial, state)
                }
            };
            score_partial(&mut out.report, &partial, &truth)?;
            if let Some(s) = &state {
                if s.bases() == truth.bases() {
                    out.report.metrics =
                        Some(compare(s, &truth).context("comparing with the true state")?);
                }
            }
            out.state = state;
            out.partial = Some(partial);
        }
    }
    Ok(out)
}

fn fock_cutoffs(rho: &DensityMatrix) -> CliResult<Vec<usize>> {
    rho.require_fock().context("expected a Fock-basis state")
}

/// Pads both states to the larger cutoff per mode.
pub(crate) fn common_fock(
    a: &DensityMatrix,
    b: &DensityMatrix,
) -> CliResult<(DensityMatrix, DensityMatrix)> {
    let ca = fock_cutoffs(a)?;
    let cb = fock_cutoffs(b)?;
    if ca.len() != cb.len() {
        return Err(CliError::Config(format!(
            "{}-mode estimate against a {}-mode truth",
            ca.len(),
            cb.len()
        )));
    }
    let cut: Vec<usize> = ca.iter().zip(&cb).map(|(x, y)| *x.max(y)).collect();
    Ok((
        embed_fock(a, &cut).context("padding the estimate")?,
        embed_fock(b, &cut).context("padding the truth")?,
    ))
}

fn element_label(row: &[i64], col: &[i64]) -> String {
    let f = |v: &[i64]| v.iter().map(i64::to_string).collect::<Vec<_>>().join(",");
    format!("rho({};{})", f(row), f(col))
}

fn fit_and_score(
    out: &mut Artifacts,
    chi: &CharGrid,
    cutoffs: &[usize],
    truth: &DensityMatrix,
) -> CliResult<()> {
    let fit = out
        .report
        .time("fit", || rho_from_char(chi, cutoffs))
        .context("density-matrix fit")?;
    out.report.diag("condition", fit.condition);
    out.report.diag("residual_rms", fit.residual_rms);
    out.report
        .diag("projection_distance", fit.projection_distance);
    out.report.diag("flagged_inconsistent", fit.flagged);
    let (est, tru) = common_fock(&fit.state, truth)?;
    out.report.metrics = Some(compare(&est, &tru).context("comparing with the true state")?);
    let d = est.dim();
    for r in 0..d {
        for c in 0..d {
            let err = (est.matrix()[(r, c)] - tru.matrix()[(r, c)]).norm();
            out.report
                .known(element_label(&est.labels(r), &est.labels(c)), err, None);
        }
    }
    out.state = Some(fit.state);
    Ok(())
}

/// Per θ-cell error of a binned characteristic function against the exact
/// one at the attained phases.
fn score_char_cells(
    report: &mut RunReport,
    chi: &CharGrid,
    truth: &DensityMatrix,
) -> CliResult<()> {
    let spec = SpectralState::new(truth).context("true state")?;
    let cells = chi.theta_cells();
    let mut worst = vec![0.0f64; cells];
    let mut seen = vec![false; cells];
    let mut inpainted = vec![false; cells];
    let attained = chi.attained_theta.clone().unwrap_or_default();
    let theta_dims: Vec<usize> = chi.theta_axes.iter().map(Vec::len).collect();
    for flat in 0..chi.values.len() {
        let (ei, ti) = chi.split(flat);
        let cell = ndtomo::grid::ravel(&ti, &theta_dims);
        if !(chi.filled[flat] || chi.inpainted[flat]) {
            continue;
        }
        let eta: Vec<f64> = ei
            .iter()
            .enumerate()
            .map(|(j, &k)| chi.eta_axes[j][k])
            .collect();
        let theta: Vec<f64> = match attained.get(cell) {
            Some(t) => t.clone(),
            None => ti
                .iter()
                .enumerate()
                .map(|(j, &k)| chi.theta_axes[j][k])
                .collect(),
        };
        let err = (chi.values[flat] - char_at(&spec, &eta, &theta)).norm();
        worst[cell] = worst[cell].max(err);
        seen[cell] = true;
        inpainted[cell] |= chi.inpainted[flat];
    }
    let mut max_visited: f64 = 0.0;
    for cell in 0..cells {
        let idx = ndtomo::grid::unravel(cell, &theta_dims);
        let label = format!("char{idx:?}");
        if !seen[cell] {
            report.unrecoverable(label, "phase cell not visited");
        } else if inpainted[cell] {
            report.unrecoverable(
                label,
                format!(
                    "phase cell not visited; inpainted value deviates by {:.3e}",
                    worst[cell]
                ),
            );
        } else {
            max_visited = max_visited.max(worst[cell]);
            report.known(label, worst[cell], None);
        }
    }
    report.diag("fill_fraction", chi.fill_fraction());
    report.diag("char_max_error", max_visited);
    Ok(())
}

pub(crate) fn truth_value(truth: &DensityMatrix, row: &[i64], col: &[i64]) -> Complex64 {
    truth.element(row, col).unwrap_or(Complex64::new(0.0, 0.0))
}

fn score_partial(
    report: &mut RunReport,
    partial: &PartialDensityMatrix,
    truth: &DensityMatrix,
) -> CliResult<()> {
    let d = partial.dim();
    for r in 0..d {
        for c in 0..d {
            let (row, col) = (partial.labels(r), partial.labels(c));
            let label = element_label(&row, &col);
            let want = truth_value(truth, &row, &col);
            match partial.entry(r, c) {
                Pdm::Known { re, im, bound } => report.known(label, (Complex64::new(*re, *im) - want).norm(), *bound),
                Pdm::Bounded { lo, hi } => report.entries.push(EntryReport {
                    label,
                    status: EntryStatus::Bounded {
                        lo: *lo,
                        hi: *hi,
                        contains_truth: *lo <= want.re && want.re <= *hi,
                        reason: "diagonal unrecoverable; interval from |rho(n,n')|^2 <= rho(n,n) rho(n',n') and unit trace".into(),
                    },
                }),
                Pdm::Unknown { reason } if reason == "not requested" => {}
                Pdm::Unknown { reason } => report.unrecoverable(label, reason.clone()),
            }
        }
    }
    Ok(())
}

/// Smallest integers `α` with `ω_j/ω_0 = α_j/α_0`.
pub fn integer_ratios(omegas: &[f64]) -> ndtomo::Result<Vec<u32>> {
    let mut fracs = Vec::with_capacity(omegas.len());
    for &w in omegas {
        let r = ratio::classify(w / omegas[0]);
        let (p, q) = r.fraction.ok_or_else(|| {
            Error::InvalidParameter(format!(
                "moment reconstruction needs commensurate frequencies; {w}/{} is not a small fraction",
                omegas[0]
            ))
        })?;
        fracs.push((p, q));
    }
    let lcm = fracs
        .iter()
        .fold(1u64, |l, &(_, q)| l / ratio::gcd(l, q) * q);
    let mut alpha: Vec<u64> = fracs.iter().map(|&(p, q)| p * (lcm / q)).collect();
    let g = alpha.iter().fold(0u64, |g, &a| ratio::gcd(g, a));
    for a in &mut alpha {
        *a /= g;
    }
    alpha
        .into_iter()
        .map(|a| {
            u32::try_from(a).map_err(|_| {
                Error::InvalidParameter(format!("frequency ratio index {a} is too large"))
            })
        })
        .collect()
}

fn moments(
    out: &mut Artifacts,
    record: &MeasurementRecord,
    loaded: &LoadedConfig,
    r_max: &[u32],
    max_order: Option<u32>,
) -> CliResult<()> {
    let cfg = &loaded.config;
    // Chains are analysed in normal coordinates; the truth follows.
    let (rec, truth) = match &record.header.system {
        SystemSpec::Chain(sys) => {
            let basis = match &record.header.normal_modes {
                Some(b) => b.clone(),
                None => normal_modes(sys).context("normal modes")?,
            };
            out.report
                .diag("reconstructability", reconstructability_check(&basis));
            out.report.diag("eigenfrequencies", &basis.eigenfrequencies);
            let rec = if record.header.normal_coordinates {
                record.clone()
            } else {
                to_normal_coordinates(record, &basis).context("rotating to normal coordinates")?
            };
            let (mean, cov, cutoff) = cfg.chain_gaussian()?;
            let s = basis.symplectic();
            let mean_nm: Vec<f64> = (&s * nalgebra::DVector::from_column_slice(&mean))
                .iter()
                .copied()
                .collect();
            let cov_nm = &s * cov * s.transpose();
            let truth = ndtomo::states::make_gaussian(&mean_nm, &cov_nm, cutoff)
                .context("normal-mode true state")?;
            (rec, truth)
        }
        _ => (record.clone(), cfg.build_state()?),
    };
    let omegas = match &rec.header.system {
        SystemSpec::Oscillator(s) => s.omegas.clone(),
        other => {
            return Err(CliError::Config(format!(
                "moments need an oscillator record, got {}",
                other.kind()
            )))
        }
    };
    let alpha = integer_ratios(&omegas).context("frequency ratios")?;
    out.report.diag("alpha", &alpha);
    let measured = out
        .report
        .time("position_moments", || measure_position_moments(&rec, r_max))
        .context("position moments")?;
    let table = out
        .report
        .time("solve", || {
            solve_moments(&measured, &alpha, r_max, max_order)
        })
        .context("moment solve")?;
    out.report
        .diag("weyl_symmetry_error", table.weyl_symmetry_error());
    score_moment_table(&mut out.report, &table, &truth)?;
    let mut artifact = json!({ "table": &table });
    let order = max_order.unwrap_or_else(|| r_max.iter().sum());
    if order >= 2 && r_max.iter().all(|&r| r >= 2) {
        let modes = omegas.len();
        let est = out
            .report
            .time("gaussian", || gaussian_from_moments(&table, modes))
            .context("Gaussian estimate")?;
        score_gaussian(&mut out.report, &est, &truth)?;
        artifact["gaussian"] = serde_json::to_value(&est).unwrap_or_default();
    }
    out.moments = Some(artifact);
    Ok(())
}

fn moment_name(r: &[u32], s: &[u32]) -> String {
    format!("S(r={r:?}; s={s:?})")
}

fn score_moment_table(
    report: &mut RunReport,
    table: &MomentTable,
    truth: &DensityMatrix,
) -> CliResult<()> {
    for e in &table.entries {
        let label = moment_name(&e.r, &e.s);
        match (&e.status, e.value) {
            (MomentStatus::Resolved, Some(v)) => {
                let want = weyl_moment_oracle(truth, &e.r, &e.s).context("moment oracle")?;
                report.known(label, (v - want).norm(), None);
            }
            (MomentStatus::AggregatedWith(id), _) => {
                report.unrecoverable(label, format!("shares its time dependence with the members of group {id}; only their sum is measurable"))
            }
            _ => report.unrecoverable(label, "above max_order; not solved for"),
        }
    }
    for g in &table.groups {
        let mut want = Complex64::new(0.0, 0.0);
        for s in &g.members {
            want += weyl_moment_oracle(truth, &g.r, s).context("moment oracle")?;
        }
        report.known(
            format!("group {} sum (r={:?}, key {})", g.id, g.r, g.key),
            (g.sum - want).norm(),
            None,
        );
    }
    Ok(())
}

/// Interleaved means and symmetric second moments of the truth.
fn truth_moments(truth: &DensityMatrix) -> CliResult<(Vec<f64>, Vec<(String, f64)>)> {
    let n = truth.modes();
    let mut mean = Vec::with_capacity(2 * n);
    for j in 0..n {
        let mut e = vec![0u32; n];
        e[j] = 1;
        let a = weyl_moment_oracle(truth, &e, &e).context("mean oracle")?;
        mean.push(std::f64::consts::SQRT_2 * a.re);
        mean.push(std::f64::consts::SQRT_2 * a.im);
    }
    Ok((
        mean,
        second_moment_oracle(truth).context("second-moment oracle")?,
    ))
}

fn score_gaussian(
    report: &mut RunReport,
    est: &GaussianEstimate,
    truth: &DensityMatrix,
) -> CliResult<()> {
    let (mean_true, second) = truth_moments(truth)?;
    let lookup = |name: &str| {
        second
            .iter()
            .find(|(l, _)| l == name)
            .map(|(_, v)| *v)
            .unwrap_or(f64::NAN)
    };
    let quad = |a: usize| format!("{}{}", if a.is_multiple_of(2) { "x" } else { "p" }, a / 2 + 1);
    let n2 = mean_true.len();
    let mean_est = match est {
        GaussianEstimate::Determined { mean, .. } => mean,
        GaussianEstimate::Underdetermined(r) => &r.mean,
    };
    for a in 0..n2 {
        report.known(
            format!("mean {}", quad(a)),
            (mean_est[a] - mean_true[a]).abs(),
            None,
        );
    }
    match est {
        GaussianEstimate::Determined { cov, .. } => {
            report.diag("gaussian", "determined");
            for a in 0..n2 {
                for b in a..n2 {
                    let want = lookup(&moment_label(a, b)) - mean_true[a] * mean_true[b];
                    report.known(
                        format!("cov {}", moment_label(a, b)),
                        (cov[(a, b)] - want).abs(),
                        None,
                    );
                }
            }
        }
        GaussianEstimate::Underdetermined(r) => {
            report.diag("gaussian", "underdetermined");
            report.diag("null_directions", &r.null_directions);
            let names: Vec<&str> = r
                .null_directions
                .iter()
                .map(|d| d.description.as_str())
                .collect();
            for a in 0..n2 {
                for b in a..n2 {
                    let label = moment_label(a, b);
                    match r.evaluate(&[(label.as_str(), 1.0)]) {
                        Some(v) => report.known(
                            format!("second moment {label}"),
                            (v - lookup(&label)).abs(),
                            None,
                        ),
                        None => report.unrecoverable(
                            format!("second moment {label}"),
                            format!("lies along the null direction(s): {}", names.join("; ")),
                        ),
                    }
                }
            }
        }
    }
    Ok(())
}

/// Frobenius distance of a complete partial matrix from the truth.
pub fn frobenius_error(partial: &PartialDensityMatrix, truth: &DensityMatrix) -> Option<f64> {
    let m: CMatrix = partial.to_matrix()?;
    let d = partial.dim();
    let mut sq = 0.0;
    for r in 0..d {
        for c in 0..d {
            let want = truth_value(truth, &partial.labels(r), &partial.labels(c));
            sq += (m[(r, c)] - want).norm_sqr();
        }
    }
    Some(sq.sqrt())
}
