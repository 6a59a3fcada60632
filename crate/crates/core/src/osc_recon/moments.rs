//! Symmetrically ordered ladder moments from position moments at
//! commensurable frequencies `ω_j = α_j ω`.
//!
//! With `θ = ωt`,
//! `2^{|r|/2} ⟨Π_j x̂_j(α_jθ)^{r_j}⟩ = Σ_s S(r,s) e^{iθ α·(r−2s)}`,
//! where `S(r,s)` sums, per mode, all distinct orderings of `s_j` lowering and
//! `r_j − s_j` raising operators. Terms sharing a key `α·(r−2s)` oscillate
//! identically and are only measurable as a sum.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{tensor_weights, unravel};
use crate::linalg::{c, null_space_real, CMatrix, CVector, LeastSquares};
use crate::osc_forward::SpectralState;
use crate::ratio::gcd;
use crate::record::{BlockData, MeasurementRecord};
use crate::states::DensityMatrix;

/// Largest tail share of a position moment accepted from a grid.
pub const MOMENT_TAIL_TOL: f64 = 1e-8;

pub type MultiIndex = Vec<u32>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrenceList {
    pub r: MultiIndex,
    /// Every `s ≤ r` with its key `α·(r − 2s)`, in lexicographic order of `s`.
    pub entries: Vec<(MultiIndex, i64)>,
    /// Groups of two or more `s` sharing a key.
    pub collisions: Vec<Vec<MultiIndex>>,
}

impl RecurrenceList {
    /// Distinct keys in descending order.
    pub fn keys(&self) -> Vec<i64> {
        let mut k: Vec<i64> = self.entries.iter().map(|e| e.1).collect();
        k.sort_unstable_by(|a, b| b.cmp(a));
        k.dedup();
        k
    }
}

/// All multi-indices `0 ≤ v ≤ bound` componentwise, lexicographic.
pub fn box_indices(bound: &[u32]) -> Vec<MultiIndex> {
    let dims: Vec<usize> = bound.iter().map(|&b| b as usize + 1).collect();
    let total: usize = dims.iter().product();
    (0..total)
        .map(|f| unravel(f, &dims).into_iter().map(|v| v as u32).collect())
        .collect()
}

pub fn key(alpha: &[u32], r: &[u32], s: &[u32]) -> i64 {
    alpha
        .iter()
        .zip(r)
        .zip(s)
        .map(|((&a, &r), &s)| a as i64 * (r as i64 - 2 * s as i64))
        .sum()
}

pub fn recurrence_list(alpha: &[u32], r: &[u32]) -> RecurrenceList {
    let entries: Vec<(MultiIndex, i64)> = box_indices(r)
        .into_iter()
        .map(|s| {
            let k = key(alpha, r, &s);
            (s, k)
        })
        .collect();
    let mut by_key: BTreeMap<i64, Vec<MultiIndex>> = BTreeMap::new();
    for (s, k) in &entries {
        by_key.entry(*k).or_default().push(s.clone());
    }
    let collisions = by_key.into_values().filter(|g| g.len() > 1).collect();
    RecurrenceList {
        r: r.to_vec(),
        entries,
        collisions,
    }
}

/// One list per `r′ ≤ r_max`.
pub fn recurrence_lists(alpha: &[u32], r_max: &[u32]) -> Result<Vec<RecurrenceList>> {
    if alpha.len() != r_max.len() || alpha.is_empty() {
        return Err(Error::Shape(
            "alpha and r_max must have the same positive length".into(),
        ));
    }
    if alpha.contains(&0) {
        return Err(Error::InvalidParameter(
            "alpha entries must be positive".into(),
        ));
    }
    if alpha.iter().fold(0u64, |g, &a| gcd(g, a as u64)) != 1 {
        return Err(Error::InvalidParameter(format!(
            "alpha {alpha:?} is not reduced (gcd != 1)"
        )));
    }
    Ok(box_indices(r_max)
        .iter()
        .map(|r| recurrence_list(alpha, r))
        .collect())
}

/// `⟨Π_j x̂_j(φ_j)^{r_j}⟩` for one block, at its unfolded phases `φ_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionMoment {
    pub block: usize,
    pub t: f64,
    pub phases: Vec<f64>,
    pub r: MultiIndex,
    pub value: f64,
}

/// Grid-quadrature (or sample-mean) position moments of every block for all
/// `r ≤ r_max`.
pub fn measure_position_moments(
    record: &MeasurementRecord,
    r_max: &[u32],
) -> Result<Vec<PositionMoment>> {
    record.validate()?;
    let n = record.modes();
    if r_max.len() != n {
        return Err(Error::Shape(format!(
            "r_max has {} entries for {n} modes",
            r_max.len()
        )));
    }
    let grids = &record.header.grids;
    let dims: Vec<usize> = grids.iter().map(|g| g.n_points).collect();
    let points: Vec<Vec<f64>> = grids.iter().map(|g| g.points()).collect();
    let weights = tensor_weights(grids);
    // Outer 5% of each axis counts as the tail.
    let tail: Vec<Vec<bool>> = grids
        .iter()
        .map(|g| {
            let m = ((g.n_points as f64) * 0.05).ceil() as usize;
            (0..g.n_points)
                .map(|k| k < m || k + m >= g.n_points)
                .collect()
        })
        .collect();
    let rs = box_indices(r_max);
    let mut out = Vec::new();
    for (bi, b) in record.blocks.iter().enumerate() {
        if b.theta.len() != n {
            return Err(Error::Shape(
                "oscillator blocks need per-mode phases".into(),
            ));
        }
        let phases: Vec<f64> = b
            .theta
            .iter()
            .zip(&b.folds)
            .map(|(th, &f)| th + f as f64 * PI)
            .collect();
        for r in &rs {
            let value = match &b.data {
                BlockData::Distribution(p) => {
                    let mut total = 0.0;
                    let mut outer = 0.0;
                    for (flat, (&pr, &w)) in p.iter().zip(&weights).enumerate() {
                        let idx = unravel(flat, &dims);
                        let mono: f64 = (0..n)
                            .map(|j| points[j][idx[j]].powi(r[j] as i32))
                            .product();
                        let term = pr * w * mono;
                        total += term;
                        if (0..n).any(|j| tail[j][idx[j]]) {
                            outer += term.abs();
                        }
                    }
                    if outer > MOMENT_TAIL_TOL {
                        return Err(Error::MomentDivergence {
                            order: r.iter().sum(),
                            tail: outer,
                        });
                    }
                    total
                }
                BlockData::Samples(s) => {
                    let shots = (s.len() / n).max(1) as f64;
                    s.chunks_exact(n)
                        .map(|xs| (0..n).map(|j| xs[j].powi(r[j] as i32)).product::<f64>())
                        .sum::<f64>()
                        / shots
                }
            };
            out.push(PositionMoment {
                block: bi,
                t: b.t,
                phases: phases.clone(),
                r: r.clone(),
                value,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MomentStatus {
    Resolved,
    /// Member of the aggregate group with this id.
    AggregatedWith(usize),
    Unmeasured,
}

impl From<MomentStatus> for String {
    fn from(s: MomentStatus) -> String {
        match s {
            MomentStatus::Resolved => "resolved".into(),
            MomentStatus::AggregatedWith(id) => format!("aggregated:{id}"),
            MomentStatus::Unmeasured => "unmeasured".into(),
        }
    }
}

impl TryFrom<String> for MomentStatus {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        match s.as_str() {
            "resolved" => Ok(MomentStatus::Resolved),
            "unmeasured" => Ok(MomentStatus::Unmeasured),
            other => other
                .strip_prefix("aggregated:")
                .and_then(|id| id.parse().ok())
                .map(MomentStatus::AggregatedWith)
                .ok_or_else(|| format!("unknown moment status {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub r: MultiIndex,
    pub s: MultiIndex,
    /// Present for resolved entries.
    pub value: Option<Complex64>,
    pub status: MomentStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateGroup {
    pub id: usize,
    pub r: MultiIndex,
    pub key: i64,
    pub members: Vec<MultiIndex>,
    /// Sum of `S(r, s)` over the members.
    pub sum: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub alpha: Vec<u32>,
    pub entries: Vec<MomentEntry>,
    pub groups: Vec<AggregateGroup>,
}

impl MomentTable {
    pub fn entry(&self, r: &[u32], s: &[u32]) -> Option<&MomentEntry> {
        self.entries.iter().find(|e| e.r == r && e.s == s)
    }

    pub fn resolved(&self, r: &[u32], s: &[u32]) -> Option<Complex64> {
        self.entry(r, s)
            .filter(|e| e.status == MomentStatus::Resolved)
            .and_then(|e| e.value)
    }

    pub fn group_of(&self, r: &[u32], s: &[u32]) -> Option<&AggregateGroup> {
        match self.entry(r, s)?.status {
            MomentStatus::AggregatedWith(id) => self.groups.iter().find(|g| g.id == id),
            _ => None,
        }
    }

    /// Largest violation of `S(r,s) = conj S(r, r−s)` over resolved pairs.
    pub fn weyl_symmetry_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for e in &self.entries {
            let partner: Vec<u32> = e.r.iter().zip(&e.s).map(|(r, s)| r - s).collect();
            if let (Some(a), Some(b)) = (self.resolved(&e.r, &e.s), self.resolved(&e.r, &partner)) {
                worst = worst.max((a - b.conj()).norm());
            }
        }
        worst
    }
}

/// Solves for `S(r, s)` for every `r ≤ r_max` (and `|r| ≤ max_order` when
/// given), per `r` by least squares on the exponential design matrix.
pub fn solve_moments(
    moments: &[PositionMoment],
    alpha: &[u32],
    r_max: &[u32],
    max_order: Option<u32>,
) -> Result<MomentTable> {
    let lists = recurrence_lists(alpha, r_max)?;
    let n = alpha.len();
    let mut table = MomentTable {
        alpha: alpha.to_vec(),
        entries: Vec::new(),
        groups: Vec::new(),
    };
    for list in lists {
        let order: u32 = list.r.iter().sum();
        let included = max_order.is_none_or(|m| order <= m);
        if !included {
            for (s, _) in &list.entries {
                table.entries.push(MomentEntry {
                    r: list.r.clone(),
                    s: s.clone(),
                    value: None,
                    status: MomentStatus::Unmeasured,
                });
            }
            continue;
        }
        if order == 0 {
            table.entries.push(MomentEntry {
                r: list.r.clone(),
                s: vec![0; n],
                value: Some(c(1.0, 0.0)),
                status: MomentStatus::Resolved,
            });
            continue;
        }
        // Samples for this r; θ = φ₁/α₁ with a consistency check.
        let samples: Vec<(f64, f64)> = moments
            .iter()
            .filter(|m| m.r == list.r)
            .map(|m| {
                let theta = m.phases[0] / alpha[0] as f64;
                for j in 1..n {
                    if (m.phases[j] - alpha[j] as f64 * theta).abs()
                        > 1e-9 * (1.0 + m.phases[j].abs())
                    {
                        return Err(Error::InvalidParameter(format!(
                            "block at t={} has phases {:?} inconsistent with alpha {alpha:?}",
                            m.t, m.phases
                        )));
                    }
                }
                Ok((theta, m.value))
            })
            .collect::<Result<_>>()?;
        let keys = list.keys();
        let mut distinct: Vec<f64> = samples.iter().map(|s| s.0.rem_euclid(2.0 * PI)).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        if distinct.len() < keys.len() {
            return Err(Error::NumericalRank(format!(
                "r = {:?} has {} distinct frequency keys but only {} distinct phases were measured",
                list.r,
                keys.len(),
                distinct.len()
            )));
        }
        let scale = 2f64.powf(order as f64 / 2.0);
        let a = CMatrix::from_fn(samples.len(), keys.len(), |i, k| {
            Complex64::from_polar(1.0, samples[i].0 * keys[k] as f64)
        });
        let b = CVector::from_iterator(samples.len(), samples.iter().map(|s| c(s.1 * scale, 0.0)));
        let ls = LeastSquares::new(a);
        if ls.rank(1e-10) < keys.len() {
            return Err(Error::NumericalRank(format!(
                "r = {:?}: exponential design matrix has rank {} for {} keys; choose other sampling phases",
                list.r,
                ls.rank(1e-10),
                keys.len()
            )));
        }
        let g = ls.solve(&b);
        let value_of = |k: i64| g[keys.iter().position(|&x| x == k).expect("key present")];
        let mut grouped: BTreeMap<i64, Vec<MultiIndex>> = BTreeMap::new();
        for (s, k) in &list.entries {
            grouped.entry(*k).or_default().push(s.clone());
        }
        for (s, k) in &list.entries {
            let members = &grouped[k];
            if members.len() == 1 {
                table.entries.push(MomentEntry {
                    r: list.r.clone(),
                    s: s.clone(),
                    value: Some(value_of(*k)),
                    status: MomentStatus::Resolved,
                });
            } else {
                let id = match table.groups.iter().find(|g| g.r == list.r && g.key == *k) {
                    Some(g) => g.id,
                    None => {
                        let id = table.groups.len();
                        table.groups.push(AggregateGroup {
                            id,
                            r: list.r.clone(),
                            key: *k,
                            members: members.clone(),
                            sum: value_of(*k),
                        });
                        id
                    }
                };
                table.entries.push(MomentEntry {
                    r: list.r.clone(),
                    s: s.clone(),
                    value: None,
                    status: MomentStatus::AggregatedWith(id),
                });
            }
        }
    }
    Ok(table)
}

/// `count` equally spaced base phases on `[0, 2π)`.
pub fn equispaced_phases(count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| 2.0 * PI * k as f64 / count as f64)
        .collect()
}

// ---------------------------------------------------------------------------
// Exact ladder-word oracle.

/// `Σ` over distinct orderings of `s` lowering and `r − s` raising operators,
/// as an exact `cutoff × cutoff` block (computed in a padded space so that
/// no intermediate state is truncated).
pub fn symmetric_ladder_sum(r: u32, s: u32, cutoff: usize) -> CMatrix {
    let big = cutoff + r as usize + 1;
    let mut a = CMatrix::zeros(big, big);
    for n in 1..big {
        a[(n - 1, n)] = c((n as f64).sqrt(), 0.0);
    }
    let ad = a.transpose();
    let mut total = CMatrix::zeros(big, big);
    // Each distinct word is a placement of s lowering operators among r slots.
    for mask in 0u32..(1 << r) {
        if mask.count_ones() != s {
            continue;
        }
        let mut w = CMatrix::identity(big, big);
        for slot in 0..r {
            w = if mask >> slot & 1 == 1 {
                &w * &a
            } else {
                &w * &ad
            };
        }
        total += w;
    }
    total.view((0, 0), (cutoff, cutoff)).into_owned()
}

/// Exact `S(r, s)` of a Fock-basis state.
pub fn weyl_moment_oracle(rho: &DensityMatrix, r: &[u32], s: &[u32]) -> Result<Complex64> {
    let spec = SpectralState::new(rho)?;
    if r.len() != spec.modes() || s.len() != r.len() || s.iter().zip(r).any(|(s, r)| s > r) {
        return Err(Error::Shape(format!(
            "invalid moment index r={r:?} s={s:?}"
        )));
    }
    let mats: Vec<CMatrix> = spec
        .cutoffs
        .iter()
        .enumerate()
        .map(|(j, &cut)| symmetric_ladder_sum(r[j], s[j], cut))
        .collect();
    Ok(spec.expect(&mats))
}

// ---------------------------------------------------------------------------
// Gaussian states from order ≤ 2 moments.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullDirection {
    /// Coefficients on the symmetric second moments `⟨{r_a r_b}⟩/…`, labelled
    /// like `x1p2`.
    pub coefficients: Vec<(String, f64)>,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnderdeterminedReport {
    pub mean: Vec<f64>,
    pub null_directions: Vec<NullDirection>,
    /// Minimum-norm second moments consistent with the data.
    pub min_norm_second_moments: Vec<(String, f64)>,
    #[serde(skip)]
    labels: Vec<(usize, usize)>,
    #[serde(skip)]
    null_basis: Vec<DVector<f64>>,
}

impl UnderdeterminedReport {
    /// Value of `Σ c_ab ⟨{r_a r_b}_sym⟩` if it is identifiable (orthogonal to
    /// every null direction), else `None`.
    pub fn evaluate(&self, coefficients: &[(&str, f64)]) -> Option<f64> {
        let names: Vec<String> = self
            .labels
            .iter()
            .map(|&(a, b)| moment_label(a, b))
            .collect();
        let mut v = DVector::zeros(names.len());
        for (name, coef) in coefficients {
            let i = names.iter().position(|n| n == name)?;
            v[i] += coef;
        }
        if self
            .null_basis
            .iter()
            .any(|nb| nb.dot(&v).abs() > 1e-9 * v.norm().max(1.0))
        {
            return None;
        }
        Some(
            self.min_norm_second_moments
                .iter()
                .zip(v.iter())
                .map(|((_, m), c)| m * c)
                .sum(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaussianEstimate {
    Determined { mean: Vec<f64>, cov: DMatrix<f64> },
    Underdetermined(UnderdeterminedReport),
}

fn quad_name(a: usize) -> String {
    format!("{}{}", if a.is_multiple_of(2) { "x" } else { "p" }, a / 2 + 1)
}

/// Label of the symmetric moment `⟨{r_a, r_b}/2⟩` in interleaved order.
pub fn moment_label(a: usize, b: usize) -> String {
    format!("{}{}", quad_name(a), quad_name(b))
}

/// Ladder operator list `z = (a₁, a₁†, a₂, a₂†, …)` expressed in
/// `r = (x₁, p₁, …)`: `a = (x + ip)/√2`, `a† = (x − ip)/√2`.
fn ladder_in_quadratures(n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        m[(2 * j, 2 * j)] = c(FRAC_1_SQRT_2, 0.0);
        m[(2 * j, 2 * j + 1)] = c(0.0, FRAC_1_SQRT_2);
        m[(2 * j + 1, 2 * j)] = c(FRAC_1_SQRT_2, 0.0);
        m[(2 * j + 1, 2 * j + 1)] = c(0.0, -FRAC_1_SQRT_2);
    }
    m
}

/// Ladder operators of `S(r, s)` at order two, as indices into `z`, plus the
/// number of distinct orderings.
fn order_two_ops(r: &[u32], s: &[u32]) -> (usize, usize, f64) {
    let mut ops = Vec::new();
    for j in 0..r.len() {
        for _ in 0..s[j] {
            ops.push(2 * j);
        }
        for _ in 0..(r[j] - s[j]) {
            ops.push(2 * j + 1);
        }
    }
    let mult = if r.contains(&2) && s.contains(&1) {
        2.0
    } else {
        1.0
    };
    (ops[0], ops[1], mult)
}

/// Mean and covariance from a moment table with all order ≤ 2 entries
/// resolved or aggregated; otherwise a report of the unidentifiable
/// second-moment directions.
pub fn gaussian_from_moments(table: &MomentTable, modes: usize) -> Result<GaussianEstimate> {
    let n = modes;
    if table.alpha.len() != n {
        return Err(Error::Shape(format!(
            "table has {} modes, asked for {n}",
            table.alpha.len()
        )));
    }
    // First moments: ⟨a_j⟩ = S(e_j, e_j), always resolvable.
    let mut mean = vec![0.0; 2 * n];
    for j in 0..n {
        let mut r = vec![0u32; n];
        r[j] = 1;
        let a = table
            .resolved(&r, &r)
            .ok_or_else(|| Error::Inversion(format!("first moment of mode {} missing", j + 1)))?;
        mean[2 * j] = 2f64.sqrt() * a.re;
        mean[2 * j + 1] = 2f64.sqrt() * a.im;
    }
    // Unknowns: symmetric second moments M_ab, a ≤ b.
    let labels: Vec<(usize, usize)> = (0..2 * n)
        .flat_map(|a| (a..2 * n).map(move |b| (a, b)))
        .collect();
    let z = ladder_in_quadratures(n);
    let coeff_row = |i: usize, k: usize, mult: f64| -> Vec<Complex64> {
        labels
            .iter()
            .map(|&(a, b)| {
                let v = if a == b {
                    z[(i, a)] * z[(k, a)]
                } else {
                    z[(i, a)] * z[(k, b)] + z[(i, b)] * z[(k, a)]
                };
                v * mult
            })
            .collect()
    };
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    let mut rhs: Vec<Complex64> = Vec::new();
    let mut seen_groups = Vec::new();
    let order_two: Vec<MultiIndex> = box_indices(&vec![2; n])
        .into_iter()
        .filter(|r| r.iter().sum::<u32>() == 2)
        .collect();
    for r in &order_two {
        for s in box_indices(r) {
            let e = table
                .entry(r, &s)
                .ok_or_else(|| Error::Inversion(format!("moment r={r:?} s={s:?} missing")))?;
            match &e.status {
                MomentStatus::Resolved => {
                    let (i, k, mult) = order_two_ops(r, &s);
                    rows.push(coeff_row(i, k, mult));
                    rhs.push(e.value.expect("resolved entries carry values"));
                }
                MomentStatus::AggregatedWith(id) => {
                    if seen_groups.contains(id) {
                        continue;
                    }
                    seen_groups.push(*id);
                    let g = table
                        .groups
                        .iter()
                        .find(|g| g.id == *id)
                        .expect("group exists");
                    let mut acc = vec![c(0.0, 0.0); labels.len()];
                    for m in &g.members {
                        let (i, k, mult) = order_two_ops(r, m);
                        for (a, v) in acc.iter_mut().zip(coeff_row(i, k, mult)) {
                            *a += v;
                        }
                    }
                    rows.push(acc);
                    rhs.push(g.sum);
                }
                MomentStatus::Unmeasured => {
                    return Err(Error::Inversion(format!(
                        "moment r={r:?} s={s:?} was not measured"
                    )));
                }
            }
        }
    }
    // Real system: stack real and imaginary parts.
    let k = labels.len();
    let mut a = DMatrix::<f64>::zeros(2 * rows.len(), k);
    let mut b = DVector::<f64>::zeros(2 * rows.len());
    for (i, row) in rows.iter().enumerate() {
        for (col, v) in row.iter().enumerate() {
            a[(2 * i, col)] = v.re;
            a[(2 * i + 1, col)] = v.im;
        }
        b[2 * i] = rhs[i].re;
        b[2 * i + 1] = rhs[i].im;
    }
    let null = null_space_real(&a, 1e-10);
    let svd = a.clone().svd(true, true);
    let m = svd
        .solve(&b, 1e-10 * svd.singular_values.max())
        .map_err(|e| Error::Inversion(e.to_string()))?;
    if null.is_empty() {
        let mut cov = DMatrix::zeros(2 * n, 2 * n);
        for (idx, &(p, q)) in labels.iter().enumerate() {
            let v = m[idx] - mean[p] * mean[q];
            cov[(p, q)] = v;
            cov[(q, p)] = v;
        }
        return Ok(GaussianEstimate::Determined { mean, cov });
    }
    let names: Vec<String> = labels.iter().map(|&(p, q)| moment_label(p, q)).collect();
    let null_directions = null
        .iter()
        .map(|v| {
            let mut v = v.clone();
            // Sign convention: first significant coefficient positive.
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-9) {
                if *first < 0.0 {
                    v.neg_mut();
                }
            }
            let coefficients: Vec<(String, f64)> = names
                .iter()
                .zip(v.iter())
                .filter(|(_, x)| x.abs() > 1e-9)
                .map(|(n, &x)| (n.clone(), x))
                .collect();
            let description = coefficients
                .iter()
                .enumerate()
                .map(|(i, (n, x))| {
                    let sign = if *x < 0.0 {
                        "-"
                    } else if i > 0 {
                        "+"
                    } else {
                        ""
                    };
                    format!("{sign}{:.4}<{n}>", x.abs())
                })
                .collect::<Vec<_>>()
                .join(" ");
            NullDirection {
                coefficients,
                description,
            }
        })
        .collect();
    Ok(GaussianEstimate::Underdetermined(UnderdeterminedReport {
        mean,
        null_directions,
        min_norm_second_moments: names.into_iter().zip(m.iter().copied()).collect(),
        labels,
        null_basis: null,
    }))
}

/// Symmetric second moments `⟨{r_a r_b}⟩/2` of a Fock-basis state, labelled
/// as in [`moment_label`], by direct trace.
pub fn second_moment_oracle(rho: &DensityMatrix) -> Result<Vec<(String, f64)>> {
    let spec = SpectralState::new(rho)?;
    let n = spec.modes();
    let quads: Vec<Vec<CMatrix>> = spec
        .cutoffs
        .iter()
        .map(|&cut| {
            let big = cut + 3;
            let mut a = CMatrix::zeros(big, big);
            for k in 1..big {
                a[(k - 1, k)] = c((k as f64).sqrt(), 0.0);
            }
            let ad = a.adjoint();
            let x = (&a + &ad) * c(FRAC_1_SQRT_2, 0.0);
            let p = (&a - &ad) * c(0.0, -FRAC_1_SQRT_2);
            let crop = |m: CMatrix| m.view((0, 0), (cut, cut)).into_owned();
            let eye = CMatrix::identity(cut, cut);
            vec![
                eye,
                crop(x.clone()),
                crop(p.clone()),
                crop(&x * &x),
                crop(&p * &p),
                crop((&x * &p + &p * &x) * c(0.5, 0.0)),
            ]
        })
        .collect();
    let mut out = Vec::new();
    for a in 0..2 * n {
        for b in a..2 * n {
            let (ja, jb) = (a / 2, b / 2);
            let mut mats: Vec<CMatrix> = (0..n).map(|j| quads[j][0].clone()).collect();
            if ja == jb {
                let which = match (a % 2, b % 2) {
                    (0, 0) => 3,
                    (1, 1) => 4,
                    _ => 5,
                };
                mats[ja] = quads[ja][which].clone();
            } else {
                mats[ja] = quads[ja][1 + a % 2].clone();
                mats[jb] = quads[jb][1 + b % 2].clone();
            }
            out.push((moment_label(a, b), spec.expect(&mats).re));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;
    use crate::osc_forward::{evolve_and_record, OscillatorSystem};
    use crate::states::{make_coherent, make_fock, make_gaussian, tensor_product};

    #[test]
    fn recurrence_examples() {
        let l = recurrence_list(&[1, 1], &[1, 1]);
        assert_eq!(
            l.entries.iter().map(|e| e.1).collect::<Vec<_>>(),
            vec![2, 0, 0, -2]
        );
        assert_eq!(l.collisions, vec![vec![vec![0, 1], vec![1, 0]]]);
        let l = recurrence_list(&[1, 2], &[1, 1]);
        let mut keys: Vec<i64> = l.entries.iter().map(|e| e.1).collect();
        keys.sort_unstable();
        assert_eq!(keys, vec![-3, -1, 1, 3]);
        assert!(l.collisions.is_empty());
        for r1 in 0..3 {
            for r2 in 0..2 {
                assert!(recurrence_list(&[2, 3], &[r1, r2]).collisions.is_empty());
            }
        }
        assert!(recurrence_lists(&[2, 4], &[1, 1]).is_err());
        assert_eq!(recurrence_lists(&[1, 2], &[2, 3]).unwrap().len(), 12);
    }

    #[test]
    fn ladder_sum_examples() {
        // S(2,1) = a a† + a† a = 2n + 1.
        let m = symmetric_ladder_sum(2, 1, 6);
        for k in 0..6 {
            assert!((m[(k, k)] - c(2.0 * k as f64 + 1.0, 0.0)).norm() < 1e-12);
        }
        // No truncation artefact at the top of the basis.
        let top = symmetric_ladder_sum(2, 1, 3)[(2, 2)];
        assert!((top - c(5.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn weyl_oracle_of_coherent_state() {
        // For |α⟩, S(r,s) = C(r,s) α^s ᾱ^{r−s} by the symmetric ordering.
        let alpha = c(0.6, -0.4);
        let rho = make_coherent(alpha, 30).unwrap();
        for r in 0..3u32 {
            for s in 0..=r {
                let binom = (1..=s).fold(1.0, |acc, k| acc * (r - s + k) as f64 / k as f64);
                let mut expected = alpha.powu(s) * alpha.conj().powu(r - s) * binom;
                if r == 2 && s == 1 {
                    // {a a†}: a a† + a† a = 2|α|² + 1.
                    expected += c(1.0, 0.0);
                }
                let got = weyl_moment_oracle(&rho, &[r], &[s]).unwrap();
                assert!(
                    (got - expected).norm() < 1e-10,
                    "r={r} s={s}: {got} vs {expected}"
                );
            }
        }
    }

    fn record_at(rho: &DensityMatrix, omegas: Vec<f64>, times: &[f64]) -> MeasurementRecord {
        let g = SpatialGrid::new(-10.0, 10.0, 201).unwrap();
        let grids = vec![g; omegas.len()];
        evolve_and_record(
            rho,
            &OscillatorSystem::new(omegas).unwrap(),
            times,
            &grids,
            None,
            0,
        )
        .unwrap()
    }

    #[test]
    fn position_moment_examples() {
        let vac = make_fock(0, 8).unwrap();
        let m = measure_position_moments(&record_at(&vac, vec![1.0], &[0.4]), &[2]).unwrap();
        assert!((m[0].value - 1.0).abs() < 1e-12);
        assert!((m[2].value - 0.5).abs() < 1e-12);
        let coh = make_coherent(c(1.0, 0.0), 16).unwrap();
        let m = measure_position_moments(&record_at(&coh, vec![1.0], &[0.0]), &[1]).unwrap();
        assert!((m[1].value - 2f64.sqrt()).abs() < 1e-10);
        // A flat density keeps its mass at the edges of the grid.
        let mut rec = record_at(&coh, vec![1.0], &[0.0]);
        rec.blocks[0].data = BlockData::Distribution(vec![1.0 / 20.0; 201]);
        assert!(matches!(
            measure_position_moments(&rec, &[4]),
            Err(Error::MomentDivergence { .. })
        ));
    }

    #[test]
    fn single_mode_second_order_from_three_angles() {
        let rho = make_gaussian(
            &[0.3, -0.2],
            &DMatrix::from_row_slice(2, 2, &[0.7, 0.15, 0.15, 0.5]),
            24,
        )
        .unwrap();
        let times = [0.0, 1.0, 2.0];
        let pm = measure_position_moments(&record_at(&rho, vec![1.0], &times), &[2]).unwrap();
        let table = solve_moments(&pm, &[1], &[2], None).unwrap();
        for s in 0..=2u32 {
            let want = weyl_moment_oracle(&rho, &[2], &[s]).unwrap();
            let got = table.resolved(&[2], &[s]).unwrap();
            assert!((got - want).norm() < 1e-8);
        }
        assert!(table.weyl_symmetry_error() < 1e-8);
    }

    #[test]
    fn too_few_angles_is_a_rank_error() {
        let vac = make_fock(0, 6).unwrap();
        let pm = measure_position_moments(&record_at(&vac, vec![1.0], &[0.0, 0.5]), &[2]).unwrap();
        assert!(matches!(
            solve_moments(&pm, &[1], &[2], None),
            Err(Error::NumericalRank(_))
        ));
    }

    #[test]
    fn status_strings() {
        assert_eq!(
            String::from(MomentStatus::AggregatedWith(3)),
            "aggregated:3"
        );
        assert_eq!(
            MomentStatus::try_from("resolved".to_string()).unwrap(),
            MomentStatus::Resolved
        );
        assert!(MomentStatus::try_from("nope".to_string()).is_err());
    }

    #[test]
    fn vacuum_gaussian_estimate() {
        let vac = make_fock(0, 6).unwrap();
        let rho = tensor_product(&vac, &vac);
        let times: Vec<f64> = (0..4).map(|k| 2.0 * PI * k as f64 / 9.0).collect();
        let pm =
            measure_position_moments(&record_at(&rho, vec![1.0, 2.0], &times), &[2, 2]).unwrap();
        let table = solve_moments(&pm, &[1, 2], &[2, 2], Some(2)).unwrap();
        match gaussian_from_moments(&table, 2).unwrap() {
            GaussianEstimate::Determined { mean, cov } => {
                assert!(mean.iter().all(|m| m.abs() < 1e-10));
                assert!((cov - DMatrix::<f64>::identity(4, 4) * 0.5).abs().max() < 1e-10);
            }
            other => panic!("expected a determined estimate, got {other:?}"),
        }
    }
}
