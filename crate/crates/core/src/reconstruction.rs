//! Recovering the adjacency matrix of a hidden network from probe
//! measurements: eigenfrequencies, then mode-matrix magnitudes from single
//! nodes, relative signs from node pairs, orthonormal projection and
//! finally `A = K D K^T`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::dynamics::ProbeInit;
use crate::error::{Error, Result};
use crate::network::AdjacencyMatrix;
use crate::probing::{
    combine_detections, detect_from_scan, estimate_density_point, measure_thermal_time,
    scan_density, CountingOracle, Detection, NetworkOracle, PeakConfig, ProbeSchedule,
};
use crate::spectral::{
    linspace, mode_spacings, orthogonality_residual, probe_couplings, recurrence_time_from_omegas,
    scaled_outer, EigenSystem, DEGENERACY_TOLERANCE,
};

/// Row norms of a magnitude table outside this band are flagged.
pub const ROW_NORM_BAND: (f64, f64) = (0.8, 1.2);

/// `m[(j, i)] = |K_ji|` as seen by probing node `j` at mode `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeTable {
    pub m: DMatrix<f64>,
}

impl MagnitudeTable {
    /// Rows whose squared norm leaves [`ROW_NORM_BAND`].
    pub fn row_norm_flags(&self) -> Vec<usize> {
        self.m
            .row_iter()
            .enumerate()
            .filter(|(_, r)| {
                let s = r.norm_squared();
                s < ROW_NORM_BAND.0 || s > ROW_NORM_BAND.1
            })
            .map(|(j, _)| j)
            .collect()
    }
}

fn check_spacings(omegas: &[f64]) -> Result<Vec<f64>> {
    if omegas.is_empty() || omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidParameter(
            "eigenfrequencies must be positive".into(),
        ));
    }
    let spacings = mode_spacings(omegas);
    let tol = DEGENERACY_TOLERANCE * omegas[0];
    if let Some((index, &spacing)) = spacings.iter().enumerate().find(|(_, d)| **d <= tol) {
        return Err(Error::DegenerateSpacing { index, spacing });
    }
    Ok(spacings)
}

/// `|g| = sqrt(2 J Omega dOmega / (pi k^2))`, negative `J` read as zero.
pub fn magnitude(j: f64, omega: f64, spacing: f64, k: f64) -> f64 {
    (2.0 * j.max(0.0) * omega * spacing / (PI * k * k)).sqrt()
}

/// Converts densities measured at each eigenfrequency (descending) into
/// coupling magnitudes.
pub fn magnitudes_from_density(j_vals: &[f64], omegas: &[f64], k: f64) -> Result<Vec<f64>> {
    if j_vals.len() != omegas.len() {
        return Err(Error::Dimension(format!(
            "{} density values for {} frequencies",
            j_vals.len(),
            omegas.len()
        )));
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "coupling must be positive, got {k}"
        )));
    }
    let spacings = check_spacings(omegas)?;
    Ok(j_vals
        .iter()
        .zip(omegas)
        .zip(&spacings)
        .map(|((&j, &w), &d)| magnitude(j, w, d, k))
        .collect())
}

/// Pair magnitudes `|K_ref(i),i + K_ji|`, one reference node per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMeasurements {
    pub reference: Vec<usize>,
    /// `values[(j, i)]`; entries with `j == reference[i]` are unused.
    pub values: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignFlagKind {
    /// The pair value sat too close to the decision threshold; same sign
    /// was assumed.
    Ambiguous,
    /// The preferred reference barely couples to this mode, so another
    /// node served as reference.
    FallbackReference,
    /// A measurement could not be evaluated and was read as zero.
    MeasurementGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignFlag {
    pub node: usize,
    pub mode: usize,
    pub kind: SignFlagKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedK {
    pub k_est: DMatrix<f64>,
    pub flags: Vec<SignFlag>,
}

impl SignedK {
    pub fn orthogonality_residual(&self) -> f64 {
        orthogonality_residual(&self.k_est)
    }
}

/// Picks, per mode, the preferred node as reference unless its magnitude
/// falls below `eps_ref` times the column norm; then the node with the
/// largest magnitude in that column is used.
pub fn choose_references(single: &MagnitudeTable, preferred: usize, eps_ref: f64) -> Vec<usize> {
    single
        .m
        .column_iter()
        .map(|col| {
            if col[preferred] >= eps_ref * col.norm() {
                preferred
            } else {
                col.iamax()
            }
        })
        .collect()
}

/// Assigns signs relative to each mode's reference node, whose entries are
/// taken non-negative. With `a = |K_ref,i|`, `b = |K_ji|` and pair value
/// `s`, same sign is chosen when `s > max(a, b)`, the midpoint between
/// `a + b` and `|a - b|`.
pub fn resolve_signs(
    single: &MagnitudeTable,
    pairs: &PairMeasurements,
    ambiguity_tolerance: f64,
    preferred: usize,
) -> Result<SignedK> {
    let (n, modes) = single.m.shape();
    if pairs.values.shape() != (n, modes) || pairs.reference.len() != modes {
        return Err(Error::Dimension(
            "pair table does not match magnitude table".into(),
        ));
    }
    let mut k = single.m.clone();
    let mut flags = Vec::new();
    for i in 0..modes {
        let r = pairs.reference[i];
        if r >= n {
            return Err(Error::Dimension(format!(
                "reference node {r} outside [0, {n})"
            )));
        }
        if r != preferred {
            flags.push(SignFlag {
                node: r,
                mode: i,
                kind: SignFlagKind::FallbackReference,
            });
        }
        let a = single.m[(r, i)];
        for j in (0..n).filter(|&j| j != r) {
            let b = single.m[(j, i)];
            let s = pairs.values[(j, i)];
            let mid = a.max(b);
            if (s - mid).abs() < ambiguity_tolerance * a.min(b) {
                flags.push(SignFlag {
                    node: j,
                    mode: i,
                    kind: SignFlagKind::Ambiguous,
                });
            } else if s < mid {
                k[(j, i)] = -b;
            }
        }
    }
    Ok(SignedK { k_est: k, flags })
}

/// Orthogonal polar factor `U V^T` of `m = U S V^T`: the orthogonal matrix
/// closest to `m` in Frobenius norm.
pub fn nearest_orthonormal(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let svd = m.clone().svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if max.is_nan() || max <= 0.0 || min <= 1e-12 * max {
        return Err(Error::RankDeficient {
            ratio: if max > 0.0 { min / max } else { 0.0 },
        });
    }
    Ok(svd.u.unwrap() * svd.v_t.unwrap())
}

/// `A = K diag(Omega^2 / 2) K^T`, symmetrized.
pub fn assemble_adjacency(k_est: &DMatrix<f64>, omegas: &[f64]) -> Result<AdjacencyMatrix> {
    if k_est.ncols() != omegas.len() || k_est.nrows() != omegas.len() {
        return Err(Error::Dimension(format!(
            "{}x{} mode matrix for {} frequencies",
            k_est.nrows(),
            k_est.ncols(),
            omegas.len()
        )));
    }
    let d: Vec<f64> = omegas.iter().map(|w| 0.5 * w * w).collect();
    let a = scaled_outer(k_est, &d);
    AdjacencyMatrix::from_matrix(0.5 * (&a + a.transpose()))
}

/// Something that reports the spectral density seen by a probe on `nodes`
/// at eigenfrequency number `mode`.
pub trait ModeDensitySource: Sync {
    fn density(&self, nodes: &[usize], mode: usize, omega: f64) -> Result<f64>;
}

/// Densities from occupation-decay measurements on an oracle.
pub struct OracleDensitySource<'a> {
    pub oracle: &'a dyn NetworkOracle,
    pub k: f64,
    pub init: ProbeInit,
    pub temperature: f64,
    pub t: f64,
}

impl ModeDensitySource for OracleDensitySource<'_> {
    fn density(&self, nodes: &[usize], _mode: usize, omega: f64) -> Result<f64> {
        let n_t = self
            .oracle
            .measure(nodes, omega, self.k, &self.init, self.t)?;
        let n0 = self.init.initial_occupation(omega);
        estimate_density_point(n_t, n0, omega, self.t, self.temperature)
    }
}

/// Binned comb densities `(pi/2) k^2 g_i^2 / (Omega_i dOmega_i)` computed
/// from a known eigensystem: perfect measurements, for checking that the
/// reconstruction algebra loses nothing.
pub struct ExactDensitySource {
    eig: EigenSystem,
    spacings: Vec<f64>,
    k: f64,
}

impl ExactDensitySource {
    pub fn new(eig: EigenSystem, k: f64) -> Self {
        let spacings = mode_spacings(eig.omegas());
        ExactDensitySource { eig, spacings, k }
    }
}

impl ModeDensitySource for ExactDensitySource {
    fn density(&self, nodes: &[usize], mode: usize, _omega: f64) -> Result<f64> {
        let g = probe_couplings(&self.eig, nodes)?.g[mode];
        let w = self.eig.omegas()[mode];
        Ok(0.5 * PI * self.k * self.k * g * g / (w * self.spacings[mode]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructionConfig {
    pub k: f64,
    pub init: ProbeInit,
    pub temperature: f64,
    pub reference_node: usize,
    /// Frequency window of the initial coarse scan.
    pub pilot_range: (f64, f64),
    pub pilot_steps: usize,
    pub pilot_time: f64,
    /// The band is where the pilot scan exceeds this fraction of its peak.
    pub support_fraction: f64,
    /// Detection time as a multiple of the pilot recurrence estimate.
    pub detect_time_factor: f64,
    /// Detection grid step as a fraction of `2 pi / t_detect`.
    pub grid_fraction: f64,
    pub min_detection_scans: usize,
    pub max_detection_scans: usize,
    pub thermal_points: usize,
    /// The thermalization search spans this multiple of `t_detect`.
    pub thermal_span_factor: f64,
    /// Relative reference-magnitude floor (see [`choose_references`]).
    pub eps_ref: f64,
    pub ambiguity_tolerance: f64,
    pub peaks: PeakConfig,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            k: 2e-4,
            init: ProbeInit::SqueezedVacuum {
                r: 1.0,
                phi: std::f64::consts::FRAC_PI_2,
            },
            temperature: 0.0,
            reference_node: 0,
            pilot_range: (0.05, 2.0),
            pilot_steps: 161,
            pilot_time: 200.0,
            support_fraction: 1e-3,
            detect_time_factor: 20.0,
            grid_fraction: 0.4,
            min_detection_scans: 3,
            max_detection_scans: 4,
            thermal_points: 128,
            thermal_span_factor: 16.0,
            eps_ref: 0.05,
            ambiguity_tolerance: 0.1,
            peaks: PeakConfig::default(),
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if n == 0 {
            return bad("network size must be positive".into());
        }
        if !pos(self.k) {
            return bad(format!("coupling must be positive, got {}", self.k));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            ));
        }
        if self.reference_node >= n {
            return bad(format!(
                "reference node {} outside [0, {n})",
                self.reference_node
            ));
        }
        let (lo, hi) = self.pilot_range;
        if !(pos(lo) && hi.is_finite() && hi > lo) || self.pilot_steps < 3 {
            return bad("pilot range must be positive and increasing with at least 3 steps".into());
        }
        for (name, v) in [
            ("pilot_time", self.pilot_time),
            ("support_fraction", self.support_fraction),
            ("detect_time_factor", self.detect_time_factor),
            ("grid_fraction", self.grid_fraction),
            ("thermal_span_factor", self.thermal_span_factor),
            ("eps_ref", self.eps_ref),
        ] {
            if !pos(v) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.min_detection_scans == 0 || self.max_detection_scans < self.min_detection_scans {
            return bad("detection scan counts must satisfy 1 <= min <= max".into());
        }
        if self.thermal_points < 3 {
            return bad("thermal_points must be at least 3".into());
        }
        self.init.validate()
    }
}

fn serialize_matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub relative_frobenius_error: f64,
    /// `None` when no link was detected.
    pub precision: Option<f64>,
    pub recall: f64,
    pub max_diagonal_error: f64,
    pub threshold: f64,
    pub true_links: usize,
    pub detected_links: usize,
    pub correct_links: usize,
}

/// Compares an estimate with the truth. Off-diagonal entries of the
/// estimate whose magnitude exceeds `threshold` (default: 10% of the
/// largest off-diagonal magnitude of the estimate) count as links.
pub fn compare_adjacency(
    a_est: &DMatrix<f64>,
    a_true: &DMatrix<f64>,
    threshold: Option<f64>,
) -> Result<Comparison> {
    if a_est.shape() != a_true.shape() || a_est.nrows() != a_est.ncols() {
        return Err(Error::Dimension(format!(
            "cannot compare {:?} with {:?}",
            a_est.shape(),
            a_true.shape()
        )));
    }
    let n = a_est.nrows();
    let threshold = threshold.unwrap_or_else(|| {
        let mut max = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    max = max.max(a_est[(i, j)].abs());
                }
            }
        }
        0.1 * max
    });
    let (mut true_links, mut detected, mut correct) = (0, 0, 0);
    for i in 0..n {
        for j in (i + 1)..n {
            let t = a_true[(i, j)] != 0.0;
            let d = a_est[(i, j)].abs() > threshold;
            true_links += t as usize;
            detected += d as usize;
            correct += (t && d) as usize;
        }
    }
    let max_diagonal_error = (0..n)
        .map(|i| (a_est[(i, i)] - a_true[(i, i)]).abs())
        .fold(0.0, f64::max);
    Ok(Comparison {
        relative_frobenius_error: (a_est - a_true).norm() / a_true.norm(),
        precision: (detected > 0).then(|| correct as f64 / detected as f64),
        recall: if true_links > 0 {
            correct as f64 / true_links as f64
        } else {
            1.0
        },
        max_diagonal_error,
        threshold,
        true_links,
        detected_links: detected,
        correct_links: correct,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionSummary {
    pub scanned_nodes: Vec<usize>,
    pub grid_range: (f64, f64),
    pub grid_step: f64,
    pub partial: bool,
    pub merged: bool,
    pub truncated: bool,
    pub gaps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timescales {
    pub pilot_time: f64,
    pub recurrence_pilot: f64,
    pub detection_time: f64,
    pub recurrence: f64,
    pub thermalization: f64,
    pub thermalization_reversed: bool,
    pub magnitude_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub measurement_count: usize,
    /// `max |K^T K - I|` of the signed magnitude table, before projection.
    pub orthogonality_residual: f64,
    pub magnitude_row_flags: Vec<usize>,
    pub references: Vec<usize>,
    pub sign_flags: Vec<SignFlag>,
    pub detection: Option<DetectionSummary>,
    pub timescales: Option<Timescales>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionReport {
    pub n: usize,
    pub omegas: Vec<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub k_est: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub a_est: DMatrix<f64>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

fn read_density(
    source: &dyn ModeDensitySource,
    nodes: &[usize],
    mode: usize,
    omega: f64,
) -> Result<Option<f64>> {
    match source.density(nodes, mode, omega) {
        Ok(j) => Ok(Some(j)),
        Err(e) if e.is_numerical() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Stages after eigenfrequency detection: single-node magnitudes, pair
/// signs, orthonormal projection and assembly. `omegas` must be
/// descending.
pub fn reconstruct_from_source(
    source: &dyn ModeDensitySource,
    omegas: &[f64],
    cfg: &ReconstructionConfig,
) -> Result<ReconstructionReport> {
    let n = omegas.len();
    cfg.validate(n)?;
    let spacings = check_spacings(omegas)?;
    let mut gaps = Vec::new();

    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (0..n)
                .map(|i| read_density(source, &[j], i, omegas[i]))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(n, n);
    for (j, row) in rows.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            match v {
                Some(d) => m[(j, i)] = magnitude(*d, omegas[i], spacings[i], cfg.k),
                None => gaps.push(SignFlag {
                    node: j,
                    mode: i,
                    kind: SignFlagKind::MeasurementGap,
                }),
            }
        }
    }
    let single = MagnitudeTable { m };
    let references = choose_references(&single, cfg.reference_node, cfg.eps_ref);

    let pair_cols: Vec<Vec<Option<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let r = references[i];
            (0..n)
                .map(|j| {
                    if j == r {
                        Ok(Some(f64::NAN))
                    } else {
                        read_density(source, &[r, j], i, omegas[i])
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut values = DMatrix::from_element(n, n, f64::NAN);
    for (i, col) in pair_cols.iter().enumerate() {
        for (j, v) in col.iter().enumerate() {
            if j == references[i] {
                continue;
            }
            match v {
                Some(d) => values[(j, i)] = magnitude(*d, omegas[i], spacings[i], cfg.k),
                None => {
                    values[(j, i)] = single.m[(j, i)].max(single.m[(references[i], i)]);
                    gaps.push(SignFlag {
                        node: j,
                        mode: i,
                        kind: SignFlagKind::MeasurementGap,
                    });
                }
            }
        }
    }
    let pairs = PairMeasurements {
        reference: references.clone(),
        values,
    };
    let mut signed = resolve_signs(&single, &pairs, cfg.ambiguity_tolerance, cfg.reference_node)?;
    signed.flags.extend(gaps);
    let residual = signed.orthogonality_residual();
    let k_est = nearest_orthonormal(&signed.k_est)?;
    let a_est = assemble_adjacency(&k_est, omegas)?.into_matrix();
    Ok(ReconstructionReport {
        n,
        omegas: omegas.to_vec(),
        k_est,
        a_est,
        diagnostics: Diagnostics {
            measurement_count: 0,
            orthogonality_residual: residual,
            magnitude_row_flags: single.row_norm_flags(),
            references,
            sign_flags: signed.flags,
            detection: None,
            timescales: None,
        },
        comparison: None,
    })
}

/// Reconstruction from perfect inputs: exact eigenfrequencies and exact
/// binned densities.
pub fn reconstruct_truth_fed(
    eig: &EigenSystem,
    cfg: &ReconstructionConfig,
) -> Result<ReconstructionReport> {
    let source = ExactDensitySource::new(eig.clone(), cfg.k);
    reconstruct_from_source(&source, eig.omegas(), cfg)
}

/// Order in which nodes are scanned for eigenfrequencies: the reference,
/// then nodes spread across the index range.
fn detection_order(n: usize, reference: usize, count: usize) -> Vec<usize> {
    let mut out = vec![reference];
    let mut denom = 2;
    while out.len() < count.min(n) {
        for num in (1..denom).step_by(2) {
            let j = (reference + num * n / denom) % n;
            if !out.contains(&j) && out.len() < count.min(n) {
                out.push(j);
            }
        }
        denom *= 2;
        if denom > 4 * n {
            break;
        }
    }
    out
}

/// Full measurement-only reconstruction of an `n`-node network.
pub fn reconstruct(
    oracle: &dyn NetworkOracle,
    n: usize,
    cfg: &ReconstructionConfig,
) -> Result<ReconstructionReport> {
    cfg.validate(n)?;
    let counter = CountingOracle::new(oracle);
    let schedule = |grid: Vec<f64>, t: f64, node: usize| {
        ProbeSchedule::new(grid, t, cfg.k, cfg.init, cfg.temperature, vec![node])
    };

    // coarse continuum scan to locate the band
    let (lo, hi) = cfg.pilot_range;
    let pilot_grid = linspace(lo, hi, cfg.pilot_steps);
    let pilot_step = pilot_grid[1] - pilot_grid[0];
    let pilot = scan_density(
        &counter,
        &schedule(pilot_grid, cfg.pilot_time, cfg.reference_node)?,
    )?;
    let vals = pilot.filled();
    let top = vals.iter().copied().fold(0.0, f64::max);
    let support: Vec<usize> = (0..vals.len())
        .filter(|&i| top > 0.0 && vals[i] >= cfg.support_fraction * top)
        .collect();
    let (first, last) = match (support.first(), support.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => {
            return Err(Error::InsufficientEigenfrequencies {
                found: 0,
                expected: n,
            })
        }
    };
    let band = (pilot.omega[last] - pilot.omega[first]).max(pilot_step);
    let recurrence_pilot = 4.0 * n as f64 / band;
    let grid_lo = (pilot.omega[first] - 2.0 * pilot_step).max(0.5 * pilot_step);
    let grid_hi = pilot.omega[last] + 2.0 * pilot_step;

    // discrete-regime scans until every mode has been seen
    let t_detect = cfg.detect_time_factor * recurrence_pilot;
    let step = cfg.grid_fraction * 2.0 * PI / t_detect;
    let steps = ((grid_hi - grid_lo) / step).ceil() as usize + 1;
    let grid = linspace(grid_lo, grid_lo + step * (steps - 1) as f64, steps);
    let mut parts: Vec<Detection> = Vec::new();
    let mut scanned = Vec::new();
    let mut ref_peak = None;
    let mut combined = None;
    for node in detection_order(n, cfg.reference_node, cfg.max_detection_scans) {
        let scan = scan_density(&counter, &schedule(grid.clone(), t_detect, node)?)?;
        let d = detect_from_scan(&scan, n, &cfg.peaks)?;
        if node == cfg.reference_node {
            ref_peak = d
                .omegas
                .iter()
                .zip(&d.relative_heights)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|p| *p.0);
        }
        parts.push(d);
        scanned.push(node);
        let c = combine_detections(&parts, step, n);
        let done = parts.len() >= cfg.min_detection_scans && c.omegas.len() >= n;
        combined = Some(c);
        if done {
            break;
        }
    }
    let detection = combined.expect("at least one detection scan");
    if detection.omegas.len() < n {
        return Err(Error::InsufficientEigenfrequencies {
            found: detection.omegas.len(),
            expected: n,
        });
    }
    let omegas = detection.omegas.clone();

    // interaction window for magnitude measurements
    let recurrence = match recurrence_time_from_omegas(&omegas) {
        r if r.is_finite() => r,
        _ => recurrence_pilot,
    };
    let thermal_grid = linspace(
        t_detect * cfg.thermal_span_factor / cfg.thermal_points as f64,
        t_detect * cfg.thermal_span_factor,
        cfg.thermal_points,
    );
    let thermal = measure_thermal_time(
        &counter,
        &[cfg.reference_node],
        ref_peak.unwrap_or(omegas[0]),
        cfg.k,
        &cfg.init,
        &thermal_grid,
    )?;
    let t_mag = 0.5 * (recurrence + thermal.tau);

    let source = OracleDensitySource {
        oracle: &counter,
        k: cfg.k,
        init: cfg.init,
        temperature: cfg.temperature,
        t: t_mag,
    };
    let mut report = reconstruct_from_source(&source, &omegas, cfg)?;
    report.diagnostics.measurement_count = counter.calls();
    report.diagnostics.detection = Some(DetectionSummary {
        scanned_nodes: scanned,
        grid_range: (grid[0], grid[grid.len() - 1]),
        grid_step: step,
        partial: detection.partial,
        merged: detection.merged,
        truncated: detection.truncated,
        gaps: detection.gaps,
    });
    report.diagnostics.timescales = Some(Timescales {
        pilot_time: cfg.pilot_time,
        recurrence_pilot,
        detection_time: t_detect,
        recurrence,
        thermalization: thermal.tau,
        thermalization_reversed: thermal.reversed,
        magnitude_time: t_mag,
    });
    Ok(report)
}
