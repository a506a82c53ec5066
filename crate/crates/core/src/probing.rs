//! Measurement-only probing: spectral-density estimates from occupation
//! decay, eigenfrequency detection and thermalization times.
//!
//! Everything here talks to the network through [`NetworkOracle`] alone.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{thermal_occupation, ProbeInit};
use crate::error::{Error, Result};

/// Black-box access to a hidden network at known temperature: attach a
/// probe to `nodes`, let it interact for time `t`, read `<n(t)>`.
pub trait NetworkOracle: Sync {
    fn measure(
        &self,
        nodes: &[usize],
        omega_s: f64,
        k: f64,
        init: &ProbeInit,
        t: f64,
    ) -> Result<f64>;

    /// One measurement per time, all with the same probe settings.
    fn measure_series(
        &self,
        nodes: &[usize],
        omega_s: f64,
        k: f64,
        init: &ProbeInit,
        times: &[f64],
    ) -> Result<Vec<f64>> {
        times
            .iter()
            .map(|&t| self.measure(nodes, omega_s, k, init, t))
            .collect()
    }
}

impl<O: NetworkOracle + ?Sized> NetworkOracle for &O {
    fn measure(
        &self,
        nodes: &[usize],
        omega_s: f64,
        k: f64,
        init: &ProbeInit,
        t: f64,
    ) -> Result<f64> {
        (**self).measure(nodes, omega_s, k, init, t)
    }

    fn measure_series(
        &self,
        nodes: &[usize],
        omega_s: f64,
        k: f64,
        init: &ProbeInit,
        times: &[f64],
    ) -> Result<Vec<f64>> {
        (**self).measure_series(nodes, omega_s, k, init, times)
    }
}

/// Counts measurements passed through to an inner oracle.
pub struct CountingOracle<O> {
    inner: O,
    calls: AtomicUsize,
}

impl<O: NetworkOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        CountingOracle {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<O: NetworkOracle> NetworkOracle for CountingOracle<O> {
    fn measure(
        &self,
        nodes: &[usize],
        omega_s: f64,
        k: f64,
        init: &ProbeInit,
        t: f64,
    ) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.measure(nodes, omega_s, k, init, t)
    }

    fn measure_series(
        &self,
        nodes: &[usize],
        omega_s: f64,
        k: f64,
        init: &ProbeInit,
        times: &[f64],
    ) -> Result<Vec<f64>> {
        self.calls.fetch_add(times.len(), Ordering::Relaxed);
        self.inner.measure_series(nodes, omega_s, k, init, times)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Continuum,
    Discrete,
}

/// Frequencies to probe at, with the probe settings shared by all of them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSchedule {
    pub grid: Vec<f64>,
    pub t: f64,
    pub k: f64,
    pub init: ProbeInit,
    pub temperature: f64,
    pub nodes: Vec<usize>,
}

impl ProbeSchedule {
    pub fn new(
        grid: Vec<f64>,
        t: f64,
        k: f64,
        init: ProbeInit,
        temperature: f64,
        nodes: Vec<usize>,
    ) -> Result<Self> {
        let s = ProbeSchedule {
            grid,
            t,
            k,
            init,
            temperature,
            nodes,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.t.is_finite() && self.t > 0.0) {
            return bad(format!("interaction time must be positive, got {}", self.t));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return bad(format!("coupling must be positive, got {}", self.k));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            ));
        }
        if self.grid.is_empty()
            || self.grid.iter().any(|w| !(w.is_finite() && *w > 0.0))
            || self.grid.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("probe frequencies must be positive and strictly increasing".into());
        }
        if self.nodes.is_empty() || self.nodes.len() > 2 {
            return bad("node set must contain one or two nodes".into());
        }
        self.init.validate()
    }

    /// Smooth spectrum below the recurrence time, resolved lines above it.
    pub fn regime(&self, recurrence_estimate: f64) -> Regime {
        if self.t < recurrence_estimate {
            Regime::Continuum
        } else {
            Regime::Discrete
        }
    }

    /// The decay law only holds once the memory of the bath has faded,
    /// taken here as `t >= 10 / omega_max`.
    pub fn past_memory_time(&self, omega_max: f64) -> bool {
        self.t * omega_max >= 10.0
    }

    /// Grid spacing (largest gap).
    pub fn step(&self) -> f64 {
        self.grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Relative contrast floor below which the probe carries no signal.
pub const CONTRAST_TOLERANCE: f64 = 1e-9;

/// Inverts the occupation decay law:
/// `J = (omega_s / t) ln(dn(0) / dn(t))` with `dn = N(omega_s) - n`.
pub fn estimate_density_point(
    n_t: f64,
    n_0: f64,
    omega_s: f64,
    t: f64,
    temperature: f64,
) -> Result<f64> {
    let nth = thermal_occupation(omega_s, temperature);
    let d0 = nth - n_0;
    let dt = nth - n_t;
    if d0.abs() < CONTRAST_TOLERANCE * nth.max(1.0) {
        return Err(Error::DegenerateContrast);
    }
    if dt == 0.0 || dt.signum() != d0.signum() {
        return Err(Error::SignFlip);
    }
    Ok((omega_s / t * (d0 / dt).ln()).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    DegenerateContrast,
    SignFlip,
    Unstable,
}

impl PointStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::DegenerateContrast => "degenerate_contrast",
            PointStatus::SignFlip => "sign_flip",
            PointStatus::Unstable => "unstable",
        }
    }
}

/// Estimated `J` on a grid; gaps carry the reason they are missing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityScan {
    pub omega: Vec<f64>,
    pub j: Vec<Option<f64>>,
    pub status: Vec<PointStatus>,
    pub t: f64,
}

impl DensityScan {
    pub fn gaps(&self) -> usize {
        self.j.iter().filter(|x| x.is_none()).count()
    }

    /// Values for peak finding. A sign flip means the probe overshot the
    /// thermal value, i.e. an unusually strong response, so those gaps read
    /// as the largest finite estimate; other gaps read as zero.
    pub fn filled(&self) -> Vec<f64> {
        let top = self.j.iter().flatten().copied().fold(0.0, f64::max);
        self.j
            .iter()
            .zip(&self.status)
            .map(|(x, s)| match (x, s) {
                (Some(v), _) => *v,
                (None, PointStatus::SignFlip) => top,
                (None, _) => 0.0,
            })
            .collect()
    }
}

fn point(
    oracle: &dyn NetworkOracle,
    s: &ProbeSchedule,
    omega: f64,
) -> Result<(Option<f64>, PointStatus)> {
    let n0 = s.init.initial_occupation(omega);
    let n_t = match oracle.measure(&s.nodes, omega, s.k, &s.init, s.t) {
        Ok(v) => v,
        Err(Error::NotPositiveDefinite { .. }) => return Ok((None, PointStatus::Unstable)),
        Err(e) => return Err(e),
    };
    Ok(
        match estimate_density_point(n_t, n0, omega, s.t, s.temperature) {
            Ok(j) => (Some(j), PointStatus::Ok),
            Err(Error::DegenerateContrast) => (None, PointStatus::DegenerateContrast),
            Err(Error::SignFlip) => (None, PointStatus::SignFlip),
            Err(e) => return Err(e),
        },
    )
}

/// One density estimate per grid frequency, evaluated in parallel.
pub fn scan_density(oracle: &dyn NetworkOracle, schedule: &ProbeSchedule) -> Result<DensityScan> {
    schedule.validate()?;
    let results: Vec<(Option<f64>, PointStatus)> = schedule
        .grid
        .par_iter()
        .map(|&w| point(oracle, schedule, w))
        .collect::<Result<_>>()?;
    let (j, status) = results.into_iter().unzip();
    Ok(DensityScan {
        omega: schedule.grid.clone(),
        j,
        status,
        t: schedule.t,
    })
}

/// Thresholds for accepting a local maximum of a scan as a spectral line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    /// Peaks must exceed this multiple of the scan median.
    pub median_factor: f64,
    /// Peaks must exceed this multiple of the sidelobe envelope
    /// `4 h / ((x - x_p) t)^2` of every stronger accepted peak.
    pub sidelobe_factor: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        PeakConfig {
            median_factor: 3.0,
            sidelobe_factor: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub omega: f64,
    pub height: f64,
}

/// Local maxima of a uniformly sampled curve, refined by a parabola
/// through the three samples around each maximum.
///
/// A finite interaction time `t` gives every line sidelobes decaying like
/// `4 / (delta t)^2`; candidates that do not rise clearly above the
/// sidelobes of stronger peaks are discarded. Returned strongest first.
pub fn find_peaks(omega: &[f64], j: &[f64], t: f64, cfg: &PeakConfig) -> Vec<Peak> {
    let n = j.len();
    if n < 3 {
        return Vec::new();
    }
    let mut sorted = j.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let floor = cfg.median_factor * median.max(0.0);
    let mut candidates: Vec<Peak> = (1..n - 1)
        .filter(|&i| j[i] > j[i - 1] && j[i] >= j[i + 1] && j[i] > floor)
        .map(|i| {
            let (y0, y1, y2) = (j[i - 1], j[i], j[i + 1]);
            let den = y0 - 2.0 * y1 + y2;
            let h = 0.5 * (omega[i + 1] - omega[i - 1]);
            let shift = if den < 0.0 {
                0.5 * (y0 - y2) / den
            } else {
                0.0
            };
            Peak {
                omega: omega[i] + shift.clamp(-0.5, 0.5) * h,
                height: y1,
            }
        })
        .collect();
    candidates.sort_by(|a, b| b.height.total_cmp(&a.height));
    let mut accepted: Vec<Peak> = Vec::new();
    for c in candidates {
        let envelope = accepted
            .iter()
            .map(|p| {
                let d = (c.omega - p.omega) * t;
                4.0 * p.height / (d * d)
            })
            .fold(0.0, f64::max);
        if c.height >= cfg.sidelobe_factor * envelope {
            accepted.push(c);
        }
    }
    accepted
}

/// Eigenfrequencies found by a discrete-regime scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    /// Detected frequencies, descending.
    pub omegas: Vec<f64>,
    /// Peak heights relative to the strongest peak, same order.
    pub relative_heights: Vec<f64>,
    /// Fewer lines than expected: the probe may not couple to every mode.
    pub partial: bool,
    /// Lines closer than two grid steps were merged.
    pub merged: bool,
    /// More candidate lines than expected; the weakest were dropped.
    pub truncated: bool,
    pub gaps: usize,
}

/// Merges peaks closer than `tol`, keeping the taller one; returns
/// whether anything was merged.
fn merge_close(peaks: &mut Vec<(f64, f64)>, tol: f64) -> bool {
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut kept: Vec<(f64, f64)> = Vec::with_capacity(peaks.len());
    let mut merged = false;
    for &p in peaks.iter() {
        if kept.iter().any(|q| (q.0 - p.0).abs() < tol) {
            merged = true;
        } else {
            kept.push(p);
        }
    }
    *peaks = kept;
    merged
}

fn finish_detection(
    mut peaks: Vec<(f64, f64)>,
    merge_tol: f64,
    expected: usize,
    gaps: usize,
) -> Detection {
    let merged = merge_close(&mut peaks, merge_tol);
    let truncated = peaks.len() > expected;
    peaks.truncate(expected);
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    Detection {
        partial: peaks.len() < expected,
        merged,
        truncated,
        gaps,
        omegas: peaks.iter().map(|p| p.0).collect(),
        relative_heights: peaks.iter().map(|p| p.1).collect(),
    }
}

/// Requires the grid to sample every line's main lobe (half-width
/// `2 pi / t`) at least twice.
pub fn check_resolution(step: f64, t: f64) -> Result<()> {
    let width = 2.0 * std::f64::consts::PI / t;
    if step > 0.5 * width {
        return Err(Error::GridTooCoarse { step, width });
    }
    Ok(())
}

pub fn detect_from_scan(
    scan: &DensityScan,
    expected: usize,
    cfg: &PeakConfig,
) -> Result<Detection> {
    let step = scan
        .omega
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    check_resolution(step, scan.t)?;
    let peaks = find_peaks(&scan.omega, &scan.filled(), scan.t, cfg);
    let top = peaks.first().map(|p| p.height).unwrap_or(1.0);
    let rel = peaks.iter().map(|p| (p.omega, p.height / top)).collect();
    Ok(finish_detection(rel, 2.0 * step, expected, scan.gaps()))
}

/// Scans in the discrete regime and returns the resolved lines.
pub fn detect_eigenfrequencies(
    oracle: &dyn NetworkOracle,
    schedule: &ProbeSchedule,
    expected: usize,
    cfg: &PeakConfig,
) -> Result<Detection> {
    check_resolution(schedule.step(), schedule.t)?;
    let scan = scan_density(oracle, schedule)?;
    detect_from_scan(&scan, expected, cfg)
}

/// Union of detections from several scans of the same network. Lines
/// within 1.5 grid steps of each other are taken to be the same mode.
pub fn combine_detections(parts: &[Detection], step: f64, expected: usize) -> Detection {
    let peaks: Vec<(f64, f64)> = parts
        .iter()
        .flat_map(|d| {
            d.omegas
                .iter()
                .copied()
                .zip(d.relative_heights.iter().copied())
        })
        .collect();
    let gaps = parts.iter().map(|d| d.gaps).sum();
    let mut out = finish_detection(peaks, 1.5 * step, expected, gaps);
    out.merged |= parts.iter().any(|d| d.merged);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalTime {
    pub tau: f64,
    /// False when the occupation kept moving the same way up to the end
    /// of the time grid; `tau` is then the grid end.
    pub reversed: bool,
}

/// First time after the initial transient at which the occupation stops
/// relaxing towards the bath and turns back.
pub fn measure_thermal_time(
    oracle: &dyn NetworkOracle,
    nodes: &[usize],
    omega_s: f64,
    k: f64,
    init: &ProbeInit,
    t_grid: &[f64],
) -> Result<ThermalTime> {
    if t_grid.len() < 3 || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] < 0.0 {
        return Err(Error::InvalidParameter(
            "time grid needs at least three increasing non-negative points".into(),
        ));
    }
    let n = oracle.measure_series(nodes, omega_s, k, init, t_grid)?;
    let transient = 10.0 / omega_s;
    let mut direction = 0.0f64;
    for i in 1..n.len() {
        if t_grid[i - 1] < transient {
            continue;
        }
        let slope = n[i] - n[i - 1];
        if slope.abs() <= 1e-12 * n[i].abs().max(1.0) {
            continue;
        }
        if direction == 0.0 {
            direction = slope.signum();
        } else if slope.signum() != direction {
            return Ok(ThermalTime {
                tau: t_grid[i - 1],
                reversed: true,
            });
        }
    }
    Ok(ThermalTime {
        tau: *t_grid.last().unwrap(),
        reversed: false,
    })
}
