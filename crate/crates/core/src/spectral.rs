//! Eigenmodes of a network, probe couplings, damping kernel and spectral
//! densities (discrete comb and time-truncated smooth form).

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{validate_stability, AdjacencyMatrix};

/// Relative spacing below which two eigenfrequencies count as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-10;

/// Orthogonal mode matrix `K` (columns are eigenvectors) and the
/// eigenfrequencies `Omega_i = sqrt(2 D_ii)`, sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    k: DMatrix<f64>,
    omegas: Vec<f64>,
    degenerate: Vec<usize>,
}

impl EigenSystem {
    /// Builds an eigensystem from parts, checking orthogonality and order.
    pub fn from_parts(k: DMatrix<f64>, omegas: Vec<f64>) -> Result<Self> {
        let n = omegas.len();
        if k.nrows() != n || k.ncols() != n || n == 0 {
            return Err(Error::Dimension(format!(
                "{}x{} mode matrix for {n} frequencies",
                k.nrows(),
                k.ncols()
            )));
        }
        if omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidParameter(
                "eigenfrequencies must be positive".into(),
            ));
        }
        if omegas.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "eigenfrequencies must be sorted descending".into(),
            ));
        }
        let residual = orthogonality_residual(&k);
        if residual > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "mode matrix is not orthogonal (residual {residual:e})"
            )));
        }
        let degenerate = degenerate_pairs(&omegas);
        Ok(EigenSystem {
            k,
            omegas,
            degenerate,
        })
    }

    pub fn n(&self) -> usize {
        self.omegas.len()
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    /// Indices `i` with `Omega_i` and `Omega_{i+1}` numerically equal.
    pub fn degenerate(&self) -> &[usize] {
        &self.degenerate
    }

    /// `K diag(Omega^2 / 2) K^T`.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let d: Vec<f64> = self.omegas.iter().map(|w| 0.5 * w * w).collect();
        scaled_outer(&self.k, &d)
    }
}

/// `K diag(d) K^T`.
pub(crate) fn scaled_outer(k: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut kd = k.clone();
    for (mut col, &s) in kd.column_iter_mut().zip(d) {
        col *= s;
    }
    &kd * k.transpose()
}

/// `max |K^T K - I|`.
pub fn orthogonality_residual(k: &DMatrix<f64>) -> f64 {
    let n = k.ncols();
    (k.transpose() * k - DMatrix::identity(n, n)).amax()
}

fn degenerate_pairs(omegas: &[f64]) -> Vec<usize> {
    let scale = omegas[0];
    omegas
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] - w[1] <= DEGENERACY_TOLERANCE * scale)
        .map(|(i, _)| i)
        .collect()
}

/// Diagonalizes a stable potential matrix.
///
/// Eigenvectors are normalized so that their largest-magnitude entry is
/// positive (the first such entry when several tie).
pub fn diagonalize(a: &AdjacencyMatrix) -> Result<EigenSystem> {
    validate_stability(a)?;
    let eig = SymmetricEigen::new(a.matrix().clone());
    let n = a.dim();
    let mut cols: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|c| {
            let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            fix_sign(&mut v);
            ((2.0 * eig.eigenvalues[c]).sqrt(), v)
        })
        .collect();
    cols.sort_by(|x, y| {
        y.0.total_cmp(&x.0).then_with(|| {
            x.1.iter()
                .zip(&y.1)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let omegas: Vec<f64> = cols.iter().map(|c| c.0).collect();
    let k = DMatrix::from_fn(n, n, |r, c| cols[c].1[r]);
    let degenerate = degenerate_pairs(&omegas);
    Ok(EigenSystem {
        k,
        omegas,
        degenerate,
    })
}

fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let lead = v
        .iter()
        .position(|x| x.abs() >= max * (1.0 - 1e-9))
        .unwrap_or(0);
    if v[lead] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Probe-mode couplings `g_i = sum_{j in nodes} K_ji`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingVector {
    pub g: Vec<f64>,
    pub nodes: Vec<usize>,
}

/// Checks a probed node set: one or two distinct nodes in `[0, n)`.
pub fn validate_node_set(nodes: &[usize], n: usize) -> Result<()> {
    if nodes.is_empty() || nodes.len() > 2 {
        return Err(Error::InvalidParameter(format!(
            "node set must contain one or two nodes, got {}",
            nodes.len()
        )));
    }
    if let Some(&bad) = nodes.iter().find(|&&j| j >= n) {
        return Err(Error::InvalidParameter(format!(
            "node {bad} outside [0, {n})"
        )));
    }
    if nodes.len() == 2 && nodes[0] == nodes[1] {
        return Err(Error::InvalidParameter(format!(
            "node set repeats node {}",
            nodes[0]
        )));
    }
    Ok(())
}

pub fn probe_couplings(eig: &EigenSystem, nodes: &[usize]) -> Result<CouplingVector> {
    validate_node_set(nodes, eig.n())?;
    let g = (0..eig.n())
        .map(|i| nodes.iter().map(|&j| eig.k[(j, i)]).sum())
        .collect();
    Ok(CouplingVector {
        g,
        nodes: nodes.to_vec(),
    })
}

/// `gamma(t) = sum_i k^2 g_i^2 / Omega_i^2 cos(Omega_i t)`.
pub fn damping_kernel(eig: &EigenSystem, g: &CouplingVector, k: f64, t: f64) -> f64 {
    eig.omegas
        .iter()
        .zip(&g.g)
        .map(|(w, gi)| k * k * gi * gi / (w * w) * (w * t).cos())
        .sum()
}

/// Spacings `Omega_i - Omega_{i+1}`; the last mode reuses the previous
/// spacing and a single mode uses its own frequency.
pub fn mode_spacings(omegas: &[f64]) -> Vec<f64> {
    let n = omegas.len();
    match n {
        0 => Vec::new(),
        1 => vec![omegas[0]],
        _ => {
            let mut d: Vec<f64> = omegas.windows(2).map(|w| w[0] - w[1]).collect();
            d.push(d[n - 2]);
            d
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CombLine {
    pub omega: f64,
    /// `(pi/2) k^2 g^2 / Omega`.
    pub weight: f64,
    /// `weight / Delta Omega`, comparable to a smooth density.
    pub j_binned: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralComb {
    pub lines: Vec<CombLine>,
}

impl SpectralComb {
    pub fn total_weight(&self) -> f64 {
        self.lines.iter().map(|l| l.weight).sum()
    }
}

pub fn spectral_density_comb(eig: &EigenSystem, g: &CouplingVector, k: f64) -> SpectralComb {
    let spacings = mode_spacings(&eig.omegas);
    let lines = eig
        .omegas
        .iter()
        .zip(&g.g)
        .zip(&spacings)
        .map(|((&omega, gi), dw)| {
            let weight = 0.5 * PI * k * k * gi * gi / omega;
            CombLine {
                omega,
                weight,
                j_binned: weight / dw,
            }
        })
        .collect();
    SpectralComb { lines }
}

/// `J(omega)` sampled on a grid for a finite interaction time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledSpectrum {
    pub omega: Vec<f64>,
    pub j: Vec<f64>,
    pub t_max: f64,
    /// Set when `t_max` exceeds the recurrence time, i.e. the spectrum is
    /// already resolving individual lines.
    pub discrete_regime: bool,
}

impl SampledSpectrum {
    pub fn max(&self) -> f64 {
        self.j.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `sin(d t) / (2 d)`, continuous through `d = 0`.
fn half_sinc(d: f64, t: f64) -> f64 {
    let x = d * t;
    if x.abs() < 1e-4 {
        0.5 * t * (1.0 - x * x / 6.0)
    } else {
        x.sin() / (2.0 * d)
    }
}

/// `(1 - cos(d t)) / (2 d^2 t)`, continuous through `d = 0`.
fn half_fejer(d: f64, t: f64) -> f64 {
    let x = d * t;
    if x.abs() < 1e-4 {
        0.25 * t * (1.0 - x * x / 12.0)
    } else {
        let s = (0.5 * x).sin();
        s * s / (d * d * t)
    }
}

fn check_grid(grid: &[f64], t_max: f64) -> Result<()> {
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "t_max must be positive, got {t_max}"
        )));
    }
    if grid.iter().any(|w| !w.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "frequency grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn sample_with(
    eig: &EigenSystem,
    g: &CouplingVector,
    k: f64,
    grid: &[f64],
    t_max: f64,
    kernel: fn(f64, f64) -> f64,
) -> Result<SampledSpectrum> {
    check_grid(grid, t_max)?;
    let c: Vec<f64> = eig
        .omegas
        .iter()
        .zip(&g.g)
        .map(|(w, gi)| k * k * gi * gi / (w * w))
        .collect();
    let j = grid
        .par_iter()
        .map(|&omega| {
            omega
                * eig
                    .omegas
                    .iter()
                    .zip(&c)
                    .map(|(&w, ci)| ci * (kernel(omega - w, t_max) + kernel(omega + w, t_max)))
                    .sum::<f64>()
        })
        .collect();
    Ok(SampledSpectrum {
        omega: grid.to_vec(),
        j,
        t_max,
        discrete_regime: t_max > recurrence_time(eig),
    })
}

/// `J(omega) = omega * int_0^t_max gamma(t) cos(omega t) dt`, evaluated in
/// closed form mode by mode.
pub fn spectral_density_smooth(
    eig: &EigenSystem,
    g: &CouplingVector,
    k: f64,
    grid: &[f64],
    t_max: f64,
) -> Result<SampledSpectrum> {
    sample_with(eig, g, k, grid, t_max, half_sinc)
}

/// Running average `(1/t) int_0^t J_{t'}(omega) dt'` of the smooth density.
///
/// This is what the occupation-decay estimate actually measures at weak
/// coupling: the effective rate after time `t` is the mean of the
/// instantaneous truncated density, which replaces the Dirichlet kernel of
/// [`spectral_density_smooth`] by the non-negative Fejer kernel.
pub fn spectral_density_time_averaged(
    eig: &EigenSystem,
    g: &CouplingVector,
    k: f64,
    grid: &[f64],
    t: f64,
) -> Result<SampledSpectrum> {
    sample_with(eig, g, k, grid, t, half_fejer)
}

/// Recurrence-time heuristic `2N / v_max` with `v_max` the largest
/// neighbouring spacing divided by `pi/N`. A single mode never recurs.
pub fn recurrence_time_from_omegas(omegas: &[f64]) -> f64 {
    let n = omegas.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let max_gap = omegas
        .windows(2)
        .map(|w| (w[0] - w[1]).abs())
        .fold(0.0, f64::max);
    if max_gap == 0.0 {
        return f64::INFINITY;
    }
    let v_max = max_gap * n as f64 / PI;
    2.0 * n as f64 / v_max
}

pub fn recurrence_time(eig: &EigenSystem) -> f64 {
    recurrence_time_from_omegas(&eig.omegas)
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let step = (b - a) / (n - 1) as f64;
            (0..n).map(|i| a + step * i as f64).collect()
        }
    }
}
