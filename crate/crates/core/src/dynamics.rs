//! Exact Gaussian dynamics of a probe oscillator attached to a network.
//!
//! Phase-space ordering is `(q_S, q_1..q_N, p_S, p_1..p_N)`; covariances
//! are symmetrized, `cov_ab = <{x_a, x_b}>/2 - <x_a><x_b>`, so the vacuum of
//! a unit-mass oscillator of frequency `w` has `<q^2> = 1/(2w)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{validate_stability, AdjacencyMatrix};
use crate::spectral::{scaled_outer, validate_node_set, EigenSystem};

/// Probe + network potential matrix; the probe sits at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalSystem {
    a_tot: DMatrix<f64>,
    omega_s: f64,
    k: f64,
    nodes: Vec<usize>,
}

impl TotalSystem {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a_tot
    }

    pub fn omega_s(&self) -> f64 {
        self.omega_s
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Number of oscillators including the probe.
    pub fn dim(&self) -> usize {
        self.a_tot.nrows()
    }
}

/// Attaches a probe of frequency `omega_s` with interaction
/// `k q_S sum_{j in nodes} q_j`.
pub fn assemble_total(
    a: &AdjacencyMatrix,
    omega_s: f64,
    k: f64,
    nodes: &[usize],
) -> Result<TotalSystem> {
    if !(omega_s.is_finite() && omega_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "probe frequency must be positive, got {omega_s}"
        )));
    }
    if !(k.is_finite() && k >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "coupling must be non-negative, got {k}"
        )));
    }
    let n = a.dim();
    validate_node_set(nodes, n)?;
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((1, 1), (n, n)).copy_from(a.matrix());
    m[(0, 0)] = 0.5 * omega_s * omega_s;
    for &j in nodes {
        m[(0, j + 1)] = 0.5 * k;
        m[(j + 1, 0)] = 0.5 * k;
    }
    let sys = TotalSystem {
        a_tot: m,
        omega_s,
        k,
        nodes: nodes.to_vec(),
    };
    validate_stability(&AdjacencyMatrix::from_matrix(sys.a_tot.clone())?)?;
    Ok(sys)
}

/// Initial state of the probe. The network always starts thermal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeInit {
    Vacuum,
    SqueezedVacuum { r: f64, phi: f64 },
    Thermal { t_p: f64 },
}

impl ProbeInit {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ProbeInit::Vacuum => Ok(()),
            ProbeInit::SqueezedVacuum { r, phi } if r.is_finite() && phi.is_finite() => Ok(()),
            ProbeInit::Thermal { t_p } if t_p.is_finite() && t_p >= 0.0 => Ok(()),
            other => Err(Error::InvalidParameter(format!(
                "invalid probe state {other}"
            ))),
        }
    }

    /// Probe block `(<q^2>, <p^2>, <qp+pq>/2)`.
    pub fn moments(&self, omega_s: f64) -> (f64, f64, f64) {
        match *self {
            ProbeInit::Vacuum => (0.5 / omega_s, 0.5 * omega_s, 0.0),
            ProbeInit::SqueezedVacuum { r, phi } => {
                let (c, s) = ((2.0 * r).cosh(), (2.0 * r).sinh());
                (
                    (c - s * phi.cos()) / (2.0 * omega_s),
                    omega_s * (c + s * phi.cos()) / 2.0,
                    -s * phi.sin() / 2.0,
                )
            }
            ProbeInit::Thermal { t_p } => {
                let f = 2.0 * thermal_occupation(omega_s, t_p) + 1.0;
                (f * 0.5 / omega_s, f * 0.5 * omega_s, 0.0)
            }
        }
    }

    /// `<n(0)>`, known to the experimenter who prepares the probe.
    pub fn initial_occupation(&self, omega_s: f64) -> f64 {
        match *self {
            ProbeInit::Vacuum => 0.0,
            ProbeInit::SqueezedVacuum { r, .. } => r.sinh().powi(2),
            ProbeInit::Thermal { t_p } => thermal_occupation(omega_s, t_p),
        }
    }
}

impl fmt::Display for ProbeInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeInit::Vacuum => write!(f, "vacuum"),
            ProbeInit::SqueezedVacuum { r, phi } => write!(f, "squeezed:{r},{phi}"),
            ProbeInit::Thermal { t_p } => write!(f, "thermal:{t_p}"),
        }
    }
}

/// Parses `vacuum`, `squeezed:r,phi` or `thermal:T`.
impl FromStr for ProbeInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse probe state '{s}'"));
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
        let init = match s.split_once(':') {
            None if s == "vacuum" => ProbeInit::Vacuum,
            Some(("squeezed", rest)) => {
                let (r, phi) = rest.split_once(',').ok_or_else(bad)?;
                ProbeInit::SqueezedVacuum {
                    r: num(r)?,
                    phi: num(phi)?,
                }
            }
            Some(("thermal", t)) => ProbeInit::Thermal { t_p: num(t)? },
            _ => return Err(bad()),
        };
        init.validate()?;
        Ok(init)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianState {
    /// Number of oscillators.
    pub fn modes(&self) -> usize {
        self.mean.len() / 2
    }

    fn block(&self, r: usize, c: usize) -> DMatrix<f64> {
        let m = self.modes();
        self.cov.view((r * m, c * m), (m, m)).into_owned()
    }

    pub fn cov_qq(&self) -> DMatrix<f64> {
        self.block(0, 0)
    }

    pub fn cov_pp(&self) -> DMatrix<f64> {
        self.block(1, 1)
    }

    pub fn cov_qp(&self) -> DMatrix<f64> {
        self.block(0, 1)
    }
}

/// Planck occupation `1/(exp(w/T) - 1)`, zero at `T = 0`.
pub fn thermal_occupation(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        0.0
    } else {
        1.0 / (omega / temperature).exp_m1()
    }
}

/// Thermal covariance blocks `(cov_qq, cov_pp)` of a network in its
/// eigenmode basis, transformed back to nodes.
pub fn network_thermal_blocks(eig: &EigenSystem, temperature: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let f: Vec<f64> = eig
        .omegas()
        .iter()
        .map(|&w| 2.0 * thermal_occupation(w, temperature) + 1.0)
        .collect();
    let dq: Vec<f64> = eig
        .omegas()
        .iter()
        .zip(&f)
        .map(|(w, f)| f / (2.0 * w))
        .collect();
    let dp: Vec<f64> = eig
        .omegas()
        .iter()
        .zip(&f)
        .map(|(w, f)| f * w / 2.0)
        .collect();
    (scaled_outer(eig.k(), &dq), scaled_outer(eig.k(), &dp))
}

/// Uncorrelated product of the probe state and the thermal network.
pub fn initial_state(
    init: &ProbeInit,
    omega_s: f64,
    eig: &EigenSystem,
    temperature: f64,
) -> Result<GaussianState> {
    init.validate()?;
    if !(omega_s.is_finite() && omega_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "probe frequency must be positive, got {omega_s}"
        )));
    }
    if !(temperature.is_finite() && temperature >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be non-negative, got {temperature}"
        )));
    }
    let (qq, pp) = network_thermal_blocks(eig, temperature);
    Ok(product_state(init, omega_s, &qq, &pp))
}

pub(crate) fn product_state(
    init: &ProbeInit,
    omega_s: f64,
    net_qq: &DMatrix<f64>,
    net_pp: &DMatrix<f64>,
) -> GaussianState {
    let n = net_qq.nrows();
    let m = n + 1;
    let mut cov = DMatrix::zeros(2 * m, 2 * m);
    let (q2, p2, qp) = init.moments(omega_s);
    cov[(0, 0)] = q2;
    cov[(m, m)] = p2;
    cov[(0, m)] = qp;
    cov[(m, 0)] = qp;
    cov.view_mut((1, 1), (n, n)).copy_from(net_qq);
    cov.view_mut((m + 1, m + 1), (n, n)).copy_from(net_pp);
    GaussianState {
        mean: DVector::zeros(2 * m),
        cov,
    }
}

/// Cached eigendecomposition of a total system; evaluates the exact
/// phase-space flow at any time without stepping.
#[derive(Debug, Clone)]
pub struct Propagator {
    k: DMatrix<f64>,
    nu: Vec<f64>,
}

impl Propagator {
    pub fn new(sys: &TotalSystem) -> Result<Self> {
        let eig = SymmetricEigen::new(sys.a_tot.clone());
        let min = eig.eigenvalues.min();
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min,
            });
        }
        Ok(Propagator {
            k: eig.eigenvectors,
            nu: eig.eigenvalues.iter().map(|d| (2.0 * d).sqrt()).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    /// Symplectic matrix `S(t)` with `x(t) = S(t) x(0)`.
    pub fn symplectic(&self, t: f64) -> DMatrix<f64> {
        let m = self.dim();
        let c: Vec<f64> = self.nu.iter().map(|v| (v * t).cos()).collect();
        let s_over: Vec<f64> = self.nu.iter().map(|v| sinc_t(*v, t)).collect();
        let s_times: Vec<f64> = self.nu.iter().map(|v| -v * (v * t).sin()).collect();
        let cc = scaled_outer(&self.k, &c);
        let mut s = DMatrix::zeros(2 * m, 2 * m);
        s.view_mut((0, 0), (m, m)).copy_from(&cc);
        s.view_mut((m, m), (m, m)).copy_from(&cc);
        s.view_mut((0, m), (m, m))
            .copy_from(&scaled_outer(&self.k, &s_over));
        s.view_mut((m, 0), (m, m))
            .copy_from(&scaled_outer(&self.k, &s_times));
        s
    }

    pub fn evolve(&self, state: &GaussianState, t: f64) -> Result<GaussianState> {
        if state.modes() != self.dim() || state.cov.nrows() != 2 * self.dim() {
            return Err(Error::Dimension(format!(
                "state with {} modes for a {}-oscillator system",
                state.modes(),
                self.dim()
            )));
        }
        let s = self.symplectic(t);
        Ok(GaussianState {
            mean: &s * &state.mean,
            cov: &s * &state.cov * s.transpose(),
        })
    }

    /// Probe occupation at time `t`, reading only row 0 of `S(t)`:
    /// `O(M^2)` per call.
    pub fn probe_occupation(&self, state: &GaussianState, omega_s: f64, t: f64) -> f64 {
        let m = self.dim();
        let k0 = self.k.row(0).transpose();
        let weighted = |f: &dyn Fn(f64) -> f64| -> DVector<f64> {
            let w =
                DVector::from_iterator(m, self.nu.iter().zip(k0.iter()).map(|(v, k)| k * f(*v)));
            &self.k * w
        };
        let cq = weighted(&|v| (v * t).cos());
        let sq = weighted(&|v| sinc_t(v, t));
        let pq = weighted(&|v| -v * (v * t).sin());

        let qq = state.cov.view((0, 0), (m, m));
        let pp = state.cov.view((m, m), (m, m));
        let qp = state.cov.view((0, m), (m, m));
        let quad = |a: &DVector<f64>, b: &DVector<f64>, blk: &nalgebra::DMatrixView<f64>| {
            a.dot(&(blk * b))
        };
        let mq = state.mean.rows(0, m);
        let mp = state.mean.rows(m, m);
        let mean_q = cq.dot(&mq) + sq.dot(&mp);
        let mean_p = pq.dot(&mq) + cq.dot(&mp);
        let var_q = quad(&cq, &cq, &qq) + 2.0 * quad(&cq, &sq, &qp) + quad(&sq, &sq, &pp);
        let var_p = quad(&pq, &pq, &qq) + 2.0 * quad(&pq, &cq, &qp) + quad(&cq, &cq, &pp);
        occupation(var_q + mean_q * mean_q, var_p + mean_p * mean_p, omega_s)
    }
}

/// `sin(v t)/v`, finite as `v -> 0`.
fn sinc_t(v: f64, t: f64) -> f64 {
    if (v * t).abs() < 1e-8 {
        t
    } else {
        (v * t).sin() / v
    }
}

fn occupation(q2: f64, p2: f64, omega_s: f64) -> f64 {
    0.5 * (omega_s * q2 + p2 / omega_s) - 0.5
}

pub fn evolve(sys: &TotalSystem, state: &GaussianState, t: f64) -> Result<GaussianState> {
    Propagator::new(sys)?.evolve(state, t)
}

/// Probe occupation `<a^dagger a>` of a state (probe at index 0).
pub fn mean_occupation(state: &GaussianState, omega_s: f64) -> f64 {
    let m = state.modes();
    let q = state.mean[0];
    let p = state.mean[m];
    occupation(
        state.cov[(0, 0)] + q * q,
        state.cov[(m, m)] + p * p,
        omega_s,
    )
}

/// Weak-coupling decay of the probe occupation towards the thermal value.
pub fn predicted_occupation(
    t: f64,
    j_at_omega_s: f64,
    omega_s: f64,
    temperature: f64,
    n0: f64,
) -> f64 {
    let decay = (-j_at_omega_s / omega_s * t).exp();
    decay * n0 + thermal_occupation(omega_s, temperature) * (1.0 - decay)
}

/// Mean of `H = p.p/2 + q.A.q` for the total system.
pub fn energy(sys: &TotalSystem, state: &GaussianState) -> f64 {
    let m = sys.dim();
    let qq = state.cov.view((0, 0), (m, m));
    let pp = state.cov.view((m, m), (m, m));
    let mq = state.mean.rows(0, m);
    let mp = state.mean.rows(m, m);
    0.5 * (pp.trace() + mp.norm_squared()) + (&sys.a_tot * qq).trace() + mq.dot(&(&sys.a_tot * mq))
}

/// Symplectic eigenvalues of a covariance matrix, ascending, one per mode.
/// Physical states have all of them at least 1/2.
pub fn symplectic_eigenvalues(cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n2 = cov.nrows();
    if !n2.is_multiple_of(2) || cov.ncols() != n2 {
        return Err(Error::Dimension(format!(
            "covariance must be 2M x 2M, got {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let m = n2 / 2;
    let eig = SymmetricEigen::new(cov.clone());
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
        });
    }
    let sqrt: Vec<f64> = eig.eigenvalues.iter().map(|x| x.sqrt()).collect();
    let root = scaled_outer(&eig.eigenvectors, &sqrt);
    let mut omega = DMatrix::zeros(n2, n2);
    for i in 0..m {
        omega[(i, m + i)] = 1.0;
        omega[(m + i, i)] = -1.0;
    }
    // root * Omega^T * cov * Omega * root is symmetric with eigenvalues nu^2
    let b = &root * omega.transpose() * cov * &omega * &root;
    let b = 0.5 * (&b + b.transpose());
    let mut nu2: Vec<f64> = SymmetricEigen::new(b).eigenvalues.iter().copied().collect();
    nu2.sort_by(f64::total_cmp);
    Ok(nu2.chunks(2).map(|c| c[0].max(0.0).sqrt()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{to_adjacency, NetworkSpec};
    use crate::spectral::diagonalize;

    fn single_network() -> (AdjacencyMatrix, EigenSystem) {
        let a = to_adjacency(&NetworkSpec::new(1, 0.25, vec![]).unwrap());
        let e = diagonalize(&a).unwrap();
        (a, e)
    }

    #[test]
    fn assemble_single() {
        let (a, _) = single_network();
        let sys = assemble_total(&a, 0.25, 0.01, &[0]).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.03125, 0.005, 0.005, 0.03125]);
        assert!((sys.matrix() - expect).amax() < 1e-16);
        let free = assemble_total(&a, 0.25, 0.0, &[0]).unwrap();
        assert_eq!(free.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn assemble_rejects_strong_coupling() {
        let (a, _) = single_network();
        assert!(matches!(
            assemble_total(&a, 0.25, 0.1, &[0]),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn vacuum_probe_block() {
        let (_, e) = single_network();
        let s = initial_state(&ProbeInit::Vacuum, 0.25, &e, 0.0).unwrap();
        assert!((s.cov[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((s.cov[(2, 2)] - 0.125).abs() < 1e-15);
        assert!((s.cov[(1, 1)] - 2.0).abs() < 1e-15);
        assert_eq!(mean_occupation(&s, 0.25), 0.0);
    }

    #[test]
    fn squeezed_occupation() {
        let (_, e) = single_network();
        let init = ProbeInit::SqueezedVacuum {
            r: 1.0,
            phi: std::f64::consts::FRAC_PI_2,
        };
        let s = initial_state(&init, 0.25, &e, 0.0).unwrap();
        let n = mean_occupation(&s, 0.25);
        assert!((n - 1.0f64.sinh().powi(2)).abs() < 1e-12);
        assert!((n - 1.3811).abs() < 1e-4);
        assert!((init.initial_occupation(0.25) - n).abs() < 1e-12);
    }

    #[test]
    fn thermal_values() {
        assert!((thermal_occupation(0.25, 5.0) - 19.5042).abs() < 1e-4);
        assert_eq!(thermal_occupation(0.25, 0.0), 0.0);
        let hot = thermal_occupation(0.25, 5000.0);
        assert!((hot - 19999.5).abs() < 0.001 * 19999.5);
        let (_, e) = single_network();
        let s = initial_state(&ProbeInit::Thermal { t_p: 5.0 }, 0.25, &e, 0.0).unwrap();
        assert!((mean_occupation(&s, 0.25) - 19.5042).abs() < 1e-4);
    }

    #[test]
    fn predicted_examples() {
        assert_eq!(predicted_occupation(100.0, 0.0, 0.25, 5.0, 3.0), 3.0);
        let n = predicted_occupation(500.0, 0.001, 0.25, 5.0, 0.0);
        assert!((n - 16.8645).abs() < 1e-4, "{n}");
        let late = predicted_occupation(1e6, 0.001, 0.25, 5.0, 0.0);
        assert!((late - thermal_occupation(0.25, 5.0)).abs() < 1e-9);
    }

    #[test]
    fn probe_init_parsing() {
        assert_eq!("vacuum".parse::<ProbeInit>().unwrap(), ProbeInit::Vacuum);
        assert_eq!(
            "squeezed:1,1.5".parse::<ProbeInit>().unwrap(),
            ProbeInit::SqueezedVacuum { r: 1.0, phi: 1.5 }
        );
        assert_eq!(
            "thermal:5".parse::<ProbeInit>().unwrap(),
            ProbeInit::Thermal { t_p: 5.0 }
        );
        assert!("thermal:-1".parse::<ProbeInit>().is_err());
        assert!("coherent:1".parse::<ProbeInit>().is_err());
        let round: ProbeInit = ProbeInit::SqueezedVacuum { r: 0.5, phi: 2.0 }
            .to_string()
            .parse()
            .unwrap();
        assert_eq!(round, ProbeInit::SqueezedVacuum { r: 0.5, phi: 2.0 });
    }

    #[test]
    fn resonant_pair_swaps_excitation() {
        // two identical oscillators coupled by k exchange energy completely
        // with beat angular frequency ~ k / omega
        let (a, e) = single_network();
        let k = 0.002;
        let sys = assemble_total(&a, 0.25, k, &[0]).unwrap();
        let s0 = initial_state(&ProbeInit::Thermal { t_p: 1.0 }, 0.25, &e, 0.0).unwrap();
        let prop = Propagator::new(&sys).unwrap();
        let n0 = mean_occupation(&s0, 0.25);
        let swap = std::f64::consts::PI * 0.25 / k;
        let n_swap = prop.probe_occupation(&s0, 0.25, swap);
        assert!(n_swap < 0.01 * n0, "{n_swap} vs {n0}");
    }

    #[test]
    fn fast_readout_matches_full_evolution() {
        let spec = NetworkSpec::new(
            3,
            0.25,
            vec![
                crate::network::Edge { i: 0, j: 1, h: 0.1 },
                crate::network::Edge {
                    i: 1,
                    j: 2,
                    h: 0.05,
                },
            ],
        )
        .unwrap();
        let a = to_adjacency(&spec);
        let e = diagonalize(&a).unwrap();
        let sys = assemble_total(&a, 0.3, 0.02, &[1, 2]).unwrap();
        let init = ProbeInit::SqueezedVacuum { r: 0.7, phi: 0.4 };
        let s0 = initial_state(&init, 0.3, &e, 2.0).unwrap();
        let prop = Propagator::new(&sys).unwrap();
        for t in [0.0, 3.7, 120.0, 999.0] {
            let full = mean_occupation(&prop.evolve(&s0, t).unwrap(), 0.3);
            let fast = prop.probe_occupation(&s0, 0.3, t);
            assert!((full - fast).abs() < 1e-10 * full.abs().max(1.0), "t={t}");
        }
    }

    #[test]
    fn vacuum_is_minimum_uncertainty() {
        let (_, e) = single_network();
        let s = initial_state(&ProbeInit::Vacuum, 0.4, &e, 0.0).unwrap();
        let nu = symplectic_eigenvalues(&s.cov).unwrap();
        assert!(nu.iter().all(|v| (v - 0.5).abs() < 1e-12), "{nu:?}");
        let th = initial_state(&ProbeInit::Thermal { t_p: 1.0 }, 0.4, &e, 0.0).unwrap();
        let nu = symplectic_eigenvalues(&th.cov).unwrap();
        let expect = thermal_occupation(0.4, 1.0) + 0.5;
        assert!((nu[1] - expect).abs() < 1e-10, "{nu:?}");
    }
}
