//! Oracles backed by exact simulation of a hidden network.

use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::{
    assemble_total, network_thermal_blocks, product_state, ProbeInit, Propagator,
};
use crate::error::{Error, Result};
use crate::network::{to_adjacency, AdjacencyMatrix, NetworkSpec};
use crate::probing::NetworkOracle;
use crate::spectral::diagonalize;

/// Measures a hidden network by exact Gaussian evolution. The network is
/// held privately; only occupations leave this type.
pub struct SimulatedOracle {
    a: AdjacencyMatrix,
    temperature: f64,
    net_qq: DMatrix<f64>,
    net_pp: DMatrix<f64>,
    calls: AtomicUsize,
}

impl SimulatedOracle {
    pub fn new(spec: &NetworkSpec, temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be non-negative, got {temperature}"
            )));
        }
        let a = to_adjacency(spec);
        let eig = diagonalize(&a)?;
        let (net_qq, net_pp) = network_thermal_blocks(&eig, temperature);
        Ok(SimulatedOracle {
            a,
            temperature,
            net_qq,
            net_pp,
            calls: AtomicUsize::new(0),
        })
    }

    /// Network size, which the experimenter is assumed to know.
    pub fn n(&self) -> usize {
        self.a.dim()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Number of measurements answered so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl NetworkOracle for SimulatedOracle {
    fn measure(
        &self,
        nodes: &[usize],
        omega_s: f64,
        k: f64,
        init: &ProbeInit,
        t: f64,
    ) -> Result<f64> {
        Ok(self.measure_series(nodes, omega_s, k, init, &[t])?[0])
    }

    fn measure_series(
        &self,
        nodes: &[usize],
        omega_s: f64,
        k: f64,
        init: &ProbeInit,
        times: &[f64],
    ) -> Result<Vec<f64>> {
        init.validate()?;
        if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "interaction time must be non-negative, got {t}"
            )));
        }
        self.calls.fetch_add(times.len(), Ordering::Relaxed);
        let sys = assemble_total(&self.a, omega_s, k, nodes)?;
        let prop = Propagator::new(&sys)?;
        let state = product_state(init, omega_s, &self.net_qq, &self.net_pp);
        Ok(times
            .iter()
            .map(|&t| prop.probe_occupation(&state, omega_s, t))
            .collect())
    }
}

/// Adds Gaussian noise of standard deviation `sigma` to every reading.
/// The noise is a deterministic function of the query and the seed, so
/// repeating a query repeats its value.
pub struct NoisyOracle<O> {
    inner: O,
    sigma: f64,
    seed: u64,
}

impl<O: NetworkOracle> NoisyOracle<O> {
    pub fn new(inner: O, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise level must be non-negative, got {sigma}"
            )));
        }
        Ok(NoisyOracle { inner, sigma, seed })
    }

    fn noise(&self, nodes: &[usize], omega_s: f64, k: f64, init: &ProbeInit, t: f64) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let mut h = DefaultHasher::new();
        self.seed.hash(&mut h);
        nodes.hash(&mut h);
        for x in [omega_s, k, t] {
            x.to_bits().hash(&mut h);
        }
        init.to_string().hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        Normal::new(0.0, self.sigma).unwrap().sample(&mut rng)
    }
}

impl<O: NetworkOracle> NetworkOracle for NoisyOracle<O> {
    fn measure(
        &self,
        nodes: &[usize],
        omega_s: f64,
        k: f64,
        init: &ProbeInit,
        t: f64,
    ) -> Result<f64> {
        let v = self.inner.measure(nodes, omega_s, k, init, t)?;
        Ok(v + self.noise(nodes, omega_s, k, init, t))
    }

    fn measure_series(
        &self,
        nodes: &[usize],
        omega_s: f64,
        k: f64,
        init: &ProbeInit,
        times: &[f64],
    ) -> Result<Vec<f64>> {
        let v = self.inner.measure_series(nodes, omega_s, k, init, times)?;
        Ok(v.into_iter()
            .zip(times)
            .map(|(x, &t)| x + self.noise(nodes, omega_s, k, init, t))
            .collect())
    }
}
