//! Fixtures and reference computations shared by the integration suites.
#![allow(dead_code)]

use nalgebra::DMatrix;
use netprobe::network::{generate, to_adjacency, Edge, NetworkSpec, Topology, TopologyRecipe};
use netprobe::spectral::{diagonalize, EigenSystem, DEGENERACY_TOLERANCE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const OMEGA0: f64 = 0.25;

/// Network and probed node of one of the four band-structure examples.
pub struct BandExample {
    pub name: &'static str,
    pub spec: NetworkSpec,
    pub node: usize,
}

pub fn band_examples() -> Vec<BandExample> {
    let recipes = [
        (
            "periodic chain",
            Topology::PeriodicChain {
                n: 200,
                h_strong: 0.1,
                h_weak: 0.06,
                period: 3,
            },
        ),
        (
            "chain with shortcut",
            Topology::ShortcutChain {
                n: 200,
                h: 0.1,
                shortcut: (3, 100),
                h_shortcut: 0.1,
            },
        ),
        (
            "small world",
            Topology::SmallWorld {
                n: 200,
                h_chain: 0.1,
                h_shortcut: 0.003,
                n_shortcuts: 10,
            },
        ),
        (
            "random",
            Topology::ErdosRenyi {
                n: 200,
                h: 0.05,
                p_edge: 0.05,
            },
        ),
    ];
    recipes
        .into_iter()
        .map(|(name, topo)| {
            let spec = generate(&TopologyRecipe::new(topo, 11), OMEGA0).unwrap();
            // the random example is probed at its best-connected node
            let node = if name == "random" {
                (0..spec.n()).rev().max_by_key(|&i| spec.degree(i)).unwrap()
            } else {
                0
            };
            BandExample { name, spec, node }
        })
        .collect()
}

pub fn chain(n: usize, h: f64) -> NetworkSpec {
    generate(&TopologyRecipe::new(Topology::Chain { n, h }, 0), OMEGA0).unwrap()
}

pub fn reconstruction_network() -> NetworkSpec {
    let topo = Topology::SmallWorld {
        n: 60,
        h_chain: 0.2,
        h_shortcut: 0.1,
        n_shortcuts: 7,
    };
    generate(&TopologyRecipe::new(topo, 1), OMEGA0).unwrap()
}

/// Connected network with a random spanning tree, a few extra links and
/// couplings drawn from `[0.02, 0.2]`, resampled until its spectrum is
/// non-degenerate.
pub fn random_connected(n: usize, seed: u64) -> (NetworkSpec, EigenSystem) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut edges = Vec::new();
        for j in 1..n {
            let i = rng.random_range(0..j);
            edges.push(Edge {
                i,
                j,
                h: rng.random_range(0.02..0.2),
            });
        }
        for _ in 0..n / 2 {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let (i, j) = (i.min(j), i.max(j));
            if i != j && !edges.iter().any(|e| (e.i, e.j) == (i, j)) {
                edges.push(Edge {
                    i,
                    j,
                    h: rng.random_range(0.02..0.2),
                });
            }
        }
        let spec = NetworkSpec::new(n, OMEGA0, edges).unwrap();
        let eig = diagonalize(&to_adjacency(&spec)).unwrap();
        let gaps_ok = eig
            .omegas()
            .windows(2)
            .all(|w| w[0] - w[1] > 1e3 * DEGENERACY_TOLERANCE);
        if spec.is_connected() && gaps_ok {
            return (spec, eig);
        }
    }
}

pub fn relative_frobenius(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    (est - truth).norm() / truth.norm()
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Maximal runs of indices where `above` holds.
pub fn runs(above: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &a) in above.iter().enumerate() {
        match (a, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, above.len() - 1));
    }
    out
}

/// Topographic prominence of every interior local maximum.
pub fn prominences(y: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        if !(y[i] > y[i - 1] && y[i] >= y[i + 1]) {
            continue;
        }
        let mut left_min = y[i];
        let mut l = i;
        while l > 0 {
            l -= 1;
            if y[l] > y[i] {
                break;
            }
            left_min = left_min.min(y[l]);
        }
        let mut right_min = y[i];
        let mut r = i;
        while r + 1 < y.len() {
            r += 1;
            if y[r] > y[i] {
                break;
            }
            right_min = right_min.min(y[r]);
        }
        out.push((i, y[i] - left_min.max(right_min)));
    }
    out
}
