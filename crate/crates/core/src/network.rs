//! Oscillator-network specifications, topology generators and the
//! adjacency (potential) matrix.
//!
//! Every node is a unit-mass oscillator with the same bare frequency
//! `omega0`. Edges are springlike couplings `h_ij > 0`, which both couple
//! the pair and stiffen each endpoint, so the effective frequency of node
//! `i` is `omega_i^2 = omega0^2 + sum_j h_ij`.

use std::collections::HashSet;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a matrix is treated as unstable.
pub const STABILITY_TOLERANCE: f64 = 1e-12;

/// Retry cap when resampling random graphs until connected.
pub const CONNECTIVITY_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub h: f64,
}

/// A validated network: node count, bare frequency and springlike edges.
///
/// Edges are stored with `i < j`, sorted by `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkFile", into = "NetworkFile")]
pub struct NetworkSpec {
    n: usize,
    omega0: f64,
    edges: Vec<Edge>,
}

/// Wire format: `{"n": int, "omega0": float, "edges": [[i, j, h], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    n: usize,
    omega0: f64,
    edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<NetworkFile> for NetworkSpec {
    type Error = Error;

    fn try_from(f: NetworkFile) -> Result<Self> {
        let edges = f
            .edges
            .into_iter()
            .map(|(i, j, h)| Edge { i, j, h })
            .collect();
        NetworkSpec::new(f.n, f.omega0, edges)
    }
}

impl From<NetworkSpec> for NetworkFile {
    fn from(s: NetworkSpec) -> Self {
        NetworkFile {
            n: s.n,
            omega0: s.omega0,
            edges: s.edges.iter().map(|e| (e.i, e.j, e.h)).collect(),
        }
    }
}

impl NetworkSpec {
    /// Validates and normalizes (`i < j`, sorted) an edge list.
    pub fn new(n: usize, omega0: f64, edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidNetwork("n must be positive".into()));
        }
        if !(omega0.is_finite() && omega0 > 0.0) {
            return Err(Error::InvalidNetwork(format!(
                "omega0 must be a positive finite number, got {omega0}"
            )));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut normalized = Vec::with_capacity(edges.len());
        for e in edges {
            if e.i == e.j {
                return Err(Error::InvalidNetwork(format!("self-edge at node {}", e.i)));
            }
            let (i, j) = if e.i < e.j { (e.i, e.j) } else { (e.j, e.i) };
            if j >= n {
                return Err(Error::InvalidNetwork(format!(
                    "edge ({i}, {j}) references a node outside [0, {n})"
                )));
            }
            if !(e.h.is_finite() && e.h > 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "edge ({i}, {j}) has non-positive coupling {}",
                    e.h
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidNetwork(format!("duplicate edge ({i}, {j})")));
            }
            normalized.push(Edge { i, j, h: e.h });
        }
        normalized.sort_by_key(|e| (e.i, e.j));
        Ok(NetworkSpec {
            n,
            omega0,
            edges: normalized,
        })
    }

    /// Parses the JSON wire format, keeping schema problems (missing or
    /// mistyped fields) apart from invalid network content.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        NetworkSpec::try_from(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|e| e.i == node || e.j == node)
            .count()
    }

    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// Same network with nodes relabelled: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Dimension(format!(
                "permutation of length {} for {} nodes",
                perm.len(),
                self.n
            )));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                i: perm[e.i],
                j: perm[e.j],
                h: e.h,
            })
            .collect();
        NetworkSpec::new(self.n, self.omega0, edges)
    }
}

/// Symmetric potential matrix `A` of `H = p.p/2 + q.A.q`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix(DMatrix<f64>);

impl AdjacencyMatrix {
    /// Wraps a square matrix, checking symmetry to machine precision.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "adjacency must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "adjacency has non-finite entries".into(),
            ));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(AdjacencyMatrix(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Builds `A` with `A_ii = omega_i^2 / 2`, `A_ij = -h_ij / 2`.
pub fn to_adjacency(spec: &NetworkSpec) -> AdjacencyMatrix {
    let n = spec.n();
    let w2 = spec.omega0() * spec.omega0();
    let mut a = DMatrix::from_diagonal_element(n, n, 0.5 * w2);
    for e in spec.edges() {
        a[(e.i, e.j)] -= 0.5 * e.h;
        a[(e.j, e.i)] -= 0.5 * e.h;
        a[(e.i, e.i)] += 0.5 * e.h;
        a[(e.j, e.j)] += 0.5 * e.h;
    }
    AdjacencyMatrix(a)
}

/// Eigenvalues of `a` in descending order, provided all exceed
/// `STABILITY_TOLERANCE * max_eigenvalue`.
pub fn validate_stability(a: &AdjacencyMatrix) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = SymmetricEigen::new(a.matrix().clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    values.sort_by(|x, y| y.total_cmp(x));
    let max = values[0];
    let min = *values.last().unwrap();
    if max <= 0.0 || min <= STABILITY_TOLERANCE * max {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
        });
    }
    Ok(values)
}

/// Graph family used by [`generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    Chain {
        n: usize,
        h: f64,
    },
    /// Every `period`-th chain coupling is `h_weak`; the rest are `h_strong`.
    PeriodicChain {
        n: usize,
        h_strong: f64,
        h_weak: f64,
        period: usize,
    },
    ShortcutChain {
        n: usize,
        h: f64,
        shortcut: (usize, usize),
        h_shortcut: f64,
    },
    SmallWorld {
        n: usize,
        h_chain: f64,
        h_shortcut: f64,
        n_shortcuts: usize,
    },
    ErdosRenyi {
        n: usize,
        h: f64,
        p_edge: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyRecipe {
    pub topology: Topology,
    pub seed: u64,
    /// Resample random families until the graph is connected.
    #[serde(default)]
    pub require_connected: bool,
}

impl TopologyRecipe {
    pub fn new(topology: Topology, seed: u64) -> Self {
        TopologyRecipe {
            topology,
            seed,
            require_connected: false,
        }
    }

    pub fn require_connected(mut self, yes: bool) -> Self {
        self.require_connected = yes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidRecipe(msg));
        let positive = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidRecipe(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        match self.topology {
            Topology::Chain { n, h } => {
                if n == 0 {
                    return bad("n must be positive".into());
                }
                positive("h", h)
            }
            Topology::PeriodicChain {
                n,
                h_strong,
                h_weak,
                period,
            } => {
                if n == 0 || period == 0 {
                    return bad("n and period must be positive".into());
                }
                positive("h_strong", h_strong)?;
                positive("h_weak", h_weak)
            }
            Topology::ShortcutChain {
                n,
                h,
                shortcut: (a, b),
                h_shortcut,
            } => {
                positive("h", h)?;
                positive("h_shortcut", h_shortcut)?;
                if a >= n || b >= n {
                    return bad(format!("shortcut ({a}, {b}) outside [0, {n})"));
                }
                if a.abs_diff(b) < 2 {
                    return bad(format!(
                        "shortcut endpoints ({a}, {b}) must be distinct and non-adjacent"
                    ));
                }
                Ok(())
            }
            Topology::SmallWorld {
                n,
                h_chain,
                h_shortcut,
                n_shortcuts,
            } => {
                positive("h_chain", h_chain)?;
                positive("h_shortcut", h_shortcut)?;
                if n < 3 {
                    return bad("small-world networks need n >= 3".into());
                }
                let available = non_chain_pairs(n);
                if n_shortcuts == 0 || n_shortcuts > available {
                    return bad(format!(
                        "n_shortcuts must lie in [1, {available}], got {n_shortcuts}"
                    ));
                }
                Ok(())
            }
            Topology::ErdosRenyi { n, h, p_edge } => {
                if n == 0 {
                    return bad("n must be positive".into());
                }
                positive("h", h)?;
                if !(p_edge > 0.0 && p_edge <= 1.0) {
                    return bad(format!("p_edge must lie in (0, 1], got {p_edge}"));
                }
                Ok(())
            }
        }
    }
}

fn non_chain_pairs(n: usize) -> usize {
    n * (n - 1) / 2 - (n - 1)
}

fn chain_edges(n: usize, coupling: impl Fn(usize) -> f64) -> Vec<Edge> {
    (0..n.saturating_sub(1))
        .map(|i| Edge {
            i,
            j: i + 1,
            h: coupling(i),
        })
        .collect()
}

/// Samples a network from a recipe. Deterministic for a given seed.
pub fn generate(recipe: &TopologyRecipe, omega0: f64) -> Result<NetworkSpec> {
    recipe.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let random = matches!(
        recipe.topology,
        Topology::SmallWorld { .. } | Topology::ErdosRenyi { .. }
    );
    let attempts = if recipe.require_connected && random {
        CONNECTIVITY_RETRIES
    } else {
        1
    };
    for _ in 0..attempts {
        let spec = sample_once(&recipe.topology, omega0, &mut rng)?;
        if !recipe.require_connected || spec.is_connected() {
            return Ok(spec);
        }
    }
    Err(Error::Disconnected { attempts })
}

fn sample_once(topology: &Topology, omega0: f64, rng: &mut ChaCha8Rng) -> Result<NetworkSpec> {
    let (n, edges) = match *topology {
        Topology::Chain { n, h } => (n, chain_edges(n, |_| h)),
        Topology::PeriodicChain {
            n,
            h_strong,
            h_weak,
            period,
        } => (
            n,
            chain_edges(n, |i| {
                if (i + 1) % period == 0 {
                    h_weak
                } else {
                    h_strong
                }
            }),
        ),
        Topology::ShortcutChain {
            n,
            h,
            shortcut: (a, b),
            h_shortcut,
        } => {
            let mut edges = chain_edges(n, |_| h);
            edges.push(Edge {
                i: a,
                j: b,
                h: h_shortcut,
            });
            (n, edges)
        }
        Topology::SmallWorld {
            n,
            h_chain,
            h_shortcut,
            n_shortcuts,
        } => {
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| ((i + 2)..n).map(move |j| (i, j)))
                .collect();
            let mut picked: Vec<usize> = sample(rng, pairs.len(), n_shortcuts).into_vec();
            picked.sort_unstable();
            let mut edges = chain_edges(n, |_| h_chain);
            edges.extend(picked.into_iter().map(|p| Edge {
                i: pairs[p].0,
                j: pairs[p].1,
                h: h_shortcut,
            }));
            (n, edges)
        }
        Topology::ErdosRenyi { n, h, p_edge } => {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if p_edge >= 1.0 || rng.random::<f64>() < p_edge {
                        edges.push(Edge { i, j, h });
                    }
                }
            }
            (n, edges)
        }
    };
    NetworkSpec::new(n, omega0, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn chain_of_three() {
        let r = TopologyRecipe::new(Topology::Chain { n: 3, h: 0.1 }, 0);
        let s = generate(&r, 0.25).unwrap();
        assert_eq!(
            s.edges(),
            &[Edge { i: 0, j: 1, h: 0.1 }, Edge { i: 1, j: 2, h: 0.1 }]
        );
    }

    #[test]
    fn small_world_counts() {
        let r = TopologyRecipe::new(
            Topology::SmallWorld {
                n: 60,
                h_chain: 0.2,
                h_shortcut: 0.1,
                n_shortcuts: 7,
            },
            11,
        );
        let s = generate(&r, 0.25).unwrap();
        let chain = s.edges().iter().filter(|e| e.j == e.i + 1).count();
        let shortcuts: Vec<_> = s.edges().iter().filter(|e| e.j > e.i + 1).collect();
        assert_eq!(chain, 59);
        assert_eq!(shortcuts.len(), 7);
        assert!(s
            .edges()
            .iter()
            .filter(|e| e.j == e.i + 1)
            .all(|e| e.h == 0.2));
        assert!(shortcuts.iter().all(|e| e.h == 0.1));
    }

    #[test]
    fn erdos_renyi_complete_when_p_is_one() {
        let r = TopologyRecipe::new(
            Topology::ErdosRenyi {
                n: 4,
                h: 0.05,
                p_edge: 1.0,
            },
            3,
        );
        let s = generate(&r, 0.25).unwrap();
        assert_eq!(s.edges().len(), 6);
        assert!(s.edges().iter().all(|e| e.h == 0.05));
    }

    #[test]
    fn periodic_chain_weak_every_third() {
        let r = TopologyRecipe::new(
            Topology::PeriodicChain {
                n: 7,
                h_strong: 0.1,
                h_weak: 0.06,
                period: 3,
            },
            0,
        );
        let s = generate(&r, 0.25).unwrap();
        let hs: Vec<f64> = s.edges().iter().map(|e| e.h).collect();
        assert_eq!(hs, vec![0.1, 0.1, 0.06, 0.1, 0.1, 0.06]);
    }

    #[test]
    fn recipe_validation() {
        let bad = [
            Topology::Chain { n: 0, h: 0.1 },
            Topology::Chain { n: 3, h: -0.1 },
            Topology::ErdosRenyi {
                n: 5,
                h: 0.1,
                p_edge: 0.0,
            },
            Topology::ShortcutChain {
                n: 10,
                h: 0.1,
                shortcut: (3, 4),
                h_shortcut: 0.1,
            },
            Topology::ShortcutChain {
                n: 10,
                h: 0.1,
                shortcut: (3, 3),
                h_shortcut: 0.1,
            },
        ];
        for t in bad {
            assert!(matches!(
                generate(&TopologyRecipe::new(t, 0), 0.25),
                Err(Error::InvalidRecipe(_))
            ));
        }
    }

    #[test]
    fn require_connected_resamples() {
        let r = TopologyRecipe::new(
            Topology::ErdosRenyi {
                n: 30,
                h: 0.05,
                p_edge: 0.12,
            },
            5,
        )
        .require_connected(true);
        assert!(generate(&r, 0.25).unwrap().is_connected());
    }

    #[test]
    fn spec_rejects_malformed_edges() {
        assert!(NetworkSpec::new(3, 0.25, vec![Edge { i: 0, j: 0, h: 0.1 }]).is_err());
        assert!(NetworkSpec::new(3, 0.25, vec![Edge { i: 0, j: 3, h: 0.1 }]).is_err());
        assert!(NetworkSpec::new(3, 0.25, vec![Edge { i: 0, j: 1, h: 0.0 }]).is_err());
        let dup = vec![Edge { i: 0, j: 1, h: 0.1 }, Edge { i: 1, j: 0, h: 0.2 }];
        assert!(NetworkSpec::new(3, 0.25, dup).is_err());
        assert!(NetworkSpec::new(3, -1.0, vec![]).is_err());
    }

    #[test]
    fn adjacency_single_and_pair() {
        let one = NetworkSpec::new(1, 0.25, vec![]).unwrap();
        assert!(approx(to_adjacency(&one).matrix()[(0, 0)], 0.03125, 1e-15));

        let two = NetworkSpec::new(2, 0.25, vec![Edge { i: 0, j: 1, h: 0.1 }]).unwrap();
        let a = to_adjacency(&two);
        assert!(approx(a.matrix()[(0, 0)], 0.08125, 1e-15));
        assert!(approx(a.matrix()[(1, 1)], 0.08125, 1e-15));
        assert!(approx(a.matrix()[(0, 1)], -0.05, 1e-15));
        assert!(approx(a.matrix()[(1, 0)], -0.05, 1e-15));
    }

    #[test]
    fn adjacency_chain_diagonal() {
        let s = generate(
            &TopologyRecipe::new(Topology::Chain { n: 3, h: 0.1 }, 0),
            0.25,
        )
        .unwrap();
        let a = to_adjacency(&s);
        assert!(approx(a.matrix()[(1, 1)], 0.13125, 1e-15));
        assert!(approx(a.matrix()[(0, 0)], 0.08125, 1e-15));
        assert!(approx(a.matrix()[(2, 2)], 0.08125, 1e-15));
    }

    #[test]
    fn stability_examples() {
        let one = AdjacencyMatrix::from_matrix(DMatrix::from_element(1, 1, 0.03125)).unwrap();
        assert_eq!(validate_stability(&one).unwrap(), vec![0.03125]);

        let two = NetworkSpec::new(2, 0.25, vec![Edge { i: 0, j: 1, h: 0.1 }]).unwrap();
        let ev = validate_stability(&to_adjacency(&two)).unwrap();
        assert!(approx(ev[0], 0.13125, 1e-14));
        assert!(approx(ev[1], 0.03125, 1e-14));

        let bad = AdjacencyMatrix::from_matrix(DMatrix::from_row_slice(
            2,
            2,
            &[0.01, -0.05, -0.05, 0.01],
        ))
        .unwrap();
        match validate_stability(&bad) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => {
                assert!(approx(min_eigenvalue, -0.04, 1e-14))
            }
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(AdjacencyMatrix::from_matrix(m).is_err());
    }
}
