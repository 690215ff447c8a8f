//! QUBO instances over weighted graphs and their brute-force oracles.
//!
//! The objective of a spin assignment `z ∈ {-1,+1}^n` is
//! `C(z) = Σ_{(i,j)} w_ij z_i z_j`, minimized. For MAX-CUT the cut value of
//! `z` is `(W - C(z)) / 2` where `W = Σ w_ij`.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits;
use crate::seeding;
use crate::{Error, Result};

/// Largest instance the exhaustive oracle accepts.
pub const BRUTE_FORCE_MAX_N: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Undirected edge-weighted graph with `i < j` on every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
}

/// On-disk form: `{"n": int, "edges": [[i, j, w], ...]}`.
#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    /// Build a graph, normalizing each edge to `i < j`.
    ///
    /// Self-loops, out-of-range vertices, duplicate pairs and non-finite
    /// weights are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one vertex".into()));
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (a, b, w) in edges {
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop on vertex {i}")));
            }
            if j >= n {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            if !w.is_finite() {
                return Err(Error::InvalidGraph(format!("edge ({i}, {j}) has non-finite weight")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i}, {j})")));
            }
            out.push(Edge { i, j, w });
        }
        Ok(Self { n, edges: out })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for e in &self.edges {
            deg[e.i] += 1;
            deg[e.j] += 1;
        }
        deg
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
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.n
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile { n: self.n, edges: self.edges.iter().map(|e| (e.i, e.j, e.w)).collect() };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(s)?;
        Self::new(file.n, file.edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Random connected 3-regular graph with uniform edge weights in
/// `[weight_low, weight_high)`.
///
/// Uses the pairing model with rejection of loops, multi-edges and
/// disconnected outcomes. Edges are returned sorted, and weights are drawn in
/// sorted-edge order, so the result depends only on the arguments.
pub fn generate_w3r(n: usize, seed: u64, weight_low: f64, weight_high: f64) -> Result<WeightedGraph> {
    if n < 4 || n % 2 == 1 {
        return Err(Error::InvalidArgument(format!(
            "a 3-regular graph needs an even vertex count >= 4, got {n}"
        )));
    }
    if !(weight_low < weight_high) || !weight_low.is_finite() || !weight_high.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "weight range [{weight_low}, {weight_high}) is empty"
        )));
    }
    let mut rng = seeding::rng_for(&[0x3_0E6, seed, n as u64]);
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| [v, v, v]).collect();
    loop {
        stubs.shuffle(&mut rng);
        let mut pairs: Vec<(usize, usize)> = stubs
            .chunks_exact(2)
            .map(|c| if c[0] < c[1] { (c[0], c[1]) } else { (c[1], c[0]) })
            .collect();
        if pairs.iter().any(|(i, j)| i == j) {
            continue;
        }
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        let edges: Vec<_> =
            pairs.into_iter().map(|(i, j)| (i, j, rng.random_range(weight_low..weight_high))).collect();
        let graph = WeightedGraph::new(n, edges)?;
        if graph.is_connected() {
            return Ok(graph);
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuboProblem {
    graph: WeightedGraph,
    total_weight: f64,
    diagonal: OnceLock<Vec<f64>>,
}

impl QuboProblem {
    pub fn new(graph: WeightedGraph) -> Self {
        let total_weight = graph.edges.iter().map(|e| e.w).sum();
        Self { graph, total_weight, diagonal: OnceLock::new() }
    }

    /// Five-spin hardware benchmark `C = z0 z1 - z0 z2 + z0 z3 - z3 z4`.
    pub fn five_variable_benchmark() -> Self {
        let g = WeightedGraph::new(5, [(0, 1, 1.0), (0, 2, -1.0), (0, 3, 1.0), (3, 4, -1.0)])
            .expect("static graph is valid");
        Self::new(g)
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// `C(z)` for a spin assignment.
    pub fn value(&self, z: &[i8]) -> Result<f64> {
        if z.len() != self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), got: z.len() });
        }
        Ok(self.graph.edges.iter().map(|e| e.w * f64::from(z[e.i]) * f64::from(z[e.j])).sum())
    }

    /// `C` of the computational basis state `index` (bit `q` = qubit `q`).
    pub fn value_of_index(&self, index: usize) -> f64 {
        self.graph.edges.iter().map(|e| e.w * bits::spin(index, e.i) * bits::spin(index, e.j)).sum()
    }

    /// `C` evaluated on all `2^n` basis states, computed once and cached.
    pub fn cost_diagonal(&self) -> &[f64] {
        self.diagonal.get_or_init(|| {
            let n = self.n();
            let mut diag = vec![0.0; 1usize << n];
            for e in &self.graph.edges {
                let mask = (1usize << e.i) | (1usize << e.j);
                for (idx, d) in diag.iter_mut().enumerate() {
                    // z_i z_j = +1 when the two bits agree.
                    let parity = (idx & mask).count_ones() & 1;
                    *d += if parity == 0 { e.w } else { -e.w };
                }
            }
            diag
        })
    }

    /// Cut value implied by an objective expectation: `(W - C) / 2`.
    pub fn cut_from_expectation(&self, expectation: f64) -> f64 {
        (self.total_weight - expectation) / 2.0
    }

    /// Approximation ratio of an expectation against the exact max cut.
    pub fn approximation_ratio(&self, expectation: f64, oracle: &BruteForceResult) -> Result<f64> {
        if oracle.n != self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), got: oracle.n });
        }
        if oracle.max_cut.abs() < 1e-12 {
            return Err(Error::Degenerate("max cut is zero, approximation ratio undefined".into()));
        }
        Ok(self.cut_from_expectation(expectation) / oracle.max_cut)
    }

    /// Exhaustive minimization of `C` over all `2^n` assignments.
    pub fn brute_force_optimum(&self) -> Result<BruteForceResult> {
        let n = self.n();
        if n > BRUTE_FORCE_MAX_N {
            return Err(Error::TooLarge { what: "brute-force oracle", n, max: BRUTE_FORCE_MAX_N });
        }
        let diag = self.cost_diagonal();
        let (min_value, max_value) =
            diag.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let tol = 1e-9 * (1.0 + min_value.abs());
        let optimal_states: Vec<usize> =
            diag.iter().enumerate().filter(|(_, &v)| v <= min_value + tol).map(|(i, _)| i).collect();
        Ok(BruteForceResult {
            n,
            min_value,
            max_value,
            max_cut: (self.total_weight - min_value) / 2.0,
            optimal_states,
        })
    }
}

/// Exact optimum of a QUBO instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub n: usize,
    pub min_value: f64,
    pub max_value: f64,
    pub max_cut: f64,
    /// Basis-state indices of every minimizer, ascending.
    pub optimal_states: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct OracleFile {
    n: usize,
    min_value: f64,
    max_value: f64,
    max_cut: f64,
    optimal_bitstrings: Vec<String>,
}

impl BruteForceResult {
    pub fn optimal_bitstrings(&self) -> Vec<String> {
        self.optimal_states.iter().map(|&i| bits::index_to_bitstring(i, self.n)).collect()
    }

    pub fn is_optimal(&self, index: usize) -> bool {
        self.optimal_states.binary_search(&index).is_ok()
    }

    /// Success probability of uniformly random guessing.
    pub fn random_guess_ratio(&self) -> f64 {
        self.optimal_states.len() as f64 / (1u64 << self.n) as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&OracleFile {
            n: self.n,
            min_value: self.min_value,
            max_value: self.max_value,
            max_cut: self.max_cut,
            optimal_bitstrings: self.optimal_bitstrings(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: OracleFile = serde_json::from_str(s)?;
        let mut optimal_states = f
            .optimal_bitstrings
            .iter()
            .map(|b| {
                if b.len() != f.n {
                    return Err(Error::LengthMismatch { expected: f.n, got: b.len() });
                }
                bits::bitstring_to_index(b)
            })
            .collect::<Result<Vec<_>>>()?;
        optimal_states.sort_unstable();
        Ok(Self { n: f.n, min_value: f.min_value, max_value: f.max_value, max_cut: f.max_cut, optimal_states })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_edge() -> QuboProblem {
        QuboProblem::new(WeightedGraph::new(2, [(0, 1, 1.0)]).unwrap())
    }

    fn triangle() -> QuboProblem {
        QuboProblem::new(WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap())
    }

    #[test]
    fn w3r_k4_is_complete() {
        for seed in 0..5 {
            let g = generate_w3r(4, seed, 0.0, 1.0).unwrap();
            assert_eq!(g.edges().len(), 6);
            assert!(g.degrees().iter().all(|&d| d == 3));
        }
    }

    #[test]
    fn w3r_sixteen_vertices() {
        let g = generate_w3r(16, 0, 0.0, 1.0).unwrap();
        assert_eq!(g.edges().len(), 24);
        assert!(g.degrees().iter().all(|&d| d == 3));
        assert!(g.is_connected());
        assert!(g.edges().iter().all(|e| (0.0..1.0).contains(&e.w) && e.i < e.j));
        assert_eq!(g, generate_w3r(16, 0, 0.0, 1.0).unwrap());
        assert_ne!(g, generate_w3r(16, 1, 0.0, 1.0).unwrap());
    }

    #[test]
    fn w3r_rejects_bad_sizes() {
        assert!(generate_w3r(5, 0, 0.0, 1.0).is_err());
        assert!(generate_w3r(2, 0, 0.0, 1.0).is_err());
        assert!(generate_w3r(6, 0, 1.0, 1.0).is_err());
    }

    #[test]
    fn graph_validation() {
        assert!(WeightedGraph::new(3, [(0, 0, 1.0)]).is_err());
        assert!(WeightedGraph::new(3, [(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(WeightedGraph::new(3, [(0, 3, 1.0)]).is_err());
        let g = WeightedGraph::new(3, [(2, 0, 1.5)]).unwrap();
        assert_eq!(g.edges()[0], Edge { i: 0, j: 2, w: 1.5 });
    }

    #[test]
    fn five_variable_values() {
        let p = QuboProblem::five_variable_benchmark();
        assert_eq!(p.value(&[1, 1, 1, 1, 1]).unwrap(), 0.0);
        assert_eq!(p.value(&[1, -1, 1, -1, -1]).unwrap(), -4.0);
        assert!(p.value(&[1, 1]).is_err());
    }

    #[test]
    fn single_edge_value() {
        assert_eq!(single_edge().value(&[1, -1]).unwrap(), -1.0);
    }

    #[test]
    fn oracle_single_edge() {
        let o = single_edge().brute_force_optimum().unwrap();
        assert_eq!(o.min_value, -1.0);
        assert_eq!(o.max_cut, 1.0);
        let mut s = o.optimal_bitstrings();
        s.sort();
        assert_eq!(s, vec!["01", "10"]);
    }

    #[test]
    fn oracle_triangle() {
        let o = triangle().brute_force_optimum().unwrap();
        assert_eq!(o.min_value, -1.0);
        assert_eq!(o.max_cut, 2.0);
        assert_eq!(o.optimal_states.len(), 6);
    }

    #[test]
    fn oracle_five_variable() {
        let o = QuboProblem::five_variable_benchmark().brute_force_optimum().unwrap();
        assert_eq!(o.min_value, -4.0);
        assert_eq!(o.optimal_states.len(), 2);
        assert_eq!(o.random_guess_ratio(), 1.0 / 16.0);
        assert!(o.optimal_bitstrings().contains(&"01011".to_string()));
    }

    #[test]
    fn oracle_refuses_large_instances() {
        let g = generate_w3r(26, 0, 0.0, 1.0).unwrap();
        assert!(matches!(QuboProblem::new(g).brute_force_optimum(), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn cut_and_ratio() {
        let t = triangle();
        assert_eq!(t.cut_from_expectation(3.0), 0.0);
        assert_eq!(t.cut_from_expectation(-1.0), 2.0);
        let o = t.brute_force_optimum().unwrap();
        assert_eq!(t.approximation_ratio(o.min_value, &o).unwrap(), 1.0);
        assert_eq!(t.approximation_ratio(0.0, &o).unwrap(), 3.0 / 4.0);
        let e = single_edge();
        let oe = e.brute_force_optimum().unwrap();
        assert_eq!(e.cut_from_expectation(-1.0), 1.0);
        assert_eq!(e.approximation_ratio(1.0, &oe).unwrap(), 0.0);
    }

    #[test]
    fn ratio_rejects_zero_max_cut() {
        let p = QuboProblem::new(WeightedGraph::new(2, [(0, 1, 0.0)]).unwrap());
        let o = p.brute_force_optimum().unwrap();
        assert!(matches!(p.approximation_ratio(0.0, &o), Err(Error::Degenerate(_))));
    }

    #[test]
    fn json_roundtrip() {
        let g = generate_w3r(8, 3, 0.0, 1.0).unwrap();
        assert_eq!(WeightedGraph::from_json(&g.to_json().unwrap()).unwrap(), g);
        let o = QuboProblem::new(g).brute_force_optimum().unwrap();
        assert_eq!(BruteForceResult::from_json(&o.to_json().unwrap()).unwrap(), o);
    }
}
