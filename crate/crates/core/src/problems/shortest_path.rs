use nalgebra::{DMatrix, DVector};
use petgraph::algo::{bellman_ford, dijkstra};
use petgraph::graph::{DiGraph, NodeIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{GeneralProblem, Sense};

/// Directed graph with a source and a destination; edge weights are the prediction target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortestPathSpec {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub source: usize,
    pub dest: usize,
}

impl ShortestPathSpec {
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        source: usize,
        dest: usize,
    ) -> Result<Self> {
        let s = Self {
            num_nodes,
            edges,
            source,
            dest,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes < 2 {
            return Err(Error::Structural("graph needs at least two nodes".into()));
        }
        if self.edges.is_empty() {
            return Err(Error::Structural("graph has no edges".into()));
        }
        for &(u, v) in &self.edges {
            if u >= self.num_nodes || v >= self.num_nodes || u == v {
                return Err(Error::Structural(format!("invalid edge ({u}, {v})")));
            }
        }
        if self.source >= self.num_nodes || self.dest >= self.num_nodes || self.source == self.dest
        {
            return Err(Error::Structural(
                "source and destination must be distinct nodes".into(),
            ));
        }
        Ok(())
    }

    /// Same graph with different endpoints.
    pub fn with_endpoints(&self, source: usize, dest: usize) -> Result<Self> {
        Self::new(self.num_nodes, self.edges.clone(), source, dest)
    }

    /// Right-hand side `e_s - e_d` with the last node's row dropped.
    pub fn rhs(&self) -> Vec<f64> {
        endpoint_rhs(self.num_nodes, self.source, self.dest)
    }

    /// Endpoints encoded by a right-hand side produced by [`ShortestPathSpec::rhs`].
    pub fn endpoints_from_rhs(&self, b: &[f64]) -> Result<(usize, usize)> {
        if b.len() != self.num_nodes - 1 {
            return Err(Error::Shape(format!(
                "rhs has {} entries, expected {}",
                b.len(),
                self.num_nodes - 1
            )));
        }
        let last = self.num_nodes - 1;
        let plus: Vec<usize> = (0..b.len()).filter(|&i| b[i] == 1.0).collect();
        let minus: Vec<usize> = (0..b.len()).filter(|&i| b[i] == -1.0).collect();
        let nonzero = b.iter().filter(|v| **v != 0.0).count();
        match (plus.as_slice(), minus.as_slice()) {
            (&[s], &[d]) if nonzero == 2 => Ok((s, d)),
            (&[s], &[]) if nonzero == 1 => Ok((s, last)),
            (&[], &[d]) if nonzero == 1 => Ok((last, d)),
            _ => Err(Error::Structural(
                "rhs does not encode a single source and destination".into(),
            )),
        }
    }

    /// Spec with the endpoints taken from an optional override.
    pub fn resolve(&self, b_override: Option<&[f64]>) -> Result<Self> {
        match b_override {
            None => Ok(self.clone()),
            Some(b) => {
                let (s, d) = self.endpoints_from_rhs(b)?;
                self.with_endpoints(s, d)
            }
        }
    }
}

pub fn endpoint_rhs(num_nodes: usize, source: usize, dest: usize) -> Vec<f64> {
    let mut b = vec![0.0; num_nodes - 1];
    if source < num_nodes - 1 {
        b[source] = 1.0;
    }
    if dest < num_nodes - 1 {
        b[dest] = -1.0;
    }
    b
}

/// `min w'x s.t. N x = e_s - e_d, x >= 0`, where `N` is the node-edge incidence
/// matrix (`+1` where an edge leaves a node, `-1` where it enters) without its last row.
pub fn shortestpath_to_lp(spec: &ShortestPathSpec, weights: &[f64]) -> Result<GeneralProblem> {
    spec.validate()?;
    let m = spec.num_edges();
    if weights.len() != m {
        return Err(Error::Shape(format!(
            "{} weights for {m} edges",
            weights.len()
        )));
    }
    let n = spec.num_nodes;
    let mut a = DMatrix::zeros(n - 1, m);
    for (e, &(u, v)) in spec.edges.iter().enumerate() {
        if u < n - 1 {
            a[(u, e)] = 1.0;
        }
        if v < n - 1 {
            a[(v, e)] = -1.0;
        }
    }
    GeneralProblem::new(
        Sense::Min,
        DVector::from_row_slice(weights),
        a,
        DVector::from_vec(spec.rhs()),
        DMatrix::zeros(0, m),
        DVector::zeros(0),
    )?
    .with_integrality(vec![true; m])
}

/// Distance from every node to `spec.dest`, `None` where unreachable.
fn distances_to_dest(spec: &ShortestPathSpec, weights: &[f64]) -> Result<Vec<Option<f64>>> {
    let mut rev = DiGraph::<(), f64>::with_capacity(spec.num_nodes, spec.num_edges());
    for _ in 0..spec.num_nodes {
        rev.add_node(());
    }
    for (e, &(u, v)) in spec.edges.iter().enumerate() {
        rev.add_edge(NodeIndex::new(v), NodeIndex::new(u), weights[e]);
    }
    let dest = NodeIndex::new(spec.dest);
    if weights.iter().all(|w| *w >= 0.0) {
        let d = dijkstra(&rev, dest, None, |e| *e.weight());
        Ok((0..spec.num_nodes)
            .map(|i| d.get(&NodeIndex::new(i)).copied())
            .collect())
    } else {
        let paths = bellman_ford(&rev, dest)
            .map_err(|_| Error::Oracle("negative cycle in shortest-path graph".into()))?;
        Ok(paths
            .distances
            .into_iter()
            .map(|d| d.is_finite().then_some(d))
            .collect())
    }
}

/// Exact shortest path as edge indices from source to destination, with its cost.
/// Among equally short paths the one whose edge-index sequence is
/// lexicographically smallest is returned. Negative weights fall back to
/// Bellman-Ford.
pub fn dijkstra_oracle(spec: &ShortestPathSpec, weights: &[f64]) -> Result<(Vec<usize>, f64)> {
    spec.validate()?;
    if weights.len() != spec.num_edges() {
        return Err(Error::Shape(format!(
            "{} weights for {} edges",
            weights.len(),
            spec.num_edges()
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Oracle("edge weights must be finite".into()));
    }
    let dist = distances_to_dest(spec, weights)?;
    let Some(total) = dist[spec.source] else {
        return Err(Error::Infeasible(format!(
            "node {} cannot reach node {}",
            spec.source, spec.dest
        )));
    };
    let scale = 1.0 + weights.iter().fold(0.0_f64, |a, w| a.max(w.abs()));
    let tol = 1e-9 * scale;
    let mut path = Vec::new();
    let mut visited = vec![false; spec.num_nodes];
    let mut u = spec.source;
    let mut cost = 0.0;
    while u != spec.dest {
        visited[u] = true;
        let du = dist[u].expect("nodes on the walk reach the destination");
        let next = spec.edges.iter().enumerate().find(|(e, &(a, b))| {
            a == u && !visited[b] && dist[b].is_some_and(|db| (weights[*e] + db - du).abs() <= tol)
        });
        let Some((e, &(_, v))) = next else {
            return Err(Error::Oracle(
                "could not reconstruct a shortest path".into(),
            ));
        };
        path.push(e);
        cost += weights[e];
        u = v;
    }
    debug_assert!((cost - total).abs() <= 1e-6 * scale);
    Ok((path, cost))
}

/// 0-1 edge indicator of a path.
pub fn path_indicator(num_edges: usize, path: &[usize]) -> Vec<f64> {
    let mut x = vec![0.0; num_edges];
    for &e in path {
        x[e] = 1.0;
    }
    x
}

/// Gap between the best and second-best path costs: the cheapest path that
/// avoids at least one edge of the best path. `None` when no alternative exists.
pub fn second_best_gap(spec: &ShortestPathSpec, weights: &[f64]) -> Result<Option<f64>> {
    let (path, best) = dijkstra_oracle(spec, weights)?;
    let mut second: Option<f64> = None;
    for &e in &path {
        let mut sub = spec.clone();
        let mut w = weights.to_vec();
        sub.edges.remove(e);
        w.remove(e);
        if sub.edges.is_empty() {
            continue;
        }
        if let Some(Some(d)) = distances_to_dest(&sub, &w).ok().map(|d| d[spec.source]) {
            second = Some(second.map_or(d, |s| s.min(d)));
        }
    }
    Ok(second.map(|s| s - best))
}

/// Grid DAG with edges pointing right and down; node `r * cols + c`.
pub fn grid_graph(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let u = r * cols + c;
            if c + 1 < cols {
                edges.push((u, u + 1));
            }
            if r + 1 < rows {
                edges.push((u, u + cols));
            }
        }
    }
    edges
}

/// Random DAG on `n` nodes: a chain `i -> i+1` plus each forward pair `i -> j` with probability `density`.
pub fn random_dag<R: Rng + ?Sized>(rng: &mut R, n: usize, density: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || rng.random::<f64>() < density {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Whether `dest` is reachable from `source` along directed edges.
pub fn reachable(num_nodes: usize, edges: &[(usize, usize)], source: usize, dest: usize) -> bool {
    let mut seen = vec![false; num_nodes];
    let mut stack = vec![source];
    while let Some(u) = stack.pop() {
        if u == dest {
            return true;
        }
        if std::mem::replace(&mut seen[u], true) {
            continue;
        }
        stack.extend(edges.iter().filter(|(a, _)| *a == u).map(|(_, b)| *b));
    }
    false
}
