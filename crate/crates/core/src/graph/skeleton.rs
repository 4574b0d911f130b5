use super::hetero::HeteroGraph;
use crate::scalar::Scalar;

/// Undirected simple graph over global node ids, ignoring types and self loops.
/// Parallel edges of different types collapse into one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skeleton {
    adj: Vec<Vec<usize>>,
}

/// A node two hops from the query node with no direct edge to it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpenTriangleCandidate {
    pub node: usize,
    /// Sorted shared neighbors (the middle nodes of the open triangles).
    pub common: Vec<usize>,
}

impl Skeleton {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        Self { adj }
    }

    pub fn from_graph<S: Scalar>(g: &HeteroGraph<S>) -> Self {
        let off = g.type_offsets();
        let schema = g.schema();
        let mut pairs = Vec::with_capacity(g.edge_count());
        for e in schema.declared_ids() {
            let def = schema.relation(e);
            let (os, ot) = (off[def.source.index()], off[def.target.index()]);
            pairs.extend(g.adjacency(e).pairs().map(|(s, t)| (os + s, ot + t)));
        }
        Self::from_edges(g.total_nodes(), pairs)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn common_neighbors(&self, a: usize, b: usize) -> Vec<usize> {
        let (x, y) = (&self.adj[a], &self.adj[b]);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(x[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }

    pub fn common_count(&self, a: usize, b: usize) -> usize {
        let (x, y) = (&self.adj[a], &self.adj[b]);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// Nodes at distance exactly two from `t`, sorted by id, each with the
    /// shared neighbors through which it is reached.
    pub fn open_triangle_candidates(&self, t: usize) -> Vec<OpenTriangleCandidate> {
        let mut via: Vec<(usize, usize)> = Vec::new();
        for &a in &self.adj[t] {
            for &b in &self.adj[a] {
                if b != t && !self.has_edge(t, b) {
                    via.push((b, a));
                }
            }
        }
        via.sort_unstable();
        let mut out: Vec<OpenTriangleCandidate> = Vec::new();
        for (b, a) in via {
            match out.last_mut() {
                Some(c) if c.node == b => c.common.push(a),
                _ => out.push(OpenTriangleCandidate { node: b, common: vec![a] }),
            }
        }
        out
    }
}
