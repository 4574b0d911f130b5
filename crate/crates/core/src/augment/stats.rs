use std::io::{self, Write};

use rayon::prelude::*;

use crate::graph::Skeleton;

/// Triangle tallies of one skeleton edge `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeTriangles {
    pub i: usize,
    pub j: usize,
    /// Triangles containing the edge: |Γ(i) ∩ Γ(j)|.
    pub triangles: usize,
    /// Open triangles hanging off the edge: neighbors of one endpoint that
    /// are not adjacent to the other.
    pub triples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleStats {
    pub degree: Vec<usize>,
    pub edges: Vec<EdgeTriangles>,
    /// Triangles through each node.
    pub node_triangles: Vec<usize>,
    /// Open triangles centered at each node.
    pub node_triples: Vec<usize>,
    pub clustering: Vec<f64>,
    pub total_triangles: usize,
    pub total_triples: usize,
}

fn choose2(d: usize) -> usize {
    d * d.saturating_sub(1) / 2
}

/// Size of `a \ (b ∪ {skip})` for sorted `a`, `b`.
fn difference_count(a: &[usize], b: &[usize], skip: usize) -> usize {
    let mut j = 0;
    let mut n = 0;
    for &x in a {
        if x == skip {
            continue;
        }
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            n += 1;
        }
    }
    n
}

/// Forman curvature from degrees: 4 − d_i − d_j + 3·triangles.
pub fn forman_curvature(di: usize, dj: usize, triangles: usize) -> i64 {
    4 - di as i64 - dj as i64 + 3 * triangles as i64
}

/// Forman curvature from per-edge counts: 2 − triples + triangles.
pub fn forman_curvature_from_triples(triples: usize, triangles: usize) -> i64 {
    2 - triples as i64 + triangles as i64
}

/// triangles / (triples + triangles), 0 when the node has no wedge.
pub fn clustering_coefficient(triangles: usize, triples: usize) -> f64 {
    let den = triangles + triples;
    if den == 0 {
        return 0.0;
    }
    let c = triangles as f64 / den as f64;
    if triangles > 0 {
        debug_assert!((c - 1.0 / (1.0 + triples as f64 / triangles as f64)).abs() < 1e-12);
    }
    c
}

/// Σ 1/ln|Γ(z)| over the common neighbors `z`.
pub fn adamic_adar(sk: &Skeleton, common: &[usize]) -> f64 {
    common
        .iter()
        .map(|&z| sk.degree(z))
        .filter(|&d| d >= 2)
        .map(|d| 1.0 / (d as f64).ln())
        .sum()
}

impl TriangleStats {
    pub fn compute(sk: &Skeleton) -> Self {
        let n = sk.node_count();
        let degree: Vec<usize> = (0..n).map(|i| sk.degree(i)).collect();
        let pairs: Vec<(usize, usize)> = sk.edges().collect();
        let edges: Vec<EdgeTriangles> = pairs
            .par_iter()
            .map(|&(i, j)| EdgeTriangles {
                i,
                j,
                triangles: sk.common_count(i, j),
                triples: difference_count(sk.neighbors(i), sk.neighbors(j), j)
                    + difference_count(sk.neighbors(j), sk.neighbors(i), i),
            })
            .collect();
        let mut twice = vec![0usize; n];
        for e in &edges {
            twice[e.i] += e.triangles;
            twice[e.j] += e.triangles;
        }
        let node_triangles: Vec<usize> = twice.iter().map(|t| t / 2).collect();
        let node_triples: Vec<usize> = (0..n).map(|i| choose2(degree[i]) - node_triangles[i]).collect();
        let clustering = (0..n)
            .map(|i| clustering_coefficient(node_triangles[i], node_triples[i]))
            .collect();
        Self {
            total_triangles: node_triangles.iter().sum::<usize>() / 3,
            total_triples: node_triples.iter().sum(),
            degree,
            edges,
            node_triangles,
            node_triples,
            clustering,
        }
    }

    pub fn mean_clustering(&self) -> f64 {
        if self.clustering.is_empty() {
            return 0.0;
        }
        self.clustering.iter().sum::<f64>() / self.clustering.len() as f64
    }

    pub fn curvature(&self, e: &EdgeTriangles) -> i64 {
        forman_curvature(self.degree[e.i], self.degree[e.j], e.triangles)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeforeAfter {
    pub dataset: String,
    pub before: TriangleStats,
    pub after: TriangleStats,
}

impl BeforeAfter {
    pub fn delta_mean(&self) -> f64 {
        self.after.mean_clustering() - self.before.mean_clustering()
    }

    /// Open triangles outnumber triangles before augmentation.
    pub fn is_sparse_regime(&self) -> bool {
        self.before.total_triples > self.before.total_triangles
    }

    pub fn header() -> &'static str {
        "dataset\topen_triangles_before\topen_triangles_after\ttriangles_before\ttriangles_after\tmean_c_before\tmean_c_after\tdelta_mean"
    }

    pub fn row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            self.dataset,
            self.before.total_triples,
            self.after.total_triples,
            self.before.total_triangles,
            self.after.total_triangles,
            self.before.mean_clustering(),
            self.after.mean_clustering(),
            self.delta_mean()
        )
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::header())?;
        writeln!(w, "{}", self.row())
    }
}

pub fn before_after_report(dataset: &str, before: &Skeleton, after: &Skeleton) -> BeforeAfter {
    BeforeAfter {
        dataset: dataset.to_string(),
        before: TriangleStats::compute(before),
        after: TriangleStats::compute(after),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k3_and_path() {
        let k3 = TriangleStats::compute(&Skeleton::from_edges(3, [(0, 1), (1, 2), (0, 2)]));
        assert_eq!((k3.total_triangles, k3.total_triples), (1, 0));
        assert_eq!(k3.clustering, vec![1.0; 3]);
        for e in &k3.edges {
            assert_eq!(k3.curvature(e), 3);
            assert_eq!(forman_curvature_from_triples(e.triples, e.triangles), 3);
        }
        let path = TriangleStats::compute(&Skeleton::from_edges(3, [(0, 1), (1, 2)]));
        assert_eq!((path.total_triangles, path.total_triples), (0, 1));
        assert_eq!(path.clustering[1], 0.0);
    }

    #[test]
    fn star_edge_curvature() {
        let n = 5;
        let star = TriangleStats::compute(&Skeleton::from_edges(n + 1, (1..=n).map(|l| (0, l))));
        for e in &star.edges {
            assert_eq!(star.curvature(e), 3 - n as i64);
        }
    }

    #[test]
    fn adamic_adar_examples() {
        // 0 and 1 share 2 (degree 2); 0 and 3 share 2 and 4 (degree 4).
        let sk = Skeleton::from_edges(8, [(0, 2), (1, 2), (0, 4), (3, 4), (4, 5), (4, 6)]);
        assert!((adamic_adar(&sk, &[2]) - 1.0 / 2f64.ln()).abs() < 1e-15);
        assert_eq!(adamic_adar(&sk, &[]), 0.0);
        assert!((adamic_adar(&sk, &[2, 4]) - (1.0 / 2f64.ln() + 1.0 / 4f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn empty_overlay_has_zero_delta() {
        let sk = Skeleton::from_edges(4, [(0, 1), (1, 2), (2, 3)]);
        assert_eq!(before_after_report("x", &sk, &sk).delta_mean(), 0.0);
    }
}
