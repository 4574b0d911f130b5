#![allow(dead_code)]

use hgmda::autodiff::{Tape, TensorError, Var};
use hgmda::Tensor64;

/// Worst relative disagreement between tape gradients and central
/// differences of `f` at `inputs`. Gradients below `1e-6` in magnitude are
/// compared absolutely.
pub fn gradcheck<F>(inputs: &[Tensor64], h: f64, f: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |vals: &[Tensor64]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.param(t.clone()).unwrap()).collect();
        let out = f(&mut tape, &vars).unwrap();
        tape.value(out).item().unwrap()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone()).unwrap()).collect();
    let out = f(&mut tape, &vars).unwrap();
    let grads = tape.backward(out).unwrap();
    let mut worst = 0.0f64;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor64::zeros(inputs[k].shape()));
        for i in 0..inputs[k].numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.data()[i];
            let scale = a.abs().max(numeric.abs());
            let err = if scale < 1e-6 { (a - numeric).abs() } else { (a - numeric).abs() / scale };
            worst = worst.max(err);
        }
    }
    worst
}

/// Small deterministic pseudo-random matrix (splitmix-style), values in [-1, 1).
pub fn rand_matrix(rows: usize, cols: usize, seed: u64) -> Tensor64 {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    let data = (0..rows * cols)
        .map(|_| {
            s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    Tensor64::matrix(rows, cols, data).unwrap()
}

/// Tiny splitmix64 generator for building test fixtures.
pub struct Mix(pub u64);

impl Mix {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }

    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Random two-type graph: types `a` and `b`, relations `ab` (a→b) and
/// `aa` (a→a). Each candidate pair is present with probability `p`.
pub fn random_hetero(seed: u64, na: usize, nb: usize, p: f64, dims: (usize, usize)) -> hgmda::graph::HeteroGraph<f64> {
    use hgmda::graph::{EdgeTypeDef, HeteroGraph, NodeTypeDef, NodeTypeId, Schema};
    let mut rng = Mix(seed);
    let schema = Schema::new(
        vec![
            NodeTypeDef { name: "a".into(), feature_dim: dims.0 },
            NodeTypeDef { name: "b".into(), feature_dim: dims.1 },
        ],
        vec![
            EdgeTypeDef { name: "ab".into(), source: NodeTypeId(0), target: NodeTypeId(1) },
            EdgeTypeDef { name: "aa".into(), source: NodeTypeId(0), target: NodeTypeId(0) },
        ],
    )
    .unwrap();
    let mut ab = Vec::new();
    for i in 0..na {
        for j in 0..nb {
            if rng.unit() < p {
                ab.push((i, j));
            }
        }
    }
    let mut aa = Vec::new();
    for i in 0..na {
        for j in 0..na {
            if i != j && rng.unit() < p / 2.0 {
                aa.push((i, j));
            }
        }
    }
    let xa = rand_matrix(na, dims.0, rng.next());
    let xb = rand_matrix(nb, dims.1, rng.next());
    HeteroGraph::new(schema, vec![na, nb], vec![xa, xb], vec![ab, aa]).unwrap()
}

/// Dense symmetric 0/1 adjacency over global ids, self loops dropped.
pub fn dense_undirected(g: &hgmda::graph::HeteroGraph<f64>) -> Vec<Vec<bool>> {
    let n = g.total_nodes();
    let off = g.type_offsets().to_vec();
    let mut m = vec![vec![false; n]; n];
    for e in g.schema().declared_ids() {
        let def = g.schema().relation(e);
        for (s, t) in g.edges(e) {
            let (i, j) = (off[def.source.index()] + s, off[def.target.index()] + t);
            if i != j {
                m[i][j] = true;
                m[j][i] = true;
            }
        }
    }
    m
}

/// BFS distances from `src` on a dense adjacency.
pub fn bfs(m: &[Vec<bool>], src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; m.len()];
    dist[src] = 0;
    let mut queue = std::collections::VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for v in 0..m.len() {
            if m[u][v] && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Attention map over every relation instance of `g` with all heads set to
/// `f(relation, src, dst)`.
pub fn attention_from<F>(g: &hgmda::graph::HeteroGraph<f64>, heads: usize, f: F) -> hgmda::attention::AttentionMap
where
    F: Fn(hgmda::graph::EdgeTypeId, usize, usize) -> f64,
{
    use hgmda::attention::{AttentionMap, RelationAttention};
    let schema = g.schema();
    let mut map = AttentionMap::new(heads, schema.relation_count());
    for rel in schema.relation_ids() {
        let (mut src, mut dst, mut alpha) = (vec![], vec![], vec![]);
        for (t, s) in g.incoming(rel).pairs() {
            src.push(s);
            dst.push(t);
            alpha.extend(std::iter::repeat(f(rel, s, t)).take(heads));
        }
        if !src.is_empty() {
            map.insert(RelationAttention { relation: rel, src, dst, heads, alpha });
        }
    }
    map
}

/// Brute-force triangle tallies on a dense adjacency:
/// (total triangles, total open triangles, per-node triangles, per-node open triangles).
pub fn brute_triangles(m: &[Vec<bool>]) -> (usize, usize, Vec<usize>, Vec<usize>) {
    let n = m.len();
    let (mut tri, mut open) = (0, 0);
    let (mut nt, mut no) = (vec![0; n], vec![0; n]);
    for i in 0..n {
        for j in 0..n {
            for k in j + 1..n {
                if j == i || k == i || !m[i][j] || !m[i][k] {
                    continue;
                }
                if m[j][k] {
                    nt[i] += 1;
                    if i < j {
                        tri += 1;
                    }
                } else {
                    no[i] += 1;
                    open += 1;
                }
            }
        }
    }
    (tri, open, nt, no)
}

/// Pair-counting oracle: ARI from the four pair agreement counts.
pub fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
    let (mut ss, mut sd, mut ds, mut dd) = (0i128, 0i128, 0i128, 0i128);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => ss += 1,
                (true, false) => sd += 1,
                (false, true) => ds += 1,
                (false, false) => dd += 1,
            }
        }
    }
    let num = 2 * (ss * dd - sd * ds);
    let den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

pub fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: std::collections::HashMap<(usize, usize), f64> = std::collections::HashMap::new();
    let mut pa: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
    let mut pb: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0 / n;
        *pa.entry(x).or_default() += 1.0 / n;
        *pb.entry(y).or_default() += 1.0 / n;
    }
    let h = |m: &std::collections::HashMap<usize, f64>| -m.values().map(|p| p * p.ln()).sum::<f64>();
    let (ha, hb) = (h(&pa), h(&pb));
    if ha.abs() < 1e-15 && hb.abs() < 1e-15 {
        return 1.0;
    }
    let mi: f64 = joint.iter().map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).ln()).sum();
    mi / ((ha + hb) / 2.0)
}

/// Dense confusion matrix oracle for Macro-F1 (2TP / (2TP + FP + FN)).
pub fn macro_oracle(pred: &[usize], truth: &[usize], classes: usize) -> f64 {
    let mut m = vec![vec![0usize; classes]; classes];
    for (&p, &y) in pred.iter().zip(truth) {
        m[y][p] += 1;
    }
    let mut scores = Vec::new();
    for c in 0..classes {
        let tp = m[c][c];
        let fp: usize = (0..classes).filter(|&r| r != c).map(|r| m[r][c]).sum();
        let fn_: usize = (0..classes).filter(|&p| p != c).map(|p| m[c][p]).sum();
        if tp + fp + fn_ > 0 {
            scores.push(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64);
        }
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}
