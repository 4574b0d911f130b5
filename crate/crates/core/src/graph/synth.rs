use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::hetero::HeteroGraph;
use super::io::Dataset;
use super::labels::LabelTable;
use super::schema::{EdgeTypeDef, NodeTypeDef, NodeTypeId, Schema};
use super::GraphError;
use crate::autodiff::Tensor;
use crate::scalar::{lit, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthTypeSpec {
    pub name: String,
    pub count: usize,
    pub feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationSpec {
    pub name: String,
    pub source: String,
    pub target: String,
    pub edges: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub types: Vec<SynthTypeSpec>,
    pub relations: Vec<RelationSpec>,
    /// Node type carrying labels.
    pub target: String,
    pub classes: usize,
    /// Probability that an edge joins two nodes of the same latent class.
    pub homophily: f64,
    /// Exponent γ of the expected degree distribution P(k) ∝ k^-γ.
    pub degree_exponent: f64,
    /// Standard deviation of each class-centroid coordinate.
    pub feature_signal: f64,
    /// Standard deviation of per-node feature noise.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// An academic-style graph of about 3,000 nodes.
    fn default() -> Self {
        let ty = |name: &str, count, feature_dim| SynthTypeSpec {
            name: name.into(),
            count,
            feature_dim,
        };
        let rel = |name: &str, source: &str, target: &str, edges| RelationSpec {
            name: name.into(),
            source: source.into(),
            target: target.into(),
            edges,
        };
        Self {
            types: vec![ty("paper", 1500, 32), ty("author", 1200, 16), ty("subject", 300, 8)],
            relations: vec![
                rel("writes", "author", "paper", 2400),
                rel("about", "paper", "subject", 1500),
                rel("cites", "paper", "paper", 1200),
            ],
            target: "paper".into(),
            classes: 3,
            homophily: 0.85,
            degree_exponent: 2.5,
            feature_signal: 1.0,
            feature_noise: 1.0,
            seed: 0,
        }
    }
}

/// Per type: latent class of every node and degree-weighted samplers
/// over the whole type and over each class.
struct TypeSampler {
    class: Vec<usize>,
    all: Option<WeightedIndex<f64>>,
    members: Vec<Vec<usize>>,
    by_class: Vec<Option<WeightedIndex<f64>>>,
}

impl TypeSampler {
    fn new(count: usize, classes: usize, exponent: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut class: Vec<usize> = (0..count).map(|i| i % classes).collect();
        class.shuffle(rng);
        // Chung-Lu weights on a random permutation so degree is not tied to id.
        let mut rank: Vec<usize> = (0..count).collect();
        rank.shuffle(rng);
        let power = -1.0 / (exponent - 1.0);
        let weight: Vec<f64> = rank.iter().map(|&r| ((r + 1) as f64).powf(power)).collect();
        let mut members = vec![Vec::new(); classes];
        for (i, &c) in class.iter().enumerate() {
            members[c].push(i);
        }
        let by_class = members
            .iter()
            .map(|m| WeightedIndex::new(m.iter().map(|&i| weight[i])).ok())
            .collect();
        Self {
            class,
            all: WeightedIndex::new(weight.iter().copied()).ok(),
            members,
            by_class,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        self.all.as_ref().expect("non-empty type").sample(rng)
    }

    fn draw_class(&self, class: usize, rng: &mut ChaCha8Rng) -> usize {
        match &self.by_class[class] {
            Some(w) => self.members[class][w.sample(rng)],
            None => self.draw(rng),
        }
    }
}

/// Builds a labeled heterogeneous graph with power-law degrees,
/// class-assortative edges and class-centroid features. Every target node is
/// labeled; no split is attached. Deterministic in `spec`.
pub fn generate_synthetic<S: Scalar>(spec: &SynthSpec) -> Result<Dataset<S>, GraphError> {
    let invalid = |m: String| GraphError::Invalid(m);
    if spec.classes == 0 {
        return Err(invalid("class count must be positive".into()));
    }
    if !(0.0..=1.0).contains(&spec.homophily) {
        return Err(invalid(format!("homophily {} outside [0, 1]", spec.homophily)));
    }
    if !(spec.degree_exponent > 1.0) {
        return Err(invalid(format!("degree exponent {} must exceed 1", spec.degree_exponent)));
    }
    if !(spec.feature_noise >= 0.0 && spec.feature_signal >= 0.0) {
        return Err(invalid("feature signal and noise must be non-negative".into()));
    }
    let type_id = |name: &str| {
        spec.types
            .iter()
            .position(|t| t.name == name)
            .map(|i| NodeTypeId(i as u16))
            .ok_or_else(|| invalid(format!("unknown node type {name:?}")))
    };
    let target = type_id(&spec.target)?;
    let mut edge_defs = Vec::new();
    for r in &spec.relations {
        let (s, t) = (type_id(&r.source)?, type_id(&r.target)?);
        let (ns, nt) = (spec.types[s.index()].count, spec.types[t.index()].count);
        let possible = if s == t { ns * ns.saturating_sub(1) } else { ns * nt };
        if r.edges > possible {
            return Err(GraphError::Infeasible {
                relation: r.name.clone(),
                requested: r.edges,
                possible,
            });
        }
        edge_defs.push(EdgeTypeDef {
            name: r.name.clone(),
            source: s,
            target: t,
        });
    }
    let schema = Schema::new(
        spec.types
            .iter()
            .map(|t| NodeTypeDef {
                name: t.name.clone(),
                feature_dim: t.feature_dim,
            })
            .collect(),
        edge_defs.clone(),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samplers: Vec<TypeSampler> = spec
        .types
        .iter()
        .map(|t| TypeSampler::new(t.count, spec.classes, spec.degree_exponent, &mut rng))
        .collect();

    let mut features = Vec::new();
    for (ti, t) in spec.types.iter().enumerate() {
        let centroids: Vec<Vec<f64>> = (0..spec.classes)
            .map(|_| {
                (0..t.feature_dim)
                    .map(|_| spec.feature_signal * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let mut data = Vec::with_capacity(t.count * t.feature_dim);
        for i in 0..t.count {
            let c = &centroids[samplers[ti].class[i]];
            for &mu in c {
                let v = mu + spec.feature_noise * rng.sample::<f64, _>(StandardNormal);
                data.push(lit::<S>(v));
            }
        }
        features.push(Tensor::new(vec![t.count, t.feature_dim], data).expect("sized"));
    }

    let mut edges = Vec::new();
    for (r, def) in spec.relations.iter().zip(&edge_defs) {
        let (src, dst) = (&samplers[def.source.index()], &samplers[def.target.index()]);
        let same_type = def.source == def.target;
        let mut seen = std::collections::HashSet::with_capacity(r.edges);
        let mut list = Vec::with_capacity(r.edges);
        let mut attempts = 0usize;
        let budget = 200 * r.edges + 1000;
        while list.len() < r.edges {
            attempts += 1;
            let (s, t) = if attempts <= budget {
                let s = src.draw(&mut rng);
                let t = if rng.random::<f64>() < spec.homophily {
                    dst.draw_class(src.class[s], &mut rng)
                } else {
                    dst.draw(&mut rng)
                };
                (s, t)
            } else {
                // Dense request: fall back to uniform pairs.
                (
                    rng.random_range(0..src.class.len()),
                    rng.random_range(0..dst.class.len()),
                )
            };
            if (same_type && s == t) || !seen.insert((s, t)) {
                continue;
            }
            list.push((s, t));
        }
        list.sort_unstable();
        edges.push(list);
    }

    let counts: Vec<usize> = spec.types.iter().map(|t| t.count).collect();
    let graph = HeteroGraph::new(schema, counts, features, edges)?;
    let labels = LabelTable::new(
        target,
        spec.classes,
        samplers[target.index()].class.iter().map(|&c| Some(c)).collect(),
    )?;
    let ids = spec
        .types
        .iter()
        .map(|t| (0..t.count).map(|i| format!("{}{}", t.name, i)).collect())
        .collect();
    Ok(Dataset {
        graph,
        labels,
        splits: None,
        ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_edges_gives_isolated_nodes() {
        let mut spec = SynthSpec::default();
        for r in &mut spec.relations {
            r.edges = 0;
        }
        let ds = generate_synthetic::<f64>(&spec).unwrap();
        assert_eq!(ds.graph.edge_count(), 0);
        assert_eq!(ds.graph.total_nodes(), 3000);
    }

    #[test]
    fn infeasible_request_fails() {
        let mut spec = SynthSpec::default();
        spec.types[2].count = 2;
        spec.relations[1].edges = 3001;
        assert!(matches!(generate_synthetic::<f32>(&spec), Err(GraphError::Infeasible { .. })));
    }

    #[test]
    fn same_seed_same_edges() {
        let spec = SynthSpec::default();
        let a = generate_synthetic::<f32>(&spec).unwrap();
        let b = generate_synthetic::<f32>(&spec).unwrap();
        assert_eq!(a.graph.declared_edges(), b.graph.declared_edges());
        a.graph.validate().unwrap();
    }
}
