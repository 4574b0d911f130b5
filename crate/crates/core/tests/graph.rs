mod common;

use std::fs;

use common::{bfs, dense_undirected, random_hetero, Mix};
use hgmda::graph::io::{load_dataset, write_dataset, Dataset};
use hgmda::graph::{
    generate_synthetic, Direction, EdgeTypeDef, GraphError, HeteroGraph, LabelTable, NodeRef, NodeTypeDef,
    NodeTypeId, Schema, Skeleton, SynthSpec,
};
use hgmda::Tensor64;

#[test]
fn neighbors_match_dense_matrix_rows() {
    for seed in 0..20 {
        let mut rng = Mix(seed);
        let (na, nb) = (1 + rng.below(120), 1 + rng.below(80));
        let g = random_hetero(seed, na, nb, 0.05, (3, 2));
        g.validate().unwrap();
        // Directed dense oracle per relation.
        for t in g.schema().node_type_ids() {
            for i in 0..g.node_count(t) {
                let node = NodeRef::new(t, i);
                let mut expected = Vec::new();
                for rel in g.schema().relation_ids() {
                    let m = g.schema().meta_relation(rel);
                    if m.source != t {
                        continue;
                    }
                    let dense: Vec<Vec<bool>> = {
                        let mut d = vec![vec![false; g.node_count(m.target)]; g.node_count(m.source)];
                        let decl = g.schema().declared_of(rel);
                        for (s, tt) in g.edges(decl) {
                            if g.schema().is_reverse(rel) {
                                d[tt][s] = true;
                            } else {
                                d[s][tt] = true;
                            }
                        }
                        d
                    };
                    for (j, &on) in dense[i].iter().enumerate() {
                        if on {
                            expected.push((NodeRef::new(m.target, j), m));
                        }
                    }
                }
                assert_eq!(g.neighbors(node, Direction::Out).unwrap(), expected);
            }
        }
    }
}

#[test]
fn two_hop_candidates_match_bfs() {
    for seed in 0..20 {
        let mut rng = Mix(seed + 100);
        let g = random_hetero(seed, 10 + rng.below(100), 5 + rng.below(60), 0.04, (1, 1));
        let sk = Skeleton::from_graph(&g);
        let m = dense_undirected(&g);
        for t in 0..g.total_nodes() {
            let dist = bfs(&m, t);
            let got = sk.open_triangle_candidates(t);
            let nodes: Vec<usize> = got.iter().map(|c| c.node).collect();
            let expected: Vec<usize> = (0..m.len()).filter(|&v| dist[v] == 2).collect();
            assert_eq!(nodes, expected);
            for c in &got {
                let common: Vec<usize> = (0..m.len()).filter(|&z| m[t][z] && m[z][c.node]).collect();
                assert_eq!(c.common, common);
            }
        }
    }
}

fn tiny_dataset() -> Dataset<f64> {
    let schema = Schema::new(
        vec![NodeTypeDef { name: "doc".into(), feature_dim: 2 }],
        vec![EdgeTypeDef { name: "cites".into(), source: NodeTypeId(0), target: NodeTypeId(0) }],
    )
    .unwrap();
    let graph = HeteroGraph::new(
        schema,
        vec![3],
        vec![Tensor64::matrix(3, 2, vec![0.5, 1.0, -2.0, 0.25, 3.0, 0.0]).unwrap()],
        vec![vec![(0, 1), (2, 1)]],
    )
    .unwrap();
    Dataset {
        graph,
        labels: LabelTable::new(NodeTypeId(0), 2, vec![Some(0), Some(1), None]).unwrap(),
        splits: None,
        ids: vec![vec!["d0".into(), "d1".into(), "d2".into()]],
    }
}

#[test]
fn dataset_round_trips_through_directory() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_dataset();
    write_dataset(dir.path(), &ds).unwrap();
    let back: Dataset<f64> = load_dataset(dir.path()).unwrap();
    assert_eq!(back.graph.declared_edges(), ds.graph.declared_edges());
    assert_eq!(back.labels, ds.labels);
    assert_eq!(back.graph.features(NodeTypeId(0)), ds.graph.features(NodeTypeId(0)));
    assert_eq!(back.summary().total_edges, 2);
}

#[test]
fn empty_edge_file_with_one_node_type_loads() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &tiny_dataset()).unwrap();
    fs::write(dir.path().join("edges-cites.tsv"), "").unwrap();
    let ds: Dataset<f32> = load_dataset(dir.path()).unwrap();
    assert_eq!(ds.graph.edge_count(), 0);
}

#[test]
fn load_errors_carry_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &tiny_dataset()).unwrap();
    let edges = dir.path().join("edges-cites.tsv");

    fs::write(&edges, "# header\nd0\td1\nd0\td9\n").unwrap();
    let err = load_dataset::<f32>(dir.path()).unwrap_err();
    assert!(matches!(err, GraphError::DanglingEndpoint { ref at, .. } if at.line == 3), "{err}");
    assert!(err.to_string().contains("edges-cites.tsv:3"));

    fs::write(&edges, "d0\td1\nd0\td1\n").unwrap();
    let err = load_dataset::<f32>(dir.path()).unwrap_err();
    assert!(matches!(err, GraphError::DuplicateEdge { ref at, .. } if at.line == 2));

    fs::write(&edges, "d0\td1\n").unwrap();
    fs::write(dir.path().join("schema.tsv"), "node\tdoc\t3\nedge\tcites\tdoc\tdoc\ntarget\tdoc\t2\n").unwrap();
    assert!(matches!(load_dataset::<f32>(dir.path()), Err(GraphError::FeatureDim { .. })));

    fs::write(dir.path().join("schema.tsv"), "node\tdoc\t2\nedge\tcites\tdoc\tpaper\ntarget\tdoc\t2\n").unwrap();
    let err = load_dataset::<f32>(dir.path()).unwrap_err();
    assert!(matches!(err, GraphError::Schema { ref at, .. } if at.line == 2));
}

#[test]
fn full_homophily_keeps_two_hop_paths_within_class() {
    let spec = SynthSpec {
        classes: 2,
        homophily: 1.0,
        ..SynthSpec::default()
    };
    let ds = generate_synthetic::<f32>(&spec).unwrap();
    let g = &ds.graph;
    let target = ds.labels.target;
    let (mut same, mut total) = (0usize, 0usize);
    for t in 0..g.node_count(target) {
        for (mid, _) in g.neighbors(NodeRef::new(target, t), Direction::Both).unwrap() {
            for (far, _) in g.neighbors(mid, Direction::Both).unwrap() {
                if far.ty == target && far.idx != t {
                    total += 1;
                    same += (ds.labels.get(far.idx) == ds.labels.get(t)) as usize;
                }
            }
        }
    }
    assert!(total > 1000);
    assert!(same as f64 / total as f64 > 0.9, "{same}/{total}");
}

#[test]
fn generated_graphs_survive_write_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SynthSpec::default();
    spec.seed = 11;
    let ds = generate_synthetic::<f32>(&spec).unwrap();
    write_dataset(dir.path(), &ds).unwrap();
    let back: Dataset<f32> = load_dataset(dir.path()).unwrap();
    back.graph.validate().unwrap();
    assert_eq!(back.summary(), ds.summary());
}
