mod common;

use common::{gradcheck, rand_matrix, random_hetero, Mix};
use hgmda::attention::{Activation, Encoder, EncoderConfig, InputOverlay};
use hgmda::autodiff::{Tape, Tensor};
use hgmda::graph::{EdgeTypeDef, HeteroGraph, NodeTypeDef, NodeTypeId, Schema};
use hgmda::Tensor64;

fn config(layers: usize, hidden: usize, heads: usize, classes: usize, activation: Activation) -> EncoderConfig {
    EncoderConfig {
        layers,
        hidden,
        heads,
        classes,
        activation,
    }
}

/// `u` (type 0) → `v` (type 1) edges only.
fn bipartite(nu: usize, nv: usize, edges: Vec<(usize, usize)>, xu: Tensor64, xv: Tensor64) -> HeteroGraph<f64> {
    let schema = Schema::new(
        vec![
            NodeTypeDef { name: "u".into(), feature_dim: xu.cols() },
            NodeTypeDef { name: "v".into(), feature_dim: xv.cols() },
        ],
        vec![EdgeTypeDef { name: "uv".into(), source: NodeTypeId(0), target: NodeTypeId(1) }],
    )
    .unwrap();
    HeteroGraph::new(schema, vec![nu, nv], vec![xu, xv], vec![edges]).unwrap()
}

fn set(enc: &mut Encoder<f64>, name: &str, values: &[f64]) {
    let slot = enc.params().slot(name).unwrap_or_else(|| panic!("{name}"));
    let t = enc.params_mut().get_mut(slot);
    t.data_mut().copy_from_slice(values);
}

#[test]
fn zero_features_project_to_zero_under_tanh() {
    let g = random_hetero(1, 6, 4, 0.3, (3, 2));
    let zeros = g.with_edges(g.declared_edges()).unwrap();
    let schema = zeros.schema().clone();
    let g0 = HeteroGraph::new(
        schema.clone(),
        vec![6, 4],
        vec![Tensor::zeros(&[6, 3]), Tensor::zeros(&[4, 2])],
        zeros.declared_edges(),
    )
    .unwrap();
    let enc = Encoder::<f64>::new(config(0, 4, 2, 2, Activation::Tanh), &schema, NodeTypeId(0), 3).unwrap();
    let out = enc.encode(&g0, &[]).unwrap();
    assert!(out.input_states().iter().all(|h| h.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn identity_projection_with_linear_activation_passes_features_through() {
    let x = rand_matrix(3, 4, 9);
    let g = bipartite(3, 2, vec![(0, 0)], x.clone(), rand_matrix(2, 4, 1));
    let mut enc = Encoder::<f64>::new(config(0, 4, 2, 2, Activation::Linear), g.schema(), NodeTypeId(1), 0).unwrap();
    set(&mut enc, "input.u", Tensor64::identity(4).data());
    let out = enc.encode(&g, &[]).unwrap();
    assert_eq!(out.input_states()[0], x);
}

fn hand_encoder(g: &HeteroGraph<f64>) -> Encoder<f64> {
    let mut enc = Encoder::<f64>::new(config(1, 1, 1, 2, Activation::Linear), g.schema(), NodeTypeId(1), 0).unwrap();
    for (name, v) in [
        ("input.u", 1.0),
        ("input.v", 1.0),
        ("layer0.k.u", 2.0),
        ("layer0.q.v", 1.0),
        ("layer0.att.uv", 3.0),
        ("layer0.gate.uv", 1.0),
    ] {
        set(&mut enc, name, &[v]);
    }
    enc
}

fn final_scores(enc: &Encoder<f64>, g: &HeteroGraph<f64>) -> Vec<f64> {
    let mut tape = Tape::new();
    let vars = enc.bind(&mut tape, false).unwrap();
    let fwd = enc.forward(&mut tape, &vars, g, &[]).unwrap();
    let block = fwd.attention.iter().find(|b| b.target == NodeTypeId(1)).unwrap();
    tape.value(block.scores).data().to_vec()
}

#[test]
fn hand_set_single_edge_scores_six() {
    let g = bipartite(1, 1, vec![(0, 0)], Tensor64::filled(&[1, 1], 1.0), Tensor64::filled(&[1, 1], 1.0));
    assert_eq!(final_scores(&hand_encoder(&g), &g), vec![6.0]);
}

#[test]
fn zero_states_give_zero_scores_and_scores_are_linear_in_w() {
    let g = bipartite(3, 2, vec![(0, 0), (1, 0), (2, 1)], rand_matrix(3, 2, 4), rand_matrix(2, 3, 5));
    let mut enc = Encoder::<f64>::new(config(1, 4, 2, 2, Activation::Tanh), g.schema(), NodeTypeId(1), 2).unwrap();
    let base = final_scores(&enc, &g);
    let w = enc.params().by_name("layer0.att.uv").unwrap().map(|v| 2.0 * v);
    set(&mut enc, "layer0.att.uv", w.data());
    let doubled = final_scores(&enc, &g);
    for (a, b) in base.iter().zip(&doubled) {
        assert!((2.0 * a - b).abs() < 1e-12);
    }
    let zero = bipartite(3, 2, vec![(0, 0), (1, 0), (2, 1)], Tensor64::zeros(&[3, 2]), Tensor64::zeros(&[2, 3]));
    assert!(final_scores(&enc, &zero).iter().all(|&s| s == 0.0));
}

#[test]
fn singleton_and_tied_neighborhoods() {
    let g = bipartite(
        2,
        2,
        vec![(0, 0), (0, 1), (1, 1)],
        Tensor64::filled(&[2, 1], 1.0),
        Tensor64::filled(&[2, 1], 1.0),
    );
    let enc = hand_encoder(&g);
    let out = enc.encode(&g, &[]).unwrap();
    let r = out.attention.relation(g.schema().edge_type_by_name("uv").unwrap()).unwrap();
    assert_eq!(r.alpha, vec![1.0, 0.5, 0.5]);
}

#[test]
fn neighbor_order_does_not_change_states() {
    let g = random_hetero(5, 12, 8, 0.3, (3, 2));
    let enc = Encoder::<f64>::new(config(2, 4, 2, 3, Activation::Tanh), g.schema(), NodeTypeId(0), 1).unwrap();
    let mut shuffled = g.declared_edges();
    let mut rng = Mix(3);
    for list in &mut shuffled {
        for i in (1..list.len()).rev() {
            list.swap(i, rng.below(i + 1));
        }
    }
    let g2 = g.with_edges(shuffled).unwrap();
    assert_eq!(enc.encode(&g, &[]).unwrap(), enc.encode(&g2, &[]).unwrap());
}

#[test]
fn relabeling_nodes_permutes_predictions() {
    let g = random_hetero(8, 8, 4, 0.35, (3, 2));
    let enc = Encoder::<f64>::new(config(2, 4, 2, 3, Activation::Tanh), g.schema(), NodeTypeId(0), 4).unwrap();
    let perm = [3, 0, 7, 5, 1, 6, 2, 4];
    let xa = g.features(NodeTypeId(0));
    let mut xp = Tensor64::zeros(xa.shape());
    for (old, &new) in perm.iter().enumerate() {
        xp.row_mut(new).copy_from_slice(xa.row(old));
    }
    let edges = g.declared_edges();
    let ab = edges[0].iter().map(|&(s, t)| (perm[s], t)).collect();
    let aa = edges[1].iter().map(|&(s, t)| (perm[s], perm[t])).collect();
    let gp = HeteroGraph::new(
        g.schema().clone(),
        vec![8, 4],
        vec![xp, g.features(NodeTypeId(1)).clone()],
        vec![ab, aa],
    )
    .unwrap();
    let (z, zp) = (enc.encode(&g, &[]).unwrap().z, enc.encode(&gp, &[]).unwrap().z);
    for (old, &new) in perm.iter().enumerate() {
        for c in 0..3 {
            assert!((z.get(old, c) - zp.get(new, c)).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_layers_classifies_input_states() {
    let g = random_hetero(2, 5, 3, 0.4, (2, 2));
    let enc = Encoder::<f64>::new(config(0, 4, 2, 2, Activation::Tanh), g.schema(), NodeTypeId(0), 0).unwrap();
    let out = enc.encode(&g, &[]).unwrap();
    assert_eq!(out.hidden.len(), 1);
    let h = &out.input_states()[0];
    let w = enc.params().by_name("classifier.w").unwrap();
    for i in 0..5 {
        let logits: Vec<f64> = (0..2).map(|c| (0..4).map(|j| h.get(i, j) * w.get(j, c)).sum()).collect();
        let m = logits[0].max(logits[1]);
        let den: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        assert!(((logits[0] - m).exp() / den - out.z.get(i, 0)).abs() < 1e-12);
    }
}

#[test]
fn attention_rows_normalize_and_z_rows_sum_to_one() {
    for seed in 0..10 {
        let g = random_hetero(seed, 30, 20, 0.1, (3, 4));
        let enc = Encoder::<f64>::new(config(2, 8, 4, 3, Activation::Tanh), g.schema(), NodeTypeId(0), seed).unwrap();
        let out = enc.encode(&g, &[]).unwrap();
        assert!(out.attention.normalization_error(g.schema(), g.node_counts()) < 1e-6);
        for i in 0..out.z.rows() {
            assert!((out.z.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn overlay_replaces_only_listed_input_rows() {
    let g = random_hetero(6, 6, 3, 0.4, (2, 2));
    let enc = Encoder::<f64>::new(config(1, 4, 2, 2, Activation::Tanh), g.schema(), NodeTypeId(0), 0).unwrap();
    let base = enc.encode(&g, &[]).unwrap();
    let ov = InputOverlay {
        ty: NodeTypeId(0),
        rows: vec![2],
        values: Tensor64::matrix(1, 4, vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
    };
    let out = enc.encode(&g, &[ov]).unwrap();
    let (h, h0) = (&out.input_states()[0], &base.input_states()[0]);
    assert_eq!(h.row(2), &[0.1, 0.2, 0.3, 0.4]);
    for i in [0, 1, 3, 4, 5] {
        assert_eq!(h.row(i), h0.row(i));
    }
}

#[test]
fn parameter_count_is_a_function_of_the_schema() {
    let g = random_hetero(0, 4, 4, 0.5, (3, 5));
    let enc = Encoder::<f64>::new(config(2, 8, 2, 3, Activation::Tanh), g.schema(), NodeTypeId(0), 0).unwrap();
    let (d, dh, l, rels) = (8, 4, 2, 4);
    let expected = (3 + 5) * d + l * (2 * 3 * d * d + rels * (dh * dh + 1)) + d * 3 + 3;
    assert_eq!(enc.params().scalar_count(), expected);
    let other = Encoder::<f64>::new(config(2, 8, 2, 3, Activation::Tanh), g.schema(), NodeTypeId(0), 99).unwrap();
    assert_eq!(other.params().names(), enc.params().names());
}

#[test]
fn full_encoder_gradient_matches_finite_differences() {
    let g = random_hetero(12, 7, 5, 0.35, (3, 2));
    let labels = [0usize, 1, 2, 1, 0, 2, 1];
    for act in [Activation::Tanh, Activation::Sigmoid] {
        let enc = Encoder::<f64>::new(config(2, 4, 2, 3, act), g.schema(), NodeTypeId(0), 5).unwrap();
        let inputs: Vec<Tensor64> = enc.params().tensors().to_vec();
        let mut onehot = Tensor64::zeros(&[7, 3]);
        for (i, &c) in labels.iter().enumerate() {
            onehot.set(i, c, 1.0);
        }
        let err = gradcheck(&inputs, 1e-5, |tape, vars| {
            let fwd = enc.forward(tape, vars, &g, &[]).unwrap();
            let logz = tape.log(fwd.z)?;
            let y = tape.constant(onehot.clone())?;
            let picked = tape.mul(logz, y)?;
            let s = tape.sum(picked)?;
            tape.mul_scalar(s, -1.0 / 7.0)
        });
        assert!(err < 1e-4, "{act}: {err}");
    }
}
