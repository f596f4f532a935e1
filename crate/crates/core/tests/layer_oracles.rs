mod common;

use common::oracles::{gat_oracle, gcn_oracle, rgcn_oracle, row_times};
use common::{max_abs_diff, random_edges, random_matrix, topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torso_pose::graph::{Edge, EdgeRelation};
use torso_pose::nn::{Activation, HeadMerge, Layer, LayerKind, LayerSpec, Matrix};

const TOL: f64 = 1e-12;

fn layer(kind: LayerKind, input: usize, output: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Layer {
    let mut l = Layer::init(LayerSpec { kind, input, output, activation }, rng).unwrap();
    let last = l.params.len() - 1;
    l.params[last] = random_matrix(1, output, rng);
    l
}

fn activations() -> [Activation; 3] {
    [Activation::Identity, Activation::Relu, Activation::Tanh]
}

#[test]
fn gcn_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..12 {
        let n = rng.gen_range(5..=60);
        let edges = random_edges(n, rng.gen_range(n..3 * n), &mut rng);
        let (fin, fout) = (rng.gen_range(1..9), rng.gen_range(1..9));
        let a = activations()[trial % 3];
        let l = layer(LayerKind::Gcn, fin, fout, a, &mut rng);
        let h = random_matrix(n, fin, &mut rng);
        let got = l.forward(&h, Some(&topology(n, &edges))).unwrap().out;
        let want = gcn_oracle(&h, &edges, &l.params[0], &l.params[1], a);
        assert!(max_abs_diff(&got, &want) < TOL);
    }
}

#[test]
fn gcn_three_node_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut edges = random_edges(3, 0, &mut rng);
    for (s, d) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
        edges.push(Edge { src: s, dst: d, relation: EdgeRelation::KinematicUp });
    }
    let l = layer(LayerKind::Gcn, 4, 3, Activation::Identity, &mut rng);
    let h = random_matrix(3, 4, &mut rng);
    let got = l.forward(&h, Some(&topology(3, &edges))).unwrap().out;
    let want = gcn_oracle(&h, &edges, &l.params[0], &l.params[1], Activation::Identity);
    assert!(max_abs_diff(&got, &want) < TOL);
}

#[test]
fn gcn_single_node_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut l = layer(LayerKind::Gcn, 3, 3, Activation::Identity, &mut rng);
    l.params[0] = Matrix::identity(3);
    l.params[1] = Matrix::zeros(1, 3);
    let h = Matrix::from_vec(1, 3, vec![0.3, -1.2, 7.0]).unwrap();
    let edges = random_edges(1, 0, &mut rng);
    let out = l.forward(&h, Some(&topology(1, &edges))).unwrap().out;
    assert_eq!(out, h);
}

#[test]
fn gcn_width_mismatch_is_shape_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let l = layer(LayerKind::Gcn, 3, 2, Activation::Identity, &mut rng);
    let h = random_matrix(2, 4, &mut rng);
    let edges = random_edges(2, 1, &mut rng);
    assert!(matches!(
        l.forward(&h, Some(&topology(2, &edges))),
        Err(torso_pose::Error::Shape(_))
    ));
}

#[test]
fn rgcn_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..12 {
        let n = rng.gen_range(5..=60);
        let edges = random_edges(n, rng.gen_range(n..3 * n), &mut rng);
        let (fin, fout) = (rng.gen_range(1..9), rng.gen_range(1..9));
        let relations = EdgeRelation::NUM_NEIGHBOR_RELATIONS;
        let bases = rng.gen_range(1..=relations);
        let a = activations()[trial % 3];
        let mut l = layer(LayerKind::Rgcn { num_relations: relations, num_bases: bases }, fin, fout, a, &mut rng);
        l.params[1] = random_matrix(relations, bases, &mut rng);
        let h = random_matrix(n, fin, &mut rng);
        let got = l.forward(&h, Some(&topology(n, &edges))).unwrap().out;
        let want = rgcn_oracle(&h, &edges, &l.params, relations, bases, a);
        assert!(max_abs_diff(&got, &want) < TOL, "trial {trial}");
    }
}

#[test]
fn rgcn_single_relation_reduces_to_mean_gcn() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 20;
    let mut edges = random_edges(n, 40, &mut rng);
    for e in edges.iter_mut().filter(|e| e.relation != EdgeRelation::SelfLoop) {
        e.relation = EdgeRelation::KinematicUp;
    }
    let mut l = layer(LayerKind::Rgcn { num_relations: 1, num_bases: 1 }, 5, 4, Activation::Tanh, &mut rng);
    l.params[0] = Matrix::zeros(5, 4);
    let h = random_matrix(n, 5, &mut rng);
    let got = l.forward(&h, Some(&topology(n, &edges))).unwrap().out;
    let w = &l.params[2];
    let want = Matrix::from_fn(n, 4, |i, k| {
        let nbrs: Vec<&Edge> = edges.iter().filter(|e| e.dst == i && e.src != e.dst).collect();
        let mut s = l.params[3].get(0, k);
        for e in &nbrs {
            s += row_times(&h, e.src, w)[k] / nbrs.len() as f64;
        }
        s.tanh()
    });
    assert!(max_abs_diff(&got, &want) < TOL);
}

#[test]
fn rgcn_without_neighbors_is_self_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut l = layer(LayerKind::Rgcn { num_relations: 7, num_bases: 3 }, 4, 3, Activation::Identity, &mut rng);
    l.params[5] = Matrix::zeros(1, 3);
    let h = random_matrix(4, 4, &mut rng);
    let edges = random_edges(4, 0, &mut rng);
    let got = l.forward(&h, Some(&topology(4, &edges))).unwrap().out;
    assert!(max_abs_diff(&got, &h.matmul(&l.params[0]).unwrap()) < TOL);
}

#[test]
fn rgcn_full_basis_equals_free_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let n = 30;
    let edges = random_edges(n, 60, &mut rng);
    let l = layer(LayerKind::Rgcn { num_relations: 7, num_bases: 7 }, 5, 4, Activation::Relu, &mut rng);
    assert_eq!(l.params[1], Matrix::identity(7));
    let h = random_matrix(n, 5, &mut rng);
    let got = l.forward(&h, Some(&topology(n, &edges))).unwrap().out;
    let want = Matrix::from_fn(n, 4, |i, k| {
        let mut s = l.params[9].get(0, k) + row_times(&h, i, &l.params[0])[k];
        for r in 0..7 {
            let nbrs: Vec<&Edge> =
                edges.iter().filter(|e| e.dst == i && e.src != e.dst && e.relation.index() == r).collect();
            for e in &nbrs {
                s += row_times(&h, e.src, &l.params[2 + r])[k] / nbrs.len() as f64;
            }
        }
        s.max(0.0)
    });
    assert!(max_abs_diff(&got, &want) < TOL);
}

#[test]
fn rgcn_rejects_relation_without_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let l = layer(LayerKind::Rgcn { num_relations: 2, num_bases: 1 }, 3, 3, Activation::Identity, &mut rng);
    let mut edges = random_edges(3, 0, &mut rng);
    edges.push(Edge { src: 0, dst: 1, relation: EdgeRelation::SuperBody });
    let h = random_matrix(3, 3, &mut rng);
    assert!(matches!(
        l.forward(&h, Some(&topology(3, &edges))),
        Err(torso_pose::Error::Graph(_))
    ));
}

#[test]
fn gat_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..12 {
        let n = if trial == 0 { 5 } else { rng.gen_range(5..=60) };
        let edges = random_edges(n, rng.gen_range(n..3 * n), &mut rng);
        let heads = rng.gen_range(1..=4);
        let merge = if trial % 2 == 0 { HeadMerge::Concat } else { HeadMerge::Mean };
        let hw = rng.gen_range(1..6);
        let out = if merge == HeadMerge::Concat { hw * heads } else { hw };
        let fin = rng.gen_range(1..9);
        let a = activations()[trial % 3];
        let l = layer(LayerKind::Gat { heads, merge }, fin, out, a, &mut rng);
        let h = random_matrix(n, fin, &mut rng);
        let got = l.forward(&h, Some(&topology(n, &edges))).unwrap().out;
        let want = gat_oracle(&h, &edges, &l.params, heads, merge, out, a);
        assert!(max_abs_diff(&got, &want) < TOL, "trial {trial}");
    }
}

#[test]
fn gat_singleton_attention_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let l = layer(LayerKind::Gat { heads: 1, merge: HeadMerge::Mean }, 3, 2, Activation::Tanh, &mut rng);
    let h = random_matrix(1, 3, &mut rng);
    let edges = random_edges(1, 0, &mut rng);
    let cache = l.forward(&h, Some(&topology(1, &edges))).unwrap();
    assert_eq!(l.attention(&cache).unwrap().as_slice(), &[1.0]);
    let mut z = h.matmul(&l.params[0]).unwrap();
    z.add_row_broadcast(l.params[2].as_slice()).unwrap();
    assert!(max_abs_diff(&cache.out, &Activation::Tanh.apply(&z)) < TOL);
}

#[test]
fn gat_attention_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..10 {
        let n = rng.gen_range(5..=60);
        let edges = random_edges(n, 2 * n, &mut rng);
        let heads = rng.gen_range(1..=4);
        let l = layer(LayerKind::Gat { heads, merge: HeadMerge::Concat }, 4, 2 * heads, Activation::Relu, &mut rng);
        let topo = topology(n, &edges);
        let cache = l.forward(&random_matrix(n, 4, &mut rng), Some(&topo)).unwrap();
        let alpha = l.attention(&cache).unwrap();
        for i in 0..n {
            for k in 0..heads {
                let s: f64 = (topo.in_offsets[i]..topo.in_offsets[i + 1]).map(|e| alpha.get(e, k)).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn gat_node_without_in_edges_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let l = layer(LayerKind::Gat { heads: 1, merge: HeadMerge::Mean }, 2, 2, Activation::Identity, &mut rng);
    let edges = vec![Edge { src: 0, dst: 0, relation: EdgeRelation::SelfLoop }];
    let h = random_matrix(2, 2, &mut rng);
    assert!(l.forward(&h, Some(&topology(2, &edges))).is_err());
}
