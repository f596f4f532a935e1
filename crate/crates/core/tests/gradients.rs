mod common;

use common::gradcheck::{examples, family_max_error, params, relative_error, EPS};
use common::{random_edges, random_matrix, topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torso_pose::graph::{Edge, EdgeRelation, FeatureMode};
use torso_pose::nn::{Activation, Batch, Example, Family, Layer, LayerKind, LayerSpec, Matrix, Model, ModelSpec};

fn check_family(family: Family, seed: u64) {
    let worst = family_max_error(family, seed);
    assert!(worst < 1e-4, "{family:?}: max relative error {worst:e}");
}

#[test]
fn gcn_gradients_match_finite_differences() {
    check_family(Family::Gcn, 100);
}

#[test]
fn rgcn_gradients_match_finite_differences() {
    check_family(Family::Rgcn, 200);
}

#[test]
fn gat_gradients_match_finite_differences() {
    check_family(Family::Gat, 300);
}

#[test]
fn mlp_gradients_match_finite_differences() {
    check_family(Family::Mlp, 400);
}

/// Single layers on synthetic graphs, with a linear readout of every node.
#[test]
fn layer_input_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let kinds = [
        LayerKind::Gcn,
        LayerKind::Rgcn { num_relations: 7, num_bases: 3 },
        LayerKind::Gat { heads: 2, merge: torso_pose::nn::HeadMerge::Concat },
        LayerKind::Gat { heads: 3, merge: torso_pose::nn::HeadMerge::Mean },
        LayerKind::Dense,
    ];
    for kind in kinds {
        for _ in 0..5 {
            let n = rng.gen_range(5..20);
            let edges = random_edges(n, 2 * n, &mut rng);
            let topo = topology(n, &edges);
            let out = match kind {
                LayerKind::Gat { heads, merge: torso_pose::nn::HeadMerge::Concat } => 2 * heads,
                _ => 3,
            };
            let spec = LayerSpec { kind, input: 4, output: out, activation: Activation::Tanh };
            let layer = Layer::init(spec, &mut rng).unwrap();
            let topo_ref = (kind != LayerKind::Dense).then_some(&topo);
            let h = random_matrix(n, 4, &mut rng);
            let probe = random_matrix(n, out, &mut rng);
            let objective = |x: &Matrix| layer.forward(x, topo_ref).unwrap().out.dot(&probe);
            let cache = layer.forward(&h, topo_ref).unwrap();
            let mut grads: Vec<Matrix> = layer.params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
            let d_in = layer.backward(&h, &cache, &probe, topo_ref, &mut grads).unwrap();
            for k in 0..h.as_slice().len() {
                let mut up = h.clone();
                up.as_mut_slice()[k] += EPS;
                let mut down = h.clone();
                down.as_mut_slice()[k] -= EPS;
                let numeric = (objective(&up) - objective(&down)) / (2.0 * EPS);
                assert!(relative_error(d_in.as_slice()[k], numeric) < 1e-4, "{kind:?}");
            }
        }
    }
}

#[test]
fn zero_loss_gives_zero_gradients() {
    for family in [Family::Gcn, Family::Rgcn, Family::Gat, Family::Mlp] {
        let data = examples(family, FeatureMode::ThreeD, 5);
        let spec = ModelSpec::build(&params(family, vec![6, 6], Activation::Tanh, 2, 7), FeatureMode::ThreeD, 3).unwrap();
        let model = Model::new(spec, 5).unwrap();
        let refs: Vec<&Example> = data.iter().collect();
        let batch = Batch::from_examples(&refs).unwrap();
        let pred = model.forward(&batch).unwrap();
        let (loss, grads) = model.loss_and_gradients(&batch, &pred).unwrap();
        assert_eq!(loss.global, 0.0);
        assert!(grads.tensors().all(|g| g.as_slice().iter().all(|&v| v == 0.0)));
    }
}

#[test]
fn unused_relation_gets_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 12;
    let mut edges = random_edges(n, 0, &mut rng);
    for i in 0..n - 1 {
        edges.push(Edge { src: i, dst: i + 1, relation: EdgeRelation::KinematicUp });
        edges.push(Edge { src: i + 1, dst: i, relation: EdgeRelation::KinematicDown });
    }
    let used = [EdgeRelation::KinematicUp.index(), EdgeRelation::KinematicDown.index()];
    let spec = LayerSpec {
        kind: LayerKind::Rgcn { num_relations: 7, num_bases: 7 },
        input: 3,
        output: 2,
        activation: Activation::Tanh,
    };
    let layer = Layer::init(spec, &mut rng).unwrap();
    let topo = topology(n, &edges);
    let h = random_matrix(n, 3, &mut rng);
    let cache = layer.forward(&h, Some(&topo)).unwrap();
    let mut grads: Vec<Matrix> = layer.params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
    layer
        .backward(&h, &cache, &random_matrix(n, 2, &mut rng), Some(&topo), &mut grads)
        .unwrap();
    for r in 0..7 {
        let coeff_row = grads[1].row(r);
        let basis = &grads[2 + r];
        if used.contains(&r) {
            assert!(basis.max_abs() > 0.0);
        } else {
            assert!(coeff_row.iter().all(|&v| v == 0.0), "relation {r}");
            assert_eq!(basis.max_abs(), 0.0, "relation {r}");
        }
    }
}
