mod common;

use common::{random_edges, random_matrix, topology};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torso_pose::geometry::Rig;
use torso_pose::graph::{Edge, FeatureMode};
use torso_pose::nn::{
    encode_dataset, predict, Activation, ArchitectureParams, Family, HeadMerge, Layer, LayerKind, LayerSpec, Matrix,
    Model, ModelInput, ModelSpec,
};
use torso_pose::sim::{generate_dataset, DatasetConfig, NoiseModel};

fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for (old, &new) in perm.iter().enumerate() {
        out.row_mut(new).copy_from_slice(m.row(old));
    }
    out
}

#[test]
fn graph_layers_are_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let kinds = [
        LayerKind::Gcn,
        LayerKind::Rgcn { num_relations: 7, num_bases: 4 },
        LayerKind::Gat { heads: 3, merge: HeadMerge::Concat },
        LayerKind::Gat { heads: 2, merge: HeadMerge::Mean },
    ];
    for kind in kinds {
        for _ in 0..10 {
            let n = rng.gen_range(5..=60);
            let edges = random_edges(n, 2 * n, &mut rng);
            let out = match kind {
                LayerKind::Gat { heads, merge: HeadMerge::Concat } => 2 * heads,
                _ => 4,
            };
            let spec = LayerSpec { kind, input: 5, output: out, activation: Activation::Tanh };
            let layer = Layer::init(spec, &mut rng).unwrap();
            let h = random_matrix(n, 5, &mut rng);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let permuted_edges: Vec<Edge> = edges
                .iter()
                .map(|e| Edge { src: perm[e.src], dst: perm[e.dst], relation: e.relation })
                .collect();
            let base = layer.forward(&h, Some(&topology(n, &edges))).unwrap().out;
            let moved = layer
                .forward(&permute_rows(&h, &perm), Some(&topology(n, &permuted_edges)))
                .unwrap()
                .out;
            assert_eq!(moved, permute_rows(&base, &perm), "{kind:?}");
        }
    }
}

#[test]
fn superbody_prediction_is_permutation_invariant() {
    let rig = Rig::three_camera_default();
    let (dataset, _) = generate_dataset(&rig, &DatasetConfig::single(6, NoiseModel::moderate(), 8)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for family in [Family::Gcn, Family::Rgcn, Family::Gat] {
        let arch = ArchitectureParams {
            family,
            hidden: vec![8, 8],
            head_hidden: vec![],
            activation: Activation::Relu,
            heads: 2,
            bases: 3,
        };
        let model = Model::new(ModelSpec::build(&arch, FeatureMode::ThreeD, 3).unwrap(), 4).unwrap();
        for example in encode_dataset(&dataset, family, FeatureMode::ThreeD).unwrap() {
            let ModelInput::Graph(graph) = example.input else {
                panic!("graph family produced view blocks");
            };
            let base = predict(&model, &graph, &rig.room).unwrap();
            for _ in 0..3 {
                let mut perm: Vec<usize> = (0..graph.num_nodes()).collect();
                perm.shuffle(&mut rng);
                let moved = predict(&model, &graph.permuted(&perm).unwrap(), &rig.room).unwrap();
                assert_eq!(moved, base, "{family:?}");
            }
        }
    }
}
