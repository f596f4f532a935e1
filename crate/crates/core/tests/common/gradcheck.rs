use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torso_pose::geometry::Rig;
use torso_pose::graph::FeatureMode;
use torso_pose::nn::{encode_dataset, Activation, ArchitectureParams, Batch, Example, Family, Matrix, Model, ModelSpec};
use torso_pose::sim::{generate_dataset, DatasetConfig, NoiseModel};

use super::random_matrix;

pub const EPS: f64 = 1e-6;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

pub fn examples(family: Family, mode: FeatureMode, seed: u64) -> Vec<Example> {
    let (dataset, _) = generate_dataset(
        &Rig::three_camera_default(),
        &DatasetConfig::single(4, NoiseModel::moderate(), seed),
    )
    .unwrap();
    encode_dataset(&dataset, family, mode).unwrap()
}

fn targets(examples: &[&Example]) -> Matrix {
    Matrix::from_vec(examples.len(), 4, examples.iter().flat_map(|e| e.target).collect()).unwrap()
}

/// Largest relative error between analytic gradients and central
/// differences over a random sample of parameter entries.
pub fn max_gradient_error(model: &mut Model, examples: &[Example], rng: &mut ChaCha8Rng, samples: usize) -> f64 {
    let refs: Vec<&Example> = examples.iter().collect();
    let batch = Batch::from_examples(&refs).unwrap();
    let target = targets(&refs);
    let (_, grads) = model.loss_and_gradients(&batch, &target).unwrap();
    let loss = |m: &Model| m.loss_and_gradients(&batch, &target).unwrap().0.global;
    let mut worst: f64 = 0.0;
    for l in 0..model.layers.len() {
        for p in 0..model.layers[l].params.len() {
            let len = model.layers[l].params[p].as_slice().len();
            for _ in 0..samples.min(len) {
                let k = rng.gen_range(0..len);
                let orig = model.layers[l].params[p].as_slice()[k];
                model.layers[l].params[p].as_mut_slice()[k] = orig + EPS;
                let up = loss(model);
                model.layers[l].params[p].as_mut_slice()[k] = orig - EPS;
                let down = loss(model);
                model.layers[l].params[p].as_mut_slice()[k] = orig;
                let numeric = (up - down) / (2.0 * EPS);
                let err = relative_error(grads.0[l][p].as_slice()[k], numeric);
                worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
            }
        }
    }
    worst
}

pub fn params(family: Family, hidden: Vec<usize>, activation: Activation, heads: usize, bases: usize) -> ArchitectureParams {
    ArchitectureParams {
        family,
        head_hidden: if family == Family::Mlp { vec![5] } else { vec![] },
        hidden,
        activation,
        heads,
        bases,
    }
}

fn configs(family: Family) -> Vec<(ArchitectureParams, FeatureMode)> {
    let modes = [FeatureMode::TwoD, FeatureMode::ThreeD];
    (0..5)
        .map(|i| {
            let act = if i % 2 == 0 { Activation::Tanh } else { Activation::Relu };
            let hidden = vec![4 + i, 3 + (i % 3)];
            (params(family, hidden, act, 1 + i % 3, 1 + 2 * i % 7), modes[i % 2])
        })
        .collect()
}

/// Worst gradient error of `family` over five architectures, each on its own
/// random data with random biases.
pub fn family_max_error(family: Family, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for (i, (arch, mode)) in configs(family).into_iter().enumerate() {
        let data = examples(family, mode, seed + i as u64);
        let spec = ModelSpec::build(&arch, mode, 3).unwrap();
        let mut model = Model::new(spec, seed + i as u64).unwrap();
        for layer in &mut model.layers {
            let last = layer.params.len() - 1;
            let cols = layer.params[last].cols();
            layer.params[last] = random_matrix(1, cols, &mut rng);
        }
        worst = worst.max(max_gradient_error(&mut model, &data, &mut rng, 25));
    }
    worst
}
