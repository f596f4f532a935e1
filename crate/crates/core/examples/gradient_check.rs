//! Compares backpropagated gradients with central differences for every
//! architecture on a handful of simulated samples.

use torso_pose::geometry::Rig;
use torso_pose::graph::FeatureMode;
use torso_pose::nn::{encode_dataset, Activation, ArchitectureParams, Batch, Example, Family, Matrix, Model, ModelSpec};
use torso_pose::sim::{generate_dataset, DatasetConfig, NoiseModel};

const EPS: f64 = 1e-6;

fn main() -> torso_pose::Result<()> {
    let (dataset, _) = generate_dataset(&Rig::three_camera_default(), &DatasetConfig::single(4, NoiseModel::moderate(), 1))?;
    for family in [Family::Gcn, Family::Rgcn, Family::Gat, Family::Mlp] {
        let examples = encode_dataset(&dataset, family, FeatureMode::ThreeD)?;
        let refs: Vec<&Example> = examples.iter().collect();
        let batch = Batch::from_examples(&refs)?;
        let targets = Matrix::from_fn(refs.len(), 4, |i, j| refs[i].target[j]);
        let arch = ArchitectureParams {
            family,
            hidden: vec![6, 5],
            head_hidden: vec![4],
            activation: Activation::Tanh,
            heads: 2,
            bases: 3,
        };
        let mut model = Model::new(ModelSpec::build(&arch, FeatureMode::ThreeD, 3)?, 0)?;
        let (_, grads) = model.loss_and_gradients(&batch, &targets)?;
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for l in 0..model.layers.len() {
            for p in 0..model.layers[l].params.len() {
                let len = model.layers[l].params[p].as_slice().len();
                for k in (0..len).step_by(len / 10 + 1) {
                    let orig = model.layers[l].params[p].as_slice()[k];
                    model.layers[l].params[p].as_mut_slice()[k] = orig + EPS;
                    let up = model.loss_and_gradients(&batch, &targets)?.0.global;
                    model.layers[l].params[p].as_mut_slice()[k] = orig - EPS;
                    let down = model.loss_and_gradients(&batch, &targets)?.0.global;
                    model.layers[l].params[p].as_mut_slice()[k] = orig;
                    let numeric = (up - down) / (2.0 * EPS);
                    let analytic = grads.0[l][p].as_slice()[k];
                    worst = worst.max((analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6));
                    checked += 1;
                }
            }
        }
        println!(
            "{:<4} {:>6} parameters, {checked:>3} entries checked, max relative error {worst:.2e}",
            family.name(),
            model.num_parameters()
        );
    }
    Ok(())
}
