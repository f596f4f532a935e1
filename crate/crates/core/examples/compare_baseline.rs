//! Trains a small GAT and MLP on occluded data and compares them with the
//! analytical estimator on the same held-out set.

use torso_pose::eval::{compare, evaluate_baseline, evaluate_model};
use torso_pose::geometry::Rig;
use torso_pose::graph::FeatureMode;
use torso_pose::nn::{encode_dataset, train, Activation, ArchitectureParams, Family, ModelSpec, TrainConfig};
use torso_pose::sim::{generate_dataset, DatasetConfig, NoiseModel};

fn main() -> torso_pose::Result<()> {
    let rig = Rig::three_camera_default();
    let data = |frames, seed| {
        let cfg = DatasetConfig { rate_hz: 5.0, ..DatasetConfig::single(frames, NoiseModel::occluded(), seed) };
        generate_dataset(&rig, &cfg).map(|(d, _)| d)
    };
    let (train_data, dev_data, test_data) = (data(1500, 21)?, data(200, 22)?, data(300, 23)?);
    let mut reports = Vec::new();
    for family in [Family::Mlp, Family::Gat] {
        let arch = ArchitectureParams {
            family,
            hidden: vec![32, 32],
            head_hidden: vec![64],
            activation: Activation::Relu,
            heads: 2,
            bases: 7,
        };
        let spec = ModelSpec::build(&arch, FeatureMode::ThreeD, 3)?;
        let cfg = TrainConfig { epochs: 6, lr_decay: 0.9, ..TrainConfig::default() };
        let outcome = train(
            &spec,
            &encode_dataset(&train_data, family, FeatureMode::ThreeD)?,
            &encode_dataset(&dev_data, family, FeatureMode::ThreeD)?,
            &cfg,
        )?;
        reports.push(evaluate_model(&outcome.model, &test_data, Some("occluded".into()))?);
    }
    reports.push(evaluate_baseline(&test_data)?);
    let refs: Vec<_> = reports.iter().collect();
    print!("{}", compare(&refs)?.render());
    Ok(())
}
