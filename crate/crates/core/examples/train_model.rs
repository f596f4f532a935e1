//! Trains an RGCN on simulated data, saves the checkpoint and reports
//! held-out errors.
//!
//! Usage: `cargo run --release --example train_model -- [rgcn|gat|gcn|mlp] [epochs]`

use torso_pose::eval::evaluate_model;
use torso_pose::geometry::Rig;
use torso_pose::graph::FeatureMode;
use torso_pose::nn::{encode_dataset, train_with, Activation, ArchitectureParams, Family, ModelSpec, TrainConfig};
use torso_pose::sim::{generate_dataset, DatasetConfig, NoiseModel};

fn main() -> torso_pose::Result<()> {
    let mut args = std::env::args().skip(1);
    let family: Family = args.next().as_deref().unwrap_or("rgcn").parse()?;
    let epochs = args.next().map_or(Ok(15), |s| s.parse()).map_err(|_| torso_pose::Error::Config("epochs must be an integer".into()))?;

    let rig = Rig::three_camera_default();
    let data = |frames, seed| {
        let cfg = DatasetConfig { rate_hz: 5.0, ..DatasetConfig::single(frames, NoiseModel::moderate(), seed) };
        generate_dataset(&rig, &cfg).map(|(d, _)| d)
    };
    let (train_data, dev_data, test_data) = (data(2000, 1)?, data(300, 2)?, data(300, 3)?);
    let arch = ArchitectureParams {
        family,
        hidden: vec![64, 64],
        head_hidden: vec![64],
        activation: Activation::Relu,
        heads: 2,
        bases: 7,
    };
    let spec = ModelSpec::build(&arch, FeatureMode::ThreeD, rig.num_cameras())?;
    let cfg = TrainConfig { epochs, lr_decay: 0.9, ..TrainConfig::default() };
    let outcome = train_with(
        &spec,
        &encode_dataset(&train_data, family, FeatureMode::ThreeD)?,
        &encode_dataset(&dev_data, family, FeatureMode::ThreeD)?,
        &cfg,
        |r| println!("epoch {:2}  train {:.5}  dev {:.5}", r.epoch, r.train.global, r.dev.global),
    )?;
    println!("best epoch {} ({} parameters)", outcome.best_epoch, outcome.model.num_parameters());
    outcome.model.save("model.json".as_ref())?;
    let m = evaluate_model(&outcome.model, &test_data, Some("synthetic".into()))?.metrics;
    println!("test: position MAE {:.0} mm, orientation MAE {:.1} deg", m.position_mae_mm, m.orientation_mae_deg);
    Ok(())
}
