//! Random hyperparameter search over GAT architectures on a small dataset.

use torso_pose::geometry::Rig;
use torso_pose::graph::FeatureMode;
use torso_pose::nn::{encode_dataset, random_search, Family, SearchSpace, TrainConfig};
use torso_pose::sim::{generate_dataset, DatasetConfig, NoiseModel};

fn main() -> torso_pose::Result<()> {
    let rig = Rig::three_camera_default();
    let data = |frames, seed| {
        let cfg = DatasetConfig { rate_hz: 5.0, ..DatasetConfig::single(frames, NoiseModel::moderate(), seed) };
        generate_dataset(&rig, &cfg).and_then(|(d, _)| encode_dataset(&d, Family::Gat, FeatureMode::ThreeD))
    };
    let (train_set, dev_set) = (data(400, 11)?, data(100, 12)?);
    let space = SearchSpace { layers: (2, 3), hidden: (16, 48), ..SearchSpace::default() };
    let base = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let outcome = random_search(&space, Family::Gat, FeatureMode::ThreeD, 3, &train_set, &dev_set, 6, &base, 5, |i, t| {
        let a = &t.candidate.architecture;
        println!(
            "trial {i}: hidden {:?} x{} heads, {:?}, lr {:.1e} -> dev {:.5}",
            a.hidden, a.heads, a.activation, t.candidate.learning_rate, t.dev.global
        );
    })?;
    println!("best: {:?} (dev {:.5})", outcome.best.architecture.hidden, outcome.best_dev.global);
    Ok(())
}
