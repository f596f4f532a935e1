//! Frame-by-frame inference: observations are associated to people and each
//! confirmed person's latest views go through a freshly trained model.

use torso_pose::geometry::Rig;
use torso_pose::graph::{assemble_person_graph, FeatureMode};
use torso_pose::matcher::{latest_views, Matcher, MatcherConfig, TrackStatus};
use torso_pose::nn::{encode_dataset, predict, train, Activation, ArchitectureParams, Family, ModelSpec, TrainConfig};
use torso_pose::sim::{generate_dataset, DatasetConfig, NoiseModel};

fn main() -> torso_pose::Result<()> {
    let rig = Rig::three_camera_default();
    let one = |frames, seed| {
        let cfg = DatasetConfig { rate_hz: 5.0, ..DatasetConfig::single(frames, NoiseModel::moderate(), seed) };
        generate_dataset(&rig, &cfg).and_then(|(d, _)| encode_dataset(&d, Family::Rgcn, FeatureMode::ThreeD))
    };
    let arch = ArchitectureParams {
        family: Family::Rgcn,
        hidden: vec![32, 32],
        head_hidden: vec![],
        activation: Activation::Relu,
        heads: 1,
        bases: 7,
    };
    let spec = ModelSpec::build(&arch, FeatureMode::ThreeD, 3)?;
    let model = train(&spec, &one(800, 31)?, &one(100, 32)?, &TrainConfig { epochs: 5, ..TrainConfig::default() })?.model;

    let stream = DatasetConfig { persons: 2, ..DatasetConfig::single(60, NoiseModel::moderate(), 33) };
    let (live, _) = generate_dataset(&rig, &stream)?;
    let mut matcher = Matcher::new(MatcherConfig::default())?;
    for (i, frame) in live.frames.iter().enumerate() {
        matcher.step(frame)?;
        if i % 10 != 9 {
            continue;
        }
        for track in matcher.tracks().filter(|t| t.status == TrackStatus::Confirmed) {
            let views = latest_views(track, rig.num_cameras())?;
            let graph = assemble_person_graph(&views, FeatureMode::ThreeD, &rig)?;
            let est = predict(&model, &graph, &rig.room)?;
            println!(
                "t={:5.2} person {}: ({:+.2}, {:+.2}) m, {:+.0} deg",
                frame.timestamp,
                track.person_id,
                est.x,
                est.y,
                est.alpha.to_degrees()
            );
        }
    }
    let truth = live.ground_truth.iter().rev().take(2);
    for g in truth {
        println!("truth person {:?}: ({:+.2}, {:+.2}) m, {:+.0} deg", g.person, g.x, g.y, g.alpha.to_degrees());
    }
    Ok(())
}
