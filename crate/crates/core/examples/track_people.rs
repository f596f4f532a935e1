//! Runs the appearance matcher over a simulated two-person stream and prints
//! the track lifecycle.

use torso_pose::geometry::Rig;
use torso_pose::matcher::{association_accuracy, Matcher, MatcherConfig};
use torso_pose::sim::{generate_dataset, DatasetConfig, NoiseModel};

fn main() -> torso_pose::Result<()> {
    let config = DatasetConfig {
        persons: 2,
        ..DatasetConfig::single(120, NoiseModel::moderate(), 3)
    };
    let (dataset, _) = generate_dataset(&Rig::three_camera_default(), &config)?;
    let mut matcher = Matcher::new(MatcherConfig::default())?;
    let mut pairs = Vec::new();
    for (i, frame) in dataset.frames.iter().enumerate() {
        let mut frame = frame.clone();
        // person 1 walks out after five seconds
        if frame.timestamp > 5.0 {
            frame.observations.retain(|o| o.person != Some(1));
        }
        let out = matcher.step(&frame)?;
        for e in &out.events {
            println!("frame {i:3} t={:5.2}  track {} {:?}", e.t, e.track, e.event);
        }
        pairs.extend(out.assignments.iter().map(|&(k, id)| (frame.observations[k].person.unwrap_or(0), id)));
    }
    println!("association accuracy {:.1}%", 100.0 * association_accuracy(&pairs));
    Ok(())
}
