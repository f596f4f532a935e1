//! Generates a small synthetic dataset with two noise profiles and writes it
//! next to its manifest.
//!
//! Usage: `cargo run --example simulate_dataset -- [out.json]`

use torso_pose::geometry::Rig;
use torso_pose::sim::{generate_dataset, write_dataset, DatasetConfig, GenerationProfile, NoiseModel};

fn main() -> torso_pose::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic.json".into());
    let config = DatasetConfig {
        profiles: vec![
            GenerationProfile { label: "simulated".into(), frames: 900, noise: NoiseModel::moderate() },
            GenerationProfile { label: "occluded".into(), frames: 100, noise: NoiseModel::occluded() },
        ],
        ..DatasetConfig::single(0, NoiseModel::none(), 42)
    };
    let (dataset, manifest) = generate_dataset(&Rig::three_camera_default(), &config)?;
    let manifest_file = write_dataset(&dataset, &manifest, out.as_ref())?;
    println!(
        "{} frames, {} observations, config {}",
        manifest.frames,
        manifest.observations,
        &manifest.config_hash[..12]
    );
    println!("wrote {out} and {}", manifest_file.display());
    Ok(())
}
