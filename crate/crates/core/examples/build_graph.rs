//! Builds the multi-view skeleton graph for one simulated sample and
//! summarizes its nodes, edges and feature layout.

use std::collections::BTreeMap;

use torso_pose::geometry::Rig;
use torso_pose::graph::{assemble_person_graph, FeatureMode};
use torso_pose::sim::{generate_dataset, DatasetConfig, NoiseModel};

fn main() -> torso_pose::Result<()> {
    let (dataset, _) = generate_dataset(&Rig::three_camera_default(), &DatasetConfig::single(5, NoiseModel::moderate(), 9))?;
    let sample = &dataset.samples()[0];
    for mode in [FeatureMode::TwoD, FeatureMode::ThreeD] {
        let graph = assemble_person_graph(&sample.views, mode, &dataset.rig)?;
        let mut relations = BTreeMap::new();
        for e in &graph.edges {
            *relations.entry(format!("{:?}", e.relation)).or_insert(0) += 1;
        }
        println!(
            "{} mode: {} views, {} nodes, {} edges, feature width {}",
            mode.name(),
            sample.views.len(),
            graph.num_nodes(),
            graph.edges.len(),
            graph.features.cols()
        );
        for (relation, count) in relations {
            println!("  {relation:<14} {count}");
        }
    }
    if std::env::args().any(|a| a == "--dump") {
        println!("{}", assemble_person_graph(&sample.views, FeatureMode::ThreeD, &dataset.rig)?.to_json()?);
    }
    Ok(())
}
