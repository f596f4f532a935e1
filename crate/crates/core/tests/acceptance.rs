//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed even when
//! earlier criteria fail. Exits non-zero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use common::gradcheck::family_max_error;
use common::oracles::{gat_oracle, gcn_oracle, rgcn_oracle};
use common::{max_abs_diff, random_edges, random_matrix, topology};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torso_pose::baseline::{wrap_angle, BaselineState};
use torso_pose::eval::{evaluate_baseline, evaluate_model};
use torso_pose::geometry::Rig;
use torso_pose::graph::{assemble_person_graph, Edge, EdgeRelation, FeatureLayout, FeatureMode};
use torso_pose::matcher::{association_accuracy, Matcher, MatcherConfig, PersonId, TrackEventKind};
use torso_pose::nn::{
    encode_dataset, predict, random_search, train, Activation, ArchitectureParams, Example, Family, HeadMerge, Layer,
    LayerKind, LayerSpec, Matrix, Model, ModelInput, ModelSpec, SearchSpace, TrainConfig,
};
use torso_pose::sim::{generate_dataset, DatasetConfig, NoiseModel};
use torso_pose::skeleton::Dataset;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn fixture(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)).unwrap()
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dataset(frames: usize, noise: NoiseModel, seed: u64, rate_hz: f64) -> Dataset {
    let cfg = DatasetConfig {
        rate_hz,
        ..DatasetConfig::single(frames, noise, seed)
    };
    generate_dataset(&Rig::three_camera_default(), &cfg).unwrap().0
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for (family, seed) in [(Family::Gcn, 100), (Family::Rgcn, 200), (Family::Gat, 300), (Family::Mlp, 400)] {
        let err = family_max_error(family, seed);
        worst = worst.max(err);
        parts.push(format!("{} {err:.1e}", family.name()));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst < 1e-4 && secs < 60.0,
        format!("max relative error {} over 5 configs each, {secs:.1} s", parts.join(", ")),
    )
}

fn layer_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut graphs = 0;
    for trial in 0..30 {
        let n = rng.gen_range(5..=60);
        let edges = random_edges(n, rng.gen_range(n..3 * n), &mut rng);
        let topo = topology(n, &edges);
        let fin = rng.gen_range(1..9);
        let h = random_matrix(n, fin, &mut rng);
        let act = [Activation::Identity, Activation::Relu, Activation::Tanh][trial % 3];
        let with_bias = |mut l: Layer, rng: &mut ChaCha8Rng| {
            let last = l.params.len() - 1;
            l.params[last] = random_matrix(1, l.params[last].cols(), rng);
            l
        };

        let gcn = with_bias(Layer::init(LayerSpec { kind: LayerKind::Gcn, input: fin, output: 5, activation: act }, &mut rng).unwrap(), &mut rng);
        let got = gcn.forward(&h, Some(&topo)).unwrap().out;
        worst = worst.max(max_abs_diff(&got, &gcn_oracle(&h, &edges, &gcn.params[0], &gcn.params[1], act)));

        let bases = rng.gen_range(1..=7);
        let kind = LayerKind::Rgcn { num_relations: 7, num_bases: bases };
        let mut rgcn = with_bias(Layer::init(LayerSpec { kind, input: fin, output: 5, activation: act }, &mut rng).unwrap(), &mut rng);
        rgcn.params[1] = random_matrix(7, bases, &mut rng);
        let got = rgcn.forward(&h, Some(&topo)).unwrap().out;
        worst = worst.max(max_abs_diff(&got, &rgcn_oracle(&h, &edges, &rgcn.params, 7, bases, act)));

        let heads = rng.gen_range(1..=4);
        let merge = if trial % 2 == 0 { HeadMerge::Concat } else { HeadMerge::Mean };
        let out = if merge == HeadMerge::Concat { 3 * heads } else { 3 };
        let kind = LayerKind::Gat { heads, merge };
        let gat = with_bias(Layer::init(LayerSpec { kind, input: fin, output: out, activation: act }, &mut rng).unwrap(), &mut rng);
        let got = gat.forward(&h, Some(&topo)).unwrap().out;
        worst = worst.max(max_abs_diff(&got, &gat_oracle(&h, &edges, &gat.params, heads, merge, out, act)));
        graphs += 1;
    }
    ensure(worst < 1e-12, format!("GCN/RGCN/GAT on {graphs} random 5-60 node graphs, max |diff| {worst:.1e}"))
}

fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for (old, &new) in perm.iter().enumerate() {
        out.row_mut(new).copy_from_slice(m.row(old));
    }
    out
}

fn permutation_symmetry() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let kinds = [
        LayerKind::Gcn,
        LayerKind::Rgcn { num_relations: 7, num_bases: 4 },
        LayerKind::Gat { heads: 3, merge: HeadMerge::Concat },
    ];
    let mut layer_checks = 0;
    for kind in kinds {
        for _ in 0..10 {
            let n = rng.gen_range(5..=60);
            let edges = random_edges(n, 2 * n, &mut rng);
            let out = if matches!(kind, LayerKind::Gat { .. }) { 6 } else { 4 };
            let layer = Layer::init(LayerSpec { kind, input: 5, output: out, activation: Activation::Tanh }, &mut rng).unwrap();
            let h = random_matrix(n, 5, &mut rng);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let moved: Vec<Edge> = edges
                .iter()
                .map(|e| Edge { src: perm[e.src], dst: perm[e.dst], relation: e.relation })
                .collect();
            let base = layer.forward(&h, Some(&topology(n, &edges))).unwrap().out;
            let after = layer.forward(&permute_rows(&h, &perm), Some(&topology(n, &moved))).unwrap().out;
            if after != permute_rows(&base, &perm) {
                return Err(format!("{kind:?} is not exactly equivariant"));
            }
            layer_checks += 1;
        }
    }
    let data = dataset(20, NoiseModel::moderate(), 4, 15.0);
    let mut model_checks = 0;
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
        for example in encode_dataset(&data, family, FeatureMode::ThreeD).unwrap() {
            let ModelInput::Graph(graph) = example.input else { unreachable!() };
            let base = predict(&model, &graph, &data.rig.room).unwrap();
            let mut perm: Vec<usize> = (0..graph.num_nodes()).collect();
            perm.shuffle(&mut rng);
            if predict(&model, &graph.permuted(&perm).unwrap(), &data.rig.room).unwrap() != base {
                return Err(format!("{} superbody prediction changed under relabeling", family.name()));
            }
            model_checks += 1;
        }
    }
    Ok(format!("{layer_checks} layer equivariance checks and {model_checks} superbody invariance checks, bitwise equal"))
}

fn encode(d: &Dataset) -> Vec<Example> {
    encode_dataset(d, Family::Rgcn, FeatureMode::ThreeD).unwrap()
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let noise = NoiseModel::from_json(&fixture("noise_moderate.json")).unwrap();
    let train_data = dataset(5000, noise, 1001, 5.0);
    let dev_data = dataset(500, noise, 1002, 5.0);
    let test_data = dataset(500, noise, 1003, 5.0);
    let train_set = encode(&train_data);
    let dev_set = encode(&dev_data);
    let subset: Vec<Example> = train_set.iter().step_by(3).cloned().collect();

    let space: SearchSpace = serde_json::from_str(&fixture("acceptance_search_space.json")).unwrap();
    let base = TrainConfig {
        epochs: 4,
        batch_size: 32,
        patience: 4,
        lr_decay: 0.9,
        ..TrainConfig::default()
    };
    let budget = 10;
    let search = random_search(&space, Family::Rgcn, FeatureMode::ThreeD, 3, &subset, &dev_set, budget, &base, 77, |i, t| {
        eprintln!("  trial {i}: {:?} lr {:.2e} dev {:.5}", t.candidate.architecture.hidden, t.candidate.learning_rate, t.dev.global);
    })
    .map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        learning_rate: search.best.learning_rate,
        epochs: 20,
        patience: 6,
        lr_decay: 0.9,
        seed: 77,
        ..TrainConfig::default()
    };
    let spec = search.best.spec(FeatureMode::ThreeD, 3).map_err(|e| e.to_string())?;
    let outcome = train(&spec, &train_set, &dev_set, &cfg).map_err(|e| e.to_string())?;
    let report = evaluate_model(&outcome.model, &test_data, Some("synthetic".into())).map_err(|e| e.to_string())?;
    let m = report.metrics;
    let secs = start.elapsed().as_secs_f64();
    ensure(
        m.orientation_mae_deg < 10.0 && m.position_mae_mm < 125.0 && secs < 1800.0 && budget >= 10,
        format!(
            "{} train / {} dev / {} test samples, budget {budget}, best RGCN hidden {:?} lr {:.1e}: held-out MAE {:.1} mm, {:.2} deg, {:.0} s",
            train_set.len(),
            dev_set.len(),
            report.samples,
            search.best.architecture.hidden,
            search.best.learning_rate,
            m.position_mae_mm,
            m.orientation_mae_deg,
            secs
        ),
    )
}

fn baseline_sanity() -> Check {
    let clean = dataset(600, NoiseModel::none(), 5001, 15.0);
    let mut state = BaselineState::default();
    let (mut max_angle, mut max_pos): (f64, f64) = (0.0, 0.0);
    for s in clean.samples() {
        let e = state.estimate(&s.views);
        if !(e.fresh_orientation && e.fresh_position) {
            return Err(format!("noise-free sample at t={} lacked a fresh estimate", s.t));
        }
        max_angle = max_angle.max(wrap_angle(e.alpha - s.truth.alpha).abs());
        max_pos = max_pos.max((e.x - s.truth.x).hypot(e.y - s.truth.y));
    }
    if !(max_angle < 1e-6 && max_pos < 0.25) {
        return Err(format!("noise-free baseline errors {max_angle:.1e} rad, {:.0} mm", max_pos * 1e3));
    }

    let noise = NoiseModel::from_json(&fixture("noise_occluded.json")).unwrap();
    let train_data = dataset(3000, noise, 5002, 5.0);
    let dev_data = dataset(300, noise, 5003, 5.0);
    let test_data = dataset(500, noise, 5004, 5.0);
    let arch = ArchitectureParams {
        family: Family::Rgcn,
        hidden: vec![64, 64],
        head_hidden: vec![],
        activation: Activation::Relu,
        heads: 1,
        bases: 7,
    };
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        epochs: 12,
        lr_decay: 0.9,
        seed: 5,
        ..TrainConfig::default()
    };
    let spec = ModelSpec::build(&arch, FeatureMode::ThreeD, 3).unwrap();
    let outcome = train(&spec, &encode(&train_data), &encode(&dev_data), &cfg).map_err(|e| e.to_string())?;
    let gnn = evaluate_model(&outcome.model, &test_data, None).map_err(|e| e.to_string())?.metrics;
    let baseline = evaluate_baseline(&test_data).map_err(|e| e.to_string())?.metrics;
    ensure(
        gnn.orientation_mse < baseline.orientation_mse,
        format!(
            "noise-free: max {max_angle:.1e} rad, {:.0} mm; occluded orientation MSE RGCN {:.4} vs baseline {:.4}",
            max_pos * 1e3,
            gnn.orientation_mse,
            baseline.orientation_mse
        ),
    )
}

fn matcher_tracking() -> Check {
    let cfg = DatasetConfig {
        persons: 2,
        ..DatasetConfig::single(150, NoiseModel::moderate(), 6001)
    };
    let frames = generate_dataset(&Rig::three_camera_default(), &cfg).unwrap().0.frames;
    let mut first = HashMap::new();
    let mut max_noise: f64 = 0.0;
    for obs in frames.iter().flat_map(|f| &f.observations) {
        let reference = first.entry(obs.person).or_insert_with(|| obs.histogram.clone());
        max_noise = max_noise.max(torso_pose::matcher::bhattacharyya_distance(&obs.histogram, reference));
    }

    let leave_at = 6.0;
    let mut matcher = Matcher::new(MatcherConfig::default()).unwrap();
    let mut assignments: Vec<(u32, PersonId)> = Vec::new();
    let mut created = HashMap::new();
    let mut confirm_delay = f64::INFINITY;
    let mut last_seen_1 = 0.0;
    let mut expiry_gap = None;
    for frame in &frames {
        let mut frame = frame.clone();
        if frame.timestamp >= leave_at {
            frame.observations.retain(|o| o.person != Some(1));
        }
        let out = matcher.step(&frame).map_err(|e| e.to_string())?;
        for (i, id) in out.assignments {
            let label = frame.observations[i].person.unwrap();
            if label == 1 {
                last_seen_1 = frame.timestamp;
            }
            assignments.push((label, id));
        }
        for e in out.events {
            match e.event {
                TrackEventKind::Created => {
                    created.insert(e.track, e.t);
                }
                TrackEventKind::Confirmed => confirm_delay = confirm_delay.min(e.t - created[&e.track]),
                TrackEventKind::Expired => expiry_gap = Some(e.t - last_seen_1),
            }
        }
    }
    let accuracy = association_accuracy(&assignments);
    let expiry_gap = expiry_gap.ok_or("the departed person never expired")?;
    ensure(
        max_noise < 0.3 && accuracy == 1.0 && created.len() == 2 && confirm_delay >= 2.0 && expiry_gap > 2.0,
        format!(
            "signature noise {max_noise:.3}, accuracy {:.1}%, {} tracks, confirmed after {confirm_delay:.2} s, expired after {expiry_gap:.2} s absent",
            accuracy * 100.0,
            created.len()
        ),
    )
}

fn determinism() -> Check {
    let rig = Rig::three_camera_default();
    let cfg = DatasetConfig::single(200, NoiseModel::occluded(), 7001);
    let a = generate_dataset(&rig, &cfg).unwrap();
    let b = generate_dataset(&rig, &cfg).unwrap();
    let same_data = a.0.to_json().unwrap() == b.0.to_json().unwrap() && a.1 == b.1;

    let examples = encode_dataset(&a.0, Family::Gat, FeatureMode::ThreeD).unwrap();
    let arch = ArchitectureParams {
        family: Family::Gat,
        hidden: vec![8, 8],
        head_hidden: vec![],
        activation: Activation::Relu,
        heads: 2,
        bases: 7,
    };
    let spec = ModelSpec::build(&arch, FeatureMode::ThreeD, 3).unwrap();
    let cfg = TrainConfig { epochs: 2, seed: 7, ..TrainConfig::default() };
    let m1 = train(&spec, &examples, &examples, &cfg).unwrap().model;
    let m2 = train(&spec, &examples, &examples, &cfg).unwrap().model;
    let same_model = m1.to_json().unwrap() == m2.to_json().unwrap();

    let r1 = evaluate_model(&m1, &a.0, None).unwrap().to_json().unwrap();
    let r2 = evaluate_model(&m2, &b.0, None).unwrap().to_json().unwrap();
    let b1 = evaluate_baseline(&a.0).unwrap().to_json().unwrap();
    let b2 = evaluate_baseline(&b.0).unwrap().to_json().unwrap();
    let same_reports = r1 == r2 && b1 == b2;
    ensure(
        same_data && same_model && same_reports,
        format!("datasets {same_data}, checkpoints {same_model}, reports {same_reports} byte-identical"),
    )
}

fn feature_layout() -> Check {
    let data = dataset(10, NoiseModel::none(), 8001, 15.0);
    let mut widths = Vec::new();
    for (mode, expected) in [(FeatureMode::TwoD, 25), (FeatureMode::ThreeD, 28)] {
        let layout = FeatureLayout::new(3, mode).width();
        let sample = &data.samples()[0];
        let encoded = assemble_person_graph(&sample.views, mode, &data.rig).unwrap().features.cols();
        if layout != expected || encoded != expected {
            return Err(format!("{} mode: layout {layout}, encoded {encoded}, expected {expected}", mode.name()));
        }
        widths.push(format!("{} {encoded}", mode.name()));
    }
    let relations = EdgeRelation::NUM_NEIGHBOR_RELATIONS;
    Ok(format!("3-camera widths {} ({relations} neighbour relations)", widths.join(", ")))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("gradient correctness", gradient_correctness),
        ("layer oracles", layer_oracles),
        ("permutation symmetry", permutation_symmetry),
        ("synthetic end-to-end", end_to_end),
        ("baseline sanity", baseline_sanity),
        ("matcher", matcher_tracking),
        ("determinism", determinism),
        ("feature layout", feature_layout),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("ACCEPTANCE {id} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("ACCEPTANCE {id} FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
