//! Evaluation of trained models and the analytical baseline, comparison
//! tables and per-sample traces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{wrap_angle, BaselineState};
use crate::error::{Error, Result};
use crate::geometry::RoomBounds;
use crate::graph::FeatureMode;
use crate::nn::{encode_input, pose_target, Model, PoseEstimate};
use crate::sim::sha256_hex;
use crate::skeleton::{Dataset, GroundTruthPose, Sample};

pub const BASELINE_NAME: &str = "baseline";

/// Minimal absolute difference between two angles, in [0, π].
pub fn angle_error(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// One estimator output next to the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub sample: usize,
    pub frame: usize,
    pub t: f64,
    pub person: u32,
    pub truth: GroundTruthPose,
    /// Normalized `(x, y, sin α, cos α)`.
    pub outputs: [f64; 4],
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub global_mse: f64,
    pub position_mse: f64,
    pub orientation_mse: f64,
    pub position_mae_mm: f64,
    pub orientation_mae_deg: f64,
}

impl Metrics {
    pub fn from_predictions(predictions: &[SamplePrediction], room: &RoomBounds) -> Metrics {
        if predictions.is_empty() {
            return Metrics::default();
        }
        let mut m = Metrics::default();
        for p in predictions {
            let target = pose_target(&p.truth, room);
            let sq: [f64; 4] = std::array::from_fn(|i| (p.outputs[i] - target[i]).powi(2));
            m.global_mse += sq.iter().sum::<f64>() / 4.0;
            m.position_mse += (sq[0] + sq[1]) / 2.0;
            m.orientation_mse += (sq[2] + sq[3]) / 2.0;
            m.position_mae_mm += (p.x - p.truth.x).hypot(p.y - p.truth.y) * 1000.0;
            m.orientation_mae_deg += angle_error(p.alpha, p.truth.alpha).to_degrees();
        }
        let n = predictions.len() as f64;
        Metrics {
            global_mse: m.global_mse / n,
            position_mse: m.position_mse / n,
            orientation_mse: m.orientation_mse / n,
            position_mae_mm: m.position_mae_mm / n,
            orientation_mae_deg: m.orientation_mae_deg / n,
        }
    }

    pub fn delta(&self, other: &Metrics) -> Metrics {
        Metrics {
            global_mse: self.global_mse - other.global_mse,
            position_mse: self.position_mse - other.position_mse,
            orientation_mse: self.orientation_mse - other.orientation_mse,
            position_mae_mm: self.position_mae_mm - other.position_mae_mm,
            orientation_mae_deg: self.orientation_mae_deg - other.orientation_mae_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Architecture name (`MLP`, `RGCN`, ...) or `baseline`.
    pub estimator: String,
    pub mode: FeatureMode,
    /// Label of the training set the estimator was fitted on.
    #[serde(default)]
    pub train_set: Option<String>,
    pub samples: usize,
    pub metrics: Metrics,
    /// SHA-256 of the evaluated dataset.
    pub dataset_hash: String,
    /// SHA-256 of the checkpoint, or of the estimator name for the baseline.
    pub config_hash: String,
    pub predictions: Vec<SamplePrediction>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        crate::error::from_json_str(text)
    }
}

pub fn dataset_hash(dataset: &Dataset) -> Result<String> {
    Ok(sha256_hex(dataset.to_json()?.as_bytes()))
}

fn prediction(index: usize, sample: &Sample<'_>, outputs: [f64; 4], x: f64, y: f64, alpha: f64) -> SamplePrediction {
    SamplePrediction {
        sample: index,
        frame: sample.frame,
        t: sample.t,
        person: sample.person,
        truth: sample.truth,
        outputs,
        x,
        y,
        alpha,
    }
}

/// Runs `model` on every sample of `dataset`.
pub fn evaluate_model(model: &Model, dataset: &Dataset, train_set: Option<String>) -> Result<EvalReport> {
    let spec = &model.spec;
    if spec.num_cameras != dataset.rig.num_cameras() {
        return Err(Error::Mismatch(format!(
            "model expects {} cameras, dataset rig has {}",
            spec.num_cameras,
            dataset.rig.num_cameras()
        )));
    }
    if spec.mode == FeatureMode::ThreeD && !has_depth(dataset) {
        return Err(Error::Mismatch("model uses 3d features but the dataset has no world coordinates".into()));
    }
    let room = dataset.rig.room;
    let samples = dataset.samples();
    let predictions = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let input = encode_input(&s.views, spec.family, spec.mode, &dataset.rig)
                .map_err(|e| Error::Mismatch(format!("sample {i}: {e}")))?;
            let p: PoseEstimate = model.predict_input(&input, &room)?;
            Ok(prediction(i, s, p.normalized, p.x, p.y, p.alpha))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        estimator: spec.family.name().into(),
        mode: spec.mode,
        train_set,
        samples: predictions.len(),
        metrics: Metrics::from_predictions(&predictions, &room),
        dataset_hash: dataset_hash(dataset)?,
        config_hash: sha256_hex(model.to_json()?.as_bytes()),
        predictions,
    })
}

fn has_depth(dataset: &Dataset) -> bool {
    dataset
        .frames
        .iter()
        .flat_map(|f| &f.observations)
        .flat_map(|o| &o.joints)
        .any(|j| j.xyz.is_some())
}

/// Runs the analytical estimator over `dataset` in time order, keeping one
/// state per person.
pub fn evaluate_baseline(dataset: &Dataset) -> Result<EvalReport> {
    if !has_depth(dataset) {
        return Err(Error::Mismatch("the baseline needs world coordinates".into()));
    }
    let room = dataset.rig.room;
    let [hx, hy, _] = room.half_extents();
    let mut states: BTreeMap<u32, BaselineState> = BTreeMap::new();
    let predictions: Vec<SamplePrediction> = dataset
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let e = states.entry(s.person).or_default().estimate(&s.views);
            let outputs = [e.x / hx, e.y / hy, e.alpha.sin(), e.alpha.cos()];
            prediction(i, s, outputs, e.x, e.y, e.alpha)
        })
        .collect();
    Ok(EvalReport {
        estimator: BASELINE_NAME.into(),
        mode: FeatureMode::ThreeD,
        train_set: None,
        samples: predictions.len(),
        metrics: Metrics::from_predictions(&predictions, &room),
        dataset_hash: dataset_hash(dataset)?,
        config_hash: sha256_hex(BASELINE_NAME.as_bytes()),
        predictions,
    })
}

/// Architectures shown first, in this order, in comparison tables.
pub const TABLE_COLUMNS: [&str; 3] = ["MLP", "RGCN", "GAT"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub train_set: String,
    pub mode: FeatureMode,
    /// One entry per column; `None` where no report exists.
    pub cells: Vec<Option<Metrics>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
    /// Metric differences of every report against the first one.
    pub deltas: Vec<(String, Metrics)>,
    pub samples: usize,
}

/// Checks that all reports cover the same dataset and builds the summary
/// table.
pub fn compare(reports: &[&EvalReport]) -> Result<Comparison> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Config("compare needs at least one report".into()))?;
    for r in reports {
        if r.dataset_hash != first.dataset_hash || r.samples != first.samples {
            return Err(Error::Mismatch(format!(
                "report `{}` was computed on a different dataset than `{}`",
                r.estimator, first.estimator
            )));
        }
    }
    let mut columns: Vec<String> = TABLE_COLUMNS.iter().map(|c| c.to_string()).collect();
    for r in reports {
        if !columns.contains(&r.estimator) {
            columns.push(r.estimator.clone());
        }
    }
    let mut rows: Vec<TableRow> = Vec::new();
    for r in reports {
        let label = r.train_set.clone().unwrap_or_else(|| "-".into());
        let idx = match rows.iter().position(|row| row.train_set == label && row.mode == r.mode) {
            Some(i) => i,
            None => {
                rows.push(TableRow {
                    train_set: label,
                    mode: r.mode,
                    cells: vec![None; columns.len()],
                });
                rows.len() - 1
            }
        };
        let col = columns.iter().position(|c| *c == r.estimator).expect("column added");
        rows[idx].cells[col] = Some(r.metrics);
    }
    Ok(Comparison {
        deltas: reports
            .iter()
            .map(|r| (r.estimator.clone(), r.metrics.delta(&first.metrics)))
            .collect(),
        columns,
        rows,
        samples: first.samples,
    })
}

impl Comparison {
    /// Plain-text table of global MSE per training set and feature mode,
    /// followed by the per-estimator MAE figures.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<16} {:<5}", "train set", "mode");
        for c in &self.columns {
            let _ = write!(out, " {c:>10}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<16} {:<5}", row.train_set, row.mode.name());
            for cell in &row.cells {
                match cell {
                    Some(m) => {
                        let _ = write!(out, " {:>10.5}", m.global_mse);
                    }
                    None => {
                        let _ = write!(out, " {:>10}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let _ = writeln!(out, "\nglobal MSE, {} samples", self.samples);
        for row in &self.rows {
            for (c, cell) in self.columns.iter().zip(&row.cells) {
                if let Some(m) = cell {
                    let _ = writeln!(
                        out,
                        "{c} [{} {}]: orientation MSE {:.5}, position MSE {:.6}, MAE {:.1} mm / {:.2} deg",
                        row.train_set,
                        row.mode.name(),
                        m.orientation_mse,
                        m.position_mse,
                        m.position_mae_mm,
                        m.orientation_mae_deg
                    );
                }
            }
        }
        out
    }
}

/// Per-sample CSV with the ground truth and every estimator's prediction.
pub fn write_trace_csv(reports: &[&EvalReport], out: impl Write) -> Result<()> {
    compare(reports)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "sample".to_string(),
        "frame".into(),
        "t".into(),
        "person".into(),
        "true_x".into(),
        "true_y".into(),
        "true_alpha".into(),
    ];
    for r in reports {
        let name = match &r.train_set {
            Some(label) => format!("{}_{}_{}", r.estimator, label, r.mode.name()),
            None => r.estimator.clone(),
        };
        header.extend(["x", "y", "alpha"].iter().map(|c| format!("{name}_{c}")));
    }
    w.write_record(&header)?;
    for (i, base) in reports[0].predictions.iter().enumerate() {
        let mut row = vec![
            base.sample.to_string(),
            base.frame.to_string(),
            base.t.to_string(),
            base.person.to_string(),
            base.truth.x.to_string(),
            base.truth.y.to_string(),
            base.truth.alpha.to_string(),
        ];
        for r in reports {
            let p = &r.predictions[i];
            row.extend([p.x.to_string(), p.y.to_string(), p.alpha.to_string()]);
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}
