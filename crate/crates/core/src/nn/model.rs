//! Model architectures, batched forward/backward passes, prediction and
//! checkpoints.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::batch::{GraphBatch, Topology};
use super::layers::{HeadMerge, Layer, LayerCache, LayerKind, LayerSpec};
use super::loss::{batch_loss, LossBreakdown};
use super::Matrix;
use crate::error::{Error, Result};
use crate::geometry::{normalize_pixel, normalize_world, RoomBounds, Rig};
use crate::graph::{assemble_person_graph, EdgeRelation, FeatureLayout, FeatureMode, SkeletonGraph};
use crate::skeleton::{Dataset, GroundTruthPose, JointId, Observation, Sample, NUM_JOINTS};

pub const OUTPUT_WIDTH: usize = 4;
pub const CHECKPOINT_FORMAT: &str = "torso-pose-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gcn,
    Rgcn,
    Gat,
    Mlp,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gcn => "GCN",
            Family::Rgcn => "RGCN",
            Family::Gat => "GAT",
            Family::Mlp => "MLP",
        }
    }

    pub fn is_graph(self) -> bool {
        self != Family::Mlp
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Family::Gcn),
            "rgcn" => Ok(Family::Rgcn),
            "gat" => Ok(Family::Gat),
            "mlp" => Ok(Family::Mlp),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Architecture descriptor.
///
/// For the MLP family the first `camera_layers` layers form the per-camera
/// stack shared by all cameras; the rest is the head applied to the
/// concatenated camera embeddings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub mode: FeatureMode,
    pub num_cameras: usize,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub camera_layers: usize,
}

/// Knobs for building a standard [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureParams {
    pub family: Family,
    /// Hidden widths (per head for GAT). For the MLP, the camera stack.
    pub hidden: Vec<usize>,
    /// MLP head hidden widths.
    #[serde(default)]
    pub head_hidden: Vec<usize>,
    pub activation: Activation,
    #[serde(default = "one")]
    pub heads: usize,
    #[serde(default = "default_bases")]
    pub bases: usize,
}

fn one() -> usize {
    1
}

fn default_bases() -> usize {
    EdgeRelation::NUM_NEIGHBOR_RELATIONS
}

/// Width of one camera's MLP input row: per-joint coordinates and score,
/// the joint mask and the camera one-hot.
pub fn mlp_camera_width(mode: FeatureMode, num_cameras: usize) -> usize {
    NUM_JOINTS * (mode.coordinate_width() + 1) + NUM_JOINTS + num_cameras
}

impl ModelSpec {
    pub fn build(params: &ArchitectureParams, mode: FeatureMode, num_cameras: usize) -> Result<Self> {
        let layout = FeatureLayout::new(num_cameras, mode);
        let act = params.activation;
        let dense = |input, output, activation| LayerSpec {
            kind: LayerKind::Dense,
            input,
            output,
            activation,
        };
        let mut layers = Vec::new();
        let mut camera_layers = 0;
        match params.family {
            Family::Mlp => {
                if params.hidden.is_empty() {
                    return Err(Error::Config("mlp needs at least one camera layer".into()));
                }
                let mut width = mlp_camera_width(mode, num_cameras);
                for &h in &params.hidden {
                    layers.push(dense(width, h, act));
                    width = h;
                }
                camera_layers = layers.len();
                width *= num_cameras;
                for &h in &params.head_hidden {
                    layers.push(dense(width, h, act));
                    width = h;
                }
                layers.push(dense(width, OUTPUT_WIDTH, Activation::Identity));
            }
            family => {
                let mut width = layout.width();
                let kind = |merge| match family {
                    Family::Gcn => LayerKind::Gcn,
                    Family::Rgcn => LayerKind::Rgcn {
                        num_relations: EdgeRelation::NUM_NEIGHBOR_RELATIONS,
                        num_bases: params.bases,
                    },
                    _ => LayerKind::Gat {
                        heads: params.heads,
                        merge,
                    },
                };
                let heads = if family == Family::Gat { params.heads } else { 1 };
                for &h in &params.hidden {
                    let output = h * heads;
                    layers.push(LayerSpec {
                        kind: kind(HeadMerge::Concat),
                        input: width,
                        output,
                        activation: act,
                    });
                    width = output;
                }
                layers.push(LayerSpec {
                    kind: kind(HeadMerge::Mean),
                    input: width,
                    output: OUTPUT_WIDTH,
                    activation: Activation::Identity,
                });
            }
        }
        let spec = ModelSpec {
            family: params.family,
            mode,
            num_cameras,
            layers,
            camera_layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn input_width(&self) -> usize {
        match self.family {
            Family::Mlp => mlp_camera_width(self.mode, self.num_cameras),
            _ => FeatureLayout::new(self.num_cameras, self.mode).width(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::Config("model has no layers".into()))?;
        if self.num_cameras == 0 {
            return Err(Error::Config("model needs at least one camera".into()));
        }
        if first.input != self.input_width() {
            return Err(Error::Config(format!(
                "first layer takes {} features, input has {}",
                first.input,
                self.input_width()
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            let kind_ok = matches!(
                (self.family, layer.kind),
                (Family::Gcn, LayerKind::Gcn)
                    | (Family::Rgcn, LayerKind::Rgcn { .. })
                    | (Family::Gat, LayerKind::Gat { .. })
                    | (Family::Mlp, LayerKind::Dense)
            );
            if !kind_ok {
                return Err(Error::Config(format!("layer {i} kind does not belong to {:?}", self.family)));
            }
            if i > 0 {
                let prev = self.layers[i - 1].output;
                let expected = if self.family == Family::Mlp && i == self.camera_layers {
                    prev * self.num_cameras
                } else {
                    prev
                };
                if layer.input != expected {
                    return Err(Error::Config(format!(
                        "layer {i} takes {} features but receives {expected}",
                        layer.input
                    )));
                }
            }
        }
        if self.layers.last().map(|l| l.output) != Some(OUTPUT_WIDTH) {
            return Err(Error::Config("final layer must output 4 values".into()));
        }
        if self.family == Family::Mlp && !(1..self.layers.len()).contains(&self.camera_layers) {
            return Err(Error::Config("mlp needs a camera stack and a head".into()));
        }
        Ok(())
    }
}

/// Fixed-layout per-camera input for the MLP baseline: one row per rig
/// camera, zero-filled where a camera or joint is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBlocks {
    /// `num_cameras × 17·(coords + 1)`: per joint, its coordinates then score.
    pub features: Matrix,
    /// `num_cameras × 17`, 1 where the joint was detected.
    pub mask: Matrix,
}

impl ViewBlocks {
    pub fn encode(views: &[&Observation], mode: FeatureMode, rig: &Rig) -> Result<Self> {
        let nc = rig.num_cameras();
        let per_joint = mode.coordinate_width() + 1;
        let mut features = Matrix::zeros(nc, NUM_JOINTS * per_joint);
        let mut mask = Matrix::zeros(nc, NUM_JOINTS);
        let mut seen = vec![false; nc];
        for obs in views {
            let slot = rig
                .camera_index(obs.camera_id)
                .ok_or_else(|| Error::Graph(format!("camera {} is not part of the rig", obs.camera_id)))?;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::Graph(format!("camera {} appears twice in the view set", obs.camera_id)));
            }
            let camera = &rig.cameras[slot];
            for det in &obs.joints {
                let j = det.joint.index();
                let base = j * per_joint;
                let row = features.row_mut(slot);
                let px = normalize_pixel(det.pixel(), camera.resolution);
                row[base] = px.px;
                row[base + 1] = px.py;
                if mode == FeatureMode::ThreeD {
                    let xyz = det.xyz.ok_or_else(|| {
                        Error::Graph(format!("3d features requested but {} has no world coordinates", det.joint))
                    })?;
                    row[base + 2..base + 5].copy_from_slice(&normalize_world(xyz, &rig.room));
                }
                row[base + per_joint - 1] = det.score;
                mask.set(slot, j, 1.0);
            }
        }
        Ok(ViewBlocks { features, mask })
    }

    pub fn num_cameras(&self) -> usize {
        self.features.rows()
    }

    /// Rows fed to the shared camera stack: `features | mask | camera one-hot`.
    /// Cameras without any detected joint get an all-zero row.
    pub fn camera_inputs(&self) -> Result<Matrix> {
        let nc = self.features.rows();
        if self.mask.rows() != nc || self.mask.cols() != NUM_JOINTS || !self.features.cols().is_multiple_of(NUM_JOINTS) {
            return Err(Error::Shape(format!(
                "mask {:?} does not match features {:?}",
                self.mask.shape(),
                self.features.shape()
            )));
        }
        let fw = self.features.cols();
        let width = fw + NUM_JOINTS + nc;
        let mut out = Matrix::zeros(nc, width);
        for c in 0..nc {
            let row = out.row_mut(c);
            row[..fw].copy_from_slice(self.features.row(c));
            row[fw..fw + NUM_JOINTS].copy_from_slice(self.mask.row(c));
            if self.mask.row(c).iter().any(|m| *m != 0.0) {
                row[fw + NUM_JOINTS + c] = 1.0;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput {
    Graph(SkeletonGraph),
    Views(ViewBlocks),
}

/// An encoded input with its normalized target `(x, y, sin α, cos α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: ModelInput,
    pub target: [f64; 4],
}

/// Normalized regression target for a ground-truth pose.
pub fn pose_target(truth: &GroundTruthPose, room: &RoomBounds) -> [f64; 4] {
    let [x, y, _] = normalize_world([truth.x, truth.y, 0.0], room);
    [x, y, truth.alpha.sin(), truth.alpha.cos()]
}

pub fn encode_input(views: &[&Observation], family: Family, mode: FeatureMode, rig: &Rig) -> Result<ModelInput> {
    Ok(if family.is_graph() {
        ModelInput::Graph(assemble_person_graph(views, mode, rig)?)
    } else {
        ModelInput::Views(ViewBlocks::encode(views, mode, rig)?)
    })
}

pub fn encode_sample(sample: &Sample<'_>, family: Family, mode: FeatureMode, rig: &Rig) -> Result<Example> {
    Ok(Example {
        input: encode_input(&sample.views, family, mode, rig)?,
        target: pose_target(&sample.truth, &rig.room),
    })
}

/// Encodes every sample of `dataset`.
pub fn encode_dataset(dataset: &Dataset, family: Family, mode: FeatureMode) -> Result<Vec<Example>> {
    dataset
        .samples()
        .iter()
        .map(|s| encode_sample(s, family, mode, &dataset.rig))
        .collect()
}

/// A forward-ready batch.
#[derive(Debug, Clone)]
pub enum Batch {
    Graph { batch: GraphBatch, topology: Topology },
    Views { inputs: Matrix, count: usize, num_cameras: usize },
}

impl Batch {
    pub fn from_inputs(inputs: &[&ModelInput]) -> Result<Self> {
        match inputs.first() {
            None => Err(Error::Shape("empty batch".into())),
            Some(ModelInput::Graph(_)) => {
                let graphs = inputs
                    .iter()
                    .map(|i| match i {
                        ModelInput::Graph(g) => Ok(g),
                        ModelInput::Views(_) => Err(Error::Shape("mixed input kinds in batch".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let batch = GraphBatch::new(&graphs)?;
                let topology = batch.topology()?;
                Ok(Batch::Graph { batch, topology })
            }
            Some(ModelInput::Views(first)) => {
                let num_cameras = first.num_cameras();
                let rows = inputs
                    .iter()
                    .map(|i| match i {
                        ModelInput::Views(v) if v.num_cameras() == num_cameras => v.camera_inputs(),
                        _ => Err(Error::Shape("mixed input kinds in batch".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&Matrix> = rows.iter().collect();
                Ok(Batch::Views {
                    inputs: Matrix::vstack(&refs)?,
                    count: inputs.len(),
                    num_cameras,
                })
            }
        }
    }

    pub fn from_examples(examples: &[&Example]) -> Result<Self> {
        let inputs: Vec<&ModelInput> = examples.iter().map(|e| &e.input).collect();
        Self::from_inputs(&inputs)
    }

    pub fn len(&self) -> usize {
        match self {
            Batch::Graph { batch, .. } => batch.readout.len(),
            Batch::Views { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameter gradients, shaped like [`Model::layers`]' parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<Matrix>>);

impl Gradients {
    pub fn add_scaled(&mut self, scale: f64, other: &Gradients) -> Result<()> {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                x.add_scaled(scale, y)?;
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Matrix> {
        self.0.iter().flatten()
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors().fold(0.0, |m, t| m.max(t.max_abs()))
    }
}

/// Reconstructed pose from the four network outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    /// Raw outputs `(x, y, sin α, cos α)` in normalized units.
    pub normalized: [f64; 4],
    /// Metres.
    pub x: f64,
    pub y: f64,
    /// Radians in (-π, π].
    pub alpha: f64,
    /// Set when the angle could not be reconstructed (both trig outputs 0).
    pub low_confidence: bool,
}

/// `atan2(sin, cos)` mapped into (-π, π]. Both zero gives 0 and a
/// low-confidence flag.
pub fn reconstruct_angle(sin: f64, cos: f64) -> (f64, bool) {
    if sin == 0.0 && cos == 0.0 {
        return (0.0, true);
    }
    let a = sin.atan2(cos);
    (if a <= -std::f64::consts::PI { std::f64::consts::PI } else { a }, false)
}

impl PoseEstimate {
    pub fn from_outputs(outputs: [f64; 4], room: &RoomBounds) -> Self {
        let [hx, hy, _] = room.half_extents();
        let (alpha, low_confidence) = reconstruct_angle(outputs[2], outputs[3]);
        PoseEstimate {
            normalized: outputs,
            x: outputs[0] * hx,
            y: outputs[1] * hy,
            alpha,
            low_confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: Model,
}

impl Model {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layers
            .iter()
            .map(|s| Layer::init(*s, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Model { spec, layers })
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.layers.len() != self.spec.layers.len() {
            return Err(Error::Shape("layer count does not match spec".into()));
        }
        for (layer, spec) in self.layers.iter().zip(&self.spec.layers) {
            if layer.spec != *spec {
                return Err(Error::Shape("layer spec does not match model spec".into()));
            }
            layer.validate()?;
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(Layer::num_parameters).sum()
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients(self.layers.iter().map(Layer::zero_grads).collect())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        match (self.spec.family.is_graph(), batch) {
            (true, Batch::Graph { .. }) => Ok(()),
            (false, Batch::Views { num_cameras, .. }) if *num_cameras == self.spec.num_cameras => Ok(()),
            _ => Err(Error::Mismatch(format!(
                "{} model cannot consume this input batch",
                self.spec.family.name()
            ))),
        }
    }

    /// Forward pass keeping every layer's cache. Returns the `B × 4`
    /// predictions.
    pub fn forward_trace(&self, batch: &Batch) -> Result<(Matrix, Vec<LayerCache>)> {
        self.check_batch(batch)?;
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        match batch {
            Batch::Graph { batch, topology } => {
                for layer in &self.layers {
                    let input = caches.last().map_or(&batch.features, |c| &c.out);
                    let cache = layer.forward(input, Some(topology))?;
                    caches.push(cache);
                }
                let out = &caches.last().expect("non-empty").out;
                Ok((out.select_rows(&batch.readout), caches))
            }
            Batch::Views { inputs, count, .. } => {
                let mut reshaped = None;
                for (i, layer) in self.layers.iter().enumerate() {
                    if i == self.spec.camera_layers {
                        let emb = &caches[i - 1].out;
                        reshaped = Some(Matrix::from_vec(*count, emb.cols() * self.spec.num_cameras, emb.as_slice().to_vec())?);
                    }
                    let input = if i == 0 {
                        inputs
                    } else if i == self.spec.camera_layers {
                        reshaped.as_ref().expect("set above")
                    } else {
                        &caches[i - 1].out
                    };
                    caches.push(layer.forward(input, None)?);
                }
                Ok((caches.last().expect("non-empty").out.clone(), caches))
            }
        }
    }

    pub fn forward(&self, batch: &Batch) -> Result<Matrix> {
        Ok(self.forward_trace(batch)?.0)
    }

    /// Reverse pass from the gradient of the `B × 4` predictions.
    pub fn backward(&self, batch: &Batch, caches: &[LayerCache], d_pred: &Matrix) -> Result<Gradients> {
        let mut grads = self.zero_grads();
        match batch {
            Batch::Graph { batch, topology } => {
                let last = &caches.last().expect("non-empty").out;
                let mut d = Matrix::zeros(last.rows(), last.cols());
                for (i, &row) in batch.readout.iter().enumerate() {
                    d.row_mut(row).copy_from_slice(d_pred.row(i));
                }
                for l in (0..self.layers.len()).rev() {
                    let input = if l == 0 { &batch.features } else { &caches[l - 1].out };
                    d = self.layers[l].backward(input, &caches[l], &d, Some(topology), &mut grads.0[l])?;
                }
            }
            Batch::Views { inputs, .. } => {
                let split = self.spec.camera_layers;
                let camera_out = &caches[split - 1].out;
                let reshaped = Matrix::from_vec(
                    d_pred.rows(),
                    camera_out.cols() * self.spec.num_cameras,
                    camera_out.as_slice().to_vec(),
                )?;
                let mut d = d_pred.clone();
                for l in (0..self.layers.len()).rev() {
                    let input = if l == 0 {
                        inputs
                    } else if l == split {
                        &reshaped
                    } else {
                        &caches[l - 1].out
                    };
                    d = self.layers[l].backward(input, &caches[l], &d, None, &mut grads.0[l])?;
                    if l == split {
                        d = Matrix::from_vec(camera_out.rows(), camera_out.cols(), d.as_slice().to_vec())?;
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Global-MSE loss over the batch and its exact parameter gradients.
    pub fn loss_and_gradients(&self, batch: &Batch, targets: &Matrix) -> Result<(LossBreakdown, Gradients)> {
        let (pred, caches) = self.forward_trace(batch)?;
        let (loss, d_pred) = batch_loss(&pred, targets)?;
        let grads = self.backward(batch, &caches, &d_pred)?;
        Ok((loss, grads))
    }

    pub fn predict_input(&self, input: &ModelInput, room: &RoomBounds) -> Result<PoseEstimate> {
        let batch = Batch::from_inputs(&[input])?;
        let out = self.forward(&batch)?;
        let outputs: [f64; 4] = out.row(0).try_into().expect("4 outputs");
        Ok(PoseEstimate::from_outputs(outputs, room))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = crate::error::from_json_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        ckpt.model.validate()?;
        Ok(ckpt.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Pose of a person from one graph.
pub fn predict(model: &Model, graph: &SkeletonGraph, room: &RoomBounds) -> Result<PoseEstimate> {
    if graph.layout.mode != model.spec.mode || graph.layout.num_cameras != model.spec.num_cameras {
        return Err(Error::Mismatch("graph features do not match the model's feature mode".into()));
    }
    model.predict_input(&ModelInput::Graph(graph.clone()), room)
}

/// MLP forward pass for one view set.
pub fn mlp_forward(blocks: &ViewBlocks, model: &Model) -> Result<[f64; 4]> {
    if model.spec.family != Family::Mlp {
        return Err(Error::Mismatch("mlp_forward needs an MLP model".into()));
    }
    let out = model.forward(&Batch::from_inputs(&[&ModelInput::Views(blocks.clone())])?)?;
    Ok(out.row(0).try_into().expect("4 outputs"))
}

/// Index of `joint` inside an MLP feature row.
pub fn mlp_joint_offset(joint: JointId, mode: FeatureMode) -> usize {
    joint.index() * (mode.coordinate_width() + 1)
}
