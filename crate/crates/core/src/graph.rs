//! Construction of the per-person input graph.
//!
//! Each camera view contributes a body node plus one node per detected part.
//! Parts connect to their kinematic parent and to their mirrored part when
//! those were detected too, and every part connects to its view's body node.
//! All body nodes connect to a single superbody node whose final-layer
//! features carry the pose prediction.
//!
//! Node features are `type one-hot (19) | camera one-hot (n) | coordinates
//! (2 or 5) | score (1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_pixel, normalize_world, RoomBounds, Rig};
use crate::nn::Matrix;
use crate::skeleton::{JointDetection, JointId, Observation, NUM_JOINTS};

pub const NUM_NODE_KINDS: usize = NUM_JOINTS + 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Part(JointId),
    Body,
    Superbody,
}

impl NodeKind {
    pub fn index(self) -> usize {
        match self {
            NodeKind::Part(j) => j.index(),
            NodeKind::Body => NUM_JOINTS,
            NodeKind::Superbody => NUM_JOINTS + 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Part(j) => j.name(),
            NodeKind::Body => "body",
            NodeKind::Superbody => "superbody",
        }
    }
}

impl Serialize for NodeKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// Edge labels. Edges are directed `src -> dst`; messages flow along them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeRelation {
    /// child -> kinematic parent
    KinematicUp,
    /// kinematic parent -> child
    KinematicDown,
    Mirror,
    PartBody,
    BodyPart,
    BodySuper,
    SuperBody,
    SelfLoop,
}

impl EdgeRelation {
    pub const ALL: [EdgeRelation; 8] = [
        EdgeRelation::KinematicUp,
        EdgeRelation::KinematicDown,
        EdgeRelation::Mirror,
        EdgeRelation::PartBody,
        EdgeRelation::BodyPart,
        EdgeRelation::BodySuper,
        EdgeRelation::SuperBody,
        EdgeRelation::SelfLoop,
    ];

    /// Relations other than the self-loop; relational layers give self
    /// connections their own weight instead.
    pub const NUM_NEIGHBOR_RELATIONS: usize = 7;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn inverse(self) -> EdgeRelation {
        use EdgeRelation::*;
        match self {
            KinematicUp => KinematicDown,
            KinematicDown => KinematicUp,
            Mirror => Mirror,
            PartBody => BodyPart,
            BodyPart => PartBody,
            BodySuper => SuperBody,
            SuperBody => BodySuper,
            SelfLoop => SelfLoop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub relation: EdgeRelation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Node {
    pub kind: NodeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub camera: Option<u32>,
    #[serde(skip)]
    pub detection: Option<JointDetection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureMode {
    /// Normalized image coordinates only.
    #[serde(rename = "2d")]
    TwoD,
    /// Image coordinates plus normalized world coordinates.
    #[serde(rename = "3d")]
    ThreeD,
}

impl FeatureMode {
    pub fn coordinate_width(self) -> usize {
        match self {
            FeatureMode::TwoD => 2,
            FeatureMode::ThreeD => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::TwoD => "2d",
            FeatureMode::ThreeD => "3d",
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "2d" => Ok(FeatureMode::TwoD),
            "3d" => Ok(FeatureMode::ThreeD),
            other => Err(Error::Config(format!("unknown feature mode `{other}`"))),
        }
    }
}

/// Column offsets of the feature blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub num_cameras: usize,
    pub mode: FeatureMode,
}

impl FeatureLayout {
    pub fn new(num_cameras: usize, mode: FeatureMode) -> Self {
        FeatureLayout { num_cameras, mode }
    }

    pub fn type_offset(&self) -> usize {
        0
    }

    pub fn camera_offset(&self) -> usize {
        NUM_NODE_KINDS
    }

    pub fn coordinate_offset(&self) -> usize {
        self.camera_offset() + self.num_cameras
    }

    pub fn score_offset(&self) -> usize {
        self.coordinate_offset() + self.mode.coordinate_width()
    }

    pub fn width(&self) -> usize {
        self.score_offset() + 1
    }
}

/// Nodes and edges contributed by a single camera view. The body node is
/// node 0; parts follow in joint order.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSubgraph {
    pub camera: u32,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

pub fn build_view_subgraph(obs: &Observation) -> Result<ViewSubgraph> {
    if obs.joints.is_empty() {
        return Err(Error::Graph(format!(
            "observation from camera {} at t={} has no joints",
            obs.camera_id, obs.timestamp
        )));
    }
    let mut slot: [Option<usize>; NUM_JOINTS] = [None; NUM_JOINTS];
    let mut nodes = vec![Node {
        kind: NodeKind::Body,
        camera: Some(obs.camera_id),
        detection: None,
    }];
    for joint in JointId::ALL {
        if let Some(det) = obs.joint(joint) {
            slot[joint.index()] = Some(nodes.len());
            nodes.push(Node {
                kind: NodeKind::Part(joint),
                camera: Some(obs.camera_id),
                detection: Some(det.clone()),
            });
        }
    }
    let mut edges: Vec<Edge> = (0..nodes.len())
        .map(|i| Edge {
            src: i,
            dst: i,
            relation: EdgeRelation::SelfLoop,
        })
        .collect();
    let edge = |src, dst, relation| Edge { src, dst, relation };
    for joint in JointId::ALL {
        let Some(node) = slot[joint.index()] else {
            continue;
        };
        edges.push(edge(node, 0, EdgeRelation::PartBody));
        edges.push(edge(0, node, EdgeRelation::BodyPart));
        if let Some(parent) = joint.kinematic_parent().and_then(|p| slot[p.index()]) {
            edges.push(edge(node, parent, EdgeRelation::KinematicUp));
            edges.push(edge(parent, node, EdgeRelation::KinematicDown));
        }
        if let Some(other) = joint.mirror().and_then(|m| slot[m.index()]) {
            edges.push(edge(node, other, EdgeRelation::Mirror));
        }
    }
    Ok(ViewSubgraph {
        camera: obs.camera_id,
        nodes,
        edges,
    })
}

/// A person's input graph with encoded node features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkeletonGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub superbody: usize,
    pub layout: FeatureLayout,
    #[serde(serialize_with = "serialize_rows")]
    pub features: Matrix,
}

fn serialize_rows<S: serde::Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.rows()))?;
    for i in 0..m.rows() {
        seq.serialize_element(m.row(i))?;
    }
    seq.end()
}

impl SkeletonGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn body_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Body)
            .map(|(i, _)| i)
    }

    /// Debug dump as pretty JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Same graph with nodes relabeled so old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<SkeletonGraph> {
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Graph("not a permutation of the node set".into()));
        }
        let mut nodes = self.nodes.clone();
        let mut features = Matrix::zeros(n, self.features.cols());
        for (old, &new) in perm.iter().enumerate() {
            nodes[new] = self.nodes[old].clone();
            features.row_mut(new).copy_from_slice(self.features.row(old));
        }
        Ok(SkeletonGraph {
            nodes,
            edges: self
                .edges
                .iter()
                .map(|e| Edge {
                    src: perm[e.src],
                    dst: perm[e.dst],
                    relation: e.relation,
                })
                .collect(),
            superbody: perm[self.superbody],
            layout: self.layout,
            features,
        })
    }
}

/// Joins the view subgraphs under a superbody node and encodes features.
/// Node order: superbody, then each view (by camera id) as body node followed
/// by its parts in joint order.
pub fn assemble_person_graph(views: &[&Observation], mode: FeatureMode, rig: &Rig) -> Result<SkeletonGraph> {
    if views.is_empty() {
        return Err(Error::Graph("empty view set".into()));
    }
    if views.len() > rig.num_cameras() {
        return Err(Error::Graph(format!(
            "{} views for a {}-camera rig",
            views.len(),
            rig.num_cameras()
        )));
    }
    let mut ordered: Vec<&Observation> = views.to_vec();
    ordered.sort_by_key(|o| o.camera_id);
    if let Some(w) = ordered.windows(2).find(|w| w[0].camera_id == w[1].camera_id) {
        return Err(Error::Graph(format!("camera {} appears twice in the view set", w[0].camera_id)));
    }

    let mut nodes = vec![Node {
        kind: NodeKind::Superbody,
        camera: None,
        detection: None,
    }];
    let mut edges = vec![Edge {
        src: 0,
        dst: 0,
        relation: EdgeRelation::SelfLoop,
    }];
    for obs in ordered {
        if rig.camera_index(obs.camera_id).is_none() {
            return Err(Error::Graph(format!("camera {} is not part of the rig", obs.camera_id)));
        }
        let view = build_view_subgraph(obs)?;
        let base = nodes.len();
        edges.extend(view.edges.iter().map(|e| Edge {
            src: e.src + base,
            dst: e.dst + base,
            relation: e.relation,
        }));
        edges.push(Edge {
            src: base,
            dst: 0,
            relation: EdgeRelation::BodySuper,
        });
        edges.push(Edge {
            src: 0,
            dst: base,
            relation: EdgeRelation::SuperBody,
        });
        nodes.extend(view.nodes);
    }
    let layout = FeatureLayout::new(rig.num_cameras(), mode);
    let mut graph = SkeletonGraph {
        nodes,
        edges,
        superbody: 0,
        layout,
        features: Matrix::zeros(0, layout.width()),
    };
    graph.features = encode_features(&graph, mode, rig, &rig.room)?;
    Ok(graph)
}

/// Builds the `(t | c | p | s)` feature row of every node.
pub fn encode_features(graph: &SkeletonGraph, mode: FeatureMode, rig: &Rig, room: &RoomBounds) -> Result<Matrix> {
    let layout = FeatureLayout::new(rig.num_cameras(), mode);
    let mut features = Matrix::zeros(graph.nodes.len(), layout.width());
    for (i, node) in graph.nodes.iter().enumerate() {
        let row = features.row_mut(i);
        row[layout.type_offset() + node.kind.index()] = 1.0;
        if let Some(cam_id) = node.camera {
            let slot = rig
                .camera_index(cam_id)
                .ok_or_else(|| Error::Graph(format!("camera {cam_id} is not part of the rig")))?;
            row[layout.camera_offset() + slot] = 1.0;
        }
        let Some(det) = &node.detection else {
            continue;
        };
        let camera = rig
            .camera(node.camera.unwrap_or(u32::MAX))
            .ok_or_else(|| Error::Graph("part node without a rig camera".into()))?;
        let px = normalize_pixel(det.pixel(), camera.resolution);
        let coords = layout.coordinate_offset();
        row[coords] = px.px;
        row[coords + 1] = px.py;
        if mode == FeatureMode::ThreeD {
            let xyz = det.xyz.ok_or_else(|| {
                Error::Graph(format!(
                    "3d features requested but {} from camera {} has no world coordinates",
                    det.joint, camera.id
                ))
            })?;
            row[coords + 2..coords + 5].copy_from_slice(&normalize_world(xyz, room));
        }
        row[layout.score_offset()] = det.score;
    }
    Ok(features)
}
