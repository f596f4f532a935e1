//! Skeleton observations: the 17-part joint taxonomy, per-camera detections
//! and the JSON dataset format that carries them.
//!
//! Dataset schema (version 1):
//!
//! ```text
//! {
//!   "version": 1,
//!   "rig": { "cameras": [...], "room": { "half_extents": [hx, hy, hz] } },
//!   "frames": [
//!     { "t": 0.0,
//!       "observations": [
//!         { "camera": 1, "t": 0.0?, "person": 0?,
//!           "joints": [ { "name": "nose", "u": 320.0, "v": 100.0,
//!                         "score": 0.9, "xyz": [0.1, 0.2, 1.6]? } ],
//!           "histogram": [[bin, weight], ...] } ] } ],
//!   "ground_truth": [ { "t": 0.0, "person": 0?, "x": 1.0, "y": -0.5, "alpha": 0.3 } ]
//! }
//! ```
//!
//! Fields marked `?` are optional. An observation without `t` inherits the
//! frame time. `person` is a ground-truth identity label used for evaluating
//! association; when absent it is treated as person 0.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rig;
use crate::matcher::Histogram2D;

pub const NUM_JOINTS: usize = 17;
pub const DATASET_VERSION: u32 = 1;

/// The 17 body parts reported by the skeleton detector, in COCO order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JointId {
    Nose,
    LeftEye,
    RightEye,
    LeftEar,
    RightEar,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
}

impl JointId {
    pub const ALL: [JointId; NUM_JOINTS] = [
        JointId::Nose,
        JointId::LeftEye,
        JointId::RightEye,
        JointId::LeftEar,
        JointId::RightEar,
        JointId::LeftShoulder,
        JointId::RightShoulder,
        JointId::LeftElbow,
        JointId::RightElbow,
        JointId::LeftWrist,
        JointId::RightWrist,
        JointId::LeftHip,
        JointId::RightHip,
        JointId::LeftKnee,
        JointId::RightKnee,
        JointId::LeftAnkle,
        JointId::RightAnkle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<JointId> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            JointId::Nose => "nose",
            JointId::LeftEye => "left_eye",
            JointId::RightEye => "right_eye",
            JointId::LeftEar => "left_ear",
            JointId::RightEar => "right_ear",
            JointId::LeftShoulder => "left_shoulder",
            JointId::RightShoulder => "right_shoulder",
            JointId::LeftElbow => "left_elbow",
            JointId::RightElbow => "right_elbow",
            JointId::LeftWrist => "left_wrist",
            JointId::RightWrist => "right_wrist",
            JointId::LeftHip => "left_hip",
            JointId::RightHip => "right_hip",
            JointId::LeftKnee => "left_knee",
            JointId::RightKnee => "right_knee",
            JointId::LeftAnkle => "left_ankle",
            JointId::RightAnkle => "right_ankle",
        }
    }

    /// Parent in the kinematic tree rooted at the nose.
    pub fn kinematic_parent(self) -> Option<JointId> {
        use JointId::*;
        Some(match self {
            Nose => return None,
            LeftEye | RightEye => Nose,
            LeftEar => LeftEye,
            RightEar => RightEye,
            LeftShoulder | RightShoulder => Nose,
            LeftElbow => LeftShoulder,
            RightElbow => RightShoulder,
            LeftWrist => LeftElbow,
            RightWrist => RightElbow,
            LeftHip => LeftShoulder,
            RightHip => RightShoulder,
            LeftKnee => LeftHip,
            RightKnee => RightHip,
            LeftAnkle => LeftKnee,
            RightAnkle => RightKnee,
        })
    }

    /// Left/right counterpart. The nose has none.
    pub fn mirror(self) -> Option<JointId> {
        match self {
            JointId::Nose => None,
            // left and right alternate from index 1 onwards
            j => {
                let i = j.index();
                JointId::from_index(if i % 2 == 1 { i + 1 } else { i - 1 })
            }
        }
    }

    pub fn is_left(self) -> bool {
        self.index() % 2 == 1
    }
}

pub fn kinematic_parent(joint: JointId) -> Option<JointId> {
    joint.kinematic_parent()
}

pub fn mirror(joint: JointId) -> Option<JointId> {
    joint.mirror()
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JointId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        JointId::ALL
            .iter()
            .copied()
            .find(|j| j.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown joint name `{s}`")))
    }
}

impl Serialize for JointId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for JointId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

/// One detected body part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDetection {
    #[serde(rename = "name")]
    pub joint: JointId,
    pub u: f64,
    pub v: f64,
    pub score: f64,
    /// World position in metres, present only for depth-capable rigs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xyz: Option<[f64; 3]>,
}

impl JointDetection {
    pub fn pixel(&self) -> [f64; 2] {
        [self.u, self.v]
    }
}

/// One camera's detection of one person at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub camera_id: u32,
    pub timestamp: f64,
    pub person: Option<u32>,
    pub joints: Vec<JointDetection>,
    pub histogram: Histogram2D,
}

impl Observation {
    pub fn joint(&self, id: JointId) -> Option<&JointDetection> {
        self.joints.iter().find(|j| j.joint == id)
    }

    pub fn validate(&self) -> Result<()> {
        let at = || format!("camera {} at t={}", self.camera_id, self.timestamp);
        if !self.timestamp.is_finite() {
            return Err(Error::Validation(format!("{}: timestamp not finite", at())));
        }
        if self.joints.is_empty() || self.joints.len() > NUM_JOINTS {
            return Err(Error::Validation(format!(
                "{}: expected 1..=17 joints, got {}",
                at(),
                self.joints.len()
            )));
        }
        let mut seen = [false; NUM_JOINTS];
        for j in &self.joints {
            if std::mem::replace(&mut seen[j.joint.index()], true) {
                return Err(Error::Validation(format!("{}: duplicate joint {}", at(), j.joint)));
            }
            if !(0.0..=1.0).contains(&j.score) {
                return Err(Error::Validation(format!(
                    "{}: score {} of {} outside [0, 1]",
                    at(),
                    j.score,
                    j.joint
                )));
            }
            if !j.u.is_finite() || !j.v.is_finite() {
                return Err(Error::Validation(format!("{}: pixel of {} not finite", at(), j.joint)));
            }
            if let Some(xyz) = j.xyz {
                if !xyz.iter().all(|c| c.is_finite()) {
                    return Err(Error::Validation(format!("{}: xyz of {} not finite", at(), j.joint)));
                }
            }
        }
        Ok(())
    }
}

/// Everything observed at one frame time.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBatch {
    pub timestamp: f64,
    pub observations: Vec<Observation>,
}

/// Floor pose of a person: position in metres and orientation about the
/// vertical axis. `alpha = 0` faces world +x, counter-clockwise positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPose {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person: Option<u32>,
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
}

/// A parsed and validated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rig: Rig,
    pub frames: Vec<FrameBatch>,
    pub ground_truth: Vec<GroundTruthPose>,
}

/// One training/evaluation example: the latest view per camera of a single
/// person at a frame, plus its ground truth.
#[derive(Debug, Clone)]
pub struct Sample<'a> {
    pub frame: usize,
    pub t: f64,
    pub person: u32,
    pub views: Vec<&'a Observation>,
    pub truth: GroundTruthPose,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    #[serde(default = "default_version")]
    version: u32,
    rig: Rig,
    #[serde(default)]
    frames: Vec<FrameRecord>,
    #[serde(default)]
    ground_truth: Vec<GroundTruthPose>,
}

fn default_version() -> u32 {
    DATASET_VERSION
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    t: f64,
    #[serde(default)]
    observations: Vec<ObservationRecord>,
}

#[derive(Serialize, Deserialize)]
struct ObservationRecord {
    camera: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    person: Option<u32>,
    joints: Vec<JointDetection>,
    histogram: Histogram2D,
}

impl Dataset {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = crate::error::from_json_str(text)?;
        if file.version != DATASET_VERSION {
            return Err(Error::Validation(format!(
                "unsupported dataset version {}",
                file.version
            )));
        }
        file.rig.validate()?;
        let mut frames: Vec<FrameBatch> = file
            .frames
            .into_iter()
            .map(|f| FrameBatch {
                timestamp: f.t,
                observations: f
                    .observations
                    .into_iter()
                    .map(|o| Observation {
                        camera_id: o.camera,
                        timestamp: o.t.unwrap_or(f.t),
                        person: o.person,
                        joints: o.joints,
                        histogram: o.histogram,
                    })
                    .collect(),
            })
            .collect();
        if let Some(bad) = frames.iter().find(|f| !f.timestamp.is_finite()) {
            return Err(Error::Validation(format!("frame time {} not finite", bad.timestamp)));
        }
        frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let dataset = Dataset {
            rig: file.rig,
            frames,
            ground_truth: file.ground_truth,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<()> {
        let mut last_seen: BTreeMap<u32, f64> = BTreeMap::new();
        for frame in &self.frames {
            let mut slots = HashSet::new();
            for obs in &frame.observations {
                obs.validate()?;
                if self.rig.camera_index(obs.camera_id).is_none() {
                    return Err(Error::Validation(format!(
                        "observation at t={} references unknown camera {}",
                        obs.timestamp, obs.camera_id
                    )));
                }
                if !slots.insert((obs.camera_id, obs.person)) {
                    return Err(Error::Validation(format!(
                        "frame t={}: camera {} reports person {:?} twice",
                        frame.timestamp, obs.camera_id, obs.person
                    )));
                }
                let last = last_seen.entry(obs.camera_id).or_insert(f64::NEG_INFINITY);
                if obs.timestamp < *last {
                    return Err(Error::Validation(format!(
                        "camera {}: timestamp {} precedes {}",
                        obs.camera_id, obs.timestamp, last
                    )));
                }
                *last = obs.timestamp;
            }
        }
        for gt in &self.ground_truth {
            if ![gt.t, gt.x, gt.y, gt.alpha].iter().all(|v| v.is_finite()) {
                return Err(Error::Validation(format!("ground truth at t={} not finite", gt.t)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DatasetFile {
            version: DATASET_VERSION,
            rig: self.rig.clone(),
            frames: self
                .frames
                .iter()
                .map(|f| FrameRecord {
                    t: f.timestamp,
                    observations: f
                        .observations
                        .iter()
                        .map(|o| ObservationRecord {
                            camera: o.camera_id,
                            t: (o.timestamp != f.timestamp).then_some(o.timestamp),
                            person: o.person,
                            joints: o.joints.clone(),
                            histogram: o.histogram.clone(),
                        })
                        .collect(),
                })
                .collect(),
            ground_truth: self.ground_truth.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Examples with at least one view and a matching ground-truth record,
    /// in frame order.
    pub fn samples(&self) -> Vec<Sample<'_>> {
        let mut truth: BTreeMap<(u32, u64), GroundTruthPose> = BTreeMap::new();
        for gt in &self.ground_truth {
            truth.insert((gt.person.unwrap_or(0), gt.t.to_bits()), *gt);
        }
        let mut out = Vec::new();
        for (index, frame) in self.frames.iter().enumerate() {
            let mut by_person: BTreeMap<u32, Vec<&Observation>> = BTreeMap::new();
            for obs in &frame.observations {
                by_person.entry(obs.person.unwrap_or(0)).or_default().push(obs);
            }
            for (person, mut views) in by_person {
                let Some(gt) = truth.get(&(person, frame.timestamp.to_bits())) else {
                    continue;
                };
                views.sort_by_key(|o| o.camera_id);
                out.push(Sample {
                    frame: index,
                    t: frame.timestamp,
                    person,
                    views,
                    truth: *gt,
                });
            }
        }
        out
    }
}

/// Parses a dataset document and returns its frames sorted by time.
pub fn parse_observation_stream(document: &str) -> Result<Vec<FrameBatch>> {
    Ok(Dataset::from_json(document)?.frames)
}
