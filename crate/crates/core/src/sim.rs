//! Synthetic multi-camera dataset generator.
//!
//! Avatars walk random waypoint paths inside the room, their skeletons are
//! posed from a fixed template, projected into every camera and degraded by
//! a [`NoiseModel`] that emulates an imperfect skeleton detector.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::wrap_angle;
use crate::error::{Error, Result};
use crate::geometry::{project_point, RoomBounds, Rig};
use crate::matcher::{Histogram2D, HISTOGRAM_BINS, HUE_BINS, SATURATION_BINS};
use crate::skeleton::{Dataset, FrameBatch, GroundTruthPose, JointDetection, JointId, Observation, NUM_JOINTS};

pub const DEFAULT_RATE_HZ: f64 = 15.0;

/// Arm and leg swing while walking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    /// Forward excursion of the wrists at full swing, metres.
    pub arm_swing: f64,
    /// Forward excursion of the ankles at full swing, metres.
    pub leg_swing: f64,
    /// Distance covered by one full gait cycle, metres.
    pub stride_length: f64,
}

/// Joint offsets of a standing adult facing +x, as `(forward, left, up)` in
/// metres from the floor point below the shoulder midpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarTemplate {
    pub offsets: [[f64; 3]; NUM_JOINTS],
    pub gait: GaitParams,
}

impl Default for AvatarTemplate {
    fn default() -> Self {
        let mut offsets = [[0.0; 3]; NUM_JOINTS];
        let sided: [(JointId, [f64; 3]); 8] = [
            (JointId::LeftEye, [0.08, 0.035, 1.65]),
            (JointId::LeftEar, [0.0, 0.075, 1.62]),
            (JointId::LeftShoulder, [0.0, 0.20, 1.42]),
            (JointId::LeftElbow, [0.0, 0.24, 1.12]),
            (JointId::LeftWrist, [0.02, 0.25, 0.85]),
            (JointId::LeftHip, [0.0, 0.10, 0.95]),
            (JointId::LeftKnee, [0.01, 0.10, 0.52]),
            (JointId::LeftAnkle, [-0.02, 0.10, 0.08]),
        ];
        offsets[JointId::Nose.index()] = [0.10, 0.0, 1.60];
        for (joint, [f, l, z]) in sided {
            offsets[joint.index()] = [f, l, z];
            offsets[joint.mirror().expect("sided").index()] = [f, -l, z];
        }
        AvatarTemplate {
            offsets,
            gait: GaitParams {
                arm_swing: 0.15,
                leg_swing: 0.25,
                stride_length: 1.3,
            },
        }
    }
}

impl AvatarTemplate {
    pub fn validate(&self) -> Result<()> {
        for joint in JointId::ALL {
            let [f, l, z] = self.offsets[joint.index()];
            let ok = match joint.mirror() {
                Some(m) => {
                    let [mf, ml, mz] = self.offsets[m.index()];
                    f == mf && l == -ml && z == mz && (l > 0.0) == joint.is_left()
                }
                None => l == 0.0,
            };
            if !ok || !(f.is_finite() && z.is_finite()) {
                return Err(Error::Validation(format!("template offset of {joint} breaks left/right symmetry")));
            }
        }
        Ok(())
    }

    /// Distance between the shoulder joints.
    pub fn shoulder_breadth(&self) -> f64 {
        2.0 * self.offsets[JointId::LeftShoulder.index()][1]
    }
}

/// Swing applied to a limb joint, as a fraction of the limb's full swing.
fn swing_share(joint: JointId) -> (f64, f64) {
    use JointId::*;
    match joint {
        LeftElbow | RightElbow => (0.5, 0.0),
        LeftWrist | RightWrist => (1.0, 0.0),
        LeftKnee | RightKnee => (0.0, 0.5),
        LeftAnkle | RightAnkle => (0.0, 1.0),
        _ => (0.0, 0.0),
    }
}

/// World positions of the 17 joints for a pose and gait phase (radians).
pub fn pose_skeleton(template: &AvatarTemplate, pose: &GroundTruthPose, phase: f64) -> [[f64; 3]; NUM_JOINTS] {
    let (s, c) = pose.alpha.sin_cos();
    let swing = phase.sin();
    std::array::from_fn(|i| {
        let joint = JointId::ALL[i];
        let [mut f, l, z] = template.offsets[i];
        let (arm, leg) = swing_share(joint);
        let side = if joint.is_left() { 1.0 } else { -1.0 };
        f += side * swing * (arm * template.gait.arm_swing - leg * template.gait.leg_swing);
        [pose.x + f * c - l * s, pose.y + f * s + l * c, z]
    })
}

/// Random-walk parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathParams {
    pub min_speed: f64,
    pub max_speed: f64,
    /// Radians per second.
    pub max_turn_rate: f64,
    /// Chance that a new segment is a stand-and-turn instead of a walk.
    pub stand_probability: f64,
    /// Distance kept from the walls, metres.
    pub margin: f64,
}

impl Default for PathParams {
    fn default() -> Self {
        PathParams {
            min_speed: 0.4,
            max_speed: 1.3,
            max_turn_rate: 2.5,
            stand_probability: 0.3,
            margin: 0.4,
        }
    }
}

/// A trajectory point and the walked distance up to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub pose: GroundTruthPose,
    pub travelled: f64,
}

impl PathPoint {
    /// Gait phase in radians.
    pub fn phase(&self, gait: &GaitParams) -> f64 {
        std::f64::consts::TAU * self.travelled / gait.stride_length
    }
}

enum Segment {
    Walk { target: [f64; 2], speed: f64 },
    Turn { heading: f64, remaining: f64 },
}

/// `count` poses sampled every `1 / rate_hz` seconds.
pub fn walk(room: &RoomBounds, count: usize, rate_hz: f64, params: &PathParams, rng: &mut impl Rng) -> Vec<PathPoint> {
    let [hx, hy, _] = room.half_extents();
    let (lx, ly) = ((hx - params.margin).max(0.0), (hy - params.margin).max(0.0));
    let random_point = |rng: &mut dyn rand::RngCore| [rng.gen_range(-lx..=lx), rng.gen_range(-ly..=ly)];
    let dt = 1.0 / rate_hz;
    let mut pos = random_point(rng);
    let mut alpha = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let mut travelled = 0.0;
    let mut segment: Option<Segment> = None;
    let mut out = Vec::with_capacity(count);
    let max_turn = params.max_turn_rate * dt;
    let step_toward = |alpha: f64, goal: f64| alpha + wrap_angle(goal - alpha).clamp(-max_turn, max_turn);

    for i in 0..count {
        out.push(PathPoint {
            pose: GroundTruthPose {
                t: i as f64 / rate_hz,
                person: None,
                x: pos[0],
                y: pos[1],
                alpha: wrap_angle(alpha),
            },
            travelled,
        });
        let seg = segment.get_or_insert_with(|| {
            if rng.gen_bool(params.stand_probability) {
                Segment::Turn {
                    heading: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                    remaining: rng.gen_range(1.0..3.0),
                }
            } else {
                Segment::Walk {
                    target: random_point(rng),
                    speed: rng.gen_range(params.min_speed..=params.max_speed),
                }
            }
        });
        let done = match seg {
            Segment::Walk { target, speed } => {
                let (dx, dy) = (target[0] - pos[0], target[1] - pos[1]);
                let goal = dy.atan2(dx);
                alpha = step_toward(alpha, goal);
                let v = *speed * wrap_angle(goal - alpha).cos().max(0.0);
                let step = (v * dt).min(dx.hypot(dy));
                pos = [
                    (pos[0] + step * alpha.cos()).clamp(-lx, lx),
                    (pos[1] + step * alpha.sin()).clamp(-ly, ly),
                ];
                travelled += step;
                dx.hypot(dy) < 0.2
            }
            Segment::Turn { heading, remaining } => {
                alpha = step_toward(alpha, *heading);
                *remaining -= dt;
                *remaining <= 0.0
            }
        };
        if done {
            segment = None;
        }
    }
    out
}

/// Random path of `duration` seconds at the default rate.
pub fn generate_path(room: &RoomBounds, duration: f64, seed: u64) -> Result<Vec<GroundTruthPose>> {
    if duration.is_nan() || duration <= 0.0 {
        return Err(Error::Config(format!("path duration must be positive, got {duration}")));
    }
    let count = ((duration * DEFAULT_RATE_HZ).floor() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(walk(room, count, DEFAULT_RATE_HZ, &PathParams::default(), &mut rng)
        .into_iter()
        .map(|p| p.pose)
        .collect())
}

/// Detector imperfections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Pixel jitter standard deviation.
    pub pixel_sigma: f64,
    /// Depth-derived world coordinate noise standard deviation, metres.
    pub world_sigma: f64,
    pub joint_dropout: f64,
    /// Chance that a camera misses the person entirely.
    pub camera_miss: f64,
    /// Chance that a joint on the side turned away from a camera is lost.
    pub self_occlusion: f64,
    pub score_mean: f64,
    pub score_sigma: f64,
    /// Relative perturbation of the appearance histogram per observation.
    pub histogram_noise: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::moderate()
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            pixel_sigma: 0.0,
            world_sigma: 0.0,
            joint_dropout: 0.0,
            camera_miss: 0.0,
            self_occlusion: 0.0,
            score_mean: 1.0,
            score_sigma: 0.0,
            histogram_noise: 0.0,
        }
    }

    pub fn moderate() -> Self {
        NoiseModel {
            pixel_sigma: 2.0,
            world_sigma: 0.02,
            joint_dropout: 0.05,
            camera_miss: 0.05,
            self_occlusion: 0.0,
            score_mean: 0.8,
            score_sigma: 0.1,
            histogram_noise: 0.1,
        }
    }

    pub fn occluded() -> Self {
        NoiseModel {
            self_occlusion: 0.9,
            joint_dropout: 0.15,
            camera_miss: 0.15,
            ..NoiseModel::moderate()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [self.joint_dropout, self.camera_miss, self.self_occlusion];
        let ok = probs.iter().all(|p| (0.0..=1.0).contains(p))
            && self.pixel_sigma >= 0.0
            && self.world_sigma >= 0.0
            && self.score_sigma >= 0.0
            && self.histogram_noise >= 0.0
            && (0.0..=1.0).contains(&self.score_mean);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid noise model {self:?}")))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let noise: NoiseModel = crate::error::from_json_str(text)?;
        noise.validate()?;
        Ok(noise)
    }
}

/// Stable appearance signature of a person: a few hue/saturation bins in a
/// hue band reserved for that person.
pub fn person_signature(person: u32, seed: u64) -> Histogram2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(u64::from(person));
    let band = (person as usize * 4) % HUE_BINS;
    let mut weights = vec![0.0; HISTOGRAM_BINS];
    for _ in 0..6 {
        let hue = band + rng.gen_range(0..4).min(HUE_BINS - band - 1);
        let sat = rng.gen_range(0..SATURATION_BINS);
        weights[hue * SATURATION_BINS + sat] += rng.gen_range(0.5..1.5);
    }
    Histogram2D::from_weights(&weights).expect("positive weights")
}

fn perturb(signature: &Histogram2D, amount: f64, rng: &mut impl Rng) -> Histogram2D {
    if amount == 0.0 {
        return signature.clone();
    }
    let weights: Vec<f64> = signature
        .bins()
        .iter()
        .map(|w| if *w > 0.0 { w * (1.0 + amount * rng.gen_range(-1.0..1.0)).max(0.0) } else { 0.0 })
        .collect();
    let mut weights = weights;
    let stray = rng.gen_range(0..HISTOGRAM_BINS);
    weights[stray] += amount * 0.05;
    Histogram2D::from_weights(&weights).unwrap_or_else(|_| signature.clone())
}

/// One person's state at a frame, ready to be observed.
#[derive(Debug, Clone)]
pub struct PersonFrame {
    pub person: Option<u32>,
    pub pose: GroundTruthPose,
    pub joints: [[f64; 3]; NUM_JOINTS],
    pub signature: Histogram2D,
}

fn gaussian(sigma: f64, rng: &mut impl Rng) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("sigma >= 0").sample(rng)
    }
}

/// Whether `joint` faces away from a camera at plan position `cam`.
fn turned_away(joint: JointId, pose: &GroundTruthPose, cam: [f64; 2]) -> bool {
    let d = [cam[0] - pose.x, cam[1] - pose.y];
    let (s, c) = pose.alpha.sin_cos();
    let toward_left = -s * d[0] + c * d[1];
    let toward_front = c * d[0] + s * d[1];
    match joint {
        JointId::Nose | JointId::LeftEye | JointId::RightEye => toward_front < 0.0,
        j if j.is_left() => toward_left < 0.0,
        _ => toward_left > 0.0,
    }
}

/// Observations of every person by every camera at time `t`.
pub fn observe(people: &[PersonFrame], rig: &Rig, noise: &NoiseModel, depth: bool, t: f64, rng: &mut impl Rng) -> FrameBatch {
    let mut observations = Vec::new();
    for person in people {
        for camera in &rig.cameras {
            if noise.camera_miss > 0.0 && rng.gen_bool(noise.camera_miss) {
                continue;
            }
            let center = camera.extrinsics.center();
            let mut joints = Vec::with_capacity(NUM_JOINTS);
            for joint in JointId::ALL {
                let world = person.joints[joint.index()];
                let proj = project_point(world, camera);
                if !proj.visible {
                    continue;
                }
                if noise.joint_dropout > 0.0 && rng.gen_bool(noise.joint_dropout) {
                    continue;
                }
                if noise.self_occlusion > 0.0
                    && turned_away(joint, &person.pose, [center.x, center.y])
                    && rng.gen_bool(noise.self_occlusion)
                {
                    continue;
                }
                let w = f64::from(camera.resolution.width);
                let h = f64::from(camera.resolution.height);
                let u = (proj.pixel[0] + gaussian(noise.pixel_sigma, rng)).clamp(0.0, w);
                let v = (proj.pixel[1] + gaussian(noise.pixel_sigma, rng)).clamp(0.0, h);
                let score = (noise.score_mean + gaussian(noise.score_sigma, rng)).clamp(0.05, 1.0);
                let xyz = depth.then(|| std::array::from_fn(|k| world[k] + gaussian(noise.world_sigma, rng)));
                joints.push(JointDetection {
                    joint,
                    u,
                    v,
                    score,
                    xyz,
                });
            }
            if joints.is_empty() {
                continue;
            }
            observations.push(Observation {
                camera_id: camera.id,
                timestamp: t,
                person: person.person,
                joints,
                histogram: perturb(&person.signature, noise.histogram_noise, rng),
            });
        }
    }
    FrameBatch {
        timestamp: t,
        observations,
    }
}

/// Single-person frame synthesis with its own random stream.
pub fn synthesize_frame(
    joints: &[[f64; 3]; NUM_JOINTS],
    pose: &GroundTruthPose,
    rig: &Rig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<(FrameBatch, GroundTruthPose)> {
    if rig.cameras.is_empty() {
        return Err(Error::Config("rig has no cameras".into()));
    }
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let person = PersonFrame {
        person: pose.person,
        pose: *pose,
        joints: *joints,
        signature: person_signature(pose.person.unwrap_or(0), seed),
    };
    Ok((observe(&[person], rig, noise, true, pose.t, &mut rng), *pose))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A block of consecutive frames generated with one noise profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationProfile {
    pub label: String,
    pub frames: usize,
    #[serde(default)]
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub seed: u64,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    #[serde(default = "one")]
    pub persons: usize,
    /// Emit world coordinates for every joint, as an RGBD rig would.
    #[serde(default = "yes")]
    pub depth: bool,
    #[serde(default)]
    pub path: PathParams,
    pub profiles: Vec<GenerationProfile>,
}

fn default_rate() -> f64 {
    DEFAULT_RATE_HZ
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl DatasetConfig {
    pub fn single(frames: usize, noise: NoiseModel, seed: u64) -> Self {
        DatasetConfig {
            seed,
            rate_hz: DEFAULT_RATE_HZ,
            persons: 1,
            depth: true,
            path: PathParams::default(),
            profiles: vec![GenerationProfile {
                label: "default".into(),
                frames,
                noise,
            }],
        }
    }

    pub fn total_frames(&self) -> usize {
        self.profiles.iter().map(|p| p.frames).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.profiles.is_empty() || self.total_frames() == 0 {
            return Err(Error::Config("dataset needs at least one frame".into()));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) || self.persons == 0 {
            return Err(Error::Config("rate and person count must be positive".into()));
        }
        let p = &self.path;
        if !(p.min_speed > 0.0 && p.min_speed <= p.max_speed && p.max_turn_rate > 0.0 && (0.0..=1.0).contains(&p.stand_probability))
        {
            return Err(Error::Config(format!("invalid path parameters {p:?}")));
        }
        self.profiles.iter().try_for_each(|p| p.noise.validate())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCount {
    pub label: String,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub frames: usize,
    pub ground_truth: usize,
    pub observations: usize,
    pub profiles: Vec<ProfileCount>,
}

/// Generates a dataset for `rig` and its manifest.
pub fn generate_dataset(rig: &Rig, config: &DatasetConfig) -> Result<(Dataset, Manifest)> {
    rig.validate()?;
    config.validate()?;
    let template = AvatarTemplate::default();
    let total = config.total_frames();
    let multi = config.persons > 1;
    let paths: Vec<Vec<PathPoint>> = (0..config.persons)
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(1 + p as u64);
            walk(&rig.room, total, config.rate_hz, &config.path, &mut rng)
        })
        .collect();
    let signatures: Vec<Histogram2D> = (0..config.persons as u32).map(|p| person_signature(p, config.seed)).collect();
    let noise_at: Vec<&NoiseModel> = config
        .profiles
        .iter()
        .flat_map(|p| std::iter::repeat_n(&p.noise, p.frames))
        .collect();

    let results: Vec<(FrameBatch, Vec<GroundTruthPose>)> = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream((1u64 << 32) + i as u64);
            let people: Vec<PersonFrame> = paths
                .iter()
                .enumerate()
                .map(|(p, path)| {
                    let mut pose = path[i].pose;
                    pose.person = multi.then_some(p as u32);
                    PersonFrame {
                        person: pose.person,
                        pose,
                        joints: pose_skeleton(&template, &pose, path[i].phase(&template.gait)),
                        signature: signatures[p].clone(),
                    }
                })
                .collect();
            let t = i as f64 / config.rate_hz;
            let frame = observe(&people, rig, noise_at[i], config.depth, t, &mut rng);
            (frame, people.into_iter().map(|p| p.pose).collect())
        })
        .collect();

    let mut frames = Vec::with_capacity(total);
    let mut ground_truth = Vec::with_capacity(total * config.persons);
    for (frame, truth) in results {
        frames.push(frame);
        ground_truth.extend(truth);
    }
    let dataset = Dataset {
        rig: rig.clone(),
        frames,
        ground_truth,
    };
    dataset.validate()?;
    let manifest = Manifest {
        seed: config.seed,
        config_hash: config.hash(),
        frames: total,
        ground_truth: dataset.ground_truth.len(),
        observations: dataset.frames.iter().map(|f| f.observations.len()).sum(),
        profiles: config
            .profiles
            .iter()
            .map(|p| ProfileCount {
                label: p.label.clone(),
                frames: p.frames,
            })
            .collect(),
    };
    Ok((dataset, manifest))
}

/// Path of the manifest written next to a dataset file.
pub fn manifest_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.file_stem().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    dataset.with_file_name(name)
}

/// Writes the dataset and its manifest; returns the manifest path.
pub fn write_dataset(dataset: &Dataset, manifest: &Manifest, path: &Path) -> Result<PathBuf> {
    dataset.validate()?;
    std::fs::write(path, dataset.to_json()?).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    std::fs::write(&mpath, serde_json::to_string_pretty(manifest)?).map_err(|e| Error::io(&mpath, e))?;
    Ok(mpath)
}
