//! Analytical depth-based pose estimator.
//!
//! Position is the per-camera componentwise median of the joints' world
//! positions, averaged over cameras. Orientation comes from the shoulder and
//! hip lines: the person's left joint sits a quarter turn counterclockwise
//! from the facing direction, so the facing direction is the left→right
//! vector rotated by +90°.

use serde::{Deserialize, Serialize};

use crate::matcher::median;
use crate::skeleton::{JointId, Observation};

/// Joints a camera must perceive for its position estimate to count.
pub const MIN_POSITION_JOINTS: usize = 3;

pub const SYMMETRIC_PAIRS: [(JointId, JointId); 2] = [
    (JointId::LeftShoulder, JointId::RightShoulder),
    (JointId::LeftHip, JointId::RightHip),
];

/// Maps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    if w <= -PI {
        w += TAU;
    }
    w
}

/// Angle of the mean unit vector, or `None` when the vectors cancel out.
pub fn circular_mean(angles: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for a in angles {
        s += a.sin();
        c += a.cos();
        n += 1;
    }
    if n == 0 || s.hypot(c) < 1e-12 * n as f64 {
        return None;
    }
    Some(wrap_angle(s.atan2(c)))
}

/// Facing angle for a symmetric pair seen from above.
pub fn facing_from_pair(left: [f64; 2], right: [f64; 2]) -> Option<f64> {
    let v = [right[0] - left[0], right[1] - left[1]];
    if v[0].hypot(v[1]) < 1e-12 {
        return None;
    }
    Some(wrap_angle(v[0].atan2(-v[1])))
}

fn world_xy(obs: &Observation, joint: JointId) -> Option<[f64; 2]> {
    obs.joint(joint).and_then(|d| d.xyz).map(|p| [p[0], p[1]])
}

/// Estimate from one camera, if it sees at least three joints with depth.
pub fn camera_position(obs: &Observation) -> Option<[f64; 2]> {
    let points: Vec<[f64; 3]> = obs.joints.iter().filter_map(|d| d.xyz).collect();
    if points.len() < MIN_POSITION_JOINTS {
        return None;
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    Some([median(&mut xs)?, median(&mut ys)?])
}

/// Floor position in metres, or `None` if no camera qualifies.
pub fn baseline_position(views: &[&Observation]) -> Option<[f64; 2]> {
    let estimates: Vec<[f64; 2]> = views.iter().filter_map(|o| camera_position(o)).collect();
    if estimates.is_empty() {
        return None;
    }
    let n = estimates.len() as f64;
    Some([
        estimates.iter().map(|e| e[0]).sum::<f64>() / n,
        estimates.iter().map(|e| e[1]).sum::<f64>() / n,
    ])
}

/// Circular mean of the pair angles visible in one camera.
pub fn camera_orientation(obs: &Observation) -> Option<f64> {
    circular_mean(
        SYMMETRIC_PAIRS
            .iter()
            .filter_map(|&(l, r)| facing_from_pair(world_xy(obs, l)?, world_xy(obs, r)?)),
    )
}

/// Memory of the previous estimate, kept per tracked person.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    pub orientation: Option<f64>,
    pub position: Option<[f64; 2]>,
}

/// Orientation from the symmetric pairs of every camera, falling back to the
/// previous estimate when no camera sees a pair.
pub fn baseline_orientation(views: &[&Observation], state: BaselineState) -> (Option<f64>, BaselineState) {
    let alpha = circular_mean(views.iter().filter_map(|o| camera_orientation(o))).or(state.orientation);
    (
        alpha,
        BaselineState {
            orientation: alpha,
            ..state
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimate {
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
    /// False when position or orientation fell back to a previous or default value.
    pub fresh_position: bool,
    pub fresh_orientation: bool,
}

impl BaselineState {
    /// Full pose for one view set. Without any current or previous value the
    /// position defaults to the room centre and the orientation to 0.
    pub fn estimate(&mut self, views: &[&Observation]) -> BaselineEstimate {
        let position = baseline_position(views);
        let fresh_position = position.is_some();
        let [x, y] = position.or(self.position).unwrap_or([0.0, 0.0]);
        self.position = Some([x, y]);
        let fresh_orientation = views.iter().any(|o| camera_orientation(o).is_some());
        let (alpha, next) = baseline_orientation(views, *self);
        *self = next;
        BaselineEstimate {
            x,
            y,
            alpha: alpha.unwrap_or(0.0),
            fresh_position,
            fresh_orientation,
        }
    }
}
