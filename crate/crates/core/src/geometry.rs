//! Camera models, room bounds and the coordinate normalizations used by the
//! feature encoder.
//!
//! World frame: z up, floor plane at z = 0, origin at the rig's common floor
//! reference. Camera frame follows the usual pinhole convention: x right,
//! y down, z along the optical axis.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Resolution {
    pub const VGA: Resolution = Resolution {
        width: 640,
        height: 480,
    };
}

/// Rigid world-to-camera transform: `p_cam = rotation * p_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Extrinsics {
    /// Camera placed at `eye` looking at `target`, with world z as the up hint.
    pub fn look_at(eye: [f64; 3], target: [f64; 3]) -> Result<Self> {
        let eye = Vector3::from(eye);
        let forward = Vector3::from(target) - eye;
        let forward = forward
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Config("look_at: eye and target coincide".into()))?;
        let right = forward
            .cross(&Vector3::z())
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Config("look_at: viewing direction is vertical".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Ok(Extrinsics {
            rotation,
            translation: -(rotation * eye),
        })
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct CameraModel {
    pub id: u32,
    pub intrinsics: Intrinsics,
    pub resolution: Resolution,
    pub extrinsics: Extrinsics,
}

/// Result of projecting a world point into one camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: [f64; 2],
    pub depth: f64,
    pub visible: bool,
}

impl CameraModel {
    pub fn new(
        id: u32,
        intrinsics: Intrinsics,
        resolution: Resolution,
        extrinsics: Extrinsics,
    ) -> Result<Self> {
        let camera = CameraModel {
            id,
            intrinsics,
            resolution,
            extrinsics,
        };
        camera.validate()?;
        Ok(camera)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution.width == 0 || self.resolution.height == 0 {
            return Err(Error::Validation(format!(
                "camera {}: resolution must be positive",
                self.id
            )));
        }
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) || !k.cx.is_finite() || !k.cy.is_finite() {
            return Err(Error::Validation(format!(
                "camera {}: focal lengths must be positive",
                self.id
            )));
        }
        let r = &self.extrinsics.rotation;
        let gram = r.transpose() * r - Matrix3::identity();
        if gram.amax() > ORTHONORMAL_TOL || !r.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation(format!(
                "camera {}: rotation is not orthonormal",
                self.id
            )));
        }
        if !self.extrinsics.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation(format!(
                "camera {}: translation is not finite",
                self.id
            )));
        }
        Ok(())
    }

    /// Point expressed in this camera's frame.
    pub fn to_camera_frame(&self, world: [f64; 3]) -> Vector3<f64> {
        self.extrinsics.rotation * Vector3::from(world) + self.extrinsics.translation
    }

    /// Pinhole projection. Points behind the camera or outside the image
    /// rectangle are reported with `visible == false`.
    pub fn project_point(&self, world: [f64; 3]) -> Projection {
        let p = self.to_camera_frame(world);
        let depth = p.z;
        if depth <= 0.0 {
            return Projection {
                pixel: [f64::NAN, f64::NAN],
                depth,
                visible: false,
            };
        }
        let k = &self.intrinsics;
        let u = k.fx * p.x / depth + k.cx;
        let v = k.fy * p.y / depth + k.cy;
        let (w, h) = (self.resolution.width as f64, self.resolution.height as f64);
        Projection {
            pixel: [u, v],
            depth,
            visible: (0.0..=w).contains(&u) && (0.0..=h).contains(&v),
        }
    }
}

/// Free-function form of [`CameraModel::project_point`].
pub fn project_point(world: [f64; 3], camera: &CameraModel) -> Projection {
    camera.project_point(world)
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    id: u32,
    resolution: Resolution,
    intrinsics: Intrinsics,
    extrinsics: ExtrinsicsRecord,
}

#[derive(Serialize, Deserialize)]
struct ExtrinsicsRecord {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<CameraRecord> for CameraModel {
    type Error = Error;

    fn try_from(rec: CameraRecord) -> Result<Self> {
        let r = rec.extrinsics.rotation;
        let rotation = Matrix3::from_fn(|i, j| r[i][j]);
        CameraModel::new(
            rec.id,
            rec.intrinsics,
            rec.resolution,
            Extrinsics {
                rotation,
                translation: Vector3::from(rec.extrinsics.translation),
            },
        )
    }
}

impl From<CameraModel> for CameraRecord {
    fn from(cam: CameraModel) -> Self {
        let r = cam.extrinsics.rotation;
        let t = cam.extrinsics.translation;
        CameraRecord {
            id: cam.id,
            resolution: cam.resolution,
            intrinsics: cam.intrinsics,
            extrinsics: ExtrinsicsRecord {
                rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
                translation: [t.x, t.y, t.z],
            },
        }
    }
}

/// Room half-extents per world axis, centered on the reference origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RoomRecord", into = "RoomRecord")]
pub struct RoomBounds {
    half_extents: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct RoomRecord {
    half_extents: [f64; 3],
}

impl TryFrom<RoomRecord> for RoomBounds {
    type Error = Error;
    fn try_from(rec: RoomRecord) -> Result<Self> {
        RoomBounds::new(rec.half_extents)
    }
}

impl From<RoomBounds> for RoomRecord {
    fn from(room: RoomBounds) -> Self {
        RoomRecord {
            half_extents: room.half_extents,
        }
    }
}

impl RoomBounds {
    pub fn new(half_extents: [f64; 3]) -> Result<Self> {
        if half_extents.iter().all(|h| h.is_finite() && *h > 0.0) {
            Ok(RoomBounds { half_extents })
        } else {
            Err(Error::Validation(format!(
                "room half-extents must be positive, got {half_extents:?}"
            )))
        }
    }

    pub fn half_extents(&self) -> [f64; 3] {
        self.half_extents
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPixel {
    pub px: f64,
    pub py: f64,
}

/// Maps the image rectangle onto [-1, 1]², y pointing up. Off-image
/// coordinates are clamped.
pub fn normalize_pixel(pixel: [f64; 2], resolution: Resolution) -> NormalizedPixel {
    let half_w = resolution.width as f64 / 2.0;
    let half_h = resolution.height as f64 / 2.0;
    NormalizedPixel {
        px: ((pixel[0] - half_w) / half_w).clamp(-1.0, 1.0),
        py: ((half_h - pixel[1]) / half_h).clamp(-1.0, 1.0),
    }
}

/// Divides each axis by the room half-extent and clamps to [-1, 1].
pub fn normalize_world(point: [f64; 3], room: &RoomBounds) -> [f64; 3] {
    std::array::from_fn(|i| (point[i] / room.half_extents[i]).clamp(-1.0, 1.0))
}

/// Inverse of [`normalize_world`] on the floor axes, in millimetres.
pub fn denormalize_pose(normalized_xy: [f64; 2], room: &RoomBounds) -> [f64; 2] {
    [
        normalized_xy[0] * room.half_extents[0] * 1000.0,
        normalized_xy[1] * room.half_extents[1] * 1000.0,
    ]
}

/// Camera set plus the room it observes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rig {
    pub cameras: Vec<CameraModel>,
    pub room: RoomBounds,
}

impl Rig {
    pub fn new(cameras: Vec<CameraModel>, room: RoomBounds) -> Result<Self> {
        let rig = Rig { cameras, room };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::Validation("rig has no cameras".into()));
        }
        for (i, cam) in self.cameras.iter().enumerate() {
            cam.validate()?;
            if self.cameras[..i].iter().any(|c| c.id == cam.id) {
                return Err(Error::Validation(format!("duplicate camera id {}", cam.id)));
            }
        }
        Ok(())
    }

    pub fn num_cameras(&self) -> usize {
        self.cameras.len()
    }

    /// Position of the camera in the rig, used as its one-hot slot.
    pub fn camera_index(&self, id: u32) -> Option<usize> {
        self.cameras.iter().position(|c| c.id == id)
    }

    pub fn camera(&self, id: u32) -> Option<&CameraModel> {
        self.cameras.iter().find(|c| c.id == id)
    }

    /// Three 640×480 cameras mounted high in three corners of a 6 m × 8 m
    /// room, all aimed at the room center at torso height.
    pub fn three_camera_default() -> Self {
        let room = RoomBounds::new([3.0, 4.0, 2.5]).expect("valid room");
        let intrinsics = Intrinsics {
            fx: 400.0,
            fy: 400.0,
            cx: 320.0,
            cy: 240.0,
        };
        let target = [0.0, 0.0, 0.9];
        let eyes = [[-2.9, -3.9, 2.4], [2.9, -3.9, 2.4], [0.0, 3.9, 2.4]];
        let cameras = eyes
            .iter()
            .enumerate()
            .map(|(i, eye)| CameraModel {
                id: i as u32 + 1,
                intrinsics,
                resolution: Resolution::VGA,
                extrinsics: Extrinsics::look_at(*eye, target).expect("valid pose"),
            })
            .collect();
        Rig { cameras, room }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rig: Rig = crate::error::from_json_str(text)?;
        rig.validate()?;
        Ok(rig)
    }
}
