use serde::{Deserialize, Serialize};

use super::transform::{RigidTransform, Vec3};
use crate::error::{Error, Result};

/// Pinhole camera. `extrinsic` maps world coordinates into the camera frame,
/// whose +z axis is the viewing direction, +x right and +y down in the image.
///
/// Pixel `(u, v)` is centered on the continuous image coordinate `(u, v)`;
/// projection and back-projection both use that convention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub extrinsic: RigidTransform,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize, extrinsic: RigidTransform) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsic,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image must be non-empty".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidCamera("principal point outside the image".into()));
        }
        if !self.extrinsic.is_finite() {
            return Err(Error::InvalidCamera("non-finite extrinsic".into()));
        }
        Ok(())
    }

    /// Camera placed at `eye` looking at `target`, with image "up" as close to
    /// world `up` as possible.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        (width, height): (usize, usize),
        focal: f64,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            right = forward.cross(&Vec3::x());
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        // rows of the world->camera rotation are the camera axes in world coordinates
        let rot = nalgebra::Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let extrinsic = RigidTransform::from_matrix(&rot, -(rot * eye));
        Self::new(
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            extrinsic,
        )
    }

    /// Continuous image coordinates of a camera-frame point (z must be > 0).
    pub fn project(&self, p_cam: &Vec3) -> (f64, f64) {
        (self.fx * p_cam.x / p_cam.z + self.cx, self.fy * p_cam.y / p_cam.z + self.cy)
    }

    /// Inverse pinhole for pixel `(u, v)` at range `depth` (camera-frame z).
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        Vec3::new((u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth)
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.extrinsic.apply(p)
    }

    pub fn camera_to_world(&self, p: &Vec3) -> Vec3 {
        self.extrinsic.inverse().apply(p)
    }

    pub fn position(&self) -> Vec3 {
        *self.extrinsic.inverse().translation()
    }
}
