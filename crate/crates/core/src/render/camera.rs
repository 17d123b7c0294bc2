use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Affine, Mat3, Ray, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("focal lengths must be positive")]
    Focal,
    #[error("near plane must lie before far plane")]
    Clip,
    #[error("image size must be non-zero")]
    Size,
    #[error("camera pose is not a rotation plus translation")]
    Pose,
}

/// Pinhole camera looking down its local +z axis, x right and y down.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// World from camera.
    pub pose: Affine,
    pub near: f64,
    pub far: f64,
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    w: u32,
    h: u32,
    pose: [f64; 12],
    near: f64,
    far: f64,
}

impl TryFrom<CameraRecord> for Camera {
    type Error = CameraError;

    fn try_from(r: CameraRecord) -> Result<Self, CameraError> {
        let cam = Camera {
            fx: r.fx,
            fy: r.fy,
            cx: r.cx,
            cy: r.cy,
            width: r.w,
            height: r.h,
            pose: Affine::from_row_major(&r.pose),
            near: r.near,
            far: r.far,
        };
        cam.validate()?;
        Ok(cam)
    }
}

impl From<Camera> for CameraRecord {
    fn from(c: Camera) -> Self {
        CameraRecord {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            w: c.width,
            h: c.height,
            pose: c.pose.to_row_major(),
            near: c.near,
            far: c.far,
        }
    }
}

impl Camera {
    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CameraError::Focal);
        }
        if !(self.near < self.far) {
            return Err(CameraError::Clip);
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::Size);
        }
        let r = &self.pose.linear;
        if (r.transpose() * r - Mat3::identity()).amax() > 1e-6 || r.determinant() <= 0.0 {
            return Err(CameraError::Pose);
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`, with a vertical field of view in
    /// radians and the principal point at the image centre.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y: f64, width: u32, height: u32, near: f64, far: f64) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let f = 0.5 * height as f64 / (0.5 * fov_y).tan();
        Camera {
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
            pose: Affine::from_parts(Mat3::from_columns(&[right, down, forward]), eye),
            near,
            far,
        }
    }

    pub fn center(&self) -> Vec3 {
        self.pose.translation
    }

    /// Ray through image position `(x, y)`; pixel `(i, j)` has its centre at
    /// `(i + 0.5, j + 0.5)`.
    pub fn generate_ray(&self, x: f64, y: f64) -> Ray {
        let local = Vec3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0);
        Ray::new(self.pose.translation, self.pose.linear * local)
    }

    pub fn pixel_ray(&self, i: u32, j: u32) -> Ray {
        self.generate_ray(i as f64 + 0.5, j as f64 + 0.5)
    }

    /// Same intrinsics seen through `world_motion` applied to the pose.
    pub fn moved(&self, world_motion: &Affine) -> Camera {
        Camera {
            pose: world_motion.compose(&self.pose),
            ..self.clone()
        }
    }

    pub fn with_size(&self, width: u32, height: u32) -> Camera {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..self.clone()
        }
    }
}
