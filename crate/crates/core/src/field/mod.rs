//! Canonical-space radiance fields.

pub mod sh;
mod voxel;

use serde::{Deserialize, Serialize};

use crate::geom::{Mat3, Vec3};

pub use voxel::{VoxelField, VoxelFormatError};

/// Density (per unit length) and colour at a point seen from a direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldResponse {
    pub density: f64,
    pub color: Vec3,
}

impl FieldResponse {
    pub const VACUUM: FieldResponse = FieldResponse {
        density: 0.0,
        color: Vec3::new(0.0, 0.0, 0.0),
    };
}

pub trait RadianceField: Send + Sync {
    /// `p` in canonical space, `v` unit view direction in canonical space.
    fn query(&self, p: &Vec3, v: &Vec3) -> FieldResponse;
}

impl<F: RadianceField + ?Sized> RadianceField for &F {
    fn query(&self, p: &Vec3, v: &Vec3) -> FieldResponse {
        (**self).query(p, v)
    }
}

impl<F: RadianceField + ?Sized> RadianceField for Box<F> {
    fn query(&self, p: &Vec3, v: &Vec3) -> FieldResponse {
        (**self).query(p, v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Box { min: [f64; 3], max: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
}

impl Shape {
    #[inline]
    pub fn contains(&self, p: &Vec3) -> bool {
        match self {
            Shape::Box { min, max } => (0..3).all(|k| p[k] >= min[k] && p[k] <= max[k]),
            Shape::Sphere { center, radius } => (p - Vec3::from(*center)).norm_squared() <= radius * radius,
        }
    }
}

/// Highlight seen when looking against `axis`: adds
/// `strength * max(0, -v . axis)^exponent` to every channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lobe {
    pub axis: [f64; 3],
    pub strength: f64,
    pub exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub density: f64,
    pub color: [f64; 3],
    #[serde(default)]
    pub lobe: Option<Lobe>,
}

impl Primitive {
    fn color(&self, v: &Vec3) -> Vec3 {
        let base = Vec3::from(self.color);
        match &self.lobe {
            None => base,
            Some(lobe) => {
                let axis = Vec3::from(lobe.axis).normalize();
                let s = lobe.strength * (-v.dot(&axis)).max(0.0).powf(lobe.exponent);
                (base + Vec3::repeat(s)).map(|c| c.clamp(0.0, 1.0))
            }
        }
    }
}

/// Union of constant-density primitives; overlapping densities add and colours
/// mix in proportion to density.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyticField {
    pub primitives: Vec<Primitive>,
}

impl AnalyticField {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        AnalyticField { primitives }
    }

    pub fn single_box(min: Vec3, max: Vec3, density: f64, color: [f64; 3]) -> Self {
        AnalyticField::new(vec![Primitive {
            shape: Shape::Box {
                min: min.into(),
                max: max.into(),
            },
            density,
            color,
            lobe: None,
        }])
    }
}

impl RadianceField for AnalyticField {
    fn query(&self, p: &Vec3, v: &Vec3) -> FieldResponse {
        let mut sigma = 0.0;
        let mut weighted = Vec3::zeros();
        for prim in &self.primitives {
            if prim.shape.contains(p) {
                sigma += prim.density;
                weighted += prim.color(v) * prim.density;
            }
        }
        if sigma <= 0.0 {
            return FieldResponse::VACUUM;
        }
        FieldResponse {
            density: sigma,
            color: weighted / sigma,
        }
    }
}

/// A field moved rigidly: `p -> rotation * p + translation`, with view
/// directions rotated alongside.
#[derive(Clone, Debug)]
pub struct RigidlyMoved<F> {
    pub inner: F,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl<F: RadianceField> RadianceField for RigidlyMoved<F> {
    fn query(&self, p: &Vec3, v: &Vec3) -> FieldResponse {
        let local = self.rotation.tr_mul(&(p - self.translation));
        self.inner.query(&local, &self.rotation.tr_mul(v))
    }
}
