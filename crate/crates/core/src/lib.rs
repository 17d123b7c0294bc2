//! Deformation and rendering of canonical radiance fields through a
//! tetrahedral cage.
//!
//! Camera rays are cast in deformed space, split into tetrahedron intervals by
//! a BVH over the deformed cage, mapped back to the canonical field with
//! barycentric coordinates, and integrated with the emission-absorption model.

// Negated float comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anim;
pub mod deform;
pub mod field;
pub mod fit;
pub mod geom;
pub mod io;
pub mod lookup;
pub mod mesh;
pub mod metrics;
pub mod render;
pub mod spatial;

pub use geom::{Aabb, Affine, Mat3, Plane, Ray, Vec3};
pub use lookup::{Bvh, Region, RaySegments, Segment, TriShell};
pub use mesh::{Bary, DeformedState, MeshError, TetCage};
