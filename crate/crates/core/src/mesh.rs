//! Tetrahedral cage: rest geometry, oriented face table and barycentric math.
//!
//! Every tetrahedron must have positive signed volume in the rest state. The
//! face table stores each triangle once; its winding is chosen so that the
//! normal `(b - a) x (c - a)` points from `back` toward `front`. Boundary faces
//! always keep their single tetrahedron on the `back` side, so their normal
//! points out of the cage.

use std::collections::HashMap;

use thiserror::Error;

use crate::geom::{Aabb, Vec3};

/// Relative degeneracy threshold; multiplied by the cube of the cage diameter.
pub const DEGENERATE_VOLUME_REL: f64 = 1e-12;
/// Containment slack on barycentric coordinates.
pub const CONTAINMENT_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("tetrahedron {tet} is degenerate (signed volume {volume:e})")]
    DegenerateTet { tet: usize, volume: f64 },
    #[error("tetrahedron {tet} has non-positive rest volume {volume:e}")]
    InconsistentOrientation { tet: usize, volume: f64 },
    #[error("face {face:?} is shared by more than two tetrahedra")]
    NonManifold { face: [u32; 3] },
    #[error("tetrahedron {tet} references vertex {vertex} but the cage has {count} vertices")]
    IndexOutOfRange { tet: usize, vertex: u32, count: usize },
    #[error("vertex {index} is not finite")]
    NonFinite { index: usize },
    #[error("expected {expected} vertices, got {got}")]
    VertexCount { expected: usize, got: usize },
}

/// Barycentric coordinates with respect to a tetrahedron.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bary(pub [f64; 4]);

impl Bary {
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_inside(&self, eps: f64) -> bool {
        self.0.iter().all(|&l| l >= -eps && l <= 1.0 + eps)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn signed_volume(t: &[Vec3; 4]) -> f64 {
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let e3 = t[3] - t[0];
    e1.dot(&e2.cross(&e3)) / 6.0
}

/// Longest edge of a tetrahedron.
pub fn tet_diameter(t: &[Vec3; 4]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            d = d.max((t[i] - t[j]).norm());
        }
    }
    d
}

/// Barycentric coordinates of `p`, valid for exterior points too.
///
/// Solves the 3x3 edge system by Cramer's rule. The degeneracy threshold is
/// relative to the tetrahedron's own diameter.
pub fn barycentric_coords(t: &[Vec3; 4], p: &Vec3) -> Result<Bary, MeshError> {
    let d = tet_diameter(t);
    barycentric_with_eps(t, p, DEGENERATE_VOLUME_REL * d * d * d)
}

pub(crate) fn barycentric_with_eps(t: &[Vec3; 4], p: &Vec3, eps_vol: f64) -> Result<Bary, MeshError> {
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let e3 = t[3] - t[0];
    let c23 = e2.cross(&e3);
    let det = e1.dot(&c23);
    if det.abs() / 6.0 <= eps_vol || !det.is_finite() {
        return Err(MeshError::DegenerateTet {
            tet: 0,
            volume: det / 6.0,
        });
    }
    Ok(barycentric_unchecked(&e1, &e2, &e3, &c23, det, &(p - t[0])))
}

#[inline]
fn barycentric_unchecked(e1: &Vec3, e2: &Vec3, e3: &Vec3, c23: &Vec3, det: f64, r: &Vec3) -> Bary {
    let inv = 1.0 / det;
    let l1 = r.dot(c23) * inv;
    let l2 = e1.dot(&r.cross(e3)) * inv;
    let l3 = e1.dot(&e2.cross(r)) * inv;
    Bary([1.0 - l1 - l2 - l3, l1, l2, l3])
}

#[inline]
pub fn reconstruct(b: &Bary, t: &[Vec3; 4]) -> Vec3 {
    t[0] * b.0[0] + t[1] * b.0[1] + t[2] * b.0[2] + t[3] * b.0[3]
}

/// One triangle of the face table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Face {
    pub verts: [u32; 3],
    /// Tetrahedron on the side the normal points away from.
    pub back: Option<u32>,
    /// Tetrahedron on the side the normal points into.
    pub front: Option<u32>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.front.is_none() || self.back.is_none()
    }
}

/// Outward-facing local faces of a positively oriented tetrahedron.
pub const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[derive(Clone, Debug)]
pub struct TetCage {
    rest_vertices: Vec<Vec3>,
    tets: Vec<[u32; 4]>,
    faces: Vec<Face>,
    tet_faces: Vec<[u32; 4]>,
    bounds: Aabb,
    diameter: f64,
}

impl TetCage {
    pub fn new(rest_vertices: Vec<Vec3>, tets: Vec<[u32; 4]>) -> Result<Self, MeshError> {
        for (i, v) in rest_vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFinite { index: i });
            }
        }
        for (ti, t) in tets.iter().enumerate() {
            for &v in t {
                if v as usize >= rest_vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        tet: ti,
                        vertex: v,
                        count: rest_vertices.len(),
                    });
                }
            }
        }
        let bounds = Aabb::from_points(&rest_vertices);
        let diameter = bounds.diagonal();
        let eps_vol = DEGENERATE_VOLUME_REL * diameter.powi(3);
        let (faces, tet_faces) = derive_faces(&rest_vertices, &tets, eps_vol)?;
        Ok(TetCage {
            rest_vertices,
            tets,
            faces,
            tet_faces,
            bounds,
            diameter,
        })
    }

    pub fn rest_vertices(&self) -> &[Vec3] {
        &self.rest_vertices
    }

    pub fn tets(&self) -> &[[u32; 4]] {
        &self.tets
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Indices into [`faces`](Self::faces) of the four faces of each tet.
    pub fn tet_faces(&self) -> &[[u32; 4]] {
        &self.tet_faces
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn vertex_count(&self) -> usize {
        self.rest_vertices.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    pub fn degenerate_volume(&self) -> f64 {
        DEGENERATE_VOLUME_REL * self.diameter.powi(3)
    }

    #[inline]
    pub fn tet_points(&self, positions: &[Vec3], tet: usize) -> [Vec3; 4] {
        let t = &self.tets[tet];
        [
            positions[t[0] as usize],
            positions[t[1] as usize],
            positions[t[2] as usize],
            positions[t[3] as usize],
        ]
    }

    pub fn rest_tet(&self, tet: usize) -> [Vec3; 4] {
        self.tet_points(&self.rest_vertices, tet)
    }

    pub fn rest_centroid(&self, tet: usize) -> Vec3 {
        let t = self.rest_tet(tet);
        (t[0] + t[1] + t[2] + t[3]) * 0.25
    }

    /// Barycentric coordinates of `p` in tet `tet` under `positions`.
    pub fn barycentric(&self, positions: &[Vec3], tet: usize, p: &Vec3) -> Result<Bary, MeshError> {
        barycentric_with_eps(&self.tet_points(positions, tet), p, self.degenerate_volume())
            .map_err(|e| match e {
                MeshError::DegenerateTet { volume, .. } => MeshError::DegenerateTet { tet, volume },
                other => other,
            })
    }

    /// Exhaustive point location: the lowest-index tet containing `p`.
    ///
    /// Degenerate tets (possible only in a deformed state) are skipped.
    pub fn locate_point_bruteforce(&self, positions: &[Vec3], p: &Vec3) -> Option<usize> {
        let eps_vol = self.degenerate_volume();
        for ti in 0..self.tets.len() {
            let t = self.tet_points(positions, ti);
            let lo = t[0].inf(&t[1]).inf(&t[2].inf(&t[3]));
            let hi = t[0].sup(&t[1]).sup(&t[2].sup(&t[3]));
            let slack = CONTAINMENT_EPS * self.diameter.max(1.0);
            if (0..3).any(|k| p[k] < lo[k] - slack || p[k] > hi[k] + slack) {
                continue;
            }
            if let Ok(b) = barycentric_with_eps(&t, p, eps_vol) {
                if b.is_inside(CONTAINMENT_EPS) {
                    return Some(ti);
                }
            }
        }
        None
    }
}

/// Builds the oriented face table and per-tet face indices.
pub fn derive_faces(
    vertices: &[Vec3],
    tets: &[[u32; 4]],
    eps_vol: f64,
) -> Result<(Vec<Face>, Vec<[u32; 4]>), MeshError> {
    let mut faces: Vec<Face> = Vec::with_capacity(tets.len() * 2 + 4);
    let mut index: HashMap<[u32; 3], u32> = HashMap::with_capacity(tets.len() * 3);
    let mut tet_faces = Vec::with_capacity(tets.len());

    for (ti, t) in tets.iter().enumerate() {
        let pts = [
            vertices[t[0] as usize],
            vertices[t[1] as usize],
            vertices[t[2] as usize],
            vertices[t[3] as usize],
        ];
        let volume = signed_volume(&pts);
        if volume <= eps_vol {
            return Err(MeshError::InconsistentOrientation { tet: ti, volume });
        }
        let mut local = [0u32; 4];
        for (k, lf) in TET_FACES.iter().enumerate() {
            let verts = [t[lf[0]], t[lf[1]], t[lf[2]]];
            let mut key = verts;
            key.sort_unstable();
            match index.get(&key) {
                None => {
                    let fi = faces.len() as u32;
                    faces.push(Face {
                        verts,
                        back: Some(ti as u32),
                        front: None,
                    });
                    index.insert(key, fi);
                    local[k] = fi;
                }
                Some(&fi) => {
                    let face = &mut faces[fi as usize];
                    if face.front.is_some() {
                        return Err(MeshError::NonManifold { face: key });
                    }
                    // A consistently oriented neighbour sees the face with the
                    // opposite winding; the same winding means the two tets overlap.
                    if same_cyclic_order(&face.verts, &verts) {
                        return Err(MeshError::InconsistentOrientation { tet: ti, volume });
                    }
                    face.front = Some(ti as u32);
                    local[k] = fi;
                }
            }
        }
        tet_faces.push(local);
    }
    Ok((faces, tet_faces))
}

fn same_cyclic_order(a: &[u32; 3], b: &[u32; 3]) -> bool {
    (0..3).any(|r| a[0] == b[r] && a[1] == b[(r + 1) % 3] && a[2] == b[(r + 2) % 3])
}

/// Per-frame vertex positions of a cage.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformedState {
    pub vertices: Vec<Vec3>,
}

impl DeformedState {
    pub fn rest(cage: &TetCage) -> Self {
        DeformedState {
            vertices: cage.rest_vertices().to_vec(),
        }
    }

    pub fn new(cage: &TetCage, vertices: Vec<Vec3>) -> Result<Self, MeshError> {
        if vertices.len() != cage.vertex_count() {
            return Err(MeshError::VertexCount {
                expected: cage.vertex_count(),
                got: vertices.len(),
            });
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite { index: i });
        }
        Ok(DeformedState { vertices })
    }

    /// Applies `f` to every rest vertex.
    pub fn from_fn(cage: &TetCage, f: impl Fn(&Vec3) -> Vec3) -> Self {
        DeformedState {
            vertices: cage.rest_vertices().iter().map(f).collect(),
        }
    }
}

/// Single positively oriented tetrahedron.
pub fn single_tet(points: [Vec3; 4]) -> Result<TetCage, MeshError> {
    TetCage::new(points.to_vec(), vec![[0, 1, 2, 3]])
}

/// Box split into `nx * ny * nz` cells of five tets each, alternating the
/// split parity between neighbouring cells so the faces conform.
pub fn cube_grid(cells: [usize; 3], min: Vec3, max: Vec3) -> TetCage {
    let [nx, ny, nz] = cells;
    let vid = |i: usize, j: usize, k: usize| (i + (nx + 1) * (j + (ny + 1) * k)) as u32;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                let f = Vec3::new(i as f64 / nx as f64, j as f64 / ny as f64, k as f64 / nz as f64);
                vertices.push(min + (max - min).component_mul(&f));
            }
        }
    }
    // corner c = bit0 x | bit1 y | bit2 z
    const EVEN: [[usize; 4]; 5] = [[0, 1, 2, 4], [3, 1, 2, 7], [5, 1, 4, 7], [6, 2, 4, 7], [1, 2, 4, 7]];
    const ODD: [[usize; 4]; 5] = [[1, 0, 3, 5], [2, 0, 3, 6], [4, 0, 5, 6], [7, 3, 5, 6], [0, 3, 5, 6]];
    let mut tets = Vec::with_capacity(5 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let corner = |c: usize| vid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                let pattern = if (i + j + k) % 2 == 0 { &EVEN } else { &ODD };
                for local in pattern {
                    let mut t = local.map(corner);
                    let pts = t.map(|v| vertices[v as usize]);
                    if signed_volume(&pts) < 0.0 {
                        t.swap(1, 2);
                    }
                    tets.push(t);
                }
            }
        }
    }
    TetCage::new(vertices, tets).expect("grid cage is valid by construction")
}
