//! Ray-triangle acceleration over the deformed cage and region shells, point
//! location by first-hit side tests, and per-ray segmentation into regions.
//!
//! Every triangle knows the region on each side of it. A ray that crosses a
//! triangle along its normal moves from the `back` region into the `front`
//! region; against the normal it moves the other way. Segmenting a ray is
//! therefore a walk over the sorted hits, and locating a point is a single
//! first-hit query along a random direction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use thiserror::Error;

use crate::geom::{Aabb, Ray, Vec3};
use crate::mesh::{Bary, TetCage};

/// Maximum triangles per leaf.
pub const LEAF_SIZE: usize = 4;
/// Retries with fresh directions before point location falls back to brute force.
pub const LOCATE_RETRIES: usize = 8;
/// Hits closer than this fraction of the query range are treated as coincident.
pub const COINCIDENT_REL: f64 = 1e-9;
/// Refit instead of rebuild while vertices move less than this fraction of leaf extents.
pub const REFIT_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Outside,
    Tet(u32),
    /// Interior of a closed region shell (index into the region list).
    Shell(u32),
}

impl Region {
    pub fn is_outside(&self) -> bool {
        matches!(self, Region::Outside)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LookupError {
    #[error("inconsistent traversal at t={t}: ray is in {current:?} but the crossed faces border {found:?}")]
    InconsistentTraversal {
        t: f64,
        current: Region,
        found: Vec<Region>,
    },
    #[error("shell {shell} vertex count mismatch")]
    ShellVertices { shell: usize },
}

/// Closed triangle surface with outward-facing winding.
#[derive(Clone, Debug, PartialEq)]
pub struct TriShell {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriShell {
    /// Axis-aligned box with outward winding.
    pub fn cuboid(min: Vec3, max: Vec3) -> Self {
        let mut vertices = Vec::with_capacity(8);
        for c in 0..8 {
            vertices.push(Vec3::new(
                if c & 1 == 0 { min.x } else { max.x },
                if c & 2 == 0 { min.y } else { max.y },
                if c & 4 == 0 { min.z } else { max.z },
            ));
        }
        let quads = [
            [0, 2, 3, 1], // z-
            [4, 5, 7, 6], // z+
            [0, 1, 5, 4], // y-
            [2, 6, 7, 3], // y+
            [0, 4, 6, 2], // x-
            [1, 3, 7, 5], // x+
        ];
        let mut triangles = Vec::with_capacity(12);
        for q in quads {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
        }
        TriShell { vertices, triangles }
    }

    pub fn transformed(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        TriShell {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Generalised winding number; ~1 inside a closed outward shell, ~0 outside.
    pub fn winding_number(&self, p: &Vec3) -> f64 {
        let mut total = 0.0;
        for t in &self.triangles {
            let a = self.vertices[t[0] as usize] - p;
            let b = self.vertices[t[1] as usize] - p;
            let c = self.vertices[t[2] as usize] - p;
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let num = a.dot(&b.cross(&c));
            let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
            total += 2.0 * num.atan2(den);
        }
        total / (4.0 * std::f64::consts::PI)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.winding_number(p) > 0.5
    }
}

/// A triangle in the acceleration structure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    /// Indices into the structure's position buffer.
    pub verts: [u32; 3],
    pub back: Region,
    pub front: Region,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// The ray origin lies on the side the normal points into.
    Front,
    Back,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub face: u32,
    pub t: f64,
    pub side: Side,
    /// The hit lies exactly on an edge or vertex of the triangle.
    pub on_edge: bool,
}

impl Hit {
    /// Region the ray leaves at this hit.
    #[inline]
    pub fn near(&self, tri: &Triangle) -> Region {
        match self.side {
            Side::Front => tri.front,
            Side::Back => tri.back,
        }
    }

    /// Region the ray enters at this hit.
    #[inline]
    pub fn far(&self, tri: &Triangle) -> Region {
        match self.side {
            Side::Front => tri.back,
            Side::Back => tri.front,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: first primitive slot; inner: index of the right child (left is `self + 1`).
    offset: u32,
    /// Zero for inner nodes.
    count: u32,
}

/// Bounding-volume hierarchy over the deformed cage faces and region shells.
#[derive(Clone, Debug)]
pub struct Bvh {
    positions: Vec<Vec3>,
    triangles: Vec<Triangle>,
    nodes: Vec<Node>,
    /// Primitive slot -> triangle index.
    order: Vec<u32>,
    /// Triangle vertex positions in slot order.
    slot_pos: Vec<[Vec3; 3]>,
    cage_vertex_count: usize,
    shell_offsets: Vec<usize>,
    scale: f64,
    locate_seed: u64,
}

struct PreparedRay {
    origin: Vec3,
    inv_dir: Vec3,
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl PreparedRay {
    fn new(ray: &Ray) -> Self {
        let d = ray.dir;
        let kz = if d.x.abs() >= d.y.abs() && d.x.abs() >= d.z.abs() {
            0
        } else if d.y.abs() >= d.z.abs() {
            1
        } else {
            2
        };
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        if d[kz] < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        PreparedRay {
            origin: ray.origin,
            inv_dir: Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z),
            kx,
            ky,
            kz,
            sx: d[kx] / d[kz],
            sy: d[ky] / d[kz],
            sz: 1.0 / d[kz],
        }
    }

    /// Watertight ray/triangle test. Returns `(t, side, on_edge)`.
    ///
    /// Edge functions are evaluated from sheared vertex coordinates that do not
    /// depend on the triangle, so a shared edge is classified identically (up
    /// to sign) by both triangles using it.
    #[inline]
    fn intersect(&self, tri: &[Vec3; 3], t_min: f64, t_max: f64) -> Option<(f64, Side, bool)> {
        let a = tri[0] - self.origin;
        let b = tri[1] - self.origin;
        let c = tri[2] - self.origin;
        let (kx, ky, kz) = (self.kx, self.ky, self.kz);
        let ax = a[kx] - self.sx * a[kz];
        let ay = a[ky] - self.sy * a[kz];
        let bx = b[kx] - self.sx * b[kz];
        let by = b[ky] - self.sy * b[kz];
        let cx = c[kx] - self.sx * c[kz];
        let cy = c[ky] - self.sy * c[kz];
        let u = cx * by - cy * bx;
        let v = ax * cy - ay * cx;
        let w = bx * ay - by * ax;
        if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
            return None;
        }
        let det = u + v + w;
        if det == 0.0 {
            return None;
        }
        let tt = u * (self.sz * a[kz]) + v * (self.sz * b[kz]) + w * (self.sz * c[kz]);
        let t = tt / det;
        if !(t > t_min && t <= t_max) {
            return None;
        }
        // det < 0 <=> dir . normal > 0: the ray runs from back to front
        let side = if det < 0.0 { Side::Back } else { Side::Front };
        Some((t, side, u == 0.0 || v == 0.0 || w == 0.0))
    }
}

impl Bvh {
    /// Builds the hierarchy over the cage faces at `deformed` positions plus the
    /// triangles of each region shell (given in deformed space).
    pub fn build(cage: &TetCage, deformed: &[Vec3], shells: &[&TriShell]) -> Self {
        assert_eq!(deformed.len(), cage.vertex_count(), "deformed state does not match cage");
        let mut positions = deformed.to_vec();
        let mut triangles: Vec<Triangle> = cage
            .faces()
            .iter()
            .map(|f| Triangle {
                verts: f.verts,
                back: f.back.map_or(Region::Outside, Region::Tet),
                front: f.front.map_or(Region::Outside, Region::Tet),
            })
            .collect();
        let mut shell_offsets = Vec::with_capacity(shells.len());
        for (si, shell) in shells.iter().enumerate() {
            let base = positions.len() as u32;
            shell_offsets.push(positions.len());
            positions.extend_from_slice(&shell.vertices);
            triangles.extend(shell.triangles.iter().map(|t| Triangle {
                verts: [t[0] + base, t[1] + base, t[2] + base],
                back: Region::Shell(si as u32),
                front: Region::Outside,
            }));
        }
        let scale = Aabb::from_points(&positions).diagonal().max(1e-300);
        let mut bvh = Bvh {
            positions,
            triangles,
            nodes: Vec::new(),
            order: Vec::new(),
            slot_pos: Vec::new(),
            cage_vertex_count: cage.vertex_count(),
            shell_offsets,
            scale,
            locate_seed: 0x5eed_7e7a,
        };
        bvh.rebuild();
        bvh
    }

    pub fn with_locate_seed(mut self, seed: u64) -> Self {
        self.locate_seed = seed;
        self
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    /// Deformed cage vertex positions.
    pub fn cage_positions(&self) -> &[Vec3] {
        &self.positions[..self.cage_vertex_count]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.count > 0).count()
    }

    pub fn max_leaf_size(&self) -> usize {
        self.nodes.iter().map(|n| n.count as usize).max().unwrap_or(0)
    }

    /// Every triangle appears in exactly one leaf.
    pub fn leaf_triangles(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if n.count > 0 {
                out.extend_from_slice(&self.order[n.offset as usize..(n.offset + n.count) as usize]);
            }
        }
        out
    }

    pub fn root_bounds(&self) -> Aabb {
        self.nodes.first().map_or(Aabb::empty(), |n| n.bounds)
    }

    fn tri_points(&self, tri: u32) -> [Vec3; 3] {
        let t = &self.triangles[tri as usize];
        t.verts.map(|v| self.positions[v as usize])
    }

    fn tri_bounds(&self, tri: u32) -> Aabb {
        let p = self.tri_points(tri);
        Aabb::from_points(&p).padded(self.pad())
    }

    fn pad(&self) -> f64 {
        1e-12 * self.scale
    }

    fn rebuild(&mut self) {
        let n = self.triangles.len();
        self.order = (0..n as u32).collect();
        self.nodes.clear();
        let centroids: Vec<Vec3> = (0..n as u32)
            .map(|t| {
                let p = self.tri_points(t);
                (p[0] + p[1] + p[2]) / 3.0
            })
            .collect();
        let boxes: Vec<Aabb> = (0..n as u32).map(|t| self.tri_bounds(t)).collect();
        if n > 0 {
            let mut order = std::mem::take(&mut self.order);
            build_node(&mut self.nodes, &mut order, 0, n, &centroids, &boxes);
            self.order = order;
        }
        self.slot_pos = self.order.iter().map(|&t| self.tri_points(t)).collect();
    }

    /// Moves the cage vertices (and optionally region shells) to new positions.
    ///
    /// The tree is refit when every leaf's vertices move by less than
    /// [`REFIT_FRACTION`] of the leaf's extent, and rebuilt otherwise. Returns
    /// `true` when a full rebuild happened.
    pub fn update(&mut self, deformed: &[Vec3], shells: Option<&[&TriShell]>) -> bool {
        assert_eq!(deformed.len(), self.cage_vertex_count);
        let mut next = self.positions.clone();
        next[..self.cage_vertex_count].copy_from_slice(deformed);
        if let Some(shells) = shells {
            assert_eq!(shells.len(), self.shell_offsets.len());
            for (off, shell) in self.shell_offsets.iter().zip(shells) {
                next[*off..*off + shell.vertices.len()].copy_from_slice(&shell.vertices);
            }
        }
        let refit = self.nodes.iter().filter(|n| n.count > 0).all(|n| {
            let extent = n.bounds.extent().max();
            let mut moved: f64 = 0.0;
            for &t in &self.order[n.offset as usize..(n.offset + n.count) as usize] {
                for &v in &self.triangles[t as usize].verts {
                    moved = moved.max((next[v as usize] - self.positions[v as usize]).norm());
                }
            }
            moved < REFIT_FRACTION * extent
        });
        self.positions = next;
        if refit {
            self.refit();
        } else {
            self.rebuild();
        }
        !refit
    }

    fn refit(&mut self) {
        self.slot_pos = self.order.iter().map(|&t| self.tri_points(t)).collect();
        // children always follow their parent
        for i in (0..self.nodes.len()).rev() {
            let node = self.nodes[i];
            let bounds = if node.count > 0 {
                let mut b = Aabb::empty();
                for &t in &self.order[node.offset as usize..(node.offset + node.count) as usize] {
                    b = b.merge(&self.tri_bounds(t));
                }
                b
            } else {
                self.nodes[i + 1].bounds.merge(&self.nodes[node.offset as usize].bounds)
            };
            self.nodes[i].bounds = bounds;
        }
    }

    /// All hits with `t` in `(t_min, t_max]`, sorted by `t` then face index.
    pub fn ray_hits(&self, ray: &Ray, t_min: f64, t_max: f64) -> Vec<Hit> {
        let mut out = Vec::new();
        self.ray_hits_into(ray, t_min, t_max, &mut out);
        out
    }

    pub fn ray_hits_into(&self, ray: &Ray, t_min: f64, t_max: f64, out: &mut Vec<Hit>) {
        out.clear();
        if self.nodes.is_empty() {
            return;
        }
        let pr = PreparedRay::new(ray);
        let mut stack = [0u32; 64];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.bounds.intersect(&pr.origin, &pr.inv_dir, t_min, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                let start = node.offset as usize;
                for slot in start..start + node.count as usize {
                    if let Some((t, side, on_edge)) = pr.intersect(&self.slot_pos[slot], t_min, t_max) {
                        out.push(Hit {
                            face: self.order[slot],
                            t,
                            side,
                            on_edge,
                        });
                    }
                }
            } else {
                let idx = stack[sp];
                stack[sp] = node.offset;
                stack[sp + 1] = idx + 1;
                sp += 2;
            }
        }
        out.sort_unstable_by(|a, b| a.t.total_cmp(&b.t).then(a.face.cmp(&b.face)));
    }

    /// Locates `p` keyed by a hash of its coordinates.
    pub fn locate_point(&self, cage: &TetCage, p: &Vec3) -> Region {
        let key = p.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, c| {
            (h ^ c.to_bits()).wrapping_mul(0x0000_0100_0000_01b3)
        });
        self.locate_point_keyed(cage, p, key)
    }

    /// First-hit point location. The random directions come from a
    /// counter-based generator keyed by `key`, so results do not depend on
    /// evaluation order.
    pub fn locate_point_keyed(&self, cage: &TetCage, p: &Vec3, key: u64) -> Region {
        let mut rng = ChaCha8Rng::seed_from_u64(self.locate_seed);
        rng.set_stream(key);
        let mut hits = Vec::new();
        for _ in 0..=LOCATE_RETRIES {
            let d: [f64; 3] = UnitSphere.sample(&mut rng);
            let ray = Ray::new(*p, Vec3::from(d));
            self.ray_hits_into(&ray, 0.0, f64::INFINITY, &mut hits);
            let Some(first) = hits.first() else {
                return Region::Outside;
            };
            let tol = COINCIDENT_REL * self.scale;
            let crowded = hits.get(1).is_some_and(|h| h.t - first.t <= tol);
            if first.on_edge || crowded || first.t <= tol {
                continue;
            }
            return first.near(&self.triangles[first.face as usize]);
        }
        self.locate_point_bruteforce(cage, p)
    }

    /// Exhaustive reference location over tets, then shells.
    pub fn locate_point_bruteforce(&self, cage: &TetCage, p: &Vec3) -> Region {
        if let Some(t) = cage.locate_point_bruteforce(self.cage_positions(), p) {
            return Region::Tet(t as u32);
        }
        for (si, &off) in self.shell_offsets.iter().enumerate() {
            if self.shell_winding(si, off, p) > 0.5 {
                return Region::Shell(si as u32);
            }
        }
        Region::Outside
    }

    fn shell_winding(&self, si: usize, offset: usize, p: &Vec3) -> f64 {
        let end = self.shell_offsets.get(si + 1).copied().unwrap_or(self.positions.len());
        let base = offset as u32;
        let tris: Vec<[u32; 3]> = self
            .triangles
            .iter()
            .filter(|t| t.back == Region::Shell(si as u32))
            .map(|t| t.verts.map(|v| v - base))
            .collect();
        TriShell {
            vertices: self.positions[offset..end].to_vec(),
            triangles: tris,
        }
        .winding_number(p)
    }

    /// Splits `[t_min, t_max]` of `ray` into consecutive region intervals.
    pub fn segment_ray(&self, cage: &TetCage, ray: &Ray, t_min: f64, t_max: f64) -> Result<RaySegments, LookupError> {
        let mut segs = RaySegments::default();
        let mut hits = Vec::new();
        self.segment_ray_into(cage, ray, t_min, t_max, &mut hits, &mut segs)?;
        Ok(segs)
    }

    /// Allocation-reusing form of [`segment_ray`](Self::segment_ray).
    pub fn segment_ray_into(
        &self,
        cage: &TetCage,
        ray: &Ray,
        t_min: f64,
        t_max: f64,
        hits: &mut Vec<Hit>,
        out: &mut RaySegments,
    ) -> Result<(), LookupError> {
        out.segments.clear();
        if !(t_max > t_min) {
            return Ok(());
        }
        self.ray_hits_into(ray, t_min, t_max, hits);
        if hits.is_empty() {
            let mid = ray.at(0.5 * (t_min + t_max));
            let region = self.locate_point(cage, &mid);
            self.push_segment(cage, ray, t_min, t_max, region, out);
            return Ok(());
        }
        let tol = COINCIDENT_REL * t_max.abs().max(self.scale);
        let mut used: Vec<bool> = Vec::new();
        let mut cursor = t_min;
        let mut current: Option<Region> = None;
        let mut start = 0;
        while start < hits.len() {
            let t_group = hits[start].t;
            let mut end = start + 1;
            while end < hits.len() && hits[end].t - t_group <= tol {
                end += 1;
            }
            let group = &hits[start..end];
            let before = match current {
                Some(r) => r,
                None => self.group_source(group),
            };
            // follow near -> far transitions; several coincident hits (edge or
            // vertex crossings, duplicated faces) chain through intermediate regions
            used.clear();
            used.resize(group.len(), false);
            let mut region = before;
            let mut progressed = false;
            while let Some(k) =
                (0..group.len()).find(|&k| !used[k] && group[k].near(&self.triangles[group[k].face as usize]) == region)
            {
                used[k] = true;
                region = group[k].far(&self.triangles[group[k].face as usize]);
                progressed = true;
            }
            if !progressed {
                return Err(LookupError::InconsistentTraversal {
                    t: t_group,
                    current: before,
                    found: group.iter().map(|h| h.near(&self.triangles[h.face as usize])).collect(),
                });
            }
            if t_group > cursor {
                self.push_segment(cage, ray, cursor, t_group, before, out);
                cursor = t_group;
            }
            current = Some(region);
            start = end;
        }
        if t_max > cursor {
            self.push_segment(cage, ray, cursor, t_max, current.unwrap_or(Region::Outside), out);
        }
        Ok(())
    }

    /// Region before a group: a near side that no hit in the group leads into.
    fn group_source(&self, group: &[Hit]) -> Region {
        let tri = |h: &Hit| &self.triangles[h.face as usize];
        group
            .iter()
            .map(|h| h.near(tri(h)))
            .find(|r| !group.iter().any(|h| h.far(tri(h)) == *r))
            .unwrap_or_else(|| group[0].near(tri(&group[0])))
    }

    fn push_segment(&self, cage: &TetCage, ray: &Ray, t0: f64, t1: f64, region: Region, out: &mut RaySegments) {
        // merge with a preceding interval of the same region (split only by
        // duplicate or edge hits)
        if let Some(last) = out.segments.last_mut() {
            if last.region == region && !matches!(region, Region::Tet(_)) {
                last.t_exit = t1;
                return;
            }
        }
        let tet = match region {
            Region::Tet(ti) => {
                let positions = self.cage_positions();
                let p0 = ray.at(t0);
                let p1 = ray.at(t1);
                let rest = cage.rest_tet(ti as usize);
                let entry = cage.barycentric(positions, ti as usize, &p0).ok();
                let exit = cage.barycentric(positions, ti as usize, &p1).ok();
                match (entry, exit) {
                    (Some(entry_bary), Some(exit_bary)) => Some(TetSpan {
                        rest_entry: crate::mesh::reconstruct(&entry_bary, &rest),
                        rest_exit: crate::mesh::reconstruct(&exit_bary, &rest),
                        entry_bary,
                        exit_bary,
                    }),
                    _ => None,
                }
            }
            _ => None,
        };
        out.segments.push(Segment {
            t_enter: t0,
            t_exit: t1,
            region,
            tet,
        });
    }
}

fn build_node(nodes: &mut Vec<Node>, order: &mut [u32], start: usize, end: usize, centroids: &[Vec3], boxes: &[Aabb]) -> usize {
    let id = nodes.len();
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &t in &order[start..end] {
        bounds = bounds.merge(&boxes[t as usize]);
        cbounds.grow(&centroids[t as usize]);
    }
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes.push(Node {
            bounds,
            offset: start as u32,
            count: count as u32,
        });
        return id;
    }
    let axis = cbounds.longest_axis();
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    nodes.push(Node {
        bounds,
        offset: 0,
        count: 0,
    });
    build_node(nodes, order, start, mid, centroids, boxes);
    let right = build_node(nodes, order, mid, end, centroids, boxes);
    nodes[id].offset = right as u32;
    id
}

/// Barycentric endpoints of a tet interval, in the deformed tet, together with
/// their rest-space images.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TetSpan {
    pub entry_bary: Bary,
    pub exit_bary: Bary,
    pub rest_entry: Vec3,
    pub rest_exit: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub t_enter: f64,
    pub t_exit: f64,
    pub region: Region,
    /// Present for tet segments.
    pub tet: Option<TetSpan>,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.t_exit - self.t_enter
    }

    pub fn is_empty(&self) -> bool {
        self.t_exit <= self.t_enter
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RaySegments {
    pub segments: Vec<Segment>,
}

impl RaySegments {
    /// Region at parameter `t` (`Outside` beyond the covered range).
    pub fn region_at(&self, t: f64) -> Region {
        let i = self.segments.partition_point(|s| s.t_exit < t);
        self.segments.get(i).filter(|s| s.t_enter <= t).map_or(Region::Outside, |s| s.region)
    }

    /// Total length of non-outside segments.
    pub fn inside_length(&self) -> f64 {
        self.segments.iter().filter(|s| !s.region.is_outside()).map(Segment::len).sum()
    }
}
