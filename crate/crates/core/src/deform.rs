//! Mapping deformed-space samples and view directions back to canonical space.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::geom::{argmin3, polar_rotation, Affine, Mat3, Plane, Vec3};
use crate::lookup::{Region, Segment, TriShell};
use crate::mesh::{reconstruct, signed_volume, tet_diameter, TetCage, DEGENERATE_VOLUME_REL};
use crate::spatial::KdTree;

/// Fraction of tets that receive their own SVD rotation by default.
pub const DEFAULT_RHO: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeformError {
    #[error("unknown region {0:?}")]
    UnknownRegion(Region),
    #[error("segment over {0:?} carries no barycentric endpoints")]
    NotATetSegment(Region),
    #[error("degenerate tetrahedron in rotation estimate")]
    DegenerateTet,
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("subset fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
}

/// Closed shell moved by a single affine map.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidRegion {
    /// Deformed-space shell with outward winding.
    pub shell: TriShell,
    /// Deformed -> canonical.
    pub transform: Affine,
}

/// Closed shell cut by two planes into a top part, an empty gap and a bottom part.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneSplitRegion {
    pub shell: TriShell,
    pub plane_top: Plane,
    pub plane_bottom: Plane,
    pub transform_top: Affine,
    pub transform_bottom: Affine,
    pub gap_color: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum RegionDef {
    Rigid(RigidRegion),
    PlaneSplit(PlaneSplitRegion),
}

impl RegionDef {
    pub fn shell(&self) -> &TriShell {
        match self {
            RegionDef::Rigid(r) => &r.shell,
            RegionDef::PlaneSplit(r) => &r.shell,
        }
    }

    pub fn validate(&self) -> Result<(), DeformError> {
        match self {
            RegionDef::Rigid(r) => {
                if !r.transform.is_invertible() {
                    return Err(DeformError::InvalidRegion("rigid transform is singular".into()));
                }
            }
            RegionDef::PlaneSplit(r) => {
                if !r.transform_top.is_invertible() || !r.transform_bottom.is_invertible() {
                    return Err(DeformError::InvalidRegion("split transform is singular".into()));
                }
                let bottom = Vec3::from(r.plane_bottom.point);
                if r.plane_top.signed_distance(&bottom) >= 0.0 {
                    return Err(DeformError::InvalidRegion("top plane is not above the bottom plane".into()));
                }
                if r.gap_color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                    return Err(DeformError::InvalidRegion("gap colour outside [0, 1]".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Whole,
    Top,
    Bottom,
}

/// Which local frame carried a sample to canonical space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    Tet(u32),
    Affine { region: u32, part: Part },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mapped {
    Canonical { point: Vec3, placement: Placement },
    /// Between the planes of a split region: not rendered.
    Gap { region: u32 },
    Outside,
}

impl PlaneSplitRegion {
    pub fn classify(&self, p: &Vec3) -> Option<Part> {
        if self.plane_top.signed_distance(p) >= 0.0 {
            Some(Part::Top)
        } else if self.plane_bottom.signed_distance(p) <= 0.0 {
            Some(Part::Bottom)
        } else {
            None
        }
    }
}

/// Maps a deformed-space point, already located in `region`, to canonical space.
pub fn map_point(
    cage: &TetCage,
    deformed: &[Vec3],
    regions: &[RegionDef],
    region: Region,
    p: &Vec3,
) -> Result<Mapped, DeformError> {
    match region {
        Region::Outside => Ok(Mapped::Outside),
        Region::Tet(t) => {
            if t as usize >= cage.tet_count() {
                return Err(DeformError::UnknownRegion(region));
            }
            let b = cage
                .barycentric(deformed, t as usize, p)
                .map_err(|_| DeformError::DegenerateTet)?;
            Ok(Mapped::Canonical {
                point: reconstruct(&b, &cage.rest_tet(t as usize)),
                placement: Placement::Tet(t),
            })
        }
        Region::Shell(s) => match regions.get(s as usize) {
            None => Err(DeformError::UnknownRegion(region)),
            Some(RegionDef::Rigid(r)) => Ok(Mapped::Canonical {
                point: r.transform.apply(p),
                placement: Placement::Affine { region: s, part: Part::Whole },
            }),
            Some(RegionDef::PlaneSplit(r)) => Ok(match r.classify(p) {
                Some(part) => {
                    let tr = if part == Part::Top { &r.transform_top } else { &r.transform_bottom };
                    Mapped::Canonical {
                        point: tr.apply(p),
                        placement: Placement::Affine { region: s, part },
                    }
                }
                None => Mapped::Gap { region: s },
            }),
        },
    }
}

/// Canonical position of a sample inside a tet segment, interpolated between
/// the rest images of the segment endpoints. `alpha` weights the entry point.
#[inline]
pub fn map_sample_on_segment(seg: &Segment, alpha: f64) -> Result<Vec3, DeformError> {
    let span = seg.tet.as_ref().ok_or(DeformError::NotATetSegment(seg.region))?;
    Ok(span.rest_entry * alpha + span.rest_exit * (1.0 - alpha))
}

/// Rest-to-deformed rotation of a tetrahedron by orthogonal Procrustes.
///
/// With `H = (X - c)^T (X' - c')` and `H = U E V^T`, the deformed-to-rest
/// rotation is `U V^T`; this returns its transpose. A reflection is turned into
/// a rotation by flipping the column of `U` for the smallest singular value.
pub fn estimate_rotation(rest: &[Vec3; 4], deformed: &[Vec3; 4]) -> Result<Mat3, DeformError> {
    for t in [rest, deformed] {
        let d = tet_diameter(t);
        if signed_volume(t).abs() <= DEGENERATE_VOLUME_REL * d * d * d {
            return Err(DeformError::DegenerateTet);
        }
    }
    let c = (rest[0] + rest[1] + rest[2] + rest[3]) * 0.25;
    let cd = (deformed[0] + deformed[1] + deformed[2] + deformed[3]) * 0.25;
    let mut h = Mat3::zeros();
    for i in 0..4 {
        h += (rest[i] - c) * (deformed[i] - cd).transpose();
    }
    let svd = h.svd(true, true);
    let mut u = svd.u.ok_or(DeformError::DegenerateTet)?;
    let v = svd.v_t.ok_or(DeformError::DegenerateTet)?.transpose();
    if (v * u.transpose()).determinant() < 0.0 {
        let k = argmin3(&svd.singular_values);
        u.column_mut(k).neg_mut();
    }
    Ok(v * u.transpose())
}

/// Seeded choice of which tets get an SVD and which computed tet every other
/// tet copies its rotation from. Depends only on the rest cage.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationSampling {
    pub rho: f64,
    pub seed: u64,
    /// Ascending tet indices that are solved directly.
    pub selected: Vec<u32>,
    /// For every tet, the position in `selected` it takes its rotation from.
    pub source: Vec<u32>,
}

impl RotationSampling {
    pub fn new(cage: &TetCage, rho: f64, seed: u64) -> Result<Self, DeformError> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(DeformError::InvalidFraction(rho));
        }
        let n = cage.tet_count();
        let count = ((rho * n as f64).ceil() as usize).clamp(1.min(n), n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut selected: Vec<u32> = rand::seq::index::sample(&mut rng, n, count)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        selected.sort_unstable();
        let centroids: Vec<Vec3> = (0..n).map(|t| cage.rest_centroid(t)).collect();
        let tree = KdTree::new(selected.iter().map(|&t| centroids[t as usize]).collect());
        let source = centroids
            .par_iter()
            .map(|c| tree.nearest(c).expect("at least one selected tet") as u32)
            .collect();
        Ok(RotationSampling {
            rho,
            seed,
            selected,
            source,
        })
    }
}

/// Per-tet rest-to-deformed rotations plus the rotation part of every region
/// transform.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationField {
    tet_rotations: Vec<Mat3>,
    /// `[whole or top, bottom]` deformed-to-canonical rotations per region.
    region_rotations: Vec<[Mat3; 2]>,
    svd_count: usize,
}

impl RotationField {
    /// Identity rotations everywhere (view directions left untouched).
    pub fn identity(cage: &TetCage, regions: &[RegionDef]) -> Self {
        RotationField {
            tet_rotations: vec![Mat3::identity(); cage.tet_count()],
            region_rotations: vec![[Mat3::identity(); 2]; regions.len()],
            svd_count: 0,
        }
    }

    pub fn compute(
        sampling: &RotationSampling,
        cage: &TetCage,
        deformed: &[Vec3],
        regions: &[RegionDef],
    ) -> Result<Self, DeformError> {
        let solved: Vec<Mat3> = sampling
            .selected
            .par_iter()
            .map(|&t| estimate_rotation(&cage.rest_tet(t as usize), &cage.tet_points(deformed, t as usize)))
            .collect::<Result<_, _>>()?;
        let tet_rotations = sampling.source.iter().map(|&s| solved[s as usize]).collect();
        let region_rotations = regions
            .iter()
            .map(|r| match r {
                RegionDef::Rigid(r) => {
                    let m = polar_rotation(&r.transform.linear);
                    [m, m]
                }
                RegionDef::PlaneSplit(r) => [
                    polar_rotation(&r.transform_top.linear),
                    polar_rotation(&r.transform_bottom.linear),
                ],
            })
            .collect();
        Ok(RotationField {
            tet_rotations,
            region_rotations,
            svd_count: solved.len(),
        })
    }

    /// Number of per-tet SVDs performed when this field was built.
    pub fn svd_count(&self) -> usize {
        self.svd_count
    }

    pub fn tet_rotation(&self, tet: usize) -> &Mat3 {
        &self.tet_rotations[tet]
    }

    pub fn tet_rotations(&self) -> &[Mat3] {
        &self.tet_rotations
    }

    /// Canonical-space query direction for a deformed-space view direction.
    #[inline]
    pub fn rotate_view(&self, placement: Placement, v: &Vec3) -> Result<Vec3, DeformError> {
        let out = match placement {
            Placement::Tet(t) => self
                .tet_rotations
                .get(t as usize)
                .ok_or(DeformError::UnknownRegion(Region::Tet(t)))?
                .tr_mul(v),
            Placement::Affine { region, part } => {
                let r = self
                    .region_rotations
                    .get(region as usize)
                    .ok_or(DeformError::UnknownRegion(Region::Shell(region)))?;
                match part {
                    Part::Bottom => r[1] * v,
                    _ => r[0] * v,
                }
            }
        };
        Ok(out.normalize())
    }
}

/// Convenience: seeded sampling and rotations in one call.
pub fn build_rotation_field(
    cage: &TetCage,
    deformed: &[Vec3],
    regions: &[RegionDef],
    rho: f64,
    seed: u64,
) -> Result<RotationField, DeformError> {
    let sampling = RotationSampling::new(cage, rho, seed)?;
    RotationField::compute(&sampling, cage, deformed, regions)
}

/// Deformed-space placement of a region for a given canonical transform; used
/// when building shells that should line up with canonical geometry.
pub fn shell_in_deformed_space(canonical_shell: &TriShell, deformed_to_canonical: &Affine) -> Option<TriShell> {
    let inv = deformed_to_canonical.inverse()?;
    Some(canonical_shell.transformed(|p| inv.apply(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{axis_angle, Ray};
    use crate::lookup::Bvh;
    use crate::mesh::{barycentric_coords, cube_grid, DeformedState};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, UnitSphere};

    fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
        let axis: [f64; 3] = UnitSphere.sample(rng);
        axis_angle(&Vec3::from(axis), rng.random_range(0.0..std::f64::consts::PI))
    }

    fn unit_tet() -> [Vec3; 4] {
        [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ]
    }

    #[test]
    fn identity_deformation_maps_to_itself() {
        let cage = cube_grid([3, 3, 3], Vec3::zeros(), Vec3::repeat(1.0));
        let r = cage.rest_vertices();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let p = Vec3::new(rng.random(), rng.random(), rng.random());
            let t = cage.locate_point_bruteforce(r, &p).unwrap();
            let m = map_point(&cage, r, &[], Region::Tet(t as u32), &p).unwrap();
            let Mapped::Canonical { point, .. } = m else { panic!() };
            assert!((point - p).norm() < 1e-9);
        }
    }

    #[test]
    fn translation_is_undone() {
        let cage = cube_grid([2, 2, 2], Vec3::zeros(), Vec3::repeat(1.0));
        let shift = Vec3::new(1.0, 2.0, 3.0);
        let state = DeformedState::from_fn(&cage, |p| p + shift);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let q = Vec3::new(rng.random(), rng.random(), rng.random()) + shift;
            let t = cage.locate_point_bruteforce(&state.vertices, &q).unwrap();
            let Mapped::Canonical { point, .. } = map_point(&cage, &state.vertices, &[], Region::Tet(t as u32), &q).unwrap()
            else {
                panic!()
            };
            assert!((point - (q - shift)).norm() < 1e-12);
        }
    }

    #[test]
    fn random_affine_tet_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cage = crate::mesh::single_tet(unit_tet()).unwrap();
        for _ in 0..100 {
            let a = Mat3::from_fn(|i, j| if i == j { 1.0 } else { 0.0 } + rng.random_range(-0.3..0.3));
            let b = Vec3::new(rng.random(), rng.random(), rng.random());
            let state = DeformedState::from_fn(&cage, |p| a * p + b);
            let lam = [rng.random::<f64>(), rng.random(), rng.random(), rng.random()];
            let s: f64 = lam.iter().sum();
            let lam = lam.map(|l| l / s);
            let deformed: [Vec3; 4] = std::array::from_fn(|i| state.vertices[i]);
            let q = reconstruct(&crate::mesh::Bary(lam), &deformed);
            // oracle: independent barycentric solve, then p = sum(l_i x_i)
            let bary = barycentric_coords(&deformed, &q).unwrap();
            let want = reconstruct(&bary, &unit_tet());
            let Mapped::Canonical { point, .. } = map_point(&cage, &state.vertices, &[], Region::Tet(0), &q).unwrap()
            else {
                panic!()
            };
            assert!((point - want).norm() < 1e-12);
        }
    }

    #[test]
    fn segment_interpolation_endpoints_and_interior() {
        let cage = cube_grid([2, 2, 2], Vec3::zeros(), Vec3::repeat(1.0));
        let state = DeformedState::from_fn(&cage, |p| {
            Vec3::new(p.x + 0.2 * p.y * p.z, p.y * (1.0 + 0.3 * p.x), p.z + 0.1 * p.x)
        });
        let bvh = Bvh::build(&cage, &state.vertices, &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let diam = cage.diameter();
        for _ in 0..100 {
            let o = Vec3::new(rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5), -1.0);
            let ray = Ray::new(o, Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0));
            let segs = bvh.segment_ray(&cage, &ray, 0.0, 5.0).unwrap();
            for seg in segs.segments.iter().filter(|s| s.tet.is_some()) {
                let Region::Tet(_) = seg.region else { panic!() };
                let enter = map_point(&cage, &state.vertices, &[], seg.region, &ray.at(seg.t_enter)).unwrap();
                let Mapped::Canonical { point: pe, .. } = enter else { panic!() };
                assert!((map_sample_on_segment(seg, 1.0).unwrap() - pe).norm() < 1e-9);
                for alpha in [0.0, 0.37, 0.8] {
                    let t = alpha * seg.t_enter + (1.0 - alpha) * seg.t_exit;
                    let Mapped::Canonical { point, .. } =
                        map_point(&cage, &state.vertices, &[], seg.region, &ray.at(t)).unwrap()
                    else {
                        panic!()
                    };
                    assert!((map_sample_on_segment(seg, alpha).unwrap() - point).norm() < 1e-6 * diam);
                }
            }
            if let Some(outside) = segs.segments.iter().find(|s| s.region.is_outside()) {
                assert!(matches!(map_sample_on_segment(outside, 0.5), Err(DeformError::NotATetSegment(_))));
            }
        }
    }

    #[test]
    fn rotation_estimates() {
        let t = unit_tet();
        assert_abs_diff_eq!(estimate_rotation(&t, &t).unwrap(), Mat3::identity(), epsilon = 1e-12);
        let rz = axis_angle(&Vec3::z(), std::f64::consts::FRAC_PI_2);
        let rotated = t.map(|p| rz * p);
        let r = estimate_rotation(&t, &rotated).unwrap();
        let want = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(r, want, epsilon = 1e-12);
    }

    #[test]
    fn rotation_under_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = unit_tet();
        let diam = tet_diameter(&t);
        for _ in 0..200 {
            let r0 = random_rotation(&mut rng);
            let noisy = t.map(|p| {
                r0 * p + Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 1e-3 * diam
            });
            let r = estimate_rotation(&t, &noisy).unwrap();
            assert!((r - r0).norm() < 1e-2);
            assert!((r.transpose() * r - Mat3::identity()).amax() < 1e-9);
            assert!(r.determinant() > 0.0);
        }
    }

    #[test]
    fn reflection_is_corrected() {
        let t = unit_tet();
        // mirror through z: degenerate-orientation deformation
        let mirrored = t.map(|p| Vec3::new(p.x, p.y, -p.z) + Vec3::new(0.0, 0.0, 0.1 * p.x));
        let r = estimate_rotation(&t, &mirrored).unwrap();
        assert!((r.determinant() - 1.0).abs() < 1e-9);
        let flat = [t[0], t[1], t[2], Vec3::new(0.2, 0.2, 0.0)];
        assert_eq!(estimate_rotation(&flat, &t), Err(DeformError::DegenerateTet));
    }

    #[test]
    fn rotation_field_full_and_rigid() {
        let cage = cube_grid([3, 3, 3], Vec3::zeros(), Vec3::repeat(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let r0 = random_rotation(&mut rng);
        let state = DeformedState::from_fn(&cage, |p| r0 * p + Vec3::new(0.5, -1.0, 2.0));
        for rho in [0.05, 0.3, 1.0] {
            let field = build_rotation_field(&cage, &state.vertices, &[], rho, 7).unwrap();
            assert_eq!(field.svd_count(), (rho * cage.tet_count() as f64).ceil() as usize);
            for r in field.tet_rotations() {
                assert!((r - r0).norm() < 1e-6);
            }
        }
        let sampling = RotationSampling::new(&cage, 1.0, 0).unwrap();
        assert_eq!(sampling.source, (0..cage.tet_count() as u32).collect::<Vec<_>>());
    }

    #[test]
    fn propagation_matches_exhaustive_nearest_centroid() {
        let cage = cube_grid([8, 5, 5], Vec3::zeros(), Vec3::new(2.0, 1.0, 1.0));
        assert_eq!(cage.tet_count(), 1000);
        let sampling = RotationSampling::new(&cage, 0.05, 99).unwrap();
        assert_eq!(sampling.selected.len(), 50);
        for t in 0..cage.tet_count() {
            let c = cage.rest_centroid(t);
            let mut best = (f64::INFINITY, usize::MAX);
            for (k, &s) in sampling.selected.iter().enumerate() {
                let d = (cage.rest_centroid(s as usize) - c).norm_squared();
                if d < best.0 {
                    best = (d, k);
                }
            }
            assert_eq!(sampling.source[t] as usize, best.1);
        }
        assert_eq!(sampling, RotationSampling::new(&cage, 0.05, 99).unwrap());
        assert!(RotationSampling::new(&cage, 0.0, 1).is_err());
    }

    #[test]
    fn view_rotation_conventions() {
        let cage = cube_grid([1, 1, 1], Vec3::zeros(), Vec3::repeat(1.0));
        let id = build_rotation_field(&cage, cage.rest_vertices(), &[], 1.0, 0).unwrap();
        let v = Vec3::new(0.3, -0.4, 0.5).normalize();
        assert_abs_diff_eq!(id.rotate_view(Placement::Tet(2), &v).unwrap(), v, epsilon = 1e-12);

        let rz = axis_angle(&Vec3::z(), std::f64::consts::FRAC_PI_2);
        let state = DeformedState::from_fn(&cage, |p| rz * p);
        let rot = build_rotation_field(&cage, &state.vertices, &[], 1.0, 0).unwrap();
        let q = rot.rotate_view(Placement::Tet(0), &Vec3::x()).unwrap();
        assert_abs_diff_eq!(q, Vec3::new(0.0, -1.0, 0.0), epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let d: [f64; 3] = UnitSphere.sample(&mut rng);
            let out = rot.rotate_view(Placement::Tet(rng.random_range(0..5)), &Vec3::from(d)).unwrap();
            assert!((out.norm() - 1.0).abs() < 1e-12);
        }
        assert!(rot.rotate_view(Placement::Tet(99), &v).is_err());
    }

    fn split_region() -> PlaneSplitRegion {
        PlaneSplitRegion {
            shell: TriShell::cuboid(Vec3::new(2.0, 0.0, 0.0), Vec3::new(3.0, 1.0, 1.0)),
            plane_top: Plane::new(Vec3::new(0.0, 0.6, 0.0), Vec3::y()),
            plane_bottom: Plane::new(Vec3::new(0.0, 0.4, 0.0), Vec3::y()),
            transform_top: Affine::translation(Vec3::new(-2.0, 0.0, 0.0)),
            transform_bottom: Affine::from_parts(
                axis_angle(&Vec3::x(), 0.2),
                Vec3::new(-2.0, 0.0, 0.0),
            ),
            gap_color: [0.2, 0.1, 0.1],
        }
    }

    #[test]
    fn split_region_partitions_interior() {
        let region = RegionDef::PlaneSplit(split_region());
        region.validate().unwrap();
        let regions = [region];
        let cage = crate::mesh::single_tet(unit_tet()).unwrap();
        let r = cage.rest_vertices();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut seen = [0usize; 3];
        for _ in 0..1000 {
            let p = Vec3::new(rng.random_range(2.0..3.0), rng.random(), rng.random());
            match map_point(&cage, r, &regions, Region::Shell(0), &p).unwrap() {
                Mapped::Canonical { placement: Placement::Affine { part: Part::Top, .. }, point } => {
                    assert!(p.y >= 0.6);
                    assert_abs_diff_eq!(point, p - Vec3::new(2.0, 0.0, 0.0), epsilon = 1e-12);
                    seen[0] += 1;
                }
                Mapped::Gap { region: 0 } => {
                    assert!(p.y > 0.4 && p.y < 0.6);
                    seen[1] += 1;
                }
                Mapped::Canonical { placement: Placement::Affine { part: Part::Bottom, .. }, .. } => {
                    assert!(p.y <= 0.4);
                    seen[2] += 1;
                }
                other => panic!("{other:?}"),
            }
        }
        assert!(seen.iter().all(|&n| n > 0));
        assert_eq!(seen.iter().sum::<usize>(), 1000);
        assert!(matches!(
            map_point(&cage, r, &regions, Region::Shell(3), &Vec3::zeros()),
            Err(DeformError::UnknownRegion(_))
        ));
        assert_eq!(map_point(&cage, r, &regions, Region::Outside, &Vec3::zeros()).unwrap(), Mapped::Outside);
    }

    #[test]
    fn split_region_validation() {
        let mut bad = split_region();
        std::mem::swap(&mut bad.plane_top, &mut bad.plane_bottom);
        assert!(RegionDef::PlaneSplit(bad).validate().is_err());
        let mut singular = split_region();
        singular.transform_top.linear = Mat3::zeros();
        assert!(RegionDef::PlaneSplit(singular).validate().is_err());
    }

    #[test]
    fn region_view_rotation_uses_polar_part() {
        let rot = axis_angle(&Vec3::y(), 0.7);
        let region = RegionDef::Rigid(RigidRegion {
            shell: TriShell::cuboid(Vec3::zeros(), Vec3::repeat(1.0)),
            transform: Affine::from_parts(rot * 2.0, Vec3::zeros()),
        });
        let cage = crate::mesh::single_tet(unit_tet()).unwrap();
        let regions = [region];
        let field = build_rotation_field(&cage, cage.rest_vertices(), &regions, 1.0, 0).unwrap();
        let v = Vec3::new(1.0, 0.0, 0.0);
        let out = field
            .rotate_view(Placement::Affine { region: 0, part: Part::Whole }, &v)
            .unwrap();
        assert_abs_diff_eq!(out, rot * v, epsilon = 1e-12);
    }
}
