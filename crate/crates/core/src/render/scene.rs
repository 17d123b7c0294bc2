//! Ray media: where along a ray to sample and how a sample reaches the
//! canonical field.

use thiserror::Error;

use super::{MappingMode, RayError, RenderConfig};
use crate::deform::{map_point, map_sample_on_segment, DeformError, Mapped, Placement, RegionDef, RotationField, RotationSampling};
use crate::field::RadianceField;
use crate::geom::{Aabb, Affine, Ray, Vec3};
use crate::lookup::{Bvh, Hit, Region, RaySegments};
use crate::mesh::{reconstruct, DeformedState, MeshError, TetCage};

/// A sampled interval of the ray. Spans are laid end to end in a compressed
/// coordinate `s`; `s0` is where this one starts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Span {
    pub s0: f64,
    pub t0: f64,
    pub t1: f64,
    /// Medium-specific tag (segment index for cage scenes).
    pub tag: u32,
}

impl Span {
    #[inline]
    pub fn len(&self) -> f64 {
        self.t1 - self.t0
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.t1 <= self.t0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SampleKind {
    /// Not covered by any region; contributes nothing.
    Vacuum,
    /// Field was queried at canonical `point` with direction `dir`.
    Field { point: Vec3, dir: Vec3, split: bool },
    /// Between the planes of a split region.
    Gap { color: Vec3 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eval {
    pub sigma: f64,
    pub color: Vec3,
    pub kind: SampleKind,
}

impl Eval {
    pub const VACUUM: Eval = Eval {
        sigma: 0.0,
        color: Vec3::new(0.0, 0.0, 0.0),
        kind: SampleKind::Vacuum,
    };
}

/// Per-thread scratch owned by the renderer and handed to the medium.
#[derive(Debug, Default)]
pub struct MediumScratch {
    pub hits: Vec<Hit>,
    pub segments: RaySegments,
}

pub trait Medium: Sync {
    /// Writes the intervals of `[near, far]` to sample into `spans`.
    fn spans(
        &self,
        ray: &Ray,
        near: f64,
        far: f64,
        cfg: &RenderConfig,
        scratch: &mut MediumScratch,
        spans: &mut Vec<Span>,
    ) -> Result<(), RayError>;

    fn eval<F: RadianceField + ?Sized>(
        &self,
        field: &F,
        ray: &Ray,
        t: f64,
        span: &Span,
        cfg: &RenderConfig,
        scratch: &MediumScratch,
    ) -> Result<Eval, RayError>;
}

fn push_span(spans: &mut Vec<Span>, t0: f64, t1: f64, tag: u32) {
    if t1 > t0 {
        let s0 = spans.last().map_or(0.0, |s| s.s0 + s.len());
        spans.push(Span { s0, t0, t1, tag });
    }
}

/// The canonical field seen directly, without a cage. `support`, when given,
/// limits default sampling to the part of the ray inside a box (in the box's
/// own frame), mirroring how cage scenes only sample inside the cage.
#[derive(Clone, Debug, Default)]
pub struct DirectScene {
    pub support: Option<Support>,
}

#[derive(Clone, Debug)]
pub struct Support {
    pub bounds: Aabb,
    pub world_to_local: Affine,
}

impl Medium for DirectScene {
    fn spans(
        &self,
        ray: &Ray,
        near: f64,
        far: f64,
        cfg: &RenderConfig,
        _scratch: &mut MediumScratch,
        spans: &mut Vec<Span>,
    ) -> Result<(), RayError> {
        spans.clear();
        match (&self.support, cfg.full_range) {
            (Some(sup), false) => {
                let o = sup.world_to_local.apply(&ray.origin);
                let d = sup.world_to_local.apply_vector(&ray.dir);
                let inv = d.map(|x| 1.0 / x);
                if let Some((t0, t1)) = sup.bounds.intersect(&o, &inv, near, far) {
                    push_span(spans, t0, t1, 0);
                }
            }
            _ => push_span(spans, near, far, 0),
        }
        Ok(())
    }

    #[inline]
    fn eval<F: RadianceField + ?Sized>(
        &self,
        field: &F,
        ray: &Ray,
        t: f64,
        _span: &Span,
        _cfg: &RenderConfig,
        _scratch: &MediumScratch,
    ) -> Result<Eval, RayError> {
        let point = ray.at(t);
        let r = field.query(&point, &ray.dir);
        Ok(Eval {
            sigma: r.density,
            color: r.color,
            kind: SampleKind::Field {
                point,
                dir: ray.dir,
                split: false,
            },
        })
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Deform(#[from] DeformError),
}

/// Cage, rigid regions and one deformed state, with the acceleration
/// structure and rotation field for that state.
#[derive(Clone, Debug)]
pub struct CageScene {
    cage: TetCage,
    regions: Vec<RegionDef>,
    deformed: Vec<Vec3>,
    bvh: Bvh,
    sampling: RotationSampling,
    rotations: RotationField,
}

impl CageScene {
    pub fn new(
        cage: TetCage,
        regions: Vec<RegionDef>,
        state: DeformedState,
        rho: f64,
        seed: u64,
    ) -> Result<Self, SceneError> {
        for r in &regions {
            r.validate()?;
        }
        let state = DeformedState::new(&cage, state.vertices)?;
        let shells: Vec<_> = regions.iter().map(RegionDef::shell).collect();
        let bvh = Bvh::build(&cage, &state.vertices, &shells);
        let sampling = RotationSampling::new(&cage, rho, seed)?;
        let rotations = RotationField::compute(&sampling, &cage, &state.vertices, &regions)?;
        Ok(CageScene {
            cage,
            regions,
            deformed: state.vertices,
            bvh,
            sampling,
            rotations,
        })
    }

    /// Undeformed scene with every tet rotation computed (rho = 1).
    pub fn rest(cage: TetCage) -> Self {
        let state = DeformedState::rest(&cage);
        CageScene::new(cage, Vec::new(), state, 1.0, 0).expect("rest state is valid")
    }

    /// Moves to a new deformed state (and optionally new regions). Returns
    /// whether the BVH had to be rebuilt rather than refit.
    pub fn set_state(&mut self, state: DeformedState, regions: Option<Vec<RegionDef>>) -> Result<bool, SceneError> {
        let state = DeformedState::new(&self.cage, state.vertices)?;
        let rebuilt = match regions {
            Some(regions) => {
                for r in &regions {
                    r.validate()?;
                }
                let shells: Vec<_> = regions.iter().map(RegionDef::shell).collect();
                let rebuilt = self.bvh.update(&state.vertices, Some(&shells));
                self.regions = regions;
                rebuilt
            }
            None => self.bvh.update(&state.vertices, None),
        };
        self.rotations = RotationField::compute(&self.sampling, &self.cage, &state.vertices, &self.regions)?;
        self.deformed = state.vertices;
        Ok(rebuilt)
    }

    pub fn cage(&self) -> &TetCage {
        &self.cage
    }

    pub fn regions(&self) -> &[RegionDef] {
        &self.regions
    }

    pub fn deformed(&self) -> &[Vec3] {
        &self.deformed
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn rotations(&self) -> &RotationField {
        &self.rotations
    }

    #[inline]
    fn view(&self, placement: Placement, dir: &Vec3, cfg: &RenderConfig) -> Result<Vec3, RayError> {
        if cfg.rotate_views {
            Ok(self.rotations.rotate_view(placement, dir)?)
        } else {
            Ok(*dir)
        }
    }
}

impl Medium for CageScene {
    fn spans(
        &self,
        ray: &Ray,
        near: f64,
        far: f64,
        cfg: &RenderConfig,
        scratch: &mut MediumScratch,
        spans: &mut Vec<Span>,
    ) -> Result<(), RayError> {
        spans.clear();
        self.bvh
            .segment_ray_into(&self.cage, ray, near, far, &mut scratch.hits, &mut scratch.segments)?;
        for (i, seg) in scratch.segments.segments.iter().enumerate() {
            if cfg.full_range || !seg.region.is_outside() {
                push_span(spans, seg.t_enter, seg.t_exit, i as u32);
            }
        }
        Ok(())
    }

    #[inline]
    fn eval<F: RadianceField + ?Sized>(
        &self,
        field: &F,
        ray: &Ray,
        t: f64,
        span: &Span,
        cfg: &RenderConfig,
        scratch: &MediumScratch,
    ) -> Result<Eval, RayError> {
        let seg = &scratch.segments.segments[span.tag as usize];
        let (point, placement, split) = match seg.region {
            Region::Outside => return Ok(Eval::VACUUM),
            Region::Tet(tet) => {
                let point = match cfg.mapping {
                    MappingMode::Interpolated => {
                        let len = seg.t_exit - seg.t_enter;
                        let alpha = if len > 0.0 { ((seg.t_exit - t) / len).clamp(0.0, 1.0) } else { 0.5 };
                        map_sample_on_segment(seg, alpha)?
                    }
                    MappingMode::PerPoint => {
                        let b = self
                            .cage
                            .barycentric(&self.deformed, tet as usize, &ray.at(t))
                            .map_err(|_| DeformError::DegenerateTet)?;
                        reconstruct(&b, &self.cage.rest_tet(tet as usize))
                    }
                };
                (point, Placement::Tet(tet), false)
            }
            Region::Shell(_) => match map_point(&self.cage, &self.deformed, &self.regions, seg.region, &ray.at(t))? {
                Mapped::Canonical { point, placement } => {
                    let split = matches!(placement, Placement::Affine { region, .. }
                        if matches!(self.regions[region as usize], RegionDef::PlaneSplit(_)));
                    (point, placement, split)
                }
                Mapped::Gap { region } => {
                    let RegionDef::PlaneSplit(r) = &self.regions[region as usize] else {
                        unreachable!("gaps only occur in split regions")
                    };
                    return Ok(Eval {
                        sigma: 0.0,
                        color: Vec3::from(r.gap_color),
                        kind: SampleKind::Gap {
                            color: Vec3::from(r.gap_color),
                        },
                    });
                }
                Mapped::Outside => return Ok(Eval::VACUUM),
            },
        };
        let dir = self.view(placement, &ray.dir, cfg)?;
        let r = field.query(&point, &dir);
        Ok(Eval {
            sigma: r.density,
            color: r.color,
            kind: SampleKind::Field { point, dir, split },
        })
    }
}
