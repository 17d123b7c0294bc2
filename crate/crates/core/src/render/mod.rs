//! Camera rays, hierarchical sampling through the deformed cage and
//! emission-absorption compositing.

mod camera;
pub mod image;
pub mod sampling;
mod scene;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use camera::{Camera, CameraError};
pub use sampling::{fine_sample, DegenerateWeights, Integrated, SampleSet, SamplingMode};
pub use scene::{CageScene, DirectScene, Eval, Medium, MediumScratch, SampleKind, SceneError, Span, Support};

use crate::deform::DeformError;
use crate::field::RadianceField;
use crate::geom::{Ray, Vec3};
use crate::lookup::LookupError;

/// How a sample inside a tet reaches canonical space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MappingMode {
    /// Interpolate the rest images of the segment endpoints.
    #[default]
    Interpolated,
    /// Solve barycentric coordinates for every sample.
    PerPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub n_coarse: usize,
    pub n_fine: usize,
    /// Jitter coarse samples inside their strata and draw fine samples
    /// randomly; otherwise both are placed deterministically.
    pub jitter: bool,
    pub seed: u64,
    /// Stop marching once transmittance falls below this (0 disables).
    pub termination: f64,
    pub background: [f64; 3],
    pub mode: SamplingMode,
    /// Sample all of `[near, far]` instead of only the covered intervals.
    pub full_range: bool,
    pub mapping: MappingMode,
    pub rotate_views: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            n_coarse: 128,
            n_fine: 64,
            jitter: false,
            seed: 0,
            termination: 1e-4,
            background: [0.0; 3],
            mode: SamplingMode::TwoStageExtended,
            full_range: false,
            mapping: MappingMode::Interpolated,
            rotate_views: true,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.n_coarse == 0 || self.n_fine == 0 {
            return Err(RenderError::Config("sample counts must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.termination) {
            return Err(RenderError::Config("termination must lie in [0, 1)".into()));
        }
        if self.background.iter().any(|c| !c.is_finite()) {
            return Err(RenderError::Config("background must be finite".into()));
        }
        Ok(())
    }

    pub fn background(&self) -> Vec3 {
        Vec3::from(self.background)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RayError {
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error(transparent)]
    Deform(#[from] DeformError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("pixel ({x}, {y}): {error}")]
pub struct PixelError {
    pub x: u32,
    pub y: u32,
    pub error: RayError,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("render config: {0}")]
    Config(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("{} ray(s) failed; first: {}", .0.len(), .0[0])]
    Rays(Vec<PixelError>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayResult {
    pub color: Vec3,
    pub opacity: f64,
    pub depth: f64,
}

/// One composited sample, kept for gradient computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceSample {
    /// Position in the compressed coordinate over sampled spans.
    pub s: f64,
    pub t: f64,
    pub delta: f64,
    pub sigma: f64,
    pub color: Vec3,
    pub kind: SampleKind,
    pub coarse: bool,
    pub weight: f64,
    pub transmittance: f64,
}

/// Wall-clock split of rendering work.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimes {
    pub segmentation: Duration,
    pub sampling: Duration,
    pub integration: Duration,
}

impl std::ops::AddAssign for StageTimes {
    fn add_assign(&mut self, o: StageTimes) {
        self.segmentation += o.segmentation;
        self.sampling += o.sampling;
        self.integration += o.integration;
    }
}

/// Reusable per-thread buffers. After a ray is rendered, [`samples`]
/// (Workspace::samples) holds the samples that produced the final colour.
#[derive(Debug, Default)]
pub struct Workspace {
    scratch: MediumScratch,
    spans: Vec<Span>,
    positions: Vec<f64>,
    coarse: Vec<TraceSample>,
    fine: Vec<f64>,
    weights: Vec<f64>,
    merged: Vec<TraceSample>,
    single: bool,
    final_transmittance: f64,
    pub timing: Option<StageTimes>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn timed() -> Self {
        Workspace {
            timing: Some(StageTimes::default()),
            ..Self::default()
        }
    }

    pub fn samples(&self) -> &[TraceSample] {
        if self.single {
            &self.coarse
        } else {
            &self.merged
        }
    }

    /// Transmittance left after the last composited sample.
    pub fn final_transmittance(&self) -> f64 {
        self.final_transmittance
    }

    pub fn segments(&self) -> &crate::lookup::RaySegments {
        &self.scratch.segments
    }
}

struct Composite {
    result: RayResult,
    transmittance: f64,
}

/// Front-to-back compositing. The last gap sample, if any, is made opaque with
/// its region's gap colour; every other gap sample is empty.
fn composite(samples: &mut [TraceSample], eps_t: f64, bg: &Vec3) -> Composite {
    let gap = samples.iter().rposition(|s| matches!(s.kind, SampleKind::Gap { .. }));
    let mut trans = 1.0;
    let mut color = Vec3::zeros();
    let mut opacity = 0.0;
    let mut depth = 0.0;
    for (i, s) in samples.iter_mut().enumerate() {
        s.transmittance = trans;
        if trans < eps_t {
            s.weight = 0.0;
            continue;
        }
        let alpha = match s.kind {
            SampleKind::Gap { .. } => {
                if Some(i) == gap {
                    1.0
                } else {
                    0.0
                }
            }
            _ => 1.0 - (-s.sigma * s.delta).exp(),
        };
        let w = trans * alpha;
        s.weight = w;
        color += s.color * w;
        opacity += w;
        depth += w * s.t;
        trans *= 1.0 - alpha;
    }
    Composite {
        result: RayResult {
            color: color + bg * (1.0 - opacity),
            opacity,
            depth: depth / opacity.max(sampling::DEPTH_EPS),
        },
        transmittance: trans,
    }
}

#[inline]
fn span_at(spans: &[Span], cursor: &mut usize, s: f64) -> (Span, f64) {
    while *cursor + 1 < spans.len() && spans[*cursor + 1].s0 <= s {
        *cursor += 1;
    }
    let span = spans[*cursor];
    (span, (span.t0 + (s - span.s0)).min(span.t1))
}

/// Renders one ray with buffers from `ws`. `key` selects the random stream
/// (used only with jitter), so results do not depend on evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn render_ray_with<M: Medium, F: RadianceField + ?Sized>(
    medium: &M,
    field: &F,
    ray: &Ray,
    near: f64,
    far: f64,
    cfg: &RenderConfig,
    key: u64,
    ws: &mut Workspace,
) -> Result<RayResult, RayError> {
    let bg = cfg.background();
    let clock = ws.timing.is_some().then(Instant::now);
    medium.spans(ray, near, far, cfg, &mut ws.scratch, &mut ws.spans)?;
    let mut times = StageTimes::default();
    if let Some(c) = clock {
        times.segmentation = c.elapsed();
    }
    ws.coarse.clear();
    ws.merged.clear();
    ws.single = true;
    ws.final_transmittance = 1.0;
    let total = ws.spans.last().map_or(0.0, |s| s.s0 + s.len());
    if !(total > 0.0) {
        if let (Some(t), Some(_)) = (ws.timing.as_mut(), clock) {
            *t += times;
        }
        return Ok(RayResult {
            color: bg,
            opacity: 0.0,
            depth: 0.0,
        });
    }
    let mut rng = cfg.jitter.then(|| {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(key);
        r
    });

    let clock = ws.timing.is_some().then(Instant::now);
    sampling::stratified(total, cfg.n_coarse, rng.as_mut(), &mut ws.positions);
    let mut cursor = 0;
    let mut trans = 1.0;
    let mut cut = cfg.n_coarse;
    for i in 0..cfg.n_coarse {
        let s = ws.positions[i];
        let (span, t) = span_at(&ws.spans, &mut cursor, s);
        let e = medium.eval(field, ray, t, &span, cfg, &ws.scratch)?;
        let delta = ws.positions.get(i + 1).copied().unwrap_or(total) - s;
        ws.coarse.push(TraceSample {
            s,
            t,
            delta,
            sigma: e.sigma,
            color: e.color,
            kind: e.kind,
            coarse: true,
            weight: 0.0,
            transmittance: 0.0,
        });
        if !matches!(e.kind, SampleKind::Gap { .. }) {
            trans *= (-e.sigma * delta).exp();
        }
        if trans < cfg.termination {
            cut = i + 1;
            break;
        }
    }
    let s_cut = ws.positions.get(cut).copied().unwrap_or(total);
    if let Some(c) = clock {
        times.sampling += c.elapsed();
    }

    let clock = ws.timing.is_some().then(Instant::now);
    let coarse = composite(&mut ws.coarse, cfg.termination, &bg);
    if let Some(c) = clock {
        times.integration += c.elapsed();
    }
    if cfg.mode == SamplingMode::SingleStage {
        ws.final_transmittance = coarse.transmittance;
        if let Some(t) = ws.timing.as_mut() {
            *t += times;
        }
        return Ok(coarse.result);
    }

    let clock = ws.timing.is_some().then(Instant::now);
    ws.weights.clear();
    ws.weights.extend(ws.coarse.iter().map(|s| s.weight));
    ws.positions.truncate(cut);
    let _ = fine_sample(&ws.positions, &ws.weights, cfg.n_fine, cfg.mode, rng.as_mut(), &mut ws.fine);
    let mut cursor = 0;
    let mut ci = 0;
    for &s in &ws.fine {
        while ci < ws.coarse.len() && ws.coarse[ci].s <= s {
            ws.merged.push(ws.coarse[ci]);
            ci += 1;
        }
        let (span, t) = span_at(&ws.spans, &mut cursor, s);
        let e = medium.eval(field, ray, t, &span, cfg, &ws.scratch)?;
        ws.merged.push(TraceSample {
            s,
            t,
            delta: 0.0,
            sigma: e.sigma,
            color: e.color,
            kind: e.kind,
            coarse: false,
            weight: 0.0,
            transmittance: 0.0,
        });
    }
    ws.merged.extend_from_slice(&ws.coarse[ci..]);
    for j in 0..ws.merged.len() {
        let next = ws.merged.get(j + 1).map_or(s_cut, |n| n.s);
        ws.merged[j].delta = next - ws.merged[j].s;
    }
    if let Some(c) = clock {
        times.sampling += c.elapsed();
    }
    let clock = ws.timing.is_some().then(Instant::now);
    let out = composite(&mut ws.merged, cfg.termination, &bg);
    ws.single = false;
    ws.final_transmittance = out.transmittance;
    if let Some(c) = clock {
        times.integration += c.elapsed();
    }
    if let Some(t) = ws.timing.as_mut() {
        *t += times;
    }
    Ok(out.result)
}

pub fn render_ray<M: Medium, F: RadianceField + ?Sized>(
    medium: &M,
    field: &F,
    ray: &Ray,
    near: f64,
    far: f64,
    cfg: &RenderConfig,
    key: u64,
) -> Result<RayResult, RayError> {
    render_ray_with(medium, field, ray, near, far, cfg, key, &mut Workspace::new())
}

/// Per-pixel colour, opacity and expected depth, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<[f64; 3]>,
    pub opacity: Vec<f64>,
    pub depth: Vec<f64>,
}

impl Frame {
    pub fn new(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        Frame {
            width,
            height,
            rgb: vec![[0.0; 3]; n],
            opacity: vec![0.0; n],
            depth: vec![0.0; n],
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        self.rgb[(y * self.width + x) as usize]
    }
}

/// Renders every pixel centre of `camera`. Rows are rendered in parallel on
/// the current rayon pool; output does not depend on the thread count.
pub fn render_image<M: Medium, F: RadianceField + ?Sized>(
    medium: &M,
    field: &F,
    camera: &Camera,
    cfg: &RenderConfig,
) -> Result<Frame, RenderError> {
    render_image_timed(medium, field, camera, cfg).map(|(f, _)| f)
}

/// [`render_image`] plus the summed per-thread stage times.
pub fn render_image_timed<M: Medium, F: RadianceField + ?Sized>(
    medium: &M,
    field: &F,
    camera: &Camera,
    cfg: &RenderConfig,
) -> Result<(Frame, StageTimes), RenderError> {
    cfg.validate()?;
    camera.validate()?;
    let (w, h) = (camera.width, camera.height);
    let rows: Vec<(Vec<Result<RayResult, RayError>>, StageTimes)> = (0..h)
        .into_par_iter()
        .map_init(Workspace::timed, |ws, y| {
            ws.timing = Some(StageTimes::default());
            let row = (0..w)
                .map(|x| {
                    let ray = camera.pixel_ray(x, y);
                    let key = y as u64 * w as u64 + x as u64;
                    render_ray_with(medium, field, &ray, camera.near, camera.far, cfg, key, ws)
                })
                .collect();
            (row, ws.timing.unwrap_or_default())
        })
        .collect();
    let mut frame = Frame::new(w, h);
    let mut errors = Vec::new();
    let mut times = StageTimes::default();
    for (y, (row, t)) in rows.into_iter().enumerate() {
        times += t;
        for (x, r) in row.into_iter().enumerate() {
            let i = y * w as usize + x;
            match r {
                Ok(r) => {
                    frame.rgb[i] = r.color.into();
                    frame.opacity[i] = r.opacity;
                    frame.depth[i] = r.depth;
                }
                Err(error) => errors.push(PixelError {
                    x: x as u32,
                    y: y as u32,
                    error,
                }),
            }
        }
    }
    if errors.is_empty() {
        Ok((frame, times))
    } else {
        Err(RenderError::Rays(errors))
    }
}

#[cfg(test)]
mod tests;
