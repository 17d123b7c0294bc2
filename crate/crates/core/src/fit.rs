//! Fitting a voxel field to posed images: least-squares colour loss, Cauchy
//! sparsity on coarse samples, and Adam updates on the grid parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{RadianceField, VoxelField};
use crate::geom::Vec3;
use crate::render::image::Rgb;
use crate::render::{render_ray_with, Camera, Medium, RayError, RenderConfig, SampleKind, TraceSample, Workspace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Sparsity weight on coarse samples of background rays.
    pub lambda_outer: f64,
    /// Sparsity weight on coarse samples inside split regions.
    pub lambda_gap: f64,
    pub batch_rays: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub iterations: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_outer: 1e-4,
            lambda_gap: 2e-6,
            batch_rays: 1024,
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            iterations: 2000,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        let ok = self.lambda_outer >= 0.0
            && self.lambda_gap >= 0.0
            && self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.batch_rays > 0;
        if ok {
            Ok(())
        } else {
            Err(FitError::Config("loss settings out of range".into()))
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("training set: {0}")]
    Data(String),
    #[error("fit config: {0}")]
    Config(String),
    #[error(transparent)]
    Ray(#[from] RayError),
}

/// One posed image. `mask`, when present, marks foreground pixels `true`;
/// background pixels receive the outer sparsity term.
#[derive(Clone, Debug)]
pub struct TrainView {
    pub image: Rgb,
    pub camera: Camera,
    pub mask: Option<Vec<bool>>,
    /// Index into [`TrainSet::frames`].
    pub frame: usize,
}

/// Views plus one medium (deformed scene) per captured frame.
#[derive(Clone, Debug)]
pub struct TrainSet<M> {
    pub frames: Vec<M>,
    pub views: Vec<TrainView>,
}

impl<M> TrainSet<M> {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.views.is_empty() {
            return Err(FitError::Data("no views".into()));
        }
        for (i, v) in self.views.iter().enumerate() {
            if v.frame >= self.frames.len() {
                return Err(FitError::Data(format!("view {i} refers to missing frame {}", v.frame)));
            }
            if v.image.width != v.camera.width || v.image.height != v.camera.height {
                return Err(FitError::Data(format!("view {i}: image size differs from camera")));
            }
            if let Some(m) = &v.mask {
                if m.len() != v.image.data.len() {
                    return Err(FitError::Data(format!("view {i}: mask size differs from image")));
                }
            }
            v.camera.validate().map_err(|e| FitError::Data(format!("view {i}: {e}")))?;
        }
        Ok(())
    }
}

/// Mean over the batch of the squared colour error summed over channels, and
/// its gradient with respect to each rendered colour.
pub fn rgb_loss(rendered: &[Vec3], target: &[Vec3]) -> (f64, Vec<Vec3>) {
    assert_eq!(rendered.len(), target.len());
    let b = rendered.len().max(1) as f64;
    let loss = rendered.iter().zip(target).map(|(r, t)| (r - t).norm_squared()).sum::<f64>() / b;
    let grad = rendered.iter().zip(target).map(|(r, t)| (r - t) * (2.0 / b)).collect();
    (loss, grad)
}

#[inline]
fn cauchy_term(sigma: f64) -> f64 {
    (2.0 * sigma * sigma).ln_1p()
}

#[inline]
fn cauchy_slope(sigma: f64) -> f64 {
    4.0 * sigma / (1.0 + 2.0 * sigma * sigma)
}

/// `(lambda / n) * sum(log(1 + 2 sigma^2))` and its gradient per sample.
pub fn sparsity_loss(sigmas: &[f64], lambda: f64, n: usize) -> (f64, Vec<f64>) {
    if n == 0 {
        return (0.0, vec![0.0; sigmas.len()]);
    }
    let k = lambda / n as f64;
    let loss = k * sigmas.iter().map(|&s| cauchy_term(s)).sum::<f64>();
    (loss, sigmas.iter().map(|&s| k * cauchy_slope(s)).collect())
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(n: usize, cfg: &LossConfig) -> Self {
        Adam {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Samples of one training ray, fixed once rendered.
#[derive(Clone, Debug)]
pub struct RayPlan {
    pub samples: Vec<TraceSample>,
    pub target: Vec3,
    pub background_ray: bool,
}

#[derive(Clone, Debug)]
pub struct BatchPlan {
    pub rays: Vec<RayPlan>,
    pub background: Vec3,
}

impl BatchPlan {
    fn counts(&self) -> (usize, usize) {
        let mut outer = 0;
        let mut gap = 0;
        for r in &self.rays {
            for s in r.samples.iter().filter(|s| s.coarse) {
                if let SampleKind::Field { split, .. } = s.kind {
                    if r.background_ray {
                        outer += 1;
                    }
                    if split {
                        gap += 1;
                    }
                }
            }
        }
        (outer, gap)
    }

    /// Coarse field samples on background rays.
    pub fn background_samples(&self) -> impl Iterator<Item = &TraceSample> {
        self.rays
            .iter()
            .filter(|r| r.background_ray)
            .flat_map(|r| r.samples.iter())
            .filter(|s| s.coarse && matches!(s.kind, SampleKind::Field { .. }))
    }
}

/// Colour of a planned ray and the transmittance before each sample.
fn composite(samples: &[TraceSample], sigma: impl Fn(usize) -> f64, color: impl Fn(usize) -> Vec3, bg: &Vec3, trans: &mut Vec<f64>) -> Vec3 {
    let gap = samples.iter().rposition(|s| matches!(s.kind, SampleKind::Gap { .. }));
    trans.clear();
    let mut t = 1.0;
    let mut c = Vec3::zeros();
    for (i, s) in samples.iter().enumerate() {
        trans.push(t);
        let alpha = match s.kind {
            SampleKind::Gap { .. } => f64::from(Some(i) == gap),
            _ => 1.0 - (-sigma(i) * s.delta).exp(),
        };
        c += color(i) * (t * alpha);
        t *= 1.0 - alpha;
    }
    trans.push(t);
    c + bg * t
}

/// Loss of a frozen plan with the field re-queried at the planned canonical
/// points; sample positions do not move with the parameters.
pub fn plan_loss<F: RadianceField + ?Sized>(field: &F, plan: &BatchPlan, cfg: &LossConfig) -> f64 {
    let (n_outer, n_gap) = plan.counts();
    let mut trans = Vec::new();
    let mut rendered = Vec::with_capacity(plan.rays.len());
    let mut targets = Vec::with_capacity(plan.rays.len());
    let mut outer = Vec::new();
    let mut gap = Vec::new();
    for r in &plan.rays {
        let resp: Vec<_> = r
            .samples
            .iter()
            .map(|s| match s.kind {
                SampleKind::Field { point, dir, .. } => {
                    let q = field.query(&point, &dir);
                    (q.density, q.color)
                }
                _ => (s.sigma, s.color),
            })
            .collect();
        rendered.push(composite(&r.samples, |i| resp[i].0, |i| resp[i].1, &plan.background, &mut trans));
        targets.push(r.target);
        for (s, q) in r.samples.iter().zip(&resp) {
            if let (true, SampleKind::Field { split, .. }) = (s.coarse, s.kind) {
                if r.background_ray {
                    outer.push(q.0);
                }
                if split {
                    gap.push(q.0);
                }
            }
        }
    }
    rgb_loss(&rendered, &targets).0 + sparsity_loss(&outer, cfg.lambda_outer, n_outer).0 + sparsity_loss(&gap, cfg.lambda_gap, n_gap).0
}

struct GradRecord {
    point: Vec3,
    dir: Vec3,
    d_sigma: f64,
    d_color: Vec3,
    /// Raw Cauchy slope and which term(s) select the sample.
    slope: f64,
    outer: bool,
    gap: bool,
}

/// Loss and gradient of a plan, using the densities and colours recorded in
/// it (they must come from `field`). Accumulation order is fixed, so the
/// result does not depend on the thread count.
pub fn plan_gradient(field: &VoxelField, plan: &BatchPlan, cfg: &LossConfig, grad: &mut [f64]) -> f64 {
    let (n_outer, n_gap) = plan.counts();
    let b = plan.rays.len().max(1) as f64;
    let bg = plan.background;
    let per_ray: Vec<(f64, f64, f64, Vec<GradRecord>)> = plan
        .rays
        .par_iter()
        .map_init(Vec::new, |trans, r| {
            let s = &r.samples;
            let c = composite(s, |i| s[i].sigma, |i| s[i].color, &bg, trans);
            let up = (c - r.target) * (2.0 / b);
            let rgb = (c - r.target).norm_squared() / b;
            let gap_idx = s.iter().rposition(|x| matches!(x.kind, SampleKind::Gap { .. }));
            // suffix[i] = sum_{j>i} w_j c_j + T_end * bg
            let t_end = *trans.last().unwrap();
            let mut suffix = bg * t_end;
            let mut out = Vec::new();
            let (mut sp_outer, mut sp_gap) = (0.0, 0.0);
            for i in (0..s.len()).rev() {
                let alpha = match s[i].kind {
                    SampleKind::Gap { .. } => f64::from(Some(i) == gap_idx),
                    _ => 1.0 - (-s[i].sigma * s[i].delta).exp(),
                };
                let w = trans[i] * alpha;
                if let SampleKind::Field { point, dir, split } = s[i].kind {
                    let dc_dsigma = (s[i].color * trans[i + 1] - suffix) * s[i].delta;
                    let outer = s[i].coarse && r.background_ray;
                    let gap = s[i].coarse && split;
                    if outer {
                        sp_outer += cauchy_term(s[i].sigma);
                    }
                    if gap {
                        sp_gap += cauchy_term(s[i].sigma);
                    }
                    out.push(GradRecord {
                        point,
                        dir,
                        d_sigma: up.dot(&dc_dsigma),
                        d_color: up * w,
                        slope: cauchy_slope(s[i].sigma),
                        outer,
                        gap,
                    });
                }
                suffix += s[i].color * w;
            }
            (rgb, sp_outer, sp_gap, out)
        })
        .collect();
    let k_outer = if n_outer > 0 { cfg.lambda_outer / n_outer as f64 } else { 0.0 };
    let k_gap = if n_gap > 0 { cfg.lambda_gap / n_gap as f64 } else { 0.0 };
    let mut loss = 0.0;
    for (rgb, so, sg, recs) in per_ray {
        loss += rgb + k_outer * so + k_gap * sg;
        for g in recs {
            let mut d_sigma = g.d_sigma;
            if g.outer {
                d_sigma += k_outer * g.slope;
            }
            if g.gap {
                d_sigma += k_gap * g.slope;
            }
            field.accumulate_gradients(&g.point, &g.dir, d_sigma, &g.d_color, grad);
        }
    }
    loss
}

/// A pixel of a training view.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RaySelection {
    pub view: usize,
    pub x: u32,
    pub y: u32,
}

pub fn sample_rays(train_views: &[TrainView], n: usize, rng: &mut impl Rng) -> Vec<RaySelection> {
    (0..n)
        .map(|_| {
            let view = rng.random_range(0..train_views.len());
            let cam = &train_views[view].camera;
            RaySelection {
                view,
                x: rng.random_range(0..cam.width),
                y: rng.random_range(0..cam.height),
            }
        })
        .collect()
}

/// Renders the selected rays through their frames and records the samples.
pub fn plan_batch<M: Medium, F: RadianceField + ?Sized>(
    field: &F,
    train: &TrainSet<M>,
    rays: &[RaySelection],
    render: &RenderConfig,
) -> Result<BatchPlan, FitError> {
    let planned: Result<Vec<RayPlan>, RayError> = rays
        .par_iter()
        .enumerate()
        .map_init(Workspace::new, |ws, (k, sel)| {
            let view = &train.views[sel.view];
            let cam = &view.camera;
            let ray = cam.pixel_ray(sel.x, sel.y);
            render_ray_with(&train.frames[view.frame], field, &ray, cam.near, cam.far, render, k as u64, ws)?;
            let px = (sel.y * cam.width + sel.x) as usize;
            Ok(RayPlan {
                samples: ws.samples().to_vec(),
                target: Vec3::from(view.image.data[px]),
                background_ray: view.mask.as_ref().is_some_and(|m| !m[px]),
            })
        })
        .collect();
    Ok(BatchPlan {
        rays: planned?,
        background: render.background(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    /// Total batch loss per iteration.
    pub losses: Vec<f64>,
}

/// Optimises `field` in place. The batch at iteration `i` and its sample
/// jitter depend only on `seed` and `i`.
pub fn fit<M: Medium>(
    field: &mut VoxelField,
    train: &TrainSet<M>,
    render: &RenderConfig,
    cfg: &LossConfig,
    seed: u64,
) -> Result<FitReport, FitError> {
    fit_with(field, train, render, cfg, seed, |_, _| {})
}

/// [`fit`] with a callback after every step, given the iteration and loss.
pub fn fit_with<M: Medium>(
    field: &mut VoxelField,
    train: &TrainSet<M>,
    render: &RenderConfig,
    cfg: &LossConfig,
    seed: u64,
    mut progress: impl FnMut(usize, f64),
) -> Result<FitReport, FitError> {
    cfg.validate()?;
    train.validate()?;
    render.validate().map_err(|e| FitError::Config(e.to_string()))?;
    let mut adam = Adam::new(field.param_count(), cfg);
    let mut grad = vec![0.0; field.param_count()];
    let mut losses = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(it as u64);
        let rays = sample_rays(&train.views, cfg.batch_rays, &mut rng);
        let rcfg = RenderConfig {
            seed: rng.random(),
            ..render.clone()
        };
        let plan = plan_batch(&*field, train, &rays, &rcfg)?;
        grad.fill(0.0);
        let loss = plan_gradient(field, &plan, cfg, &mut grad);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(FitError::NonFiniteLoss { iteration: it });
        }
        adam.step(field.params_mut(), &grad);
        losses.push(loss);
        progress(it, loss);
    }
    Ok(FitReport { losses })
}
