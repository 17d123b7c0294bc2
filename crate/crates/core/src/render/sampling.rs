//! Sample placement along a ray and emission-absorption compositing.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Coarse weights are blurred with (1/4, 1/2, 1/4) and the outer bins
    /// widened before fine samples are drawn.
    #[default]
    TwoStageExtended,
    /// Reference hierarchical sampling over midpoint bins.
    TwoStageNerf,
    SingleStage,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("coarse weights sum to zero; fine samples fall back to uniform")]
pub struct DegenerateWeights;

/// Samples along one ray together with their compositing weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub color: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub transmittance: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integrated {
    pub color: Vec3,
    pub opacity: f64,
    pub depth: f64,
}

/// Guard for the expected-depth denominator.
pub const DEPTH_EPS: f64 = 1e-10;

impl SampleSet {
    /// Spacings are `t[i+1] - t[i]`, the last one running to `far`.
    pub fn new(t: Vec<f64>, far: f64, sigma: Vec<f64>, color: Vec<Vec3>) -> Self {
        assert!(t.len() == sigma.len() && t.len() == color.len());
        let delta = spacings(&t, far);
        let n = t.len();
        SampleSet {
            t,
            delta,
            sigma,
            color,
            weights: vec![0.0; n],
            transmittance: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Fills weights and transmittances and returns the composited pixel.
    pub fn integrate(&mut self, background: &Vec3) -> Integrated {
        let mut trans = 1.0;
        let mut color = Vec3::zeros();
        let mut opacity = 0.0;
        let mut depth = 0.0;
        for i in 0..self.t.len() {
            let alpha = 1.0 - (-self.sigma[i] * self.delta[i]).exp();
            let w = trans * alpha;
            self.transmittance[i] = trans;
            self.weights[i] = w;
            color += self.color[i] * w;
            opacity += w;
            depth += w * self.t[i];
            trans *= 1.0 - alpha;
        }
        Integrated {
            color: color + background * (1.0 - opacity),
            opacity,
            depth: depth / opacity.max(DEPTH_EPS),
        }
    }
}

pub fn spacings(t: &[f64], far: f64) -> Vec<f64> {
    (0..t.len())
        .map(|i| t.get(i + 1).copied().unwrap_or(far) - t[i])
        .collect()
}

/// `n` stratified positions on `[0, len)`: one per equal bin, at the bin start
/// or jittered inside it.
pub fn stratified(len: f64, n: usize, mut jitter: Option<&mut impl Rng>, out: &mut Vec<f64>) {
    out.clear();
    let step = len / n as f64;
    for i in 0..n {
        let u: f64 = jitter.as_mut().map_or(0.0, |r| r.random());
        out.push((i as f64 + u) * step);
    }
}

/// Draws `n_f` positions by inverse-CDF sampling of the coarse weights.
///
/// `coarse` must be ascending with matching `weights`. Output is ascending and
/// lies within `[coarse[0], coarse[last]]`. With zero total weight the output
/// is uniform over that range and `DegenerateWeights` is returned.
pub fn fine_sample(
    coarse: &[f64],
    weights: &[f64],
    n_f: usize,
    mode: SamplingMode,
    mut jitter: Option<&mut impl Rng>,
    out: &mut Vec<f64>,
) -> Result<(), DegenerateWeights> {
    out.clear();
    let n = coarse.len();
    if n == 0 || n_f == 0 {
        return Ok(());
    }
    let (edges, pdf) = bins(coarse, weights, mode);
    let total: f64 = pdf.iter().sum();
    let mut draws = Vec::with_capacity(n_f);
    for i in 0..n_f {
        let u: f64 = jitter.as_mut().map_or(0.5, |r| r.random());
        draws.push((i as f64 + u) / n_f as f64);
    }
    if !(total > 0.0) || edges.len() < 2 {
        let (lo, hi) = (coarse[0], coarse[n - 1]);
        out.extend(draws.iter().map(|u| lo + u * (hi - lo)));
        return Err(DegenerateWeights);
    }
    let mut cdf = Vec::with_capacity(pdf.len() + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for p in &pdf {
        acc += p / total;
        cdf.push(acc);
    }
    let last = cdf.len() - 1;
    cdf[last] = 1.0;
    for u in draws {
        // first bin whose upper cdf exceeds u, skipping empty bins
        let b = (cdf.partition_point(|&c| c <= u)).clamp(1, last) - 1;
        let width = cdf[b + 1] - cdf[b];
        let f = if width > 0.0 { ((u - cdf[b]) / width).clamp(0.0, 1.0) } else { 0.0 };
        out.push(edges[b] + f * (edges[b + 1] - edges[b]));
    }
    Ok(())
}

/// Bin edges and unnormalised bin masses for fine sampling.
pub fn bins(coarse: &[f64], weights: &[f64], mode: SamplingMode) -> (Vec<f64>, Vec<f64>) {
    let n = coarse.len();
    let mids = coarse.windows(2).map(|w| 0.5 * (w[0] + w[1]));
    match mode {
        SamplingMode::TwoStageExtended => {
            let mut edges = Vec::with_capacity(n + 1);
            edges.push(coarse[0]);
            edges.extend(mids);
            edges.push(coarse[n - 1]);
            let pdf = (0..n)
                .map(|i| {
                    let prev = if i > 0 { weights[i - 1] } else { 0.0 };
                    let next = weights.get(i + 1).copied().unwrap_or(0.0);
                    0.25 * prev + 0.5 * weights[i] + 0.25 * next
                })
                .collect();
            (edges, pdf)
        }
        _ => {
            if n < 3 {
                return (Vec::new(), Vec::new());
            }
            (mids.collect(), weights[1..n - 1].to_vec())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const NO_RNG: Option<&mut ChaCha8Rng> = None;

    #[test]
    fn vacuum_gives_background() {
        let mut s = SampleSet::new(vec![0.0, 0.5], 1.0, vec![0.0; 2], vec![Vec3::repeat(1.0); 2]);
        let r = s.integrate(&Vec3::new(0.1, 0.2, 0.3));
        assert_eq!(r.opacity, 0.0);
        assert_eq!(r.color, Vec3::new(0.1, 0.2, 0.3));
    }

    #[test]
    fn constant_density_transmittance() {
        let n = 128;
        let mut t = Vec::new();
        stratified(1.0, n, NO_RNG, &mut t);
        let mut s = SampleSet::new(t, 1.0, vec![1.0; n], vec![Vec3::zeros(); n]);
        let r = s.integrate(&Vec3::zeros());
        assert!((r.opacity - (1.0 - (-1.0f64).exp())).abs() < 5e-3);
        for i in 1..n {
            assert!(s.transmittance[i] <= s.transmittance[i - 1]);
            assert!(s.weights[i] <= s.transmittance[i]);
        }
    }

    // composite Simpson (10^4 panels) of the emission-absorption integral of
    // a box of constant density and colour occupying [a, b]
    fn quadrature_box(a: f64, b: f64, sigma: f64, c: f64, bg: f64) -> f64 {
        let f = |t: f64| (-sigma * (t - a)).exp() * sigma * c;
        let n = 10_000;
        let h = (b - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let x0 = a + i as f64 * h;
            acc += h / 6.0 * (f(x0) + 4.0 * f(x0 + 0.5 * h) + f(x0 + h));
        }
        acc + bg * (-sigma * (b - a)).exp()
    }

    #[test]
    fn box_matches_quadrature() {
        let (a, b, sigma) = (0.2137, 0.7412, 3.0);
        let n = 4096;
        let mut t = Vec::new();
        stratified(1.0, n, NO_RNG, &mut t);
        let sig: Vec<f64> = t.iter().map(|&x| if (a..b).contains(&x) { sigma } else { 0.0 }).collect();
        let mut s = SampleSet::new(t, 1.0, sig, vec![Vec3::new(0.8, 0.8, 0.8); n]);
        let r = s.integrate(&Vec3::repeat(0.1));
        let reference = quadrature_box(a, b, sigma, 0.8, 0.1);
        assert!((r.color.x - reference).abs() < 1e-3, "{} vs {}", r.color.x, reference);
    }

    #[test]
    fn uniform_weights_give_uniform_fine_samples() {
        let mut coarse = Vec::new();
        stratified(1.0, 64, NO_RNG, &mut coarse);
        let w = vec![1.0; 64];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut all = Vec::new();
        let mut out = Vec::new();
        for _ in 0..(10_000 / 64 + 1) {
            fine_sample(&coarse, &w, 64, SamplingMode::TwoStageNerf, Some(&mut rng), &mut out).unwrap();
            all.extend_from_slice(&out);
        }
        let (lo, hi) = (0.5 * (coarse[0] + coarse[1]), 0.5 * (coarse[62] + coarse[63]));
        all.sort_by(f64::total_cmp);
        let n = all.len() as f64;
        let ks = all
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let cdf = (x - lo) / (hi - lo);
                (cdf - i as f64 / n).abs().max((cdf - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.05, "KS {ks}");
    }

    #[test]
    fn spike_support_per_mode() {
        let mut coarse = Vec::new();
        stratified(1.0, 32, NO_RNG, &mut coarse);
        let k = 10;
        let mut w = vec![0.0; 32];
        w[k] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut out = Vec::new();
        for _ in 0..200 {
            fine_sample(&coarse, &w, 64, SamplingMode::TwoStageExtended, Some(&mut rng), &mut out).unwrap();
            let (lo, hi) = (0.5 * (coarse[k - 2] + coarse[k - 1]), 0.5 * (coarse[k + 1] + coarse[k + 2]));
            assert!(out.iter().all(|&x| x >= lo && x <= hi));
            fine_sample(&coarse, &w, 64, SamplingMode::TwoStageNerf, Some(&mut rng), &mut out).unwrap();
            let (lo, hi) = (0.5 * (coarse[k - 1] + coarse[k]), 0.5 * (coarse[k] + coarse[k + 1]));
            assert!(out.iter().all(|&x| x >= lo && x <= hi));
        }
    }

    #[test]
    fn degenerate_weights_fall_back() {
        let coarse = [0.0, 0.25, 0.5, 0.75];
        let mut out = Vec::new();
        let r = fine_sample(&coarse, &[0.0; 4], 8, SamplingMode::TwoStageExtended, NO_RNG, &mut out);
        assert_eq!(r, Err(DegenerateWeights));
        assert_eq!(out.len(), 8);
        assert!(out.windows(2).all(|w| w[0] < w[1]));
        assert!(out.iter().all(|&x| (0.0..=0.75).contains(&x)));
    }

    #[test]
    fn extended_mode_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut coarse = Vec::new();
        let mut out = Vec::new();
        for _ in 0..100 {
            stratified(2.0, 16, Some(&mut rng), &mut coarse);
            let w: Vec<f64> = (0..16).map(|_| rng.random::<f64>().powi(4)).collect();
            fine_sample(&coarse, &w, 64, SamplingMode::TwoStageExtended, Some(&mut rng), &mut out).unwrap();
            assert!(out.iter().all(|&x| x >= coarse[0] && x <= coarse[15]));
            assert!(out.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
