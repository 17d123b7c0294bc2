use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use super::sh::{self, coeff_count, MAX_DEGREE};
use super::{FieldResponse, RadianceField};
use crate::geom::{Aabb, Vec3};

const MAGIC: &[u8; 8] = b"VOXFIELD";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum VoxelFormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a voxfield file")]
    BadMagic,
    #[error("unsupported voxfield version {0}")]
    BadVersion(u32),
    #[error("invalid voxfield header: {0}")]
    BadHeader(String),
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trilinear weights over the 8 voxel centres surrounding a point.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    pub voxels: [usize; 8],
    pub weights: [f64; 8],
}

/// Density and colour grid over an axis-aligned box. Values live at voxel
/// centres and are interpolated trilinearly; positions between the outermost
/// centres and the box faces take the clamped edge value.
///
/// Parameters are one flat vector: `n` pre-activation densities followed by
/// `n * 3 * (lmax + 1)^2` colour coefficients laid out `[voxel][channel][coef]`,
/// voxels in x-fastest order.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelField {
    resolution: [usize; 3],
    bounds: Aabb,
    lmax: usize,
    params: Vec<f64>,
    cell: Vec3,
}

impl VoxelField {
    /// Uniform field with raw density `density_raw` and grey (0.5) colour.
    pub fn new(resolution: [usize; 3], bounds: Aabb, lmax: usize, density_raw: f64) -> Self {
        assert!(resolution.iter().all(|&r| r > 0), "empty resolution");
        assert!(lmax <= MAX_DEGREE, "lmax above {MAX_DEGREE}");
        let e = bounds.extent();
        assert!(e.iter().all(|&x| x > 0.0), "degenerate bounds");
        let n: usize = resolution.iter().product();
        let mut params = vec![0.0; n * (1 + 3 * coeff_count(lmax))];
        params[..n].fill(density_raw);
        VoxelField {
            resolution,
            bounds,
            lmax,
            params,
            cell: Vec3::new(
                e.x / resolution[0] as f64,
                e.y / resolution[1] as f64,
                e.z / resolution[2] as f64,
            ),
        }
    }

    pub fn from_params(resolution: [usize; 3], bounds: Aabb, lmax: usize, params: Vec<f64>) -> Self {
        let mut f = VoxelField::new(resolution, bounds, lmax, 0.0);
        assert_eq!(params.len(), f.params.len(), "parameter count");
        f.params = params;
        f
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn voxel_count(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn voxel_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution[0] * (j + self.resolution[1] * k)
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.bounds.min
            + Vec3::new(
                (i as f64 + 0.5) * self.cell.x,
                (j as f64 + 0.5) * self.cell.y,
                (k as f64 + 0.5) * self.cell.z,
            )
    }

    /// Index of the raw density of `voxel`.
    pub fn density_index(&self, voxel: usize) -> usize {
        voxel
    }

    /// Index of colour coefficient `coef` of `channel` at `voxel`.
    pub fn sh_index(&self, voxel: usize, channel: usize, coef: usize) -> usize {
        let k = coeff_count(self.lmax);
        self.voxel_count() + (voxel * 3 + channel) * k + coef
    }

    /// Sets every voxel from a closure over voxel centres returning
    /// `(raw density, per-channel raw colour for the constant band)`.
    pub fn fill_with(&mut self, f: impl Fn(&Vec3) -> (f64, [f64; 3])) {
        let [nx, ny, nz] = self.resolution;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let v = self.voxel_index(i, j, k);
                    let (d, c) = f(&self.voxel_center(i, j, k));
                    self.params[v] = d;
                    for (ch, raw) in c.iter().enumerate() {
                        let idx = self.sh_index(v, ch, 0);
                        self.params[idx] = raw / sh::basis0();
                    }
                }
            }
        }
    }

    #[inline]
    pub fn stencil(&self, p: &Vec3) -> Option<Stencil> {
        if !self.bounds.contains(p) {
            return None;
        }
        let mut base = [0usize; 3];
        let mut upper = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let n = self.resolution[a];
            let u = ((p[a] - self.bounds.min[a]) / self.cell[a] - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = (u.floor() as usize).min(n.saturating_sub(2));
            base[a] = i0;
            upper[a] = (i0 + 1).min(n - 1);
            frac[a] = u - i0 as f64;
        }
        let mut voxels = [0usize; 8];
        let mut weights = [0.0f64; 8];
        for c in 0..8 {
            let pick = |a: usize| if c >> a & 1 == 1 { upper[a] } else { base[a] };
            let w = (0..3).fold(1.0, |acc, a| acc * if c >> a & 1 == 1 { frac[a] } else { 1.0 - frac[a] });
            voxels[c] = self.voxel_index(pick(0), pick(1), pick(2));
            weights[c] = w;
        }
        Some(Stencil { voxels, weights })
    }

    /// Pre-activation density and colour.
    #[inline]
    fn raw(&self, st: &Stencil, basis: &[f64; 9]) -> (f64, [f64; 3]) {
        let k = coeff_count(self.lmax);
        let n = self.voxel_count();
        let mut d = 0.0;
        let mut c = [0.0; 3];
        for (&v, &w) in st.voxels.iter().zip(&st.weights) {
            if w == 0.0 {
                continue;
            }
            d += w * self.params[v];
            let sh = &self.params[n + v * 3 * k..n + (v + 1) * 3 * k];
            for (ch, coefs) in sh.chunks_exact(k).enumerate() {
                let mut s = 0.0;
                for j in 0..k {
                    s += coefs[j] * basis[j];
                }
                c[ch] += w * s;
            }
        }
        (d, c)
    }

    /// Adds `d(loss)/d(params)` for one query to `grad`, given the upstream
    /// derivatives with respect to the activated density and colour.
    pub fn accumulate_gradients(&self, p: &Vec3, v: &Vec3, up_density: f64, up_color: &Vec3, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let Some(st) = self.stencil(p) else {
            return;
        };
        let mut basis = [0.0; 9];
        sh::basis(self.lmax, v, &mut basis);
        let (d, c) = self.raw(&st, &basis);
        let gd = up_density * sigmoid(d);
        let mut gc = [0.0; 3];
        for ch in 0..3 {
            let s = sigmoid(c[ch]);
            gc[ch] = up_color[ch] * s * (1.0 - s);
        }
        let k = coeff_count(self.lmax);
        let n = self.voxel_count();
        for (&vox, &w) in st.voxels.iter().zip(&st.weights) {
            if w == 0.0 {
                continue;
            }
            grad[vox] += w * gd;
            for (ch, &c) in gc.iter().enumerate() {
                let off = n + (vox * 3 + ch) * k;
                let g = w * c;
                for j in 0..k {
                    grad[off + j] += g * basis[j];
                }
            }
        }
    }

    /// Sparse form of [`accumulate_gradients`](Self::accumulate_gradients):
    /// `(parameter index, derivative)` pairs, summed per index and sorted.
    pub fn query_gradients(&self, p: &Vec3, v: &Vec3, up_density: f64, up_color: &Vec3) -> Vec<(usize, f64)> {
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_gradients(p, v, up_density, up_color, &mut grad);
        grad.into_iter().enumerate().filter(|(_, g)| *g != 0.0).collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), VoxelFormatError> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        for &r in &self.resolution {
            w.write_u32::<LittleEndian>(r as u32)?;
        }
        for x in self.bounds.min.iter().chain(self.bounds.max.iter()) {
            w.write_f32::<LittleEndian>(*x as f32)?;
        }
        w.write_u32::<LittleEndian>(self.lmax as u32)?;
        for &x in &self.params {
            w.write_f32::<LittleEndian>(x as f32)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, VoxelFormatError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(VoxelFormatError::BadMagic);
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(VoxelFormatError::BadVersion(version));
        }
        let mut res = [0usize; 3];
        for x in &mut res {
            *x = r.read_u32::<LittleEndian>()? as usize;
        }
        let mut b = [0.0f64; 6];
        for x in &mut b {
            *x = r.read_f32::<LittleEndian>()? as f64;
        }
        let lmax = r.read_u32::<LittleEndian>()? as usize;
        if res.contains(&0) {
            return Err(VoxelFormatError::BadHeader("zero resolution".into()));
        }
        if lmax > MAX_DEGREE {
            return Err(VoxelFormatError::BadHeader(format!("lmax {lmax}")));
        }
        if (0..3).any(|a| !(b[a + 3] > b[a])) {
            return Err(VoxelFormatError::BadHeader("degenerate bounds".into()));
        }
        let n: usize = res.iter().product();
        let count = n * (1 + 3 * coeff_count(lmax));
        let mut params = vec![0.0f32; count];
        r.read_f32_into::<LittleEndian>(&mut params)?;
        let bounds = Aabb::new(Vec3::new(b[0], b[1], b[2]), Vec3::new(b[3], b[4], b[5]));
        Ok(VoxelField::from_params(res, bounds, lmax, params.into_iter().map(f64::from).collect()))
    }
}

impl RadianceField for VoxelField {
    #[inline]
    fn query(&self, p: &Vec3, v: &Vec3) -> FieldResponse {
        let Some(st) = self.stencil(p) else {
            return FieldResponse::VACUUM;
        };
        let mut basis = [0.0; 9];
        sh::basis(self.lmax, v, &mut basis);
        let (d, c) = self.raw(&st, &basis);
        FieldResponse {
            density: softplus(d),
            color: Vec3::new(sigmoid(c[0]), sigmoid(c[1]), sigmoid(c[2])),
        }
    }
}
