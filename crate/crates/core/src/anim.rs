//! Cage animation: linear blendshapes followed by linear blend skinning, and
//! nearest-vertex transfer of skinning weights from a driving surface.
//!
//! Rig files (`defrig v1`) name a cage file and hold the blendshape deltas
//! and per-vertex weights:
//!
//! ```text
//! defrig v1
//! cage head.tetcage
//! counts <nv> <K> <B>
//! blendshape            # K times, each followed by nv `d x y z` lines
//! weights               # followed by nv `w w_0 .. w_{B-1}` lines
//! ```
//!
//! Per-frame parameters are CSV rows `frame, beta_1..beta_K, theta` with
//! theta as B row-major 3x4 matrices. A non-numeric first row is a header.

use std::io::{self, BufRead, Read, Write};

use thiserror::Error;

use crate::geom::{Affine, Mat3, Vec3};
use crate::io::{content_lines, parse_num};
use crate::mesh::{DeformedState, TetCage};
use crate::spatial::KdTree;

const WEIGHT_SUM_TOL: f64 = 1e-9;
const RIGID_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AnimError {
    #[error("surface has no vertices")]
    EmptySurface,
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch { what: String, expected: usize, got: usize },
    #[error("vertex {vertex}: skin weights must be non-negative and sum to 1")]
    InvalidWeights { vertex: usize },
    #[error("bone {bone}: transform is not rigid")]
    NonRigid { bone: usize },
    #[error("non-finite pose parameter")]
    NonFinite,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn mismatch(what: &str, expected: usize, got: usize) -> AnimError {
    AnimError::DimensionMismatch {
        what: what.into(),
        expected,
        got,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeformRig {
    base: Vec<Vec3>,
    blendshapes: Vec<Vec<Vec3>>,
    bones: usize,
    /// Row-major `base.len() x bones`.
    weights: Vec<f64>,
}

impl DeformRig {
    pub fn new(base: Vec<Vec3>, blendshapes: Vec<Vec<Vec3>>, bones: usize, weights: Vec<f64>) -> Result<Self, AnimError> {
        let nv = base.len();
        if bones == 0 {
            return Err(mismatch("bone count", 1, 0));
        }
        for b in &blendshapes {
            if b.len() != nv {
                return Err(mismatch("blendshape vertices", nv, b.len()));
            }
        }
        if weights.len() != nv * bones {
            return Err(mismatch("skin weights", nv * bones, weights.len()));
        }
        for (v, row) in weights.chunks_exact(bones).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(AnimError::InvalidWeights { vertex: v });
            }
        }
        Ok(DeformRig {
            base,
            blendshapes,
            bones,
            weights,
        })
    }

    /// Every vertex fully bound to bone 0, no blendshapes.
    pub fn rigid(base: Vec<Vec3>) -> Self {
        let n = base.len();
        DeformRig {
            base,
            blendshapes: Vec::new(),
            bones: 1,
            weights: vec![1.0; n],
        }
    }

    pub fn base(&self) -> &[Vec3] {
        &self.base
    }

    pub fn blendshapes(&self) -> &[Vec<Vec3>] {
        &self.blendshapes
    }

    pub fn bone_count(&self) -> usize {
        self.bones
    }

    pub fn weights(&self, vertex: usize) -> &[f64] {
        &self.weights[vertex * self.bones..(vertex + 1) * self.bones]
    }

    /// `v' = sum_b w_b theta_b (base_v + sum_k beta_k dB_k[v])`.
    pub fn pose_vertices(&self, params: &PoseParams) -> Result<Vec<Vec3>, AnimError> {
        if params.beta.len() != self.blendshapes.len() {
            return Err(mismatch("blend coefficients", self.blendshapes.len(), params.beta.len()));
        }
        if params.theta.len() != self.bones {
            return Err(mismatch("bone transforms", self.bones, params.theta.len()));
        }
        params.validate()?;
        Ok((0..self.base.len())
            .map(|v| {
                let mut x = self.base[v];
                for (b, shape) in params.beta.iter().zip(&self.blendshapes) {
                    x += shape[v] * *b;
                }
                let mut out = Vec3::zeros();
                for (w, t) in self.weights(v).iter().zip(&params.theta) {
                    if *w != 0.0 {
                        out += t.apply(&x) * *w;
                    }
                }
                out
            })
            .collect())
    }
}

/// Blendshape coefficients and per-bone rigid transforms for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseParams {
    pub beta: Vec<f64>,
    pub theta: Vec<Affine>,
}

impl PoseParams {
    pub fn identity(k: usize, bones: usize) -> Self {
        PoseParams {
            beta: vec![0.0; k],
            theta: vec![Affine::identity(); bones],
        }
    }

    pub fn validate(&self) -> Result<(), AnimError> {
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(AnimError::NonFinite);
        }
        for (i, t) in self.theta.iter().enumerate() {
            if t.to_row_major().iter().any(|c| !c.is_finite()) {
                return Err(AnimError::NonFinite);
            }
            let r: &Mat3 = &t.linear;
            if (r.transpose() * r - Mat3::identity()).norm() > RIGID_TOL || r.determinant() <= 0.0 {
                return Err(AnimError::NonRigid { bone: i });
            }
        }
        Ok(())
    }
}

/// Poses the rig and checks the result against the cage.
pub fn pose(rig: &DeformRig, cage: &TetCage, params: &PoseParams) -> Result<DeformedState, AnimError> {
    if rig.base.len() != cage.vertex_count() {
        return Err(mismatch("rig vertices", cage.vertex_count(), rig.base.len()));
    }
    let verts = rig.pose_vertices(params)?;
    DeformedState::new(cage, verts).map_err(|_| AnimError::NonFinite)
}

/// Each cage vertex takes the weights of its nearest surface vertex (lowest
/// index on ties). `surface_weights` is row-major `surface.len() x bones`.
pub fn transfer_weights(surface: &[Vec3], surface_weights: &[f64], bones: usize, cage: &TetCage) -> Result<Vec<f64>, AnimError> {
    if surface.is_empty() {
        return Err(AnimError::EmptySurface);
    }
    if surface_weights.len() != surface.len() * bones {
        return Err(mismatch("surface weights", surface.len() * bones, surface_weights.len()));
    }
    let tree = KdTree::new(surface.to_vec());
    let mut out = Vec::with_capacity(cage.vertex_count() * bones);
    for v in cage.rest_vertices() {
        let i = tree.nearest(v).expect("non-empty tree");
        out.extend_from_slice(&surface_weights[i * bones..(i + 1) * bones]);
    }
    Ok(out)
}

/// Rig file contents; the base vertices come from the referenced cage.
#[derive(Clone, Debug, PartialEq)]
pub struct RigFile {
    pub cage: String,
    pub vertex_count: usize,
    pub blendshapes: Vec<Vec<Vec3>>,
    pub bones: usize,
    pub weights: Vec<f64>,
}

impl RigFile {
    pub fn into_rig(self, cage: &TetCage) -> Result<DeformRig, AnimError> {
        if self.vertex_count != cage.vertex_count() {
            return Err(mismatch("rig vertices", cage.vertex_count(), self.vertex_count));
        }
        DeformRig::new(cage.rest_vertices().to_vec(), self.blendshapes, self.bones, self.weights)
    }
}

fn parse_err(e: crate::io::FormatError) -> AnimError {
    match e {
        crate::io::FormatError::Io(e) => AnimError::Io(e),
        crate::io::FormatError::Parse { line, msg } => AnimError::Parse { line, msg },
        crate::io::FormatError::Mesh(m) => AnimError::Parse { line: 0, msg: m.to_string() },
    }
}

pub fn read_defrig(r: impl BufRead) -> Result<RigFile, AnimError> {
    let mut lines = content_lines(r).map(|l| l.map_err(parse_err));
    let mut last = 0;
    let mut next = |what: &str| -> Result<(usize, String), AnimError> {
        match lines.next() {
            Some(Ok((n, l))) => {
                last = n;
                Ok((n, l))
            }
            Some(Err(e)) => Err(e),
            None => Err(AnimError::Parse {
                line: last + 1,
                msg: format!("unexpected end of file, expected {what}"),
            }),
        }
    };
    let bad = |line: usize, msg: &str| AnimError::Parse { line, msg: msg.into() };
    let (n, l) = next("header")?;
    if l.split_whitespace().collect::<Vec<_>>() != ["defrig", "v1"] {
        return Err(bad(n, "expected 'defrig v1' header"));
    }
    let (n, l) = next("cage line")?;
    let cage = l
        .strip_prefix("cage ")
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad(n, "expected 'cage <path>'"))?;
    let (n, l) = next("counts line")?;
    let mut toks = l.split_whitespace();
    if toks.next() != Some("counts") {
        return Err(bad(n, "expected 'counts <nv> <K> <B>'"));
    }
    let num = |t: Option<&str>, what: &str| parse_num::<usize>(t, n, what).map_err(parse_err);
    let (nv, k, b) = (num(toks.next(), "vertex count")?, num(toks.next(), "blendshape count")?, num(toks.next(), "bone count")?);
    let mut blendshapes = Vec::with_capacity(k);
    let row = |l: &str, n: usize, tag: &str, len: usize| -> Result<Vec<f64>, AnimError> {
        let mut toks = l.split_whitespace();
        if toks.next() != Some(tag) {
            return Err(AnimError::Parse {
                line: n,
                msg: format!("expected '{tag}' row"),
            });
        }
        let vals = toks.map(|t| parse_num::<f64>(Some(t), n, "value").map_err(parse_err)).collect::<Result<Vec<_>, _>>()?;
        if vals.len() != len {
            return Err(AnimError::Parse {
                line: n,
                msg: format!("expected {len} values, got {}", vals.len()),
            });
        }
        Ok(vals)
    };
    for _ in 0..k {
        let (n, l) = next("'blendshape'")?;
        if l != "blendshape" {
            return Err(bad(n, "expected 'blendshape'"));
        }
        let mut deltas = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (n, l) = next("delta row")?;
            let d = row(&l, n, "d", 3)?;
            deltas.push(Vec3::new(d[0], d[1], d[2]));
        }
        blendshapes.push(deltas);
    }
    let (n, l) = next("'weights'")?;
    if l != "weights" {
        return Err(bad(n, "expected 'weights'"));
    }
    let mut weights = Vec::with_capacity(nv * b);
    for _ in 0..nv {
        let (n, l) = next("weight row")?;
        weights.extend(row(&l, n, "w", b)?);
    }
    if let Ok((n, _)) = next("") {
        return Err(bad(n, "trailing content after weights"));
    }
    Ok(RigFile {
        cage,
        vertex_count: nv,
        blendshapes,
        bones: b,
        weights,
    })
}

pub fn write_defrig(mut w: impl Write, cage_path: &str, rig: &DeformRig) -> io::Result<()> {
    writeln!(w, "defrig v1")?;
    writeln!(w, "cage {cage_path}")?;
    writeln!(w, "counts {} {} {}", rig.base.len(), rig.blendshapes.len(), rig.bones)?;
    for shape in &rig.blendshapes {
        writeln!(w, "blendshape")?;
        for d in shape {
            writeln!(w, "d {:?} {:?} {:?}", d.x, d.y, d.z)?;
        }
    }
    writeln!(w, "weights")?;
    for v in 0..rig.base.len() {
        let row: Vec<String> = rig.weights(v).iter().map(|x| format!("{x:?}")).collect();
        writeln!(w, "w {}", row.join(" "))?;
    }
    Ok(())
}

/// Parses the per-frame parameter CSV for a rig with `k` blendshapes and
/// `bones` bones.
pub fn read_params_csv(r: impl Read, k: usize, bones: usize) -> Result<Vec<(u64, PoseParams)>, AnimError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r);
    let width = 1 + k + 12 * bones;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| AnimError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() != width {
            return Err(AnimError::Parse {
                line,
                msg: format!("expected {width} fields, got {}", rec.len()),
            });
        }
        let frame = parse_num::<u64>(rec.get(0), line, "frame index").map_err(parse_err)?;
        let vals = rec.iter().skip(1).map(|f| parse_num::<f64>(Some(f), line, "parameter").map_err(parse_err)).collect::<Result<Vec<_>, _>>()?;
        let theta = vals[k..]
            .chunks_exact(12)
            .map(|c| Affine::from_row_major(c.try_into().unwrap()))
            .collect();
        out.push((
            frame,
            PoseParams {
                beta: vals[..k].to_vec(),
                theta,
            },
        ));
    }
    Ok(out)
}

pub fn write_params_csv(mut w: impl Write, frames: &[(u64, PoseParams)]) -> io::Result<()> {
    for (f, p) in frames {
        let mut row = vec![f.to_string()];
        row.extend(p.beta.iter().map(|b| format!("{b:?}")));
        for t in &p.theta {
            row.extend(t.to_row_major().iter().map(|c| format!("{c:?}")));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
