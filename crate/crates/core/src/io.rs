//! Text formats for cages, per-frame vertex positions and triangle shells.
//!
//! `tetcage v1 <nv> <nt>` followed by `v x y z` and `t i0 i1 i2 i3` lines
//! (0-based); `tetframe v1 <nv>` followed by `v x y z` lines. Blank lines and
//! `#` comments are ignored.

use std::io::{self, BufRead, Write};
use std::str::SplitWhitespace;

use thiserror::Error;

use crate::geom::Vec3;
use crate::lookup::TriShell;
use crate::mesh::{DeformedState, MeshError, TetCage};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn perr(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse { line, msg: msg.into() }
}

/// Non-empty, comment-stripped lines with 1-based numbers.
pub(crate) fn content_lines(r: impl BufRead) -> impl Iterator<Item = Result<(usize, String), FormatError>> {
    r.lines().enumerate().filter_map(|(i, l)| match l {
        Err(e) => Some(Err(e.into())),
        Ok(l) => {
            let body = l.split('#').next().unwrap_or("").trim().to_string();
            (!body.is_empty()).then_some(Ok((i + 1, body)))
        }
    })
}

pub(crate) fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, FormatError> {
    let tok = tok.ok_or_else(|| perr(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| perr(line, format!("bad {what} '{tok}'")))
}

fn parse_vec3(toks: &mut SplitWhitespace, line: usize) -> Result<Vec3, FormatError> {
    let x = parse_num(toks.next(), line, "coordinate")?;
    let y = parse_num(toks.next(), line, "coordinate")?;
    let z = parse_num(toks.next(), line, "coordinate")?;
    Ok(Vec3::new(x, y, z))
}

fn expect_end(toks: &mut SplitWhitespace, line: usize) -> Result<(), FormatError> {
    match toks.next() {
        Some(t) => Err(perr(line, format!("unexpected trailing token '{t}'"))),
        None => Ok(()),
    }
}

fn header(
    lines: &mut impl Iterator<Item = Result<(usize, String), FormatError>>,
    magic: &str,
) -> Result<(usize, Vec<usize>), FormatError> {
    let (n, l) = lines.next().ok_or_else(|| perr(1, format!("missing '{magic} v1' header")))??;
    let mut toks = l.split_whitespace();
    if toks.next() != Some(magic) || toks.next() != Some("v1") {
        return Err(perr(n, format!("expected '{magic} v1' header")));
    }
    let counts = toks.map(|t| t.parse().map_err(|_| perr(n, format!("bad count '{t}'")))).collect::<Result<_, _>>()?;
    Ok((n, counts))
}

fn read_vertices(
    lines: &mut impl Iterator<Item = Result<(usize, String), FormatError>>,
    count: usize,
    last: &mut usize,
) -> Result<Vec<Vec3>, FormatError> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, l) = lines.next().ok_or_else(|| perr(*last + 1, "unexpected end of file in vertex block"))??;
        *last = n;
        let mut toks = l.split_whitespace();
        if toks.next() != Some("v") {
            return Err(perr(n, "expected 'v x y z'"));
        }
        out.push(parse_vec3(&mut toks, n)?);
        expect_end(&mut toks, n)?;
    }
    Ok(out)
}

pub fn read_tetcage(r: impl BufRead) -> Result<TetCage, FormatError> {
    let mut lines = content_lines(r);
    let (mut last, counts) = header(&mut lines, "tetcage")?;
    let [nv, nt] = counts[..] else {
        return Err(perr(last, "header must be 'tetcage v1 <nv> <nt>'"));
    };
    let verts = read_vertices(&mut lines, nv, &mut last)?;
    let mut tets = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (n, l) = lines.next().ok_or_else(|| perr(last + 1, "unexpected end of file in tet block"))??;
        last = n;
        let mut toks = l.split_whitespace();
        if toks.next() != Some("t") {
            return Err(perr(n, "expected 't i0 i1 i2 i3'"));
        }
        let mut t = [0u32; 4];
        for c in &mut t {
            *c = parse_num(toks.next(), n, "vertex index")?;
        }
        expect_end(&mut toks, n)?;
        tets.push(t);
    }
    if let Some(extra) = lines.next() {
        return Err(perr(extra?.0, "trailing content after tets"));
    }
    Ok(TetCage::new(verts, tets)?)
}

pub fn write_tetcage(mut w: impl Write, cage: &TetCage) -> io::Result<()> {
    writeln!(w, "tetcage v1 {} {}", cage.vertex_count(), cage.tet_count())?;
    for v in cage.rest_vertices() {
        writeln!(w, "v {:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    for t in cage.tets() {
        writeln!(w, "t {} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    Ok(())
}

pub fn read_tetframe(r: impl BufRead, cage: &TetCage) -> Result<DeformedState, FormatError> {
    let mut lines = content_lines(r);
    let (mut last, counts) = header(&mut lines, "tetframe")?;
    let [nv] = counts[..] else {
        return Err(perr(last, "header must be 'tetframe v1 <nv>'"));
    };
    if nv != cage.vertex_count() {
        return Err(perr(last, format!("frame has {nv} vertices, cage has {}", cage.vertex_count())));
    }
    let verts = read_vertices(&mut lines, nv, &mut last)?;
    if let Some(extra) = lines.next() {
        return Err(perr(extra?.0, "trailing content after vertices"));
    }
    Ok(DeformedState::new(cage, verts)?)
}

pub fn write_tetframe(mut w: impl Write, state: &DeformedState) -> io::Result<()> {
    writeln!(w, "tetframe v1 {}", state.vertices.len())?;
    for v in &state.vertices {
        writeln!(w, "v {:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    Ok(())
}

/// Reads `v` and `f` records of a Wavefront OBJ file; polygons are fanned
/// into triangles, texture and normal indices are ignored.
pub fn read_obj_shell(r: impl BufRead) -> Result<TriShell, FormatError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for item in content_lines(r) {
        let (n, l) = item?;
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some("v") => vertices.push(parse_vec3(&mut toks, n)?),
            Some("f") => {
                let idx = toks
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let i: i64 = parse_num(Some(first), n, "face index")?;
                        let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                        if resolved < 0 || resolved >= vertices.len() as i64 {
                            return Err(perr(n, format!("face index {i} out of range")));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if idx.len() < 3 {
                    return Err(perr(n, "face with fewer than 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(TriShell { vertices, triangles })
}
