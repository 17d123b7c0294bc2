//! Frame and image files: binary PPM (P6, 8-bit) and raw float buffers.

use std::io::{self, BufRead, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use super::Frame;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed image: {0}")]
    Format(String),
}

/// An RGB image with channels in [0, 1], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Rgb {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f64; 3]>,
}

impl Rgb {
    pub fn new(width: u32, height: u32, data: Vec<[f64; 3]>) -> Self {
        assert_eq!(data.len(), (width * height) as usize);
        Rgb { width, height, data }
    }

    /// Rounds to 8 bits and back.
    pub fn quantized(&self) -> Rgb {
        Rgb {
            data: self.data.iter().map(|p| p.map(|c| to_byte(c) as f64 / 255.0)).collect(),
            ..self.clone()
        }
    }
}

impl From<&Frame> for Rgb {
    fn from(f: &Frame) -> Self {
        Rgb::new(f.width, f.height, f.rgb.clone())
    }
}

#[inline]
fn to_byte(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_ppm(mut w: impl Write, img: &Rgb) -> Result<(), ImageError> {
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    let bytes: Vec<u8> = img.data.iter().flat_map(|p| p.map(to_byte)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

fn ppm_token(r: &mut impl BufRead) -> Result<String, ImageError> {
    let mut tok = String::new();
    loop {
        let mut b = [0u8];
        if r.read(&mut b)? == 0 {
            break;
        }
        let c = b[0] as char;
        if c == '#' && tok.is_empty() {
            let mut line = String::new();
            r.read_line(&mut line)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    if tok.is_empty() {
        return Err(ImageError::Format("truncated PPM header".into()));
    }
    Ok(tok)
}

pub fn read_ppm(mut r: impl BufRead) -> Result<Rgb, ImageError> {
    if ppm_token(&mut r)? != "P6" {
        return Err(ImageError::Format("only binary P6 PPM is supported".into()));
    }
    let mut num = |what: &str| -> Result<u32, ImageError> {
        ppm_token(&mut r)?
            .parse()
            .map_err(|_| ImageError::Format(format!("bad PPM {what}")))
    };
    let (w, h, max) = (num("width")?, num("height")?, num("maxval")?);
    if max != 255 {
        return Err(ImageError::Format(format!("unsupported PPM maxval {max}")));
    }
    let mut bytes = vec![0u8; (w * h * 3) as usize];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(3)
        .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
        .collect();
    Ok(Rgb::new(w, h, data))
}

/// Writes `f32img v1 <w> <h> 5` then red, green, blue, opacity and depth per
/// pixel as little-endian 32-bit floats.
pub fn write_f32(mut w: impl Write, frame: &Frame) -> Result<(), ImageError> {
    writeln!(w, "f32img v1 {} {} 5", frame.width, frame.height)?;
    for i in 0..frame.rgb.len() {
        for c in frame.rgb[i] {
            w.write_f32::<LittleEndian>(c as f32)?;
        }
        w.write_f32::<LittleEndian>(frame.opacity[i] as f32)?;
        w.write_f32::<LittleEndian>(frame.depth[i] as f32)?;
    }
    Ok(())
}

pub fn read_f32(mut r: impl BufRead) -> Result<Frame, ImageError> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 5 || parts[0] != "f32img" || parts[1] != "v1" || parts[4] != "5" {
        return Err(ImageError::Format("bad f32img header".into()));
    }
    let parse = |s: &str| s.parse::<u32>().map_err(|_| ImageError::Format("bad f32img size".into()));
    let mut frame = Frame::new(parse(parts[2])?, parse(parts[3])?);
    for i in 0..frame.rgb.len() {
        for c in 0..3 {
            frame.rgb[i][c] = r.read_f32::<LittleEndian>()? as f64;
        }
        frame.opacity[i] = r.read_f32::<LittleEndian>()? as f64;
        frame.depth[i] = r.read_f32::<LittleEndian>()? as f64;
    }
    Ok(frame)
}
