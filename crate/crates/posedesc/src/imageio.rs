//! PFM (float depth maps) and PGM (8-bit intensity / masks) readers and
//! writers.
//!
//! PFM follows the conventional layout: grayscale `Pf` header, then rows
//! stored bottom-to-top; the negative scale marks little-endian data. PGM is
//! binary `P5` with maxval 255.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::Image;

pub fn write_pfm(path: &Path, image: &Image) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    write!(w, "Pf\n{} {}\n-1.0\n", image.width, image.height).map_err(io_err)?;
    for y in (0..image.height).rev() {
        for x in 0..image.width {
            w.write_all(&image.get(x, y).to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_pfm(path: &Path) -> Result<Image> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path, e);

    let magic = read_token(&mut r).map_err(io_err)?;
    if magic != "Pf" {
        return Err(Error::format(path, format!("bad PFM magic {:?}", magic)));
    }
    let width: usize = parse_token(path, &mut r, "width")?;
    let height: usize = parse_token(path, &mut r, "height")?;
    let scale: f32 = parse_token(path, &mut r, "scale")?;
    if scale >= 0.0 {
        return Err(Error::format(path, "big-endian PFM is not supported"));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(path, "zero image extent"));
    }
    let mut bytes = vec![0u8; width * height * 4];
    r.read_exact(&mut bytes).map_err(io_err)?;
    let mut image = Image::new(width, height);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let x = i % width;
        let y = height - 1 - i / width;
        image.set(x, y, f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
    }
    Ok(image)
}

/// Writes values clamped to [0, 1] and quantized to 8 bits.
pub fn write_pgm(path: &Path, image: &Image) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    write!(w, "P5\n{} {}\n255\n", image.width, image.height).map_err(io_err)?;
    let bytes: Vec<u8> = image
        .pixels
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&bytes).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Reads an 8-bit PGM back to floats in [0, 1].
pub fn read_pgm(path: &Path) -> Result<Image> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path, e);

    let magic = read_token(&mut r).map_err(io_err)?;
    if magic != "P5" {
        return Err(Error::format(path, format!("bad PGM magic {:?}", magic)));
    }
    let width: usize = parse_token(path, &mut r, "width")?;
    let height: usize = parse_token(path, &mut r, "height")?;
    let maxval: u32 = parse_token(path, &mut r, "maxval")?;
    if maxval != 255 {
        return Err(Error::format(
            path,
            format!("unsupported PGM maxval {}", maxval),
        ));
    }
    let mut bytes = vec![0u8; width * height];
    r.read_exact(&mut bytes).map_err(io_err)?;
    let mut image = Image::new(width, height);
    for (px, &b) in image.pixels.iter_mut().zip(&bytes) {
        *px = b as f32 / 255.0;
    }
    Ok(image)
}

/// Next whitespace-delimited token. PNM headers allow any single whitespace
/// separator; a `#` starts a comment running to end of line.
fn read_token<R: Read>(r: &mut R) -> std::io::Result<String> {
    let mut token = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        if c == '#' {
            in_comment = true;
            continue;
        }
        if c.is_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(c);
    }
    Ok(token)
}

fn parse_token<T: std::str::FromStr, R: Read>(path: &Path, r: &mut R, what: &str) -> Result<T> {
    let token = read_token(r).map_err(|e| Error::io(path, e))?;
    token
        .parse()
        .map_err(|_| Error::format(path, format!("bad {} field {:?}", what, token)))
}
