//! Checkpoint serialization.
//!
//! Little-endian binary layout:
//!
//! ```text
//! magic  "PDSC" (4 bytes)
//! u32    format version (currently 1)
//! u32x3  input channels, height, width
//! u32    descriptor dim
//! u32    layer count
//! per layer:
//!   u8   tag: 0 = Conv, 1 = MaxPool2x2, 2 = Relu, 3 = Fully
//!   Conv: u32x3 out channels, kernel h, kernel w;  Fully: u32 out dim
//! per parameterized layer (network order):
//!   weights then bias, each as: u32 rank, u32 extents..., f32 values...
//! ```
//!
//! Values round-trip bitwise. Velocity buffers are optimizer state, not part
//! of the learned function, and are not stored; loading yields zero velocity.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::{LayerSpec, NetworkSpec, Parameters};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"PDSC";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, spec: &NetworkSpec, params: &Parameters<f32>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);

    w.write_all(MAGIC).map_err(io_err)?;
    write_u32(&mut w, VERSION).map_err(io_err)?;
    let (c, h, wd) = spec.input();
    for v in [c, h, wd, spec.descriptor_dim(), spec.layers().len()] {
        write_u32(&mut w, v as u32).map_err(io_err)?;
    }
    for layer in spec.layers() {
        match layer {
            LayerSpec::Conv {
                out_channels,
                kernel_h,
                kernel_w,
            } => {
                w.write_all(&[0u8]).map_err(io_err)?;
                for v in [*out_channels, *kernel_h, *kernel_w] {
                    write_u32(&mut w, v as u32).map_err(io_err)?;
                }
            }
            LayerSpec::MaxPool2x2 => w.write_all(&[1u8]).map_err(io_err)?,
            LayerSpec::Relu => w.write_all(&[2u8]).map_err(io_err)?,
            LayerSpec::Fully { out_dim } => {
                w.write_all(&[3u8]).map_err(io_err)?;
                write_u32(&mut w, *out_dim as u32).map_err(io_err)?;
            }
        }
    }
    for entry in params.layers.iter().flatten() {
        write_tensor(&mut w, entry.weights.shape(), entry.weights.data()).map_err(io_err)?;
        write_tensor(&mut w, &[entry.bias.len()], &entry.bias).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: &Path) -> Result<(NetworkSpec, Parameters<f32>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path, e);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::format(path, "bad magic, not a checkpoint file"));
    }
    let version = read_u32(&mut r).map_err(io_err)?;
    if version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {}", version),
        ));
    }
    let c = read_u32(&mut r).map_err(io_err)? as usize;
    let h = read_u32(&mut r).map_err(io_err)? as usize;
    let w = read_u32(&mut r).map_err(io_err)? as usize;
    let descriptor_dim = read_u32(&mut r).map_err(io_err)? as usize;
    let n_layers = read_u32(&mut r).map_err(io_err)? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag).map_err(io_err)?;
        layers.push(match tag[0] {
            0 => LayerSpec::Conv {
                out_channels: read_u32(&mut r).map_err(io_err)? as usize,
                kernel_h: read_u32(&mut r).map_err(io_err)? as usize,
                kernel_w: read_u32(&mut r).map_err(io_err)? as usize,
            },
            1 => LayerSpec::MaxPool2x2,
            2 => LayerSpec::Relu,
            3 => LayerSpec::Fully {
                out_dim: read_u32(&mut r).map_err(io_err)? as usize,
            },
            other => {
                return Err(Error::format(path, format!("unknown layer tag {}", other)));
            }
        });
    }
    let spec = NetworkSpec::new((c, h, w), layers, descriptor_dim)?;
    let mut params = Parameters::<f32>::zeros(&spec)?;
    for entry in params.layers.iter_mut().flatten() {
        let (shape, data) = read_tensor(&mut r).map_err(io_err)?;
        if shape != entry.weights.shape() {
            return Err(Error::format(
                path,
                format!(
                    "stored weight shape {:?} does not match spec shape {:?}",
                    shape,
                    entry.weights.shape()
                ),
            ));
        }
        entry.weights = Tensor::from_vec(&shape, data)?;
        let (bshape, bdata) = read_tensor(&mut r).map_err(io_err)?;
        if bshape != [entry.bias.len()] {
            return Err(Error::format(
                path,
                format!(
                    "stored bias shape {:?} does not match length {}",
                    bshape,
                    entry.bias.len()
                ),
            ));
        }
        entry.bias = bdata;
    }
    let mut trailer = [0u8; 1];
    if r.read(&mut trailer).map_err(io_err)? != 0 {
        return Err(Error::format(path, "trailing bytes after parameters"));
    }
    Ok((spec, params))
}

/// Hex SHA-256 of the checkpoint file; identifies the network that produced
/// a descriptor database or metric file.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex(&hasher.finalize()))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{:02x}", b)).collect()
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_tensor<W: Write>(w: &mut W, shape: &[usize], data: &[f32]) -> std::io::Result<()> {
    write_u32(w, shape.len() as u32)?;
    for &e in shape {
        write_u32(w, e as u32)?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> std::io::Result<(Vec<usize>, Vec<f32>)> {
    let rank = read_u32(r)? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u32(r)? as usize);
    }
    let len: usize = shape.iter().product();
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((shape, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_parameters;

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let spec = NetworkSpec::new(
            (1, 8, 8),
            vec![
                LayerSpec::Conv {
                    out_channels: 2,
                    kernel_h: 3,
                    kernel_w: 3,
                },
                LayerSpec::MaxPool2x2,
                LayerSpec::Relu,
                LayerSpec::Fully { out_dim: 4 },
            ],
            4,
        )
        .unwrap();
        let params: Parameters<f32> =
            init_parameters(&spec, &mut crate::rng::stream(5, "ckpt")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.pdsc");
        save_checkpoint(&path, &spec, &params).unwrap();
        let (spec2, params2) = load_checkpoint(&path).unwrap();
        assert_eq!(spec, spec2);
        let mut compared = 0;
        for (a, b) in params.layers.iter().zip(&params2.layers) {
            assert_eq!(a.is_some(), b.is_some());
            let (Some(a), Some(b)) = (a.as_ref(), b.as_ref()) else {
                continue;
            };
            let bits = |t: &Tensor<f32>| -> Vec<u32> {
                t.data().iter().map(|v| v.to_bits()).collect()
            };
            assert_eq!(bits(&a.weights), bits(&b.weights));
            assert_eq!(a.bias, b.bias);
            assert!(b.weight_velocity.data().iter().all(|&v| v == 0.0));
            compared += 1;
        }
        assert_eq!(compared, 2);
    }

    #[test]
    fn load_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.pdsc");
        std::fs::write(&path, b"NOPE....").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn digest_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        let b = dir.path().join("b.bin");
        std::fs::write(&a, b"hello").unwrap();
        std::fs::write(&b, b"hello").unwrap();
        assert_eq!(file_digest(&a).unwrap(), file_digest(&b).unwrap());
        std::fs::write(&b, b"world").unwrap();
        assert_ne!(file_digest(&a).unwrap(), file_digest(&b).unwrap());
    }
}
