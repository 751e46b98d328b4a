//! Histogram-of-oriented-gradients baseline descriptor.
//!
//! Gradients use replicate-edge central differences; orientations are
//! unsigned over [0, 180) with bilinear votes between the two nearest bin
//! centers (centers at i * 180/bins, wrapping); blocks of cells are L2
//! normalized independently and concatenated.

use crate::error::{Error, Result};
use crate::scene::Image;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct HogConfig {
    /// Square input size in pixels.
    pub window: usize,
    /// Square cell size in pixels.
    pub cell: usize,
    /// Block side length in cells.
    pub block: usize,
    /// Block stride in cells.
    pub block_stride_cells: usize,
    pub bins: usize,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig {
            window: 64,
            cell: 8,
            block: 2,
            block_stride_cells: 1,
            bins: 9,
        }
    }
}

impl HogConfig {
    fn cells_per_side(&self) -> Result<usize> {
        if self.cell == 0 || self.window % self.cell != 0 {
            return Err(Error::Config(format!(
                "window {} is not a multiple of cell {}",
                self.window, self.cell
            )));
        }
        Ok(self.window / self.cell)
    }

    fn blocks_per_side(&self) -> Result<usize> {
        let cells = self.cells_per_side()?;
        if self.block == 0 || self.block > cells {
            return Err(Error::Config("block exceeds cell grid".into()));
        }
        if self.block_stride_cells == 0 || (cells - self.block) % self.block_stride_cells != 0 {
            return Err(Error::Config("block stride does not tile the cell grid".into()));
        }
        Ok((cells - self.block) / self.block_stride_cells + 1)
    }

    /// blocks^2 x block^2 x bins.
    pub fn descriptor_len(&self) -> Result<usize> {
        if self.bins == 0 {
            return Err(Error::Config("need at least one orientation bin".into()));
        }
        let blocks = self.blocks_per_side()?;
        Ok(blocks * blocks * self.block * self.block * self.bins)
    }
}

/// Per-cell orientation histograms, cells row-major, `bins` values each.
fn cell_histograms(image: &Image, cfg: &HogConfig) -> Result<Vec<f32>> {
    if image.width != cfg.window || image.height != cfg.window {
        return Err(Error::ShapeMismatch(format!(
            "expected {0}x{0} image, got {1}x{2}",
            cfg.window, image.width, image.height
        )));
    }
    let n = cfg.cells_per_side()?;
    let w = image.width;
    let px = |x: usize, y: usize| image.pixels[y * w + x];
    let bin_width = 180.0 / cfg.bins as f64;
    let mut hists = vec![0.0f32; n * n * cfg.bins];
    for y in 0..w {
        for x in 0..w {
            let gx = px((x + 1).min(w - 1), y) as f64 - px(x.saturating_sub(1), y) as f64;
            let gy = px(x, (y + 1).min(w - 1)) as f64 - px(x, y.saturating_sub(1)) as f64;
            let magnitude = (gx * gx + gy * gy).sqrt();
            if magnitude == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            let t = angle / bin_width;
            let lower = t.floor();
            let frac = t - lower;
            let b0 = (lower as usize) % cfg.bins;
            let b1 = (b0 + 1) % cfg.bins;
            let cell = (y / cfg.cell) * n + x / cfg.cell;
            hists[cell * cfg.bins + b0] += ((1.0 - frac) * magnitude) as f32;
            hists[cell * cfg.bins + b1] += (frac * magnitude) as f32;
        }
    }
    Ok(hists)
}

/// Descriptor for one channel: cell histograms grouped into overlapping
/// blocks, each block L2 normalized (all-zero blocks stay zero).
pub fn hog_descriptor(image: &Image, cfg: &HogConfig) -> Result<Vec<f32>> {
    let hists = cell_histograms(image, cfg)?;
    let n = cfg.cells_per_side()?;
    let blocks = cfg.blocks_per_side()?;
    let mut out = Vec::with_capacity(cfg.descriptor_len()?);
    for by in 0..blocks {
        for bx in 0..blocks {
            let start = out.len();
            for cy in 0..cfg.block {
                for cx in 0..cfg.block {
                    let cell = (by * cfg.block_stride_cells + cy) * n
                        + bx * cfg.block_stride_cells
                        + cx;
                    out.extend_from_slice(&hists[cell * cfg.bins..(cell + 1) * cfg.bins]);
                }
            }
            let norm = out[start..].iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for v in &mut out[start..] {
                    *v = (*v as f64 / norm) as f32;
                }
            }
        }
    }
    Ok(out)
}

/// Per-channel descriptors stacked, then normalized to unit length
/// (an all-zero stack stays zero).
pub fn stacked_hog(image: &Tensor<f32>, cfg: &HogConfig) -> Result<Vec<f32>> {
    let shape = image.shape();
    if shape.len() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "expected a channels x height x width tensor, got rank {}",
            shape.len()
        )));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut out = Vec::with_capacity(c * cfg.descriptor_len()?);
    for ch in 0..c {
        let channel = Image {
            width: w,
            height: h,
            pixels: image.data()[ch * h * w..(ch + 1) * h * w].to_vec(),
        };
        out.extend(hog_descriptor(&channel, cfg)?);
    }
    let norm = out.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if norm > 1e-12 {
        for v in &mut out {
            *v = (*v as f64 / norm) as f32;
        }
    }
    Ok(out)
}

/// Dot-product similarity; higher is more similar.
pub fn hog_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "descriptor lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum())
}
