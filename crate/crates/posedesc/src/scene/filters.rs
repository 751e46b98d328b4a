//! Patch normalization and depth-gap inpainting.

use crate::error::{Error, Result};
use crate::scene::{Image, Mask};

/// Maps metric depth to [-1, 1]: 20 cm in front of and behind the object
/// center cover the full range, everything farther clips.
pub fn normalize_depth(patch: &Image, center_depth_m: f32) -> Result<Image> {
    if !(center_depth_m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "center depth must be positive, got {}",
            center_depth_m
        )));
    }
    let mut out = patch.clone();
    for v in &mut out.pixels {
        *v = ((*v - center_depth_m) / 0.2).clamp(-1.0, 1.0);
    }
    Ok(out)
}

/// Zero-mean, unit-variance normalization over the whole patch. A constant
/// patch has no scale to normalize by and maps to all zeros.
pub fn normalize_intensity(patch: &Image) -> Image {
    let n = patch.pixels.len() as f64;
    let mean = patch.pixels.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = patch
        .pixels
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let mut out = patch.clone();
    if var < 1e-12 {
        out.pixels.fill(0.0);
        return out;
    }
    let std = var.sqrt();
    for v in &mut out.pixels {
        *v = ((*v as f64 - mean) / std) as f32;
    }
    out
}

/// Fills invalid depth pixels by iterated 3x3 medians over valid neighbors
/// until no gaps remain. Valid input pixels never change. Each sweep reads
/// the previous sweep's validity, so the result does not depend on scan
/// order. An even neighbor count takes the mean of the two middle values.
pub fn median_inpaint(depth: &Image, mask: &Mask) -> Result<Image> {
    if mask.width != depth.width || mask.height != depth.height {
        return Err(Error::ShapeMismatch(format!(
            "mask {}x{} does not match depth {}x{}",
            mask.width, mask.height, depth.width, depth.height
        )));
    }
    if mask.count_valid() == 0 {
        return Err(Error::InvalidArgument(
            "cannot inpaint: no valid depth pixels".into(),
        ));
    }
    let (w, h) = (depth.width, depth.height);
    let mut values = depth.pixels.clone();
    let mut valid = mask.valid.clone();
    let mut remaining: usize = valid.iter().filter(|v| !**v).count();
    let mut neighbors: Vec<f32> = Vec::with_capacity(8);
    while remaining > 0 {
        let mut next_values = values.clone();
        let mut next_valid = valid.clone();
        let mut filled = 0usize;
        for y in 0..h {
            for x in 0..w {
                if valid[y * w + x] {
                    continue;
                }
                neighbors.clear();
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let ni = ny as usize * w + nx as usize;
                        if valid[ni] {
                            neighbors.push(values[ni]);
                        }
                    }
                }
                if neighbors.is_empty() {
                    continue;
                }
                neighbors.sort_unstable_by(f32::total_cmp);
                let n = neighbors.len();
                let median = if n % 2 == 1 {
                    neighbors[n / 2]
                } else {
                    (neighbors[n / 2 - 1] + neighbors[n / 2]) / 2.0
                };
                next_values[y * w + x] = median;
                next_valid[y * w + x] = true;
                filled += 1;
            }
        }
        debug_assert!(filled > 0, "inpaint sweep made no progress");
        remaining -= filled;
        values = next_values;
        valid = next_valid;
    }
    Ok(Image {
        width: w,
        height: h,
        pixels: values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_normalization_maps_known_points() {
        let mut patch = Image::new(4, 1);
        patch.set(0, 0, 0.6);
        patch.set(1, 0, 0.85);
        patch.set(2, 0, 0.95);
        patch.set(3, 0, 0.65);
        let out = normalize_depth(&patch, 0.6).unwrap();
        assert_eq!(out.get(0, 0), 0.0);
        // 25 cm behind center exceeds the 20 cm half-range and clips.
        assert_eq!(out.get(1, 0), 1.0);
        assert_eq!(out.get(2, 0), 1.0);
        assert!((out.get(3, 0) - 0.25).abs() < 1e-6);
        assert!(out.pixels.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(normalize_depth(&patch, 0.0).is_err());
    }

    #[test]
    fn intensity_normalization_is_zero_mean_unit_std() {
        let mut patch = Image::new(8, 8);
        for (i, v) in patch.pixels.iter_mut().enumerate() {
            *v = (i % 7) as f32 * 0.3 + 0.1;
        }
        let out = normalize_intensity(&patch);
        let n = out.pixels.len() as f64;
        let mean: f64 = out.pixels.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var: f64 = out.pixels.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6);
        assert!((var.sqrt() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn intensity_normalization_is_affine_invariant() {
        let mut patch = Image::new(4, 4);
        for (i, v) in patch.pixels.iter_mut().enumerate() {
            *v = (i as f32).sin();
        }
        let mut scaled = patch.clone();
        for v in &mut scaled.pixels {
            *v = 3.0 * *v - 0.7;
        }
        let a = normalize_intensity(&patch);
        let b = normalize_intensity(&scaled);
        for (&x, &y) in a.pixels.iter().zip(&b.pixels) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_patch_normalizes_to_zeros() {
        let patch = Image::filled(5, 5, 0.42);
        let out = normalize_intensity(&patch);
        assert!(out.pixels.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inpaint_without_gaps_is_identity() {
        let mut depth = Image::new(4, 4);
        for (i, v) in depth.pixels.iter_mut().enumerate() {
            *v = i as f32;
        }
        let mask = Mask {
            width: 4,
            height: 4,
            valid: vec![true; 16],
        };
        let out = median_inpaint(&depth, &mask).unwrap();
        assert_eq!(out, depth);
    }

    #[test]
    fn single_gap_takes_surrounding_constant() {
        let depth = Image::filled(3, 3, 0.7);
        let mut mask = Mask {
            width: 3,
            height: 3,
            valid: vec![true; 9],
        };
        mask.set(1, 1, false);
        let out = median_inpaint(&depth, &mask).unwrap();
        assert_eq!(out.get(1, 1), 0.7);
    }

    #[test]
    fn checkerboard_gaps_on_gradient_converge_in_one_sweep() {
        let n = 8;
        let mut depth = Image::new(n, n);
        let mut mask = Mask::new_invalid(n, n);
        for y in 0..n {
            for x in 0..n {
                if (x + y) % 2 == 0 {
                    depth.set(x, y, (x + y) as f32);
                    mask.set(x, y, true);
                }
            }
        }
        let out = median_inpaint(&depth, &mask).unwrap();
        // Every invalid pixel has >= 2 valid 4-neighbors holding x+y-1 and
        // x+y+1 (clipped at borders), so the filled value interpolates the
        // gradient. Check interior pixels exactly.
        for y in 1..n - 1 {
            for x in 1..n - 1 {
                if (x + y) % 2 == 1 {
                    assert_eq!(out.get(x, y), (x + y) as f32);
                }
            }
        }
        // Valid pixels unchanged.
        for y in 0..n {
            for x in 0..n {
                if (x + y) % 2 == 0 {
                    assert_eq!(out.get(x, y), (x + y) as f32);
                }
            }
        }
    }

    #[test]
    fn inpaint_is_idempotent_on_its_output() {
        let mut depth = Image::new(6, 6);
        let mut mask = Mask::new_invalid(6, 6);
        for y in 0..6 {
            for x in 0..3 {
                depth.set(x, y, (x * y) as f32 * 0.1);
                mask.set(x, y, true);
            }
        }
        let out = median_inpaint(&depth, &mask).unwrap();
        let full = Mask {
            width: 6,
            height: 6,
            valid: vec![true; 36],
        };
        let again = median_inpaint(&out, &full).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn all_invalid_is_an_error() {
        let depth = Image::new(3, 3);
        let mask = Mask::new_invalid(3, 3);
        assert!(median_inpaint(&depth, &mask).is_err());
    }
}
