//! Pixel noise for training/test augmentation: white Gaussian noise and
//! multi-octave value noise confined to background pixels.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scene::{Image, Mask};

/// Adds i.i.d. zero-mean Gaussian noise to every pixel. Deterministic given
/// the seed; sigma 0 returns the image unchanged.
pub fn add_gaussian_noise(image: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be >= 0, got {}",
            sigma
        )));
    }
    let mut out = image.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated above");
    let mut rng = crate::rng::from_mixed(seed);
    for px in &mut out.pixels {
        *px += normal.sample(&mut rng) as f32;
    }
    Ok(out)
}

/// Adds multi-octave value noise (persistence 0.5) to background pixels
/// only; pixels valid in `mask` are left bitwise untouched. Octave o lays a
/// lattice of 4·2^o cells across the image; the octave weights are
/// normalized so the summed noise spans roughly [-amplitude, amplitude].
pub fn add_fractal_background(
    image: &Image,
    mask: &Mask,
    amplitude: f64,
    octaves: u32,
    seed: u64,
) -> Result<Image> {
    if mask.width != image.width || mask.height != image.height {
        return Err(Error::ShapeMismatch(format!(
            "mask {}x{} does not match image {}x{}",
            mask.width, mask.height, image.width, image.height
        )));
    }
    if octaves == 0 {
        return Err(Error::InvalidArgument("octave count must be >= 1".into()));
    }
    let mut out = image.clone();
    let weight_sum: f64 = (0..octaves).map(|o| 0.5f64.powi(o as i32)).sum();
    for y in 0..image.height {
        for x in 0..image.width {
            if mask.get(x, y) {
                continue;
            }
            let mut value = 0.0;
            for o in 0..octaves {
                let cells = (4u64 << o) as f64;
                let fx = (x as f64 + 0.5) / image.width as f64 * cells;
                let fy = (y as f64 + 0.5) / image.height as f64 * cells;
                value += 0.5f64.powi(o as i32) * lattice_value(seed, o, fx, fy);
            }
            let add = amplitude * value / weight_sum;
            out.set(x, y, out.get(x, y) + add as f32);
        }
    }
    Ok(out)
}

/// Smoothly interpolated hash noise in [-1, 1] at lattice coordinates.
fn lattice_value(seed: u64, octave: u32, fx: f64, fy: f64) -> f64 {
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = smoothstep(fx - x0);
    let ty = smoothstep(fy - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let corner = |dx: i64, dy: i64| -> f64 {
        let h = crate::rng::mix(
            seed,
            &[octave as u64, (x0 + dx) as u64, (y0 + dy) as u64],
        );
        // Top 53 bits to [0, 1), then to [-1, 1].
        (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let top = corner(0, 0) * (1.0 - tx) + corner(1, 0) * tx;
    let bottom = corner(0, 1) * (1.0 - tx) + corner(1, 1) * tx;
    top * (1.0 - ty) + bottom * ty
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(n: usize) -> Image {
        let mut im = Image::new(n, n);
        for y in 0..n {
            for x in 0..n {
                im.set(x, y, (x + y) as f32 / (2 * n) as f32);
            }
        }
        im
    }

    #[test]
    fn zero_sigma_is_identity() {
        let im = gradient_image(16);
        let out = add_gaussian_noise(&im, 0.0, 5).unwrap();
        assert_eq!(im, out);
    }

    #[test]
    fn gaussian_noise_is_seed_deterministic() {
        let im = gradient_image(16);
        let a = add_gaussian_noise(&im, 0.01, 5).unwrap();
        let b = add_gaussian_noise(&im, 0.01, 5).unwrap();
        assert_eq!(a, b);
        let c = add_gaussian_noise(&im, 0.01, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_noise_has_near_zero_mean() {
        let im = Image::new(64, 64);
        let sigma = 0.05;
        let noisy = add_gaussian_noise(&im, sigma, 123).unwrap();
        let mean: f64 = noisy.pixels.iter().map(|&v| v as f64).sum::<f64>() / 4096.0;
        assert!(mean.abs() < 4.0 * sigma / 64.0, "mean {}", mean);
    }

    #[test]
    fn negative_sigma_is_rejected() {
        assert!(add_gaussian_noise(&Image::new(2, 2), -0.1, 0).is_err());
    }

    #[test]
    fn fractal_noise_spares_object_pixels() {
        let im = gradient_image(32);
        let mut mask = Mask::new_invalid(32, 32);
        for y in 10..20 {
            for x in 10..20 {
                mask.set(x, y, true);
            }
        }
        let out = add_fractal_background(&im, &mask, 0.5, 4, 9).unwrap();
        let mut changed_background = 0;
        for y in 0..32 {
            for x in 0..32 {
                if mask.get(x, y) {
                    assert_eq!(out.get(x, y).to_bits(), im.get(x, y).to_bits());
                } else if out.get(x, y) != im.get(x, y) {
                    changed_background += 1;
                }
            }
        }
        assert!(changed_background > 900);
    }

    #[test]
    fn fully_valid_mask_changes_nothing() {
        let im = gradient_image(8);
        let mask = Mask {
            width: 8,
            height: 8,
            valid: vec![true; 64],
        };
        let out = add_fractal_background(&im, &mask, 0.5, 4, 3).unwrap();
        assert_eq!(im, out);
    }

    #[test]
    fn background_variance_grows_with_amplitude() {
        let im = Image::new(64, 64);
        let mask = Mask::new_invalid(64, 64);
        let variance = |amp: f64| -> f64 {
            let out = add_fractal_background(&im, &mask, amp, 4, 7).unwrap();
            let mean: f64 = out.pixels.iter().map(|&v| v as f64).sum::<f64>() / 4096.0;
            out.pixels
                .iter()
                .map(|&v| (v as f64 - mean).powi(2))
                .sum::<f64>()
                / 4096.0
        };
        assert!(variance(0.5) > 4.0 * variance(0.2) * 0.9);
        assert!(variance(0.5) > 1e-4);
    }
}
