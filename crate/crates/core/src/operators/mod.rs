//! Measurement operators: noise, downsampling, masking and the parallel-beam
//! Radon transform.

mod image;
pub mod phantom;
mod radon;

pub use image::ImageGrid;
pub use radon::{radon, radon_adjoint, radon_matrix, RadonGeometry};

use crate::error::{shape_err, Error, Result};
use crate::rng::{purpose, Rng};

/// `img + n` with `n ~ N(0, (σ/255)²)` per value; the result is not clipped.
pub fn add_gaussian_noise(img: &ImageGrid, sigma_8bit: f64, seed: u64) -> Result<ImageGrid> {
    if !(sigma_8bit >= 0.0 && sigma_8bit.is_finite()) {
        return Err(Error::Invalid(format!("noise level must be non-negative, got {sigma_8bit}")));
    }
    let mut out = img.clone();
    if sigma_8bit == 0.0 {
        return Ok(out);
    }
    let std = sigma_8bit / 255.0;
    let mut rng = Rng::new(seed, purpose::NOISE);
    for v in out.pixels_mut() {
        *v += std * rng.normal();
    }
    Ok(out)
}

/// `k x k` mean pooling per channel after truncating both sides to
/// multiples of `k`.
pub fn downsample(img: &ImageGrid, k: usize) -> Result<ImageGrid> {
    if k == 0 {
        return Err(Error::Invalid("downsampling factor must be at least 1".into()));
    }
    let (h, w, ch) = (img.height() / k, img.width() / k, img.channels());
    if h == 0 || w == 0 {
        return Err(shape_err("downsample", format!("{}x{} is smaller than factor {k}", img.height(), img.width())));
    }
    let norm = 1.0 / (k * k) as f64;
    let mut out = vec![0.0; h * w * ch];
    for r in 0..h {
        for c in 0..w {
            for q in 0..ch {
                let mut acc = 0.0;
                for dr in 0..k {
                    for dc in 0..k {
                        acc += img.get(r * k + dr, c * k + dc, q);
                    }
                }
                out[(r * w + c) * ch + q] = acc * norm;
            }
        }
    }
    ImageGrid::new(h, w, ch, out)
}

/// Pixel keep-mask for inpainting.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    height: usize,
    width: usize,
    keep: Vec<bool>,
    keep_fraction: f64,
}

impl Mask {
    /// Keeps each pixel independently with probability `p`.
    pub fn random(height: usize, width: usize, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Invalid(format!("keep fraction must lie in [0, 1], got {p}")));
        }
        let mut rng = Rng::new(seed, purpose::MASK);
        let keep = (0..height * width).map(|_| rng.bernoulli(p)).collect();
        Ok(Self { height, width, keep, keep_fraction: p })
    }

    pub fn from_bools(height: usize, width: usize, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != height * width {
            return Err(shape_err("mask", format!("{height}x{width} needs {} entries, got {}", height * width, keep.len())));
        }
        let kept = keep.iter().filter(|&&k| k).count();
        let keep_fraction = if keep.is_empty() { 0.0 } else { kept as f64 / keep.len() as f64 };
        Ok(Self { height, width, keep, keep_fraction })
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self { height, width, keep: vec![true; height * width], keep_fraction: 1.0 }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    /// The requested keep probability (the realized fraction for explicit masks).
    pub fn keep_fraction(&self) -> f64 {
        self.keep_fraction
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

/// Masked measurement: the image with dropped pixels zeroed plus its mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedImage {
    pub image: ImageGrid,
    pub mask: Mask,
}

pub fn apply_mask(img: &ImageGrid, mask: &Mask) -> Result<MaskedImage> {
    if img.height() != mask.height || img.width() != mask.width {
        return Err(shape_err(
            "apply_mask",
            format!("image {}x{} vs mask {}x{}", img.height(), img.width(), mask.height, mask.width),
        ));
    }
    if mask.kept_count() == 0 {
        return Err(Error::Invalid("mask keeps no pixels".into()));
    }
    let mut image = img.clone();
    let ch = img.channels();
    for (px, &k) in image.pixels_mut().chunks_exact_mut(ch).zip(&mask.keep) {
        if !k {
            px.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(MaskedImage { image, mask: mask.clone() })
}

/// Mean squared error over kept pixels (all channels).
pub fn masked_mse(a: &ImageGrid, b: &ImageGrid, mask: &Mask) -> Result<f64> {
    if !a.same_shape(b) || a.height() != mask.height || a.width() != mask.width {
        return Err(shape_err("masked_mse", "image and mask shapes differ".to_string()));
    }
    let kept = mask.kept_count();
    if kept == 0 {
        return Err(Error::Invalid("mask keeps no pixels".into()));
    }
    let ch = a.channels();
    let sum: f64 = a
        .pixels()
        .chunks_exact(ch)
        .zip(b.pixels().chunks_exact(ch))
        .zip(&mask.keep)
        .filter(|(_, &k)| k)
        .map(|((x, y), _)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
        .sum();
    Ok(sum / (kept * ch) as f64)
}
