use crate::autodiff::Tensor;
use crate::error::{shape_err, Error, Result};

/// Row-major image with interleaved channels; pixel `(r, c)` channel `k`
/// lives at `(r * width + c) * channels + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Invalid(format!("images have 1 or 3 channels, got {channels}")));
        }
        if pixels.len() != height * width * channels {
            return Err(shape_err(
                "image",
                format!("{height}x{width}x{channels} needs {} values, got {}", height * width * channels, pixels.len()),
            ));
        }
        if let Some(bad) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite pixel value {bad}")));
        }
        Ok(Self { height, width, channels, pixels })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self { height, width, channels, pixels: vec![value; height * width * channels] }
    }

    /// Builds an image from a single-channel function of `(row, col)`.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let pixels = (0..height).flat_map(|r| (0..width).map(move |c| (r, c))).map(|(r, c)| f(r, c)).collect();
        Self { height, width, channels: 1, pixels }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn get(&self, r: usize, c: usize, k: usize) -> f64 {
        self.pixels[(r * self.width + c) * self.channels + k]
    }

    /// One channel as a single-channel image.
    pub fn channel(&self, k: usize) -> ImageGrid {
        let pixels = self.pixels.iter().skip(k).step_by(self.channels).copied().collect();
        Self { height: self.height, width: self.width, channels: 1, pixels }
    }

    /// Rec.601 luma for RGB, the channel itself for gray.
    pub fn luma(&self) -> ImageGrid {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self.pixels.chunks_exact(self.channels).map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).collect();
        Self { height: self.height, width: self.width, channels: 1, pixels }
    }

    /// Clamps to `[0, 1]`, as used for 8-bit export.
    pub fn clamped(&self) -> ImageGrid {
        let pixels = self.pixels.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self { pixels, ..self.clone() }
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<ImageGrid> {
        if top + height > self.height || left + width > self.width {
            return Err(shape_err("crop", format!("{height}x{width} at ({top},{left}) exceeds {}x{}", self.height, self.width)));
        }
        let mut pixels = Vec::with_capacity(height * width * self.channels);
        for r in top..top + height {
            let start = (r * self.width + left) * self.channels;
            pixels.extend_from_slice(&self.pixels[start..start + width * self.channels]);
        }
        Ok(Self { height, width, channels: self.channels, pixels })
    }

    /// Pixels as a `num_pixels x channels` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.num_pixels(), self.channels, self.pixels.clone()).expect("consistent dims")
    }

    /// Reshapes a `height·width x channels` network output into an image.
    pub fn from_tensor(height: usize, width: usize, t: &Tensor) -> Result<ImageGrid> {
        let channels = match t.dims2() {
            Some((n, c)) if n == height * width => c,
            _ => {
                return Err(shape_err("image", format!("tensor {:?} does not cover a {height}x{width} grid", t.shape())));
            }
        };
        ImageGrid::new(height, width, channels, t.data().to_vec())
    }
}
