use std::f64::consts::PI;

use rayon::prelude::*;

use super::ImageGrid;
use crate::autodiff::CsrMatrix;
use crate::error::{shape_err, Error, Result};

/// Parallel-beam acquisition geometry for a square `size x size` image.
///
/// Angle `a` is `θ = π a / A`. The detector axis is `u = (cos θ, sin θ)` in
/// `(col, row)` pixel coordinates centred on the image, and rays run along
/// `v = (-sin θ, cos θ)`. Detector `t` sits at offset `t - (n_det - 1) / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadonGeometry {
    pub size: usize,
    pub angles: usize,
    pub n_det: usize,
    pub step: f64,
}

impl RadonGeometry {
    /// `n_det = ceil(size·√2)` detectors and a half-pixel marching step.
    pub fn new(size: usize, angles: usize) -> Result<Self> {
        let g = Self { size, angles, n_det: (size as f64 * 2f64.sqrt()).ceil() as usize, step: 0.5 };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.angles == 0 {
            return Err(Error::Invalid("radon geometry needs a non-empty image and at least one angle".into()));
        }
        if self.n_det < self.size {
            return Err(Error::Invalid(format!("{} detectors cannot cover a {}-pixel image", self.n_det, self.size)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Invalid(format!("ray step must be positive, got {}", self.step)));
        }
        Ok(())
    }

    pub fn angle(&self, a: usize) -> f64 {
        PI * a as f64 / self.angles as f64
    }

    pub fn detector_offset(&self, t: usize) -> f64 {
        t as f64 - (self.n_det as f64 - 1.0) / 2.0
    }

    /// Number of samples per ray; they span `[-n_det/2, n_det/2]`, which
    /// covers the image diagonal.
    pub fn samples_per_ray(&self) -> usize {
        (self.n_det as f64 / self.step).ceil() as usize
    }

    pub fn sinogram_len(&self) -> usize {
        self.angles * self.n_det
    }
}

fn ray_row(g: &RadonGeometry, a: usize, t: usize) -> Vec<(usize, f64)> {
    let (sin, cos) = g.angle(a).sin_cos();
    let centre = (g.size as f64 - 1.0) / 2.0;
    let off = g.detector_offset(t);
    let n_s = g.samples_per_ray();
    let half = n_s as f64 * g.step / 2.0;
    let n = g.size as isize;
    let mut row = Vec::new();
    for j in 0..n_s {
        let s = (j as f64 + 0.5) * g.step - half;
        let x = centre + off * cos - s * sin;
        let y = centre + off * sin + s * cos;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        if x0 < -1 || y0 < -1 || x0 >= n || y0 >= n {
            continue;
        }
        let taps = [
            (y0, x0, (1.0 - fy) * (1.0 - fx)),
            (y0, x0 + 1, (1.0 - fy) * fx),
            (y0 + 1, x0, fy * (1.0 - fx)),
            (y0 + 1, x0 + 1, fy * fx),
        ];
        for (r, c, w) in taps {
            if r >= 0 && c >= 0 && r < n && c < n && w != 0.0 {
                row.push((r as usize * g.size + c as usize, w * g.step));
            }
        }
    }
    row
}

/// The Radon transform as a sparse `(A·n_det) x size²` matrix; row
/// `a·n_det + t` holds the bilinear weights of ray `(a, t)`.
pub fn radon_matrix(g: &RadonGeometry) -> Result<CsrMatrix> {
    g.validate()?;
    let rows: Vec<Vec<(usize, f64)>> = (0..g.angles)
        .into_par_iter()
        .flat_map_iter(|a| (0..g.n_det).map(move |t| ray_row(g, a, t)))
        .collect();
    Ok(CsrMatrix::from_rows(g.size * g.size, rows))
}

fn check_image(img: &ImageGrid, g: &RadonGeometry) -> Result<()> {
    if img.channels() != 1 || img.height() != img.width() {
        return Err(shape_err(
            "radon",
            format!("needs a square single-channel image, got {}x{}x{}", img.height(), img.width(), img.channels()),
        ));
    }
    if img.height() != g.size {
        return Err(shape_err("radon", format!("image side {} vs geometry size {}", img.height(), g.size)));
    }
    Ok(())
}

/// Sinogram `A x n_det` of a square single-channel image.
pub fn radon(img: &ImageGrid, g: &RadonGeometry) -> Result<ImageGrid> {
    check_image(img, g)?;
    let m = radon_matrix(g)?;
    ImageGrid::new(g.angles, g.n_det, 1, m.apply(img.pixels()))
}

/// Backprojection: the exact transpose of [`radon`].
pub fn radon_adjoint(sino: &ImageGrid, g: &RadonGeometry) -> Result<ImageGrid> {
    if sino.channels() != 1 || sino.height() != g.angles || sino.width() != g.n_det {
        return Err(shape_err(
            "radon_adjoint",
            format!("sinogram {}x{}x{} vs geometry {}x{}", sino.height(), sino.width(), sino.channels(), g.angles, g.n_det),
        ));
    }
    let m = radon_matrix(g)?;
    ImageGrid::new(g.size, g.size, 1, m.apply_transpose(sino.pixels()))
}
