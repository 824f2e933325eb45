use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{shape_err, Result};
use crate::operators::ImageGrid;

/// 2-D spectrum of a zero-padded single channel. DC sits at index `(0, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    height: usize,
    width: usize,
    orig_height: usize,
    orig_width: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Size of the signal before zero-padding.
    pub fn original_size(&self) -> (usize, usize) {
        (self.orig_height, self.orig_width)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.width + c]
    }

    /// Signed frequency indices of bin `(r, c)`: `k` for `k < n/2`, else `k - n`.
    pub fn frequency(&self, r: usize, c: usize) -> (isize, isize) {
        let signed = |k: usize, n: usize| if k < n.div_ceil(2) { k as isize } else { k as isize - n as isize };
        (signed(r, self.height), signed(c, self.width))
    }

    /// Normalized radial frequency of bin `(r, c)`, in `[0, √2/2]`.
    pub fn radius(&self, r: usize, c: usize) -> f64 {
        let (fr, fc) = self.frequency(r, c);
        ((fr as f64 / self.height as f64).powi(2) + (fc as f64 / self.width as f64).powi(2)).sqrt()
    }

    /// Copy with DC moved to the centre `(height/2, width/2)`.
    pub fn centered(&self) -> Vec<Complex64> {
        let (h, w) = (self.height, self.width);
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for r in 0..h {
            for c in 0..w {
                out[((r + h / 2) % h) * w + (c + w / 2) % w] = self.data[r * w + c];
            }
        }
        out
    }
}

/// In-place iterative radix-2 Cooley–Tukey; `inverse` flips the twiddle sign
/// and does not normalize.
fn fft1(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let twiddles: Vec<Complex64> =
            (0..half).map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / len as f64)).collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * twiddles[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

fn fft_rows_cols(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    for row in data.chunks_exact_mut(w) {
        fft1(row, inverse);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = data[r * w + c];
        }
        fft1(&mut col, inverse);
        for r in 0..h {
            data[r * w + c] = col[r];
        }
    }
}

/// Spectrum of a row-major `h x w` real signal, zero-padded up to powers of two.
pub fn fft2_raw(h: usize, w: usize, values: &[f64]) -> Result<Spectrum> {
    if values.len() != h * w || h == 0 || w == 0 {
        return Err(shape_err("fft2", format!("{} values for a {h}x{w} grid", values.len())));
    }
    let (ph, pw) = (h.next_power_of_two(), w.next_power_of_two());
    let mut data = vec![Complex64::new(0.0, 0.0); ph * pw];
    for r in 0..h {
        for c in 0..w {
            data[r * pw + c].re = values[r * w + c];
        }
    }
    fft_rows_cols(&mut data, ph, pw, false);
    Ok(Spectrum { height: ph, width: pw, orig_height: h, orig_width: w, data })
}

/// Spectrum of the image (its Rec.601 luma when it has three channels).
pub fn fft2(img: &ImageGrid) -> Spectrum {
    let l = img.luma();
    fft2_raw(l.height(), l.width(), l.pixels()).expect("image dims are consistent")
}

/// Inverse transform, cropped back to the original size (real part).
pub fn ifft2_raw(s: &Spectrum) -> Vec<f64> {
    let mut data = s.data.clone();
    fft_rows_cols(&mut data, s.height, s.width, true);
    let norm = 1.0 / (s.height * s.width) as f64;
    let mut out = Vec::with_capacity(s.orig_height * s.orig_width);
    for r in 0..s.orig_height {
        out.extend(data[r * s.width..r * s.width + s.orig_width].iter().map(|z| z.re * norm));
    }
    out
}

pub fn ifft2(s: &Spectrum) -> Result<ImageGrid> {
    ImageGrid::new(s.orig_height, s.orig_width, 1, ifft2_raw(s))
}
