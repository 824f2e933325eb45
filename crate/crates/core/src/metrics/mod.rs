//! Image quality metrics, a 2-D FFT and frequency-band correspondence.

mod fft;

pub use fft::{fft2, fft2_raw, ifft2, ifft2_raw, Spectrum};

use crate::error::{shape_err, Error, Result};
use crate::operators::ImageGrid;

fn check_same(a: &ImageGrid, b: &ImageGrid, op: &'static str) -> Result<()> {
    if !a.same_shape(b) {
        return Err(shape_err(
            op,
            format!(
                "{}x{}x{} vs {}x{}x{}",
                a.height(),
                a.width(),
                a.channels(),
                b.height(),
                b.width(),
                b.channels()
            ),
        ));
    }
    Ok(())
}

pub fn mse(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    check_same(a, b, "mse")?;
    let n = a.pixels().len().max(1) as f64;
    Ok(a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// `10·log10(peak² / MSE)`; identical inputs give `+∞`.
pub fn psnr(a: &ImageGrid, b: &ImageGrid, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(psnr_from_mse(m, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        *v = (-(i as f64 - mid).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable valid-mode filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = (0..SSIM_WINDOW).map(|k| g[k] * plane[r * w + c + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..SSIM_WINDOW).map(|k| g[k] * tmp[(r + k) * ow + c]).sum();
        }
    }
    out
}

/// Mean local SSIM with an 11x11 Gaussian window (σ = 1.5), `L = 1`,
/// averaged over channels. Only windows fully inside the image are used.
pub fn ssim(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    check_same(a, b, "ssim")?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Invalid(format!("ssim needs both sides ≥ {SSIM_WINDOW}, got {h}x{w}")));
    }
    let g = gaussian_window();
    let mut total = 0.0;
    for k in 0..a.channels() {
        let (x, y) = (a.channel(k).into_pixels(), b.channel(k).into_pixels());
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let [mx, my, fxx, fyy, fxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter_valid(p, h, w, &g));
        let mut acc = 0.0;
        for i in 0..mx.len() {
            let (m1, m2) = (mx[i], my[i]);
            let (s11, s22, s12) = (fxx[i] - m1 * m1, fyy[i] - m2 * m2, fxy[i] - m1 * m2);
            acc += ((2.0 * m1 * m2 + SSIM_C1) * (2.0 * s12 + SSIM_C2))
                / ((m1 * m1 + m2 * m2 + SSIM_C1) * (s11 + s22 + SSIM_C2));
        }
        total += acc / mx.len() as f64;
    }
    Ok(total / a.channels() as f64)
}

/// Per-band mean of `|F{output} / F{target}|` at one point of training.
/// `None` marks a band where every target bin was excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct BandCorrespondence {
    pub epoch: usize,
    pub values: Vec<Option<f64>>,
}

impl BandCorrespondence {
    /// Mean over the given (present) bands.
    pub fn mean_of(&self, bands: std::ops::RangeInclusive<usize>) -> Option<f64> {
        let vals: Vec<f64> = bands.filter_map(|b| self.values.get(b).copied().flatten()).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Relative threshold below which target bins are excluded from the ratio.
pub const BAND_EPS_REL: f64 = 1e-8;
/// Upper clip applied to `|H|` before band averaging.
pub const BAND_CLIP: f64 = 2.0;

/// Frequency-band correspondence between an output and its target, with the
/// standard clip of `|H|` to `[0, 2]`.
pub fn band_correspondence(output: &ImageGrid, target: &ImageGrid, n_bands: usize) -> Result<BandCorrespondence> {
    band_correspondence_clipped(output, target, n_bands, BAND_CLIP)
}

/// As [`band_correspondence`] with an explicit clip (`f64::INFINITY` disables it).
///
/// Bins with `|F{target}| ≤ 1e-8·max|F{target}|` are excluded. The normalized
/// radial frequency `[0, √2/2]` is split into `n_bands` equal annuli.
pub fn band_correspondence_clipped(
    output: &ImageGrid,
    target: &ImageGrid,
    n_bands: usize,
    clip: f64,
) -> Result<BandCorrespondence> {
    if n_bands < 2 {
        return Err(Error::Invalid(format!("need at least 2 bands, got {n_bands}")));
    }
    if output.height() != target.height() || output.width() != target.width() {
        return Err(shape_err("band_correspondence", "output and target grids differ".to_string()));
    }
    let (fo, ft) = (fft2(output), fft2(target));
    let max_mag = ft.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max_mag == 0.0 {
        return Err(Error::Invalid("target spectrum is identically zero".into()));
    }
    let eps = BAND_EPS_REL * max_mag;
    let mut sums = vec![0.0; n_bands];
    let mut counts = vec![0usize; n_bands];
    for r in 0..ft.height() {
        for c in 0..ft.width() {
            let t = ft.get(r, c);
            if t.norm() <= eps {
                continue;
            }
            let band = band_of_bin(&ft, r, c, n_bands);
            sums[band] += (fo.get(r, c) / t).norm().min(clip);
            counts[band] += 1;
        }
    }
    let values = sums.iter().zip(&counts).map(|(&s, &n)| (n > 0).then(|| s / n as f64)).collect();
    Ok(BandCorrespondence { epoch: 0, values })
}

/// Annulus index of spectrum bin `(r, c)` among `n_bands`.
pub fn band_of_bin(spectrum: &Spectrum, r: usize, c: usize, n_bands: usize) -> usize {
    let r_max = 0.5f64.hypot(0.5);
    ((spectrum.radius(r, c) / r_max * n_bands as f64) as usize).min(n_bands - 1)
}
