//! Synthetic CT phantoms on a square grid with intensities in `[0, 1]`.

use super::ImageGrid;
use crate::error::{Error, Result};

/// Unit-intensity disk of radius `r` pixels centred on the grid. Pixels are
/// 4x4 supersampled so the boundary is antialiased.
pub fn disk(size: usize, r: f64) -> ImageGrid {
    let centre = (size as f64 - 1.0) / 2.0;
    ImageGrid::from_fn(size, size, |row, col| {
        let mut inside = 0;
        for sy in 0..4 {
            for sx in 0..4 {
                let y = row as f64 - 0.375 + 0.25 * sy as f64 - centre;
                let x = col as f64 - 0.375 + 0.25 * sx as f64 - centre;
                if x * x + y * y <= r * r {
                    inside += 1;
                }
            }
        }
        inside as f64 / 16.0
    })
}

/// Nested squares of decreasing intensity.
pub fn squares(size: usize) -> ImageGrid {
    let n = size as f64;
    ImageGrid::from_fn(size, size, |r, c| {
        let (y, x) = ((r as f64 + 0.5) / n, (c as f64 + 0.5) / n);
        let in_box = |lo: f64, hi: f64| x >= lo && x < hi && y >= lo && y < hi;
        if in_box(0.4, 0.6) {
            1.0
        } else if in_box(0.25, 0.75) {
            0.6
        } else if in_box(0.1, 0.9) {
            0.3
        } else {
            0.0
        }
    })
}

/// A simplified head phantom: an outer skull ellipse, brain tissue and a
/// few internal features of differing contrast.
pub fn shepp_like(size: usize) -> ImageGrid {
    // (value, centre x, centre y, semi-axis a, semi-axis b, rotation deg)
    const ELLIPSES: [(f64, f64, f64, f64, f64, f64); 7] = [
        (1.0, 0.0, 0.0, 0.69, 0.92, 0.0),
        (-0.8, 0.0, -0.0184, 0.6624, 0.874, 0.0),
        (-0.2, 0.22, 0.0, 0.11, 0.31, -18.0),
        (-0.2, -0.22, 0.0, 0.16, 0.41, 18.0),
        (0.1, 0.0, 0.35, 0.21, 0.25, 0.0),
        (0.1, 0.0, 0.1, 0.046, 0.046, 0.0),
        (0.1, 0.0, -0.605, 0.023, 0.046, 0.0),
    ];
    let n = size as f64;
    ImageGrid::from_fn(size, size, |r, c| {
        let x = 2.0 * (c as f64 + 0.5) / n - 1.0;
        let y = 1.0 - 2.0 * (r as f64 + 0.5) / n;
        let v: f64 = ELLIPSES
            .iter()
            .filter(|&&(_, cx, cy, a, b, deg)| {
                let (s, co) = deg.to_radians().sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let (u, w) = (dx * co + dy * s, -dx * s + dy * co);
                (u / a).powi(2) + (w / b).powi(2) <= 1.0
            })
            .map(|e| e.0)
            .sum();
        v.clamp(0.0, 1.0)
    })
}

/// Builds a named phantom: `disk` (radius `size/4`), `squares` or `shepp-like`.
pub fn by_name(name: &str, size: usize) -> Result<ImageGrid> {
    match name {
        "disk" => Ok(disk(size, size as f64 / 4.0)),
        "squares" => Ok(squares(size)),
        "shepp-like" => Ok(shepp_like(size)),
        other => Err(Error::Invalid(format!("unknown phantom `{other}` (disk, squares, shepp-like)"))),
    }
}
