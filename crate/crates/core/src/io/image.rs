//! NetPBM (P5/P6, maxval 255) and PFM image files.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::operators::ImageGrid;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Splits whitespace-separated header tokens, skipping `#` comments, and
/// returns them with the offset just past the single whitespace byte that
/// ends the last one.
fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(format_err("truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err(format_err("header is not followed by data"));
    }
    Ok((tokens, i + 1))
}

fn parse_dim(s: &str, what: &str) -> Result<usize> {
    s.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(|| format_err(format!("bad {what} `{s}`")))
}

pub fn decode_pnm(bytes: &[u8]) -> Result<ImageGrid> {
    let (t, offset) = header_tokens(bytes, 4)?;
    let channels = match t[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(format_err(format!("unsupported magic `{other}`"))),
    };
    let (w, h) = (parse_dim(&t[1], "width")?, parse_dim(&t[2], "height")?);
    if t[3] != "255" {
        return Err(format_err(format!("unsupported maxval `{}` (only 255)", t[3])));
    }
    let n = w * h * channels;
    let data = bytes.get(offset..offset + n).ok_or_else(|| format_err("truncated pixel data"))?;
    ImageGrid::new(h, w, channels, data.iter().map(|&b| b as f64 / 255.0).collect())
}

/// 8-bit encoding; values are clamped to `[0, 1]` and rounded.
pub fn encode_pnm(img: &ImageGrid) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<ImageGrid> {
    let (t, offset) = header_tokens(bytes, 4)?;
    let channels = match t[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(format_err(format!("unsupported magic `{other}`"))),
    };
    let (w, h) = (parse_dim(&t[1], "width")?, parse_dim(&t[2], "height")?);
    let scale: f64 = t[3].parse().map_err(|_| format_err(format!("bad scale `{}`", t[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err("PFM scale must be a non-zero number"));
    }
    let little = scale < 0.0;
    let row_len = w * channels;
    let data = bytes.get(offset..offset + 4 * row_len * h).ok_or_else(|| format_err("truncated pixel data"))?;
    let mut pixels = vec![0.0; row_len * h];
    for (file_row, chunk) in data.chunks_exact(4 * row_len).enumerate() {
        let r = h - 1 - file_row;
        for (k, b) in chunk.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
            pixels[r * row_len + k] = v as f64;
        }
    }
    ImageGrid::new(h, w, channels, pixels)
}

/// Little-endian PFM with rows stored bottom-up.
pub fn encode_pfm(img: &ImageGrid) -> Vec<u8> {
    let magic = if img.channels() == 1 { "Pf" } else { "PF" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", img.width(), img.height()).into_bytes();
    let row_len = img.width() * img.channels();
    for row in img.pixels().chunks_exact(row_len).rev() {
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Reads P5, P6 or PFM, chosen by the file's magic bytes.
pub fn read_image(path: &Path) -> Result<ImageGrid> {
    let bytes = fs::read(path)?;
    match bytes.get(..2) {
        Some(b"P5") | Some(b"P6") => decode_pnm(&bytes),
        Some(b"Pf") | Some(b"PF") => decode_pfm(&bytes),
        _ => Err(format_err(format!("{}: not a P5/P6/PFM file", path.display()))),
    }
}

/// Writes PFM for a `.pfm` extension and 8-bit NetPBM otherwise.
pub fn write_image(path: &Path, img: &ImageGrid) -> Result<()> {
    let is_pfm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    let bytes = if is_pfm { encode_pfm(img) } else { encode_pnm(img) };
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_header_from_bytes() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 51, 255, 102]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (2, 2, 1));
        assert_eq!(img.pixels(), &[0.0, 0.2, 1.0, 0.4]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n1 1 # one pixel\n255\n".to_vec();
        bytes.push(255);
        assert_eq!(decode_pnm(&bytes).unwrap().pixels(), &[1.0]);
    }

    #[test]
    fn p6_round_trip_is_exact() {
        let raw: Vec<u8> = (0..3 * 5 * 4).map(|i| (i * 37 % 256) as u8).collect();
        let mut bytes = b"P6\n5 4\n255\n".to_vec();
        bytes.extend(&raw);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(encode_pnm(&img), bytes);
        assert_eq!(decode_pnm(&encode_pnm(&img)).unwrap(), img);
    }

    #[test]
    fn malformed_headers() {
        assert!(decode_pnm(b"P5\n2 2\n65535\n\0\0\0\0\0\0\0\0").is_err());
        assert!(decode_pnm(b"P7\n1 1\n255\n\0").is_err());
        assert!(decode_pnm(b"P5\n2 2\n255\n\0").is_err());
        assert!(decode_pnm(b"P5\n2").is_err());
        assert!(decode_pfm(b"Pf\n1 1\n0\n\0\0\0\0").is_err());
    }

    #[test]
    fn pfm_round_trip() {
        let img = ImageGrid::new(1, 3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        let back = decode_pfm(&encode_pfm(&img)).unwrap();
        assert_eq!(back, img);
        let tall = ImageGrid::new(3, 2, 3, (0..18).map(|i| i as f64 / 7.0 - 1.0).collect()).unwrap();
        let back = decode_pfm(&encode_pfm(&tall)).unwrap();
        for (a, b) in tall.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= b.abs() * 2f64.powi(-23));
        }
    }

    #[test]
    fn pfm_rows_are_bottom_up() {
        let img = ImageGrid::new(2, 1, 1, vec![1.0, 2.0]).unwrap();
        let bytes = encode_pfm(&img);
        let body = &bytes[bytes.len() - 8..];
        assert_eq!(f32::from_le_bytes(body[..4].try_into().unwrap()), 2.0);
    }

    #[test]
    fn big_endian_pfm_is_read() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend(0.25f32.to_be_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().pixels(), &[0.25]);
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageGrid::new(2, 2, 1, vec![0.0, 0.2, 0.6, 1.0]).unwrap();
        for name in ["a.pgm", "a.pfm"] {
            let p = dir.path().join(name);
            write_image(&p, &img).unwrap();
            let back = read_image(&p).unwrap();
            for (a, b) in img.pixels().iter().zip(back.pixels()) {
                assert!((a - b).abs() < 1e-7);
            }
        }
    }
}
