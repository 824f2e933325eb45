//! Files: images, run configuration, checkpoints and CSV logs.

pub mod config;
mod image;

pub use config::{parse_config, RunConfig};
pub use image::{decode_pfm, decode_pnm, encode_pfm, encode_pnm, read_image, write_image};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::encoders::{EncoderKind, EncoderSpec, HashGridSpec};
use crate::error::{Error, Result};
use crate::metrics::BandCorrespondence;
use crate::network::{Activation, Model, ModelSpec};
use crate::trainer::TrainRecord;

pub const RECORD_HEADER: &str = "epoch,loss,psnr_meas,psnr_truth,ssim_truth,wall_ms";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Training log as CSV; absent values are empty fields.
pub fn records_csv(records: &[TrainRecord]) -> String {
    let mut s = String::from(RECORD_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.epoch,
            r.loss,
            r.psnr_meas,
            opt(r.psnr_truth),
            opt(r.ssim_truth),
            opt(r.wall_ms)
        );
    }
    s
}

/// One row per logged epoch, columns `band_0..band_{n-1}`; missing bands are empty.
pub fn bands_csv(bands: &[BandCorrespondence], n: usize) -> String {
    let mut s = String::from("epoch");
    for b in 0..n {
        let _ = write!(s, ",band_{b}");
    }
    s.push('\n');
    for row in bands {
        s.push_str(&row.epoch.to_string());
        for v in &row.values {
            let _ = write!(s, ",{}", opt(*v));
        }
        s.push('\n');
    }
    s
}

const CKPT_MAGIC: &[u8; 8] = b"HOINCKPT";
const CKPT_VERSION: u32 = 1;

/// `key = value` description of a model spec, one field per line.
pub fn model_spec_text(spec: &ModelSpec) -> String {
    let (activation, w0) = match spec.activation {
        Activation::Relu => ("relu", 0.0),
        Activation::Sine { w0 } => ("sine", w0),
        Activation::Linear => ("linear", 0.0),
    };
    let e = &spec.encoder;
    let encoder = match e.kind {
        EncoderKind::Identity => "identity",
        EncoderKind::Positional => "positional",
        EncoderKind::Fourier => "fourier",
        EncoderKind::HashGrid => "hashgrid",
    };
    format!(
        "in_dim = {}\nblock = {}\nhidden_layers = {}\nwidth = {}\nactivation = {activation}\nw0 = {w0:?}\nout_dim = {}\n\
         encoder = {encoder}\nm = {}\nsigma = {:?}\nlevels = {}\nbase_resolution = {}\ngrowth = {:?}\nfeatures = {}\nlog2_table_size = {}\n",
        spec.in_dim,
        config::block_name(spec.block),
        spec.hidden_layers,
        spec.width,
        spec.out_dim,
        e.m,
        e.sigma,
        e.hash.levels,
        e.hash.base_resolution,
        e.hash.growth,
        e.hash.features,
        e.hash.log2_table_size,
    )
}

pub fn parse_model_spec_text(text: &str) -> Result<ModelSpec> {
    let fields: Vec<(&str, &str)> =
        text.lines().filter_map(|l| l.split_once('=')).map(|(k, v)| (k.trim(), v.trim())).collect();
    let get = |key: &str| -> Result<&str> {
        fields
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Format(format!("model spec lacks `{key}`")))
    };
    fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| Error::Format(format!("bad `{key}` value `{v}`")))
    }
    let w0: f64 = num("w0", get("w0")?)?;
    let activation = match get("activation")? {
        "relu" => Activation::Relu,
        "sine" => Activation::Sine { w0 },
        "linear" => Activation::Linear,
        other => return Err(Error::Format(format!("bad activation `{other}`"))),
    };
    let kind = match get("encoder")? {
        "identity" => EncoderKind::Identity,
        "positional" => EncoderKind::Positional,
        "fourier" => EncoderKind::Fourier,
        "hashgrid" => EncoderKind::HashGrid,
        other => return Err(Error::Format(format!("bad encoder `{other}`"))),
    };
    Ok(ModelSpec {
        encoder: EncoderSpec {
            kind,
            m: num("m", get("m")?)?,
            sigma: num("sigma", get("sigma")?)?,
            hash: HashGridSpec {
                levels: num("levels", get("levels")?)?,
                base_resolution: num("base_resolution", get("base_resolution")?)?,
                growth: num("growth", get("growth")?)?,
                features: num("features", get("features")?)?,
                log2_table_size: num("log2_table_size", get("log2_table_size")?)?,
            },
        },
        in_dim: num("in_dim", get("in_dim")?)?,
        block: config::parse_block(get("block")?).map_err(|e| Error::Format(e.to_string()))?,
        hidden_layers: num("hidden_layers", get("hidden_layers")?)?,
        width: num("width", get("width")?)?,
        activation,
        out_dim: num("out_dim", get("out_dim")?)?,
    })
}

/// Binary checkpoint: magic, version, init seed (which regenerates any
/// frozen Fourier matrix), spec text, then every parameter tensor as
/// little-endian shape and `f64` data.
pub fn encode_checkpoint(model: &Model, seed: u64) -> Vec<u8> {
    let mut out = CKPT_MAGIC.to_vec();
    out.extend(CKPT_VERSION.to_le_bytes());
    out.extend(seed.to_le_bytes());
    let text = model_spec_text(model.spec());
    out.extend((text.len() as u64).to_le_bytes());
    out.extend(text.as_bytes());
    out.extend((model.params().len() as u64).to_le_bytes());
    for p in model.params() {
        out.extend((p.shape().len() as u64).to_le_bytes());
        for &d in p.shape() {
            out.extend((d as u64).to_le_bytes());
        }
        for &v in p.data() {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length overflow".into()))
    }
}

/// Returns the model and its init seed.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Model, u64)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CKPT_MAGIC {
        return Err(Error::Format("not a checkpoint".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != CKPT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let seed = r.u64()?;
    let n = r.len()?;
    let text = std::str::from_utf8(r.take(n)?).map_err(|_| Error::Format("spec is not UTF-8".into()))?;
    let spec = parse_model_spec_text(text)?;
    let count = r.len()?;
    let mut params = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rank = r.len()?;
        if rank > 8 {
            return Err(Error::Format(format!("tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel.filter(|&k| k <= bytes.len() / 8).ok_or_else(|| Error::Format("tensor too large".into()))?;
        let data = r.take(numel * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        params.push(Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    let template = Model::build(&spec, seed)?;
    let model = Model::from_parts(spec, template.encoder().clone(), params)?;
    Ok((model, seed))
}

pub fn write_checkpoint(path: &Path, model: &Model, seed: u64) -> Result<()> {
    fs::write(path, encode_checkpoint(model, seed))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(Model, u64)> {
    decode_checkpoint(&fs::read(path)?)
}

/// Row-major `rows x cols` values as CSV without a header.
pub fn matrix_csv(rows: usize, cols: usize, values: &[f64]) -> String {
    let mut s = String::new();
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols].iter().map(f64::to_string).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}
