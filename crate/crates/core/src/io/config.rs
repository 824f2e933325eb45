//! `key = value` run configuration with `[model] [encoder] [task] [train] [output]`
//! sections and `#` comments.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::encoders::{EncoderKind, EncoderSpec, HashGridSpec};
use crate::error::{Error, Result};
use crate::network::{Activation, BlockKind, ModelSpec};
use crate::trainer::{default_lr, LrDecay, TaskKind, TaskSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
    Sine,
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSection {
    pub block: BlockKind,
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: ActivationKind,
    pub w0: f64,
    /// Inferred from the data when unset.
    pub out_dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSection {
    pub kind: EncoderKind,
    /// Unset values take the preset of `kind`.
    pub m: Option<usize>,
    pub sigma: Option<f64>,
    pub hash: HashGridSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSection {
    pub kind: TaskKind,
    pub input: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// Keep-mask image for inpainting observed data (non-zero = kept).
    pub mask: Option<PathBuf>,
    /// Treat `input` (or the phantom) as clean: simulate the measurement
    /// and score against it.
    pub simulate: bool,
    pub phantom: Option<String>,
    pub phantom_size: usize,
    pub noise_sigma: f64,
    pub sr_factor: usize,
    pub mask_keep: f64,
    pub ct_angles: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub lr_decay: f64,
    pub decay_at: f64,
    pub seed: u64,
    pub log_every: usize,
    pub bands: Option<usize>,
    pub band_every: usize,
    pub wall_time: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub force: bool,
    pub checkpoint: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelSection,
    pub encoder: EncoderSection,
    pub task: TaskSection,
    pub train: TrainSection,
    pub output: OutputSection,
}

impl RunConfig {
    /// Defaults for every optional key.
    pub fn new(kind: TaskKind) -> Self {
        Self {
            model: ModelSection {
                block: BlockKind::Plain,
                hidden_layers: 3,
                width: 256,
                activation: ActivationKind::Relu,
                w0: 30.0,
                out_dim: None,
            },
            encoder: EncoderSection { kind: EncoderKind::Positional, m: None, sigma: None, hash: HashGridSpec::default() },
            task: TaskSection {
                kind,
                input: None,
                truth: None,
                mask: None,
                simulate: false,
                phantom: None,
                phantom_size: 64,
                noise_sigma: 25.0,
                sr_factor: 2,
                mask_keep: 0.9,
                ct_angles: 40,
            },
            train: TrainSection {
                epochs: None,
                lr: None,
                lr_decay: 0.1,
                decay_at: 0.8,
                seed: 0,
                log_every: 1,
                bands: None,
                band_every: 25,
                wall_time: false,
            },
            output: OutputSection { dir: PathBuf::from("out"), force: false, checkpoint: true },
        }
    }

    pub fn encoder_spec(&self) -> EncoderSpec {
        let preset = match self.encoder.kind {
            EncoderKind::Identity => EncoderSpec::identity(),
            EncoderKind::Positional => EncoderSpec::positional(),
            EncoderKind::Fourier => EncoderSpec::fourier(),
            EncoderKind::HashGrid => EncoderSpec::hashgrid(),
        };
        EncoderSpec {
            m: self.encoder.m.unwrap_or(preset.m),
            sigma: self.encoder.sigma.unwrap_or(preset.sigma),
            hash: self.encoder.hash.clone(),
            ..preset
        }
    }

    pub fn model_spec(&self, out_dim: usize) -> ModelSpec {
        let m = &self.model;
        ModelSpec {
            encoder: self.encoder_spec(),
            in_dim: 2,
            block: m.block,
            hidden_layers: m.hidden_layers,
            width: m.width,
            activation: match m.activation {
                ActivationKind::Relu => Activation::Relu,
                ActivationKind::Sine => Activation::Sine { w0: m.w0 },
                ActivationKind::Linear => Activation::Linear,
            },
            out_dim: m.out_dim.unwrap_or(out_dim),
        }
    }

    /// The typed task; `data_channels` fills an unset `out_dim`.
    pub fn task_spec(&self, data_channels: usize) -> Result<TaskSpec> {
        let model = self.model_spec(data_channels);
        let t = &self.train;
        let spec = TaskSpec {
            kind: self.task.kind,
            epochs: t.epochs.unwrap_or(self.task.kind.default_epochs()),
            lr: t.lr.unwrap_or_else(|| default_lr(&model)),
            model,
            lr_decay: LrDecay { factor: t.lr_decay, at: t.decay_at },
            seed: t.seed,
            noise_sigma: self.task.noise_sigma,
            sr_factor: self.task.sr_factor,
            mask_keep: self.task.mask_keep,
            ct_angles: self.task.ct_angles,
            log_every: t.log_every,
            bands: t.bands,
            band_every: t.band_every,
            record_wall_time: t.wall_time,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical text; `parse_config(serialize())` reproduces `self`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let m = &self.model;
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "block = {}", block_name(m.block));
        let _ = writeln!(s, "hidden_layers = {}", m.hidden_layers);
        let _ = writeln!(s, "width = {}", m.width);
        let _ = writeln!(s, "activation = {}", activation_name(m.activation));
        let _ = writeln!(s, "w0 = {:?}", m.w0);
        if let Some(o) = m.out_dim {
            let _ = writeln!(s, "out_dim = {o}");
        }

        let e = &self.encoder;
        let _ = writeln!(s, "\n[encoder]");
        let _ = writeln!(s, "kind = {}", encoder_name(e.kind));
        if let Some(v) = e.m {
            let _ = writeln!(s, "m = {v}");
        }
        if let Some(v) = e.sigma {
            let _ = writeln!(s, "sigma = {v:?}");
        }
        let _ = writeln!(s, "levels = {}", e.hash.levels);
        let _ = writeln!(s, "base_resolution = {}", e.hash.base_resolution);
        let _ = writeln!(s, "growth = {:?}", e.hash.growth);
        let _ = writeln!(s, "features = {}", e.hash.features);
        let _ = writeln!(s, "log2_table_size = {}", e.hash.log2_table_size);

        let t = &self.task;
        let _ = writeln!(s, "\n[task]");
        let _ = writeln!(s, "kind = {}", t.kind);
        for (key, path) in [("input", &t.input), ("truth", &t.truth), ("mask", &t.mask)] {
            if let Some(p) = path {
                let _ = writeln!(s, "{key} = {}", p.display());
            }
        }
        let _ = writeln!(s, "simulate = {}", t.simulate);
        if let Some(p) = &t.phantom {
            let _ = writeln!(s, "phantom = {p}");
        }
        let _ = writeln!(s, "phantom_size = {}", t.phantom_size);
        let _ = writeln!(s, "noise_sigma = {:?}", t.noise_sigma);
        let _ = writeln!(s, "sr_factor = {}", t.sr_factor);
        let _ = writeln!(s, "mask_keep = {:?}", t.mask_keep);
        let _ = writeln!(s, "ct_angles = {}", t.ct_angles);

        let r = &self.train;
        let _ = writeln!(s, "\n[train]");
        if let Some(v) = r.epochs {
            let _ = writeln!(s, "epochs = {v}");
        }
        if let Some(v) = r.lr {
            let _ = writeln!(s, "lr = {v:?}");
        }
        let _ = writeln!(s, "lr_decay = {:?}", r.lr_decay);
        let _ = writeln!(s, "decay_at = {:?}", r.decay_at);
        let _ = writeln!(s, "seed = {}", r.seed);
        let _ = writeln!(s, "log_every = {}", r.log_every);
        if let Some(v) = r.bands {
            let _ = writeln!(s, "bands = {v}");
        }
        let _ = writeln!(s, "band_every = {}", r.band_every);
        let _ = writeln!(s, "wall_time = {}", r.wall_time);

        let o = &self.output;
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", o.dir.display());
        let _ = writeln!(s, "force = {}", o.force);
        let _ = writeln!(s, "checkpoint = {}", o.checkpoint);
        s
    }
}

pub fn block_name(b: BlockKind) -> &'static str {
    match b {
        BlockKind::Plain => "plain",
        BlockKind::Residual => "residual",
        BlockKind::Ho => "ho",
    }
}

pub fn parse_block(s: &str) -> Result<BlockKind> {
    match s {
        "plain" => Ok(BlockKind::Plain),
        "residual" => Ok(BlockKind::Residual),
        "ho" => Ok(BlockKind::Ho),
        _ => Err(Error::Invalid(format!("unknown block `{s}` (plain, residual, ho)"))),
    }
}

fn activation_name(a: ActivationKind) -> &'static str {
    match a {
        ActivationKind::Relu => "relu",
        ActivationKind::Sine => "sine",
        ActivationKind::Linear => "linear",
    }
}

fn encoder_name(k: EncoderKind) -> &'static str {
    match k {
        EncoderKind::Identity => "identity",
        EncoderKind::Positional => "positional",
        EncoderKind::Fourier => "fourier",
        EncoderKind::HashGrid => "hashgrid",
    }
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str, what: &str) -> Result<T> {
    raw.parse::<T>().map_err(|_| Error::Config { line, msg: format!("`{key}` expects {what}, got `{raw}`") })
}

fn choice<T: Copy>(line: usize, key: &str, raw: &str, options: &[(&str, T)]) -> Result<T> {
    options.iter().find(|(name, _)| *name == raw).map(|(_, v)| *v).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        Error::Config { line, msg: format!("`{key}` must be one of {}, got `{raw}`", names.join(", ")) }
    })
}

/// Parses a run configuration. Unknown sections or keys, repeated keys and
/// ill-typed values are errors naming the line; `[task] kind` is required.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::new(TaskKind::Represent);
    let mut kind_seen = false;
    let mut section: Option<&'static str> = None;
    let mut seen: Vec<(&'static str, String)> = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            section = Some(match name.trim() {
                "model" => "model",
                "encoder" => "encoder",
                "task" => "task",
                "train" => "train",
                "output" => "output",
                other => return Err(Error::Config { line, msg: format!("unknown section [{other}]") }),
            });
            continue;
        }
        let Some((key, val)) = content.split_once('=') else {
            return Err(Error::Config { line, msg: format!("expected `key = value`, got `{content}`") });
        };
        let (key, val) = (key.trim(), val.trim());
        let Some(sec) = section else {
            return Err(Error::Config { line, msg: format!("`{key}` appears before any section") });
        };
        if seen.iter().any(|(s, k)| *s == sec && k == key) {
            return Err(Error::Config { line, msg: format!("`{key}` is set twice in [{sec}]") });
        }
        seen.push((sec, key.to_string()));

        let unknown = || Error::Config { line, msg: format!("unknown key `{key}` in [{sec}]") };
        let bools = [("true", true), ("false", false)];
        match sec {
            "model" => {
                let m = &mut cfg.model;
                match key {
                    "block" => {
                        m.block = choice(line, key, val, &[("plain", BlockKind::Plain), ("residual", BlockKind::Residual), ("ho", BlockKind::Ho)])?
                    }
                    "hidden_layers" => m.hidden_layers = value(line, key, val, "a positive integer")?,
                    "width" => m.width = value(line, key, val, "a positive integer")?,
                    "activation" => {
                        m.activation = choice(
                            line,
                            key,
                            val,
                            &[("relu", ActivationKind::Relu), ("sine", ActivationKind::Sine), ("linear", ActivationKind::Linear)],
                        )?
                    }
                    "w0" => m.w0 = value(line, key, val, "a number")?,
                    "out_dim" => m.out_dim = Some(value(line, key, val, "a positive integer")?),
                    _ => return Err(unknown()),
                }
            }
            "encoder" => {
                let e = &mut cfg.encoder;
                match key {
                    "kind" => {
                        e.kind = choice(
                            line,
                            key,
                            val,
                            &[
                                ("identity", EncoderKind::Identity),
                                ("positional", EncoderKind::Positional),
                                ("fourier", EncoderKind::Fourier),
                                ("hashgrid", EncoderKind::HashGrid),
                            ],
                        )?
                    }
                    "m" => e.m = Some(value(line, key, val, "an integer")?),
                    "sigma" => e.sigma = Some(value(line, key, val, "a number")?),
                    "levels" => e.hash.levels = value(line, key, val, "an integer")?,
                    "base_resolution" => e.hash.base_resolution = value(line, key, val, "an integer")?,
                    "growth" => e.hash.growth = value(line, key, val, "a number")?,
                    "features" => e.hash.features = value(line, key, val, "an integer")?,
                    "log2_table_size" => e.hash.log2_table_size = value(line, key, val, "an integer")?,
                    _ => return Err(unknown()),
                }
            }
            "task" => {
                let t = &mut cfg.task;
                match key {
                    "kind" => {
                        let kinds: Vec<(&str, TaskKind)> = TaskKind::ALL.iter().map(|k| (k.name(), *k)).collect();
                        t.kind = choice(line, key, val, &kinds)?;
                        kind_seen = true;
                    }
                    "input" => t.input = Some(PathBuf::from(val)),
                    "truth" => t.truth = Some(PathBuf::from(val)),
                    "mask" => t.mask = Some(PathBuf::from(val)),
                    "simulate" => t.simulate = choice(line, key, val, &bools)?,
                    "phantom" => {
                        t.phantom = Some(
                            choice(line, key, val, &[("disk", "disk"), ("squares", "squares"), ("shepp-like", "shepp-like")])?
                                .to_string(),
                        )
                    }
                    "phantom_size" => t.phantom_size = value(line, key, val, "an integer")?,
                    "noise_sigma" | "sigma" => t.noise_sigma = value(line, key, val, "a number")?,
                    "sr_factor" => t.sr_factor = value(line, key, val, "an integer")?,
                    "mask_keep" => t.mask_keep = value(line, key, val, "a number")?,
                    "ct_angles" => t.ct_angles = value(line, key, val, "an integer")?,
                    _ => return Err(unknown()),
                }
            }
            "train" => {
                let r = &mut cfg.train;
                match key {
                    "epochs" => r.epochs = Some(value(line, key, val, "an integer")?),
                    "lr" => r.lr = Some(value(line, key, val, "a number")?),
                    "lr_decay" => r.lr_decay = value(line, key, val, "a number")?,
                    "decay_at" => r.decay_at = value(line, key, val, "a number")?,
                    "seed" => r.seed = value(line, key, val, "an unsigned integer")?,
                    "log_every" => r.log_every = value(line, key, val, "an integer")?,
                    "bands" => r.bands = Some(value(line, key, val, "an integer")?),
                    "band_every" => r.band_every = value(line, key, val, "an integer")?,
                    "wall_time" => r.wall_time = choice(line, key, val, &bools)?,
                    _ => return Err(unknown()),
                }
            }
            "output" => {
                let o = &mut cfg.output;
                match key {
                    "dir" => o.dir = PathBuf::from(val),
                    "force" => o.force = choice(line, key, val, &bools)?,
                    "checkpoint" => o.checkpoint = choice(line, key, val, &bools)?,
                    _ => return Err(unknown()),
                }
            }
            _ => unreachable!("sections are matched above"),
        }
    }
    if !kind_seen {
        return Err(Error::MissingKey { section: "task", key: "kind" });
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_task_gets_defaults() {
        let cfg = parse_config("[task]\nkind = represent\n").unwrap();
        assert_eq!(cfg, RunConfig::new(TaskKind::Represent));
        let spec = cfg.task_spec(3).unwrap();
        assert_eq!(spec.epochs, 5000);
        assert_eq!(spec.model.out_dim, 3);
        assert_eq!(spec.lr, 1e-3);
    }

    #[test]
    fn typed_error_names_the_line() {
        let err = parse_config("[task]\nkind = denoise\nsigma = abc\n").unwrap_err();
        match err {
            Error::Config { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("sigma"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_and_repeated_keys() {
        let err = parse_config("[task]\nkind = ct\n\n[train]\nepoch = 3\n").unwrap_err();
        assert!(matches!(&err, Error::Config { line: 5, msg } if msg.contains("epoch")), "{err}");
        assert!(matches!(parse_config("[task]\nkind = ct\nkind = sr\n"), Err(Error::Config { line: 3, .. })));
        assert!(matches!(parse_config("[tasks]\nkind = ct\n"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse_config("kind = ct\n"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse_config("[task]\nkind = fly\n"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("[train]\nseed = 1\n"), Err(Error::MissingKey { .. })));
    }

    #[test]
    fn comments_and_whitespace() {
        let cfg = parse_config("# run\n[task]   \n  kind=sr # upscale\n\n[train]\nlr = 0.5e-3\n").unwrap();
        assert_eq!(cfg.task.kind, TaskKind::Sr);
        assert_eq!(cfg.train.lr, Some(5e-4));
    }

    #[test]
    fn serialize_is_a_fixed_point() {
        let mut cfg = RunConfig::new(TaskKind::Inpaint);
        cfg.model.block = BlockKind::Ho;
        cfg.model.out_dim = Some(3);
        cfg.encoder.kind = EncoderKind::Fourier;
        cfg.encoder.sigma = Some(0.1 + 0.2);
        cfg.task.input = Some(PathBuf::from("data/img.ppm"));
        cfg.task.phantom = Some("disk".into());
        cfg.train.lr = Some(1e-4 / 3.0);
        cfg.train.bands = Some(10);
        let text = cfg.serialize();
        let back = parse_config(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.serialize(), text);
    }

    #[test]
    fn shipped_examples_round_trip() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut n = 0;
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml" || e == "cfg") {
                let cfg = parse_config(&std::fs::read_to_string(&path).unwrap())
                    .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                assert_eq!(parse_config(&cfg.serialize()).unwrap(), cfg);
                cfg.task_spec(cfg.model.out_dim.unwrap_or(1)).unwrap();
                n += 1;
            }
        }
        assert!(n >= 5, "expected shipped configs in {}", dir.display());
    }
}
