//! Full-batch fitting of a coordinate network through a measurement operator.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use crate::autodiff::{Adam, CsrMatrix, Tape, Tensor, Var};
use crate::encoders::grid_coords;
use crate::error::{shape_err, Error, Result};
use crate::metrics::{band_correspondence, psnr_from_mse, ssim, BandCorrespondence};
use crate::network::{Activation, Model, ModelSpec};
use crate::operators::{
    add_gaussian_noise, apply_mask, downsample, masked_mse, radon_matrix, ImageGrid, Mask, RadonGeometry,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Represent,
    Denoise,
    Sr,
    Ct,
    Inpaint,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [TaskKind::Represent, TaskKind::Denoise, TaskKind::Sr, TaskKind::Ct, TaskKind::Inpaint];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Represent => "represent",
            TaskKind::Denoise => "denoise",
            TaskKind::Sr => "sr",
            TaskKind::Ct => "ct",
            TaskKind::Inpaint => "inpaint",
        }
    }

    /// Epoch budget used when none is configured.
    pub fn default_epochs(self) -> usize {
        match self {
            TaskKind::Represent => 5000,
            TaskKind::Denoise | TaskKind::Sr | TaskKind::Ct => 2000,
            TaskKind::Inpaint => 1000,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown task kind `{s}`")))
    }
}

/// Step decay: the learning rate is multiplied by `factor` once
/// `epoch ≥ round(at · epochs)`. A factor of 1 disables it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrDecay {
    pub factor: f64,
    pub at: f64,
}

impl Default for LrDecay {
    fn default() -> Self {
        Self { factor: 0.1, at: 0.8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub model: ModelSpec,
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: LrDecay,
    pub seed: u64,
    /// Gaussian noise level on the 8-bit scale (denoise).
    pub noise_sigma: f64,
    /// Downsampling factor (sr).
    pub sr_factor: usize,
    /// Keep probability of the random mask (inpaint).
    pub mask_keep: f64,
    /// Projection count (ct).
    pub ct_angles: usize,
    /// Metrics are recorded every `log_every` epochs and at the last epoch.
    pub log_every: usize,
    /// Number of spectral bands to track, if any.
    pub bands: Option<usize>,
    pub band_every: usize,
    /// Fills `wall_ms`; off by default so record streams are reproducible.
    pub record_wall_time: bool,
}

/// 1e-4 for sine activations and 1e-3 otherwise, whatever the block kind,
/// so a high-order model and its plain counterpart share a step size.
pub fn default_lr(model: &ModelSpec) -> f64 {
    match model.activation {
        Activation::Sine { .. } => 1e-4,
        _ => 1e-3,
    }
}

impl TaskSpec {
    pub fn new(kind: TaskKind, model: ModelSpec) -> Self {
        Self {
            kind,
            epochs: kind.default_epochs(),
            lr: default_lr(&model),
            model,
            lr_decay: LrDecay::default(),
            seed: 0,
            noise_sigma: 25.0,
            sr_factor: 2,
            mask_keep: 0.9,
            ct_angles: 40,
            log_every: 1,
            bands: None,
            band_every: 25,
            record_wall_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        self.model.validate()?;
        if self.model.in_dim != 2 {
            return bad(format!("image tasks need a 2-D input model, got in_dim {}", self.model.in_dim));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.lr_decay.factor > 0.0 && self.lr_decay.factor.is_finite() && (0.0..=1.0).contains(&self.lr_decay.at)) {
            return bad("lr decay needs a positive factor and a point in [0, 1]".into());
        }
        if self.log_every == 0 || self.band_every == 0 {
            return bad("logging intervals must be at least 1".into());
        }
        if self.bands.is_some_and(|n| n < 2) {
            return bad("at least 2 bands are required".into());
        }
        match self.kind {
            TaskKind::Denoise if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) => {
                bad(format!("noise sigma must be non-negative, got {}", self.noise_sigma))
            }
            TaskKind::Sr if self.sr_factor == 0 => bad("sr factor must be at least 1".into()),
            TaskKind::Inpaint if !(self.mask_keep > 0.0 && self.mask_keep <= 1.0) => {
                bad(format!("mask keep fraction must lie in (0, 1], got {}", self.mask_keep))
            }
            TaskKind::Ct if self.ct_angles == 0 => bad("ct needs at least one angle".into()),
            TaskKind::Ct if self.model.out_dim != 1 => bad("ct reconstructs a single channel".into()),
            _ => Ok(()),
        }
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        let switch = (self.lr_decay.at * self.epochs as f64).round() as usize;
        if epoch >= switch && self.lr_decay.factor != 1.0 {
            self.lr * self.lr_decay.factor
        } else {
            self.lr
        }
    }
}

/// The observed data for one task together with its operator parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub kind: TaskKind,
    /// Noisy image, low-resolution image, masked image or sinogram.
    pub data: ImageGrid,
    pub mask: Option<Mask>,
    pub geometry: Option<RadonGeometry>,
    /// Size of the reconstruction grid.
    pub output_height: usize,
    pub output_width: usize,
}

impl Measurement {
    /// Applies the task's forward operator to a clean image.
    pub fn simulate(task: &TaskSpec, truth: &ImageGrid) -> Result<Self> {
        task.validate()?;
        let (h, w) = (truth.height(), truth.width());
        let plain = |data| Measurement { kind: task.kind, data, mask: None, geometry: None, output_height: h, output_width: w };
        Ok(match task.kind {
            TaskKind::Represent => plain(truth.clone()),
            TaskKind::Denoise => plain(add_gaussian_noise(truth, task.noise_sigma, task.seed)?),
            TaskKind::Sr => {
                let lr = downsample(truth, task.sr_factor)?;
                let (oh, ow) = (lr.height() * task.sr_factor, lr.width() * task.sr_factor);
                Measurement { output_height: oh, output_width: ow, ..plain(lr) }
            }
            TaskKind::Inpaint => {
                let mask = Mask::random(h, w, task.mask_keep, task.seed)?;
                let m = apply_mask(truth, &mask)?;
                Measurement { mask: Some(m.mask), ..plain(m.image) }
            }
            TaskKind::Ct => {
                let g = RadonGeometry::new(h, task.ct_angles)?;
                let sino = crate::operators::radon(truth, &g)?;
                Measurement { geometry: Some(g), ..plain(sino) }
            }
        })
    }

    /// Wraps already-observed data; the reconstruction grid follows from it.
    pub fn observed(task: &TaskSpec, data: ImageGrid, mask: Option<Mask>) -> Result<Self> {
        task.validate()?;
        let (h, w) = (data.height(), data.width());
        let base = Measurement { kind: task.kind, data, mask: None, geometry: None, output_height: h, output_width: w };
        match task.kind {
            TaskKind::Represent | TaskKind::Denoise => Ok(base),
            TaskKind::Sr => Ok(Measurement { output_height: h * task.sr_factor, output_width: w * task.sr_factor, ..base }),
            TaskKind::Inpaint => {
                let mask = mask.ok_or_else(|| Error::Invalid("inpainting needs a mask".into()))?;
                let m = apply_mask(&base.data, &mask)?;
                Ok(Measurement { data: m.image, mask: Some(m.mask), ..base })
            }
            TaskKind::Ct => {
                // The sinogram has n_det = ceil(size·√2) columns; recover the size.
                let size = (1..=w).find(|&s| (s as f64 * 2f64.sqrt()).ceil() as usize == w).ok_or_else(|| {
                    Error::Invalid(format!("no square image size yields {w} detectors"))
                })?;
                let g = RadonGeometry::new(size, h)?;
                Ok(Measurement { geometry: Some(g), output_height: size, output_width: size, ..base })
            }
        }
    }

    /// Grid the network is fitted on.
    pub fn training_grid(&self) -> (usize, usize) {
        match self.kind {
            TaskKind::Sr => (self.data.height(), self.data.width()),
            _ => (self.output_height, self.output_width),
        }
    }

    /// Peak used for measurement-domain PSNR: 1 for images, `max|sinogram|` for CT.
    pub fn peak(&self) -> f64 {
        match self.kind {
            TaskKind::Ct => self.data.pixels().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE),
            _ => 1.0,
        }
    }
}

/// Measurement-domain loss of a prediction on the training grid.
///
/// Mean squared error over all values, over kept pixels for inpainting and
/// over sinogram entries (after projecting the prediction) for CT.
pub fn loss_for_task(prediction: &ImageGrid, m: &Measurement) -> Result<f64> {
    match m.kind {
        TaskKind::Inpaint => masked_mse(prediction, &m.data, m.mask.as_ref().expect("inpaint mask")),
        TaskKind::Ct => {
            let sino = crate::operators::radon(prediction, m.geometry.as_ref().expect("ct geometry"))?;
            crate::metrics::mse(&sino, &m.data)
        }
        _ => crate::metrics::mse(prediction, &m.data),
    }
}

/// Network output on the `height x width` grid of normalized coordinates.
pub fn evaluate(model: &Model, height: usize, width: usize) -> Result<ImageGrid> {
    if model.spec().in_dim != 2 {
        return Err(shape_err("evaluate", format!("image grids need in_dim 2, model has {}", model.spec().in_dim)));
    }
    let out = model.forward(&grid_coords(height, width))?;
    ImageGrid::from_tensor(height, width, &out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    /// Number of completed optimizer steps when the record was taken.
    pub epoch: usize,
    pub loss: f64,
    pub psnr_meas: f64,
    pub psnr_truth: Option<f64>,
    pub ssim_truth: Option<f64>,
    pub wall_ms: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Highest PSNR against the supplied ground truth.
    Truth,
    /// Lowest measurement loss (no ground truth available).
    Loss,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Parameters at `best_epoch`.
    pub model: Model,
    pub records: Vec<TrainRecord>,
    pub bands: Vec<BandCorrespondence>,
    pub best_epoch: usize,
    pub selection: Selection,
    /// Set when training stopped on a non-finite value; `records` then holds
    /// everything logged before it.
    pub diverged: Option<String>,
}

impl FitOutcome {
    pub fn best_record(&self) -> Option<&TrainRecord> {
        self.records.iter().find(|r| r.epoch == self.best_epoch)
    }

    pub fn final_record(&self) -> Option<&TrainRecord> {
        self.records.last()
    }
}

enum Objective {
    Dense(Tensor),
    Masked { target: Tensor, weights: Tensor, kept: usize },
    Projected { target: Tensor, op: Arc<CsrMatrix> },
}

impl Objective {
    fn build(m: &Measurement, channels: usize) -> Result<Self> {
        let data = &m.data;
        Ok(match m.kind {
            TaskKind::Ct => {
                let op = Arc::new(radon_matrix(m.geometry.as_ref().expect("ct geometry"))?);
                Objective::Projected { target: Tensor::vector(data.pixels().to_vec()), op }
            }
            TaskKind::Inpaint => {
                let mask = m.mask.as_ref().expect("inpaint mask");
                let weights = mask.keep().iter().flat_map(|&k| std::iter::repeat_n(if k { 1.0 } else { 0.0 }, channels));
                let kept = mask.kept_count() * channels;
                if kept == 0 {
                    return Err(Error::Invalid("mask keeps no pixels".into()));
                }
                Objective::Masked {
                    target: data.to_tensor(),
                    weights: Tensor::matrix(data.num_pixels(), channels, weights.collect())?,
                    kept,
                }
            }
            _ => Objective::Dense(data.to_tensor()),
        })
    }

    fn record(&self, tape: &mut Tape, out: Var) -> Result<Var> {
        match self {
            Objective::Dense(t) => {
                let t = tape.constant(t.clone());
                tape.mse(out, t)
            }
            Objective::Masked { target, weights, kept } => {
                let t = tape.constant(target.clone());
                let w = tape.constant(weights.clone());
                let d = tape.sub(out, t)?;
                let d = tape.mul(d, w)?;
                let sq = tape.mul(d, d)?;
                let s = tape.sum(sq);
                Ok(tape.scale(s, 1.0 / *kept as f64))
            }
            Objective::Projected { target, op } => {
                let p = tape.sparse_apply(out, op.clone())?;
                let t = tape.constant(target.clone());
                tape.mse(p, t)
            }
        }
    }
}

/// Minimizes the measurement loss with full-batch Adam.
///
/// Records are taken from the forward pass before each step and once after
/// the last one, so epochs run `0..=epochs`. With `truth` the kept checkpoint
/// maximizes PSNR against it; otherwise it minimizes the loss. Identical
/// inputs give identical outcomes.
pub fn fit(task: &TaskSpec, m: &Measurement, truth: Option<&ImageGrid>) -> Result<FitOutcome> {
    task.validate()?;
    if m.kind != task.kind {
        return Err(Error::Invalid(format!("measurement is for {}, task is {}", m.kind, task.kind)));
    }
    let channels = match m.kind {
        TaskKind::Ct => 1,
        _ => m.data.channels(),
    };
    if task.model.out_dim != channels {
        return Err(shape_err("fit", format!("model outputs {} channels, data has {channels}", task.model.out_dim)));
    }
    if let Some(t) = truth {
        if t.height() != m.output_height || t.width() != m.output_width || t.channels() != channels {
            return Err(shape_err(
                "fit",
                format!("truth {}x{}x{} vs reconstruction {}x{}x{channels}", t.height(), t.width(), t.channels(), m.output_height, m.output_width),
            ));
        }
    }

    let (th, tw) = m.training_grid();
    let coords = Tensor::matrix(th * tw, 2, grid_coords(th, tw))?;
    let objective = Objective::build(m, channels)?;
    let output_differs = (th, tw) != (m.output_height, m.output_width);
    let band_target = match (task.bands, truth) {
        (None, _) => None,
        (Some(_), Some(t)) => Some(t.clone()),
        (Some(_), None) if m.kind == TaskKind::Ct => None,
        (Some(_), None) => Some(m.data.clone()),
    };
    let selection = if truth.is_some() { Selection::Truth } else { Selection::Loss };

    let mut model = Model::build(&task.model, task.seed)?;
    let features = model.encode_fixed(&coords)?;
    let mut adam = Adam::new(task.lr);
    let mut records = Vec::new();
    let mut bands = Vec::new();
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let peak = m.peak();
    let start = Instant::now();
    let mut diverged = None;

    for epoch in 0..=task.epochs {
        let mut tape = Tape::new();
        let input = tape.constant(features.as_ref().unwrap_or(&coords).clone());
        let params = model.register(&mut tape);
        let step = (|| -> Result<(f64, ImageGrid, Var)> {
            let out = match features {
                Some(_) => model.forward_features(&mut tape, input, &params)?,
                None => model.forward_on(&mut tape, input, &params)?,
            };
            let loss = objective.record(&mut tape, out)?;
            let l = tape.value(loss).item();
            if !l.is_finite() {
                return Err(Error::Divergence(format!("loss became {l} at epoch {epoch}")));
            }
            let img = ImageGrid::from_tensor(th, tw, tape.value(out))?;
            Ok((l, img, loss))
        })();
        let (loss_value, train_img, loss) = match step {
            Ok(v) => v,
            Err(Error::Divergence(msg)) => {
                diverged = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        };

        let log_now = epoch % task.log_every == 0 || epoch == task.epochs;
        let band_now = band_target.is_some() && epoch % task.band_every == 0;
        if log_now || band_now {
            let recon = if output_differs { evaluate(&model, m.output_height, m.output_width)? } else { train_img };
            if log_now {
                let (psnr_truth, ssim_truth) = match truth {
                    Some(t) => (
                        Some(psnr_from_mse(crate::metrics::mse(&recon, t)?, 1.0)),
                        ssim(&recon, t).ok(),
                    ),
                    None => (None, None),
                };
                records.push(TrainRecord {
                    epoch,
                    loss: loss_value,
                    psnr_meas: psnr_from_mse(loss_value, peak),
                    psnr_truth,
                    ssim_truth,
                    wall_ms: task.record_wall_time.then(|| start.elapsed().as_secs_f64() * 1e3),
                });
                let score = match selection {
                    Selection::Truth => psnr_truth.expect("truth given"),
                    Selection::Loss => -loss_value,
                };
                if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                    best = Some((score, epoch, model.params().to_vec()));
                }
            }
            if let (true, Some(target), Some(n)) = (band_now, band_target.as_ref(), task.bands) {
                let mut b = band_correspondence(&recon, target, n)?;
                b.epoch = epoch;
                bands.push(b);
            }
        }
        if epoch == task.epochs {
            break;
        }

        tape.backward(loss)?;
        let grads: Vec<Tensor> = params.iter().map(|&p| tape.grad_or_zeros(p)).collect();
        adam.lr = task.lr_at(epoch);
        match adam.step(model.params_mut(), &grads) {
            Ok(()) => {}
            Err(Error::Divergence(msg)) => {
                diverged = Some(format!("{msg} at epoch {epoch}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let (best_epoch, model) = match best {
        Some((_, e, params)) => {
            let enc = model.encoder().clone();
            (e, Model::from_parts(task.model.clone(), enc, params)?)
        }
        None => (0, model),
    };
    Ok(FitOutcome { model, records, bands, best_epoch, selection, diverged })
}
