use crate::autodiff::{Tape, Tensor, Var};
use crate::encoders::{Encoder, EncoderKind, EncoderSpec};
use crate::error::{Error, Result};
use crate::rng::{purpose, Rng};

use super::blocks::{apply_block, block_plain, Activation, BlockKind};

/// Declarative network description.
///
/// The first hidden layer maps the encoding to `width` with a plain block;
/// the remaining `hidden_layers - 1` layers use `block`; a linear head maps
/// to `out_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub encoder: EncoderSpec,
    pub in_dim: usize,
    pub block: BlockKind,
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub out_dim: usize,
}

/// Encoder/activation pairings of the standard INR families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// identity encoding, sine activation (w0 = 30)
    Siren,
    /// positional encoding, relu
    PosEnc,
    /// random Fourier features, relu
    Ffn,
    /// hash grid, relu
    HashGrid,
}

impl Family {
    pub fn spec(self, block: BlockKind, width: usize, hidden_layers: usize, out_dim: usize) -> ModelSpec {
        let (encoder, activation) = match self {
            Family::Siren => (EncoderSpec::identity(), Activation::Sine { w0: 30.0 }),
            Family::PosEnc => (EncoderSpec::positional(), Activation::Relu),
            Family::Ffn => (EncoderSpec::fourier(), Activation::Relu),
            Family::HashGrid => (EncoderSpec::hashgrid(), Activation::Relu),
        };
        ModelSpec { encoder, in_dim: 2, block, hidden_layers, width, activation, out_dim }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.in_dim == 0 || self.out_dim == 0 || self.width == 0 {
            return bad("in_dim, out_dim and width must be positive".into());
        }
        if self.hidden_layers == 0 {
            return bad("at least one hidden layer is required".into());
        }
        if let Activation::Sine { w0 } = self.activation {
            if !(w0.is_finite() && w0 > 0.0) {
                return bad(format!("sine frequency must be positive, got {w0}"));
            }
        }
        self.encoder.validate(self.in_dim)
    }

    pub fn encoded_dim(&self) -> usize {
        self.encoder.out_dim(self.in_dim)
    }

    /// Closed-form number of trainable scalars.
    pub fn param_count(&self) -> usize {
        let table = match self.encoder.kind {
            EncoderKind::HashGrid => self.encoder.hash.levels * self.encoder.hash.table_size() * self.encoder.hash.features,
            _ => 0,
        };
        let w = self.width;
        table + w * (self.encoded_dim() + 1) + (self.hidden_layers - 1) * w * (w + 1) + self.out_dim * (w + 1)
    }
}

/// An instantiated network: spec, frozen encoder state and trainable
/// parameters in declaration order (hash table first, then `W, b` per layer).
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    encoder: Encoder,
    params: Vec<Tensor>,
}

impl Model {
    /// Builds and initializes a model; identical `(spec, seed)` give
    /// bit-identical parameters.
    ///
    /// Sine networks use the sinusoidal scheme: first layer weights
    /// `U(-1/fan_in, 1/fan_in)`, later layers `U(-√(6/fan_in)/w0, √(6/fan_in)/w0)`.
    /// Relu and linear networks use `U(-√(6/fan_in), √(6/fan_in)) / √2`.
    /// Biases are `U(-1/√fan_in, 1/√fan_in)`; hash tables `U(-1e-4, 1e-4)`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let encoder = Encoder::build(&spec.encoder, spec.in_dim, seed)?;
        let mut rng = Rng::new(seed, purpose::INIT);
        let mut params = Vec::new();
        if let Some([rows, cols]) = encoder.table_shape() {
            let data = (0..rows * cols).map(|_| rng.uniform(-1e-4, 1e-4)).collect();
            params.push(Tensor::matrix(rows, cols, data)?);
        }
        let mut fan_in = encoder.out_dim();
        let layer_outs = std::iter::repeat(spec.width).take(spec.hidden_layers).chain([spec.out_dim]);
        for (layer, fan_out) in layer_outs.enumerate() {
            let bound = match spec.activation {
                Activation::Sine { .. } if layer == 0 => 1.0 / fan_in as f64,
                Activation::Sine { w0 } => (6.0 / fan_in as f64).sqrt() / w0,
                Activation::Relu | Activation::Linear => (6.0 / fan_in as f64).sqrt() / 2f64.sqrt(),
            };
            let w = (0..fan_out * fan_in).map(|_| rng.uniform(-bound, bound)).collect();
            let bb = 1.0 / (fan_in as f64).sqrt();
            let b = (0..fan_out).map(|_| rng.uniform(-bb, bb)).collect();
            params.push(Tensor::matrix(fan_out, fan_in, w)?);
            params.push(Tensor::vector(b));
            fan_in = fan_out;
        }
        Ok(Self { spec: spec.clone(), encoder, params })
    }

    /// Reassembles a model from stored parts, checking every shape.
    pub fn from_parts(spec: ModelSpec, encoder: Encoder, params: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let template = Self::build(&spec, 0)?;
        if template.encoder.out_dim() != encoder.out_dim() || template.encoder.in_dim() != encoder.in_dim() {
            return Err(Error::InvalidSpec("encoder does not match spec".into()));
        }
        if template.params.len() != params.len()
            || template.params.iter().zip(&params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::InvalidSpec("parameter shapes do not match spec".into()));
        }
        if params.iter().any(|p| !p.all_finite()) {
            return Err(Error::InvalidSpec("non-finite parameter".into()));
        }
        Ok(Self { spec, encoder, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Records every parameter as a trainable leaf.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.clone())).collect()
    }

    /// Records every parameter as a constant (evaluation only).
    pub fn register_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.constant(p.clone())).collect()
    }

    /// Records encoder → hidden blocks → linear head for `coords: n x in_dim`.
    pub fn forward_on(&self, tape: &mut Tape, coords: Var, params: &[Var]) -> Result<Var> {
        let (table, rest) = match self.encoder.table_shape() {
            Some(_) => (Some(params[0]), &params[1..]),
            None => (None, params),
        };
        let z = self.encoder.encode(tape, coords, table)?;
        self.forward_features(tape, z, rest)
    }

    /// Encoded features for constant coordinates, when the encoder has no
    /// trainable state. They can then be fed to [`Model::forward_features`]
    /// in every step.
    pub fn encode_fixed(&self, coords: &Tensor) -> Result<Option<Tensor>> {
        if self.encoder.table_shape().is_some() {
            return Ok(None);
        }
        let mut tape = Tape::new();
        let x = tape.constant(coords.clone());
        let z = self.encoder.encode(&mut tape, x, None)?;
        Ok(Some(tape.value(z).clone()))
    }

    /// Hidden blocks and head on encoded features `z`; `params` excludes
    /// any encoder table.
    pub fn forward_features(&self, tape: &mut Tape, mut z: Var, params: &[Var]) -> Result<Var> {
        let mut it = params.iter().copied();
        let act = self.spec.activation;
        for layer in 0..self.spec.hidden_layers {
            let (w, b) = (it.next().expect("weight"), it.next().expect("bias"));
            z = if layer == 0 {
                block_plain(tape, z, w, b, act)?
            } else {
                apply_block(tape, self.spec.block, z, w, b, act)?
            };
        }
        let (w, b) = (it.next().expect("head weight"), it.next().expect("head bias"));
        let out = tape.linear(z, w, Some(b))?;
        if !tape.value(out).all_finite() {
            return Err(Error::Divergence("network output is not finite".into()));
        }
        Ok(out)
    }

    /// Evaluates the network on `coords` (`n x in_dim`, row-major) → `n x out_dim`.
    pub fn forward(&self, coords: &[f64]) -> Result<Tensor> {
        let d = self.spec.in_dim;
        if coords.len() % d != 0 {
            return Err(crate::error::shape_err("forward", format!("{} values for input dim {d}", coords.len())));
        }
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(coords.len() / d, d, coords.to_vec())?);
        let params = self.register_frozen(&mut tape);
        let out = self.forward_on(&mut tape, x, &params)?;
        Ok(tape.value(out).clone())
    }
}
