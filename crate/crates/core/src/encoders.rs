//! Coordinate encoders: identity, positional encoding, random Fourier
//! features and a multiresolution hash grid.
//!
//! Coordinates are expected in `[-1, 1]` per axis; [`grid_coords`] produces
//! them for a raster.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::autodiff::{GatherPlan, SinusoidPlan, Tape, Tensor, Var};
use crate::error::{shape_err, Error, Result};
use crate::rng::{purpose, Rng};

/// Spatial hash primes; the first axis is left unscrambled.
pub const HASH_PRIMES: [u64; 3] = [1, 2_654_435_761, 805_459_861];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderKind {
    Identity,
    Positional,
    Fourier,
    HashGrid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HashGridSpec {
    pub levels: usize,
    pub base_resolution: usize,
    pub growth: f64,
    /// Features per table entry.
    pub features: usize,
    /// Table size is `2^log2_table_size` entries per level.
    pub log2_table_size: u32,
}

impl Default for HashGridSpec {
    fn default() -> Self {
        Self { levels: 4, base_resolution: 16, growth: 2.0, features: 2, log2_table_size: 14 }
    }
}

impl HashGridSpec {
    pub fn table_size(&self) -> usize {
        1usize << self.log2_table_size
    }

    pub fn resolution(&self, level: usize) -> usize {
        (self.base_resolution as f64 * self.growth.powi(level as i32)).floor() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    /// Frequency count (positional) or mapping size (Fourier).
    pub m: usize,
    pub sigma: f64,
    pub hash: HashGridSpec,
}

impl EncoderSpec {
    pub fn identity() -> Self {
        Self { kind: EncoderKind::Identity, m: 0, sigma: 1.0, hash: HashGridSpec::default() }
    }

    pub fn positional() -> Self {
        Self { kind: EncoderKind::Positional, m: 9, sigma: 2.0, hash: HashGridSpec::default() }
    }

    pub fn fourier() -> Self {
        Self { kind: EncoderKind::Fourier, m: 128, sigma: 10.0, hash: HashGridSpec::default() }
    }

    pub fn hashgrid() -> Self {
        Self { kind: EncoderKind::HashGrid, m: 0, sigma: 1.0, hash: HashGridSpec::default() }
    }

    pub fn out_dim(&self, in_dim: usize) -> usize {
        match self.kind {
            EncoderKind::Identity => in_dim,
            EncoderKind::Positional => 2 * (self.m + 1) * in_dim,
            EncoderKind::Fourier => 2 * self.m,
            EncoderKind::HashGrid => self.hash.levels * self.hash.features,
        }
    }

    pub fn validate(&self, in_dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("encoder sigma must be positive, got {}", self.sigma));
        }
        match self.kind {
            EncoderKind::Fourier if self.m == 0 => bad("fourier mapping size must be >= 1".into()),
            EncoderKind::HashGrid => {
                let h = &self.hash;
                if in_dim > HASH_PRIMES.len() {
                    return bad(format!("hash grid supports up to {} input dims", HASH_PRIMES.len()));
                }
                if h.levels == 0 || h.features == 0 || h.base_resolution == 0 || h.growth < 1.0 {
                    return bad("hash grid levels, features and base resolution must be positive, growth >= 1".into());
                }
                if h.log2_table_size == 0 || h.log2_table_size > 24 {
                    return bad(format!("log2 table size {} outside 1..=24", h.log2_table_size));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Positional encoding of one point: for every input axis and
/// `j = 0..=m`, the pair `cos(2π σ^{j/m} x), sin(2π σ^{j/m} x)`.
pub fn encode_positional(x: &[f64], m: usize, sigma: f64) -> Vec<f64> {
    let freqs = positional_freqs(x.len(), m, sigma);
    eval_sinusoid(&freqs, x)
}

/// Random Fourier features `[cos(2π B x), sin(2π B x)]` for `B: m x d`.
pub fn encode_fourier(x: &[f64], b: &Tensor) -> Result<Vec<f64>> {
    let plan = fourier_plan(b)?;
    if x.len() != plan.in_dim {
        return Err(shape_err("encode_fourier", format!("point of dim {}, B has {} columns", x.len(), plan.in_dim)));
    }
    Ok(eval_sinusoid(&plan, x))
}

fn eval_sinusoid(plan: &SinusoidPlan, x: &[f64]) -> Vec<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(Tensor::matrix(1, x.len(), x.to_vec()).expect("1 x d"));
    let out = tape.sinusoid(xv, Arc::new(plan.clone())).expect("plan matches point");
    tape.value(out).data().to_vec()
}

fn positional_freqs(in_dim: usize, m: usize, sigma: f64) -> SinusoidPlan {
    let per_axis = m + 1;
    let mut freqs = vec![0.0; per_axis * in_dim * in_dim];
    for d in 0..in_dim {
        for j in 0..=m {
            let exponent = if m == 0 { 0.0 } else { j as f64 / m as f64 };
            let row = d * per_axis + j;
            freqs[row * in_dim + d] = 2.0 * PI * sigma.powf(exponent);
        }
    }
    SinusoidPlan { freqs, n_freqs: per_axis * in_dim, in_dim, interleaved: true }
}

fn fourier_plan(b: &Tensor) -> Result<SinusoidPlan> {
    let (m, d) = b.dims2().ok_or_else(|| shape_err("fourier", "B must be a matrix"))?;
    Ok(SinusoidPlan {
        freqs: b.data().iter().map(|v| 2.0 * PI * v).collect(),
        n_freqs: m,
        in_dim: d,
        interleaved: false,
    })
}

/// `(⊕_d corner_d · π_d) mod T` with wrapping multiplication; `T` must be a
/// power of two.
pub fn hash_index(corner: &[u64], primes: &[u64], table_size: usize) -> usize {
    debug_assert!(table_size.is_power_of_two());
    let h = corner.iter().zip(primes).fold(0u64, |acc, (&c, &p)| acc ^ c.wrapping_mul(p));
    (h & (table_size as u64 - 1)) as usize
}

/// Interpolation taps of one point at one level: `2^D` (table row, weight)
/// pairs, plus whether the point had to be clamped into the domain.
pub fn hashgrid_taps(x: &[f64], spec: &HashGridSpec, level: usize) -> (Vec<(usize, f64)>, bool) {
    let res = spec.resolution(level) as f64;
    let t = spec.table_size();
    let d = x.len();
    let mut clamped = false;
    let mut cell = vec![0u64; d];
    let mut frac = vec![0.0; d];
    for (k, &xk) in x.iter().enumerate() {
        let c = if xk.is_nan() { 0.0 } else { xk.clamp(-1.0, 1.0) };
        clamped |= c != xk;
        let pos = (c + 1.0) * 0.5 * res;
        let base = pos.floor();
        cell[k] = base as u64;
        frac[k] = pos - base;
    }
    let mut taps = Vec::with_capacity(1 << d);
    let mut corner = vec![0u64; d];
    for mask in 0..(1usize << d) {
        let mut w = 1.0;
        for k in 0..d {
            let upper = mask >> k & 1 == 1;
            corner[k] = cell[k] + upper as u64;
            w *= if upper { frac[k] } else { 1.0 - frac[k] };
        }
        taps.push((level * t + hash_index(&corner, &HASH_PRIMES, t), w));
    }
    (taps, clamped)
}

/// Evaluates hash-grid features for one point from a table of shape
/// `levels·T x F`. Returns the features and whether `x` was clamped.
pub fn encode_hashgrid(x: &[f64], spec: &HashGridSpec, table: &Tensor) -> Result<(Vec<f64>, bool)> {
    let plan = hashgrid_plan(x, x.len(), spec)?;
    let mut tape = Tape::new();
    let tv = tape.constant(table.clone());
    let out = tape.gather(tv, Arc::new(plan.0))?;
    Ok((tape.value(out).data().to_vec(), plan.1 > 0))
}

/// Gather plan for a batch of points (`n x in_dim`, row-major) and the number
/// of points that were clamped into `[-1, 1]`.
pub fn hashgrid_plan(coords: &[f64], in_dim: usize, spec: &HashGridSpec) -> Result<(GatherPlan, usize)> {
    if in_dim == 0 || coords.len() % in_dim != 0 {
        return Err(shape_err("hashgrid", format!("{} values is not a multiple of {in_dim}", coords.len())));
    }
    let n = coords.len() / in_dim;
    let taps = 1usize << in_dim;
    let mut rows = Vec::with_capacity(n * spec.levels * taps);
    let mut weights = Vec::with_capacity(rows.capacity());
    let mut clamped = 0;
    for x in coords.chunks_exact(in_dim) {
        let mut any = false;
        for level in 0..spec.levels {
            let (t, c) = hashgrid_taps(x, spec, level);
            any |= c;
            for (r, w) in t {
                rows.push(r as u32);
                weights.push(w);
            }
        }
        clamped += any as usize;
    }
    Ok((GatherPlan { n_rows: n, groups: spec.levels, taps, rows, weights }, clamped))
}

/// Normalized raster coordinates `(row, col)` in `[-1, 1]`, row-major, as an
/// `h·w x 2` buffer. An axis of length 1 maps to 0.
pub fn grid_coords(height: usize, width: usize) -> Vec<f64> {
    let axis = |i: usize, n: usize| if n > 1 { 2.0 * i as f64 / (n - 1) as f64 - 1.0 } else { 0.0 };
    let mut out = Vec::with_capacity(height * width * 2);
    for r in 0..height {
        for c in 0..width {
            out.push(axis(r, height));
            out.push(axis(c, width));
        }
    }
    out
}

/// 1-D grid of `n` points evenly spaced over `[-1, 1]`.
pub fn line_coords(n: usize) -> Vec<f64> {
    (0..n).map(|i| if n > 1 { 2.0 * i as f64 / (n - 1) as f64 - 1.0 } else { 0.0 }).collect()
}

/// An instantiated encoder with its frozen state.
#[derive(Clone, Debug)]
pub enum Encoder {
    Identity { in_dim: usize },
    Sinusoid(Arc<SinusoidPlan>),
    HashGrid { in_dim: usize, spec: HashGridSpec },
}

impl Encoder {
    /// Builds the encoder; Fourier matrices are drawn from `N(0, σ²)` with the
    /// run seed and then frozen.
    pub fn build(spec: &EncoderSpec, in_dim: usize, seed: u64) -> Result<Self> {
        spec.validate(in_dim)?;
        Ok(match spec.kind {
            EncoderKind::Identity => Encoder::Identity { in_dim },
            EncoderKind::Positional => Encoder::Sinusoid(Arc::new(positional_freqs(in_dim, spec.m, spec.sigma))),
            EncoderKind::Fourier => {
                let mut rng = Rng::new(seed, purpose::FOURIER_B);
                let b = (0..spec.m * in_dim).map(|_| spec.sigma * rng.normal()).collect();
                Encoder::from_fourier_matrix(&Tensor::matrix(spec.m, in_dim, b)?)?
            }
            EncoderKind::HashGrid => Encoder::HashGrid { in_dim, spec: spec.hash.clone() },
        })
    }

    pub fn from_fourier_matrix(b: &Tensor) -> Result<Self> {
        Ok(Encoder::Sinusoid(Arc::new(fourier_plan(b)?)))
    }

    /// The frozen Fourier matrix `B`, when this is a Fourier encoder.
    pub fn fourier_matrix(&self) -> Option<Tensor> {
        match self {
            Encoder::Sinusoid(p) if !p.interleaved => Some(
                Tensor::matrix(p.n_freqs, p.in_dim, p.freqs.iter().map(|f| f / (2.0 * PI)).collect())
                    .expect("plan dims"),
            ),
            _ => None,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Encoder::Identity { in_dim } | Encoder::HashGrid { in_dim, .. } => *in_dim,
            Encoder::Sinusoid(p) => p.in_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Encoder::Identity { in_dim } => *in_dim,
            Encoder::Sinusoid(p) => p.out_dim(),
            Encoder::HashGrid { spec, .. } => spec.levels * spec.features,
        }
    }

    /// Shape of the learnable table, if the encoder has one.
    pub fn table_shape(&self) -> Option<[usize; 2]> {
        match self {
            Encoder::HashGrid { spec, .. } => Some([spec.levels * spec.table_size(), spec.features]),
            _ => None,
        }
    }

    /// Records the encoding of `coords: n x in_dim` on the tape.
    pub fn encode(&self, tape: &mut Tape, coords: Var, table: Option<Var>) -> Result<Var> {
        match self {
            Encoder::Identity { .. } => Ok(coords),
            Encoder::Sinusoid(plan) => tape.sinusoid(coords, plan.clone()),
            Encoder::HashGrid { in_dim, spec } => {
                let table = table.ok_or_else(|| Error::Invalid("hash grid encoder needs its table".into()))?;
                let (plan, _) = hashgrid_plan(tape.value(coords).data(), *in_dim, spec)?;
                tape.gather(table, Arc::new(plan))
            }
        }
    }
}
