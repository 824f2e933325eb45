//! The three block families and exact derivatives of the high-order block.
//!
//! With `C(z) = W z + b`:
//!
//! | block    | output                      |
//! |----------|-----------------------------|
//! | plain    | `φ(C(z))`                   |
//! | residual | `φ(z + C(z))`               |
//! | HO       | `φ(z + C(z) ⊙ z)`           |
//!
//! The HO form is `φ((J + C z) ⊙ z)` with `J` the all-ones matrix, written
//! out per component.

use crate::autodiff::{Tape, Tensor, Unary, Var};
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Plain,
    Residual,
    Ho,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    /// `sin(w0 · u)`
    Sine { w0: f64 },
    Linear,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, u: Var) -> Var {
        match self {
            Activation::Relu => tape.unary(u, Unary::Relu),
            Activation::Sine { w0 } => tape.unary(u, Unary::Sin { w0 }),
            Activation::Linear => u,
        }
    }
}

fn square_weight(tape: &Tape, w: Var, op: &'static str) -> Result<usize> {
    match tape.value(w).shape() {
        [r, c] if r == c => Ok(*r),
        s => Err(shape_err(op, format!("weight must be square, got {s:?}"))),
    }
}

/// `φ(W z + b)` for a batch `z: n x d_in`.
pub fn block_plain(tape: &mut Tape, z: Var, w: Var, b: Var, act: Activation) -> Result<Var> {
    let c = tape.linear(z, w, Some(b))?;
    Ok(act.apply(tape, c))
}

/// `φ(z + W z + b)`.
pub fn block_residual(tape: &mut Tape, z: Var, w: Var, b: Var, act: Activation) -> Result<Var> {
    square_weight(tape, w, "block_residual")?;
    let c = tape.linear(z, w, Some(b))?;
    let s = tape.add(z, c)?;
    Ok(act.apply(tape, s))
}

/// `φ(z + (W z + b) ⊙ z)`. A non-finite output is reported as divergence.
pub fn block_ho(tape: &mut Tape, z: Var, w: Var, b: Var, act: Activation) -> Result<Var> {
    square_weight(tape, w, "block_ho")?;
    let c = tape.linear(z, w, Some(b))?;
    let h = tape.mul(c, z)?;
    let s = tape.add(z, h)?;
    let out = act.apply(tape, s);
    if !tape.value(out).all_finite() {
        return Err(Error::Divergence("high-order block produced a non-finite value".into()));
    }
    Ok(out)
}

pub fn apply_block(tape: &mut Tape, kind: BlockKind, z: Var, w: Var, b: Var, act: Activation) -> Result<Var> {
    match kind {
        BlockKind::Plain => block_plain(tape, z, w, b, act),
        BlockKind::Residual => block_residual(tape, z, w, b, act),
        BlockKind::Ho => block_ho(tape, z, w, b, act),
    }
}

fn check_square(w: &Tensor, op: &'static str) -> Result<usize> {
    match w.shape() {
        [r, c] if r == c => Ok(*r),
        s => Err(shape_err(op, format!("weight must be square, got {s:?}"))),
    }
}

/// Jacobian of the pre-activation HO block `g(z) = z + (W z + b) ⊙ z`:
/// `∂g_i/∂z_j = W_ij z_i + δ_ij (1 + (W z + b)_i)`.
///
/// In the scalar case this is `1 + b + 2 w z`, i.e. `C ⊙ z + C z + J`.
pub fn ho_jacobian_analytic(z: &[f64], w: &Tensor, b: &[f64]) -> Result<Tensor> {
    let n = check_square(w, "ho_jacobian")?;
    if z.len() != n || b.len() != n {
        return Err(shape_err("ho_jacobian", format!("z len {}, b len {}, W {n}x{n}", z.len(), b.len())));
    }
    let wd = w.data();
    let mut jac = vec![0.0; n * n];
    for i in 0..n {
        let c_i: f64 = b[i] + (0..n).map(|k| wd[i * n + k] * z[k]).sum::<f64>();
        for j in 0..n {
            jac[i * n + j] = wd[i * n + j] * z[i];
        }
        jac[i * n + i] += 1.0 + c_i;
    }
    Tensor::matrix(n, n, jac)
}

/// Per-output Hessians of the pre-activation HO block:
/// `∂²g_i/∂z_j∂z_k = W_ij δ_ik + W_ik δ_ij`, independent of `z` and `b`.
/// In the scalar case this is `2w`.
pub fn ho_hessian_analytic(w: &Tensor) -> Result<Vec<Tensor>> {
    let n = check_square(w, "ho_hessian")?;
    let wd = w.data();
    (0..n)
        .map(|i| {
            let mut h = vec![0.0; n * n];
            for j in 0..n {
                h[j * n + i] += wd[i * n + j];
                h[i * n + j] += wd[i * n + j];
            }
            Tensor::matrix(n, n, h)
        })
        .collect()
}

/// Jacobian of the pre-activation plain block: `W`.
pub fn plain_jacobian_analytic(w: &Tensor) -> Tensor {
    w.clone()
}

/// Jacobian of the pre-activation residual block: `W + I`.
pub fn residual_jacobian_analytic(w: &Tensor) -> Result<Tensor> {
    let n = check_square(w, "residual_jacobian")?;
    let mut j = w.clone();
    for i in 0..n {
        j.data_mut()[i * n + i] += 1.0;
    }
    Ok(j)
}
