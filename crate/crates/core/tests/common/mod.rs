//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use hoin::autodiff::{Tape, Tensor};
use hoin::encoders::EncoderSpec;
use hoin::network::{
    apply_block, ho_hessian_analytic, ho_jacobian_analytic, Activation, BlockKind, Family, Model, ModelSpec,
};
use hoin::rng::Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> Rng {
    Rng::new(seed, "test")
}

pub fn random_vec(r: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| r.uniform(-scale, scale)).collect()
}

pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-300)
}

/// 2-D input, two hidden layers of width 64, scalar output.
pub fn small_model_spec(encoder: EncoderSpec, activation: Activation, block: BlockKind) -> ModelSpec {
    ModelSpec { encoder, in_dim: 2, block, hidden_layers: 2, width: 64, activation, out_dim: 1 }
}

pub fn model_loss(model: &Model, coords: &[f64], target: &[f64]) -> f64 {
    let out = model.forward(coords).unwrap();
    out.data().iter().zip(target).map(|(y, t)| (y - t).powi(2)).sum::<f64>() / target.len() as f64
}

/// Backward-pass gradient of the MSE loss against central differences on
/// `probes` randomly chosen parameter entries; returns the norm-wise
/// relative error.
pub fn model_gradient_error(spec: &ModelSpec, seed: u64, probes: usize) -> f64 {
    let model = Model::build(spec, seed).unwrap();
    let mut r = rng(seed);
    let n = 8;
    let coords = random_vec(&mut r, 2 * n, 0.9);
    let target = random_vec(&mut r, n, 1.0);

    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(n, 2, coords.clone()).unwrap());
    let params = model.register(&mut tape);
    let y = model.forward_on(&mut tape, x, &params).unwrap();
    let t = tape.constant(Tensor::matrix(n, 1, target.clone()).unwrap());
    let loss = tape.mse(y, t).unwrap();
    tape.backward(loss).unwrap();
    let grads: Vec<Tensor> = params.iter().map(|&p| tape.grad_or_zeros(p)).collect();

    // Probe a random tensor, then a random entry the loss depends on; a
    // sparse table would otherwise almost always yield two zeros.
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for _ in 0..probes {
        let k = (r.next_u64() % grads.len() as u64) as usize;
        let live: Vec<usize> = (0..grads[k].numel()).filter(|&i| grads[k].data()[i] != 0.0).collect();
        let flat = if live.is_empty() {
            (r.next_u64() % grads[k].numel() as u64) as usize
        } else {
            live[(r.next_u64() % live.len() as u64) as usize]
        };
        let f = |v: f64| {
            let mut ps = model.params().to_vec();
            ps[k].data_mut()[flat] = v;
            let m = Model::from_parts(spec.clone(), model.encoder().clone(), ps).unwrap();
            model_loss(&m, &coords, &target)
        };
        analytic.push(grads[k].data()[flat]);
        numeric.push(central_diff(f, model.params()[k].data()[flat], FD_STEP));
    }
    rel_err(&analytic, &numeric)
}

/// The standard families, each as a `2-enc-64-64-1` model.
pub fn gradient_cases() -> Vec<(String, ModelSpec)> {
    let mut cases = Vec::new();
    for family in [Family::PosEnc, Family::Ffn, Family::Siren, Family::HashGrid] {
        for block in [BlockKind::Plain, BlockKind::Residual, BlockKind::Ho] {
            let base = family.spec(block, 64, 2, 1);
            let spec = small_model_spec(base.encoder, base.activation, block);
            cases.push((format!("{family:?}/{block:?}"), spec));
        }
    }
    cases
}

/// Pre-activation HO block `g(z)` for one sample.
pub fn ho_pre(z: &[f64], w: &Tensor, b: &[f64]) -> Vec<f64> {
    let n = z.len();
    (0..n)
        .map(|i| {
            let c: f64 = b[i] + (0..n).map(|k| w.data()[i * n + k] * z[k]).sum::<f64>();
            z[i] + c * z[i]
        })
        .collect()
}

/// Jacobian of the HO block rebuilt from one backward pass per output.
pub fn ho_jacobian_autodiff(z: &[f64], w: &Tensor, b: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut jac = vec![0.0; n * n];
    for i in 0..n {
        let mut tape = Tape::new();
        let zv = tape.param(Tensor::matrix(1, n, z.to_vec()).unwrap());
        let wv = tape.constant(w.clone());
        let bv = tape.constant(Tensor::vector(b.to_vec()));
        let g = apply_block(&mut tape, BlockKind::Ho, zv, wv, bv, Activation::Linear).unwrap();
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let ev = tape.constant(Tensor::matrix(1, n, e).unwrap());
        let picked = tape.mul(g, ev).unwrap();
        let s = tape.sum(picked);
        tape.backward(s).unwrap();
        jac[i * n..(i + 1) * n].copy_from_slice(tape.grad_or_zeros(zv).data());
    }
    jac
}

/// Worst errors over `cases` random `(z, W, b)`: analytic Jacobian vs
/// autodiff, and analytic Hessians vs central differences of the analytic
/// Jacobian.
pub fn ho_derivative_errors(cases: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let (mut jac_worst, mut hess_worst) = (0.0f64, 0.0f64);
    for case in 0..cases {
        let n = 1 + case % 6;
        let z = random_vec(&mut r, n, 1.0);
        let w = Tensor::matrix(n, n, random_vec(&mut r, n * n, 1.0)).unwrap();
        let b = random_vec(&mut r, n, 1.0);
        let analytic = ho_jacobian_analytic(&z, &w, &b).unwrap();
        jac_worst = jac_worst.max(rel_err(analytic.data(), &ho_jacobian_autodiff(&z, &w, &b)));

        let hess = ho_hessian_analytic(&w).unwrap();
        for (i, h) in hess.iter().enumerate() {
            let mut numeric = vec![0.0; n * n];
            for k in 0..n {
                let mut zp = z.clone();
                zp[k] += FD_STEP;
                let mut zm = z.clone();
                zm[k] -= FD_STEP;
                let jp = ho_jacobian_analytic(&zp, &w, &b).unwrap();
                let jm = ho_jacobian_analytic(&zm, &w, &b).unwrap();
                for j in 0..n {
                    numeric[j * n + k] = (jp.data()[i * n + j] - jm.data()[i * n + j]) / (2.0 * FD_STEP);
                }
            }
            hess_worst = hess_worst.max(rel_err(h.data(), &numeric));
        }
    }
    (jac_worst, hess_worst)
}

/// `d`-th forward difference of `f` at `x0` with spacing `h`.
pub fn forward_difference(f: &impl Fn(f64) -> f64, x0: f64, h: f64, d: usize) -> f64 {
    let mut binom = 1.0;
    let mut acc = 0.0;
    for j in 0..=d {
        let sign = if (d - j) % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binom * f(x0 + j as f64 * h);
        binom = binom * (d - j) as f64 / (j + 1) as f64;
    }
    acc
}

/// Degree of a scalar polynomial recovered from finite differences: the
/// smallest `d` whose `(d+1)`-th differences vanish at two offsets while
/// the `d`-th ones agree and are non-zero. `None` above `max_degree`.
pub fn degree_probe(f: impl Fn(f64) -> f64, max_degree: usize) -> Option<usize> {
    let h = 0.125;
    let starts = [-0.6, -0.45];
    let scale = (0..=4 * (max_degree + 2)).map(|j| f(-0.6 + j as f64 * h / 2.0).abs()).fold(1.0f64, f64::max);
    for d in 0..=max_degree {
        let high: Vec<f64> = starts.iter().map(|&x| forward_difference(&f, x, h, d + 1)).collect();
        if high.iter().all(|v| v.abs() <= 1e-12 * scale * 2f64.powi(d as i32 + 1)) {
            let lead: Vec<f64> = starts.iter().map(|&x| forward_difference(&f, x, h, d)).collect();
            let nonzero = lead[0].abs() > 1e-6 * scale * h.powi(d as i32);
            let constant = (lead[0] - lead[1]).abs() <= 1e-10 * scale * 2f64.powi(d as i32);
            return (nonzero && constant).then_some(d);
        }
    }
    None
}

/// `k` stacked scalar blocks of one kind with linear activation; the weights
/// stay away from zero so no leading coefficient cancels.
pub fn scalar_stack(kind: BlockKind, k: usize, seed: u64) -> impl Fn(f64) -> f64 {
    let mut r = rng(seed);
    let layers: Vec<(f64, f64)> = (0..k)
        .map(|_| {
            let w = r.uniform(0.5, 1.0) * if r.bernoulli(0.5) { 1.0 } else { -1.0 };
            (w, r.uniform(-0.5, 0.5))
        })
        .collect();
    move |x: f64| {
        let mut tape = Tape::new();
        let mut z = tape.constant(Tensor::matrix(1, 1, vec![x]).unwrap());
        for &(w, b) in &layers {
            let wv = tape.constant(Tensor::matrix(1, 1, vec![w]).unwrap());
            let bv = tape.constant(Tensor::vector(vec![b]));
            z = apply_block(&mut tape, kind, z, wv, bv, Activation::Linear).unwrap();
        }
        tape.value(z).item()
    }
}
