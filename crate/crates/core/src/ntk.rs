//! Empirical neural tangent kernels and their spectra.

use rayon::prelude::*;

use crate::autodiff::{Tape, Tensor};
use crate::error::{shape_err, Error, Result};
use crate::network::{Model, ModelSpec};

pub const MAX_NTK_SAMPLES: usize = 1024;

/// Row-major symmetric `n x n` kernel over `n` input points.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub n: usize,
    pub k: Vec<f64>,
    pub coords: Vec<f64>,
}

impl KernelMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

/// Flattened parameter gradient `∂F(x_i)/∂θ` for every input point, one
/// backward pass each. Requires a scalar-output model.
pub fn per_sample_gradients(model: &Model, coords: &[f64]) -> Result<Vec<Vec<f64>>> {
    let spec = model.spec();
    if spec.out_dim != 1 {
        return Err(Error::Invalid(format!("the kernel needs a scalar-output model, got out_dim {}", spec.out_dim)));
    }
    let d = spec.in_dim;
    if coords.len() % d != 0 || coords.is_empty() {
        return Err(shape_err("ntk", format!("{} coordinate values for input dim {d}", coords.len())));
    }
    let n = coords.len() / d;
    if n > MAX_NTK_SAMPLES {
        return Err(Error::Invalid(format!("at most {MAX_NTK_SAMPLES} points, got {n}")));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::matrix(1, d, coords[i * d..(i + 1) * d].to_vec())?);
            let params = model.register(&mut tape);
            let out = model.forward_on(&mut tape, x, &params)?;
            let s = tape.sum(out);
            tape.backward(s)?;
            Ok(params.iter().flat_map(|&p| tape.grad_or_zeros(p).into_data()).collect())
        })
        .collect()
}

/// `K_ij = ⟨∂F(x_i)/∂θ, ∂F(x_j)/∂θ⟩` at the model's current parameters.
pub fn ntk_matrix(model: &Model, coords: &[f64]) -> Result<KernelMatrix> {
    let g = per_sample_gradients(model, coords)?;
    let n = g.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v: f64 = g[i].iter().zip(&g[j]).map(|(a, b)| a * b).sum();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    Ok(KernelMatrix { n, k, coords: coords.to_vec() })
}

/// Kernel averaged over independent initializations, one per seed.
pub fn ntk_matrix_averaged(spec: &ModelSpec, coords: &[f64], seeds: &[u64]) -> Result<KernelMatrix> {
    if seeds.is_empty() {
        return Err(Error::Invalid("need at least one seed".into()));
    }
    let mut acc: Option<KernelMatrix> = None;
    for &seed in seeds {
        let k = ntk_matrix(&Model::build(spec, seed)?, coords)?;
        match acc.as_mut() {
            None => acc = Some(k),
            Some(a) => a.k.iter_mut().zip(&k.k).for_each(|(x, y)| *x += y),
        }
    }
    let mut k = acc.expect("non-empty seeds");
    let inv = 1.0 / seeds.len() as f64;
    k.k.iter_mut().for_each(|v| *v *= inv);
    Ok(k)
}

/// Eigenpairs of a symmetric matrix; eigenvalues descending, eigenvector `j`
/// in column `j` of the row-major `v`.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm falls below
/// `1e-12·‖K‖_F`.
pub fn eig_symmetric(k: &[f64], n: usize) -> Result<Eigen> {
    if k.len() != n * n {
        return Err(shape_err("eig_symmetric", format!("{} values for {n}x{n}", k.len())));
    }
    let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (k[i * n + j] - k[j * n + i]).abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Invalid(format!("matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    let mut a = k.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-12 * norm;
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > tol {
        sweeps += 1;
        if sweeps > 100 {
            return Err(Error::Invalid("Jacobi iteration did not converge".into()));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let (x, y) = (a[r * n + p], a[r * n + q]);
                    a[r * n + p] = c * x - s * y;
                    a[r * n + q] = s * x + c * y;
                }
                for r in 0..n {
                    let (x, y) = (a[p * n + r], a[q * n + r]);
                    a[p * n + r] = c * x - s * y;
                    a[q * n + r] = s * x + c * y;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    let (x, y) = (v[r * n + p], v[r * n + q]);
                    v[r * n + p] = c * x - s * y;
                    v[r * n + q] = s * x + c * y;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + dst] = v[r * n + src];
        }
    }
    Ok(Eigen { values, vectors })
}

/// `Σ_{|i-j| ≤ w} |K_ij| / Σ_ij |K_ij|`.
pub fn diag_dominance(k: &[f64], n: usize, w: usize) -> f64 {
    let mut near = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = k[i * n + j].abs();
            total += v;
            if i.abs_diff(j) <= w {
                near += v;
            }
        }
    }
    if total == 0.0 {
        1.0
    } else {
        near / total
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumStats {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub bandwidth: usize,
    pub diag_energy_ratio: f64,
}

impl SpectrumStats {
    pub fn compute(kernel: &KernelMatrix, bandwidth: usize) -> Result<Self> {
        if bandwidth >= kernel.n {
            return Err(Error::Invalid(format!("bandwidth {bandwidth} must be below n = {}", kernel.n)));
        }
        let eig = eig_symmetric(&kernel.k, kernel.n)?;
        Ok(Self {
            eigenvalues: eig.values,
            bandwidth,
            diag_energy_ratio: diag_dominance(&kernel.k, kernel.n, bandwidth),
        })
    }

    pub fn count_above(&self, threshold: f64) -> usize {
        self.eigenvalues.iter().filter(|&&e| e > threshold).count()
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let max = self.eigenvalues.first().copied().unwrap_or(0.0);
        let min = self.eigenvalues.last().copied().unwrap_or(0.0);
        format!(
            "n = {}\nbandwidth = {}\ndiag_energy_ratio = {}\ncount_above_10 = {}\nmax_eigenvalue = {}\nmin_eigenvalue = {}\ntrace = {}\n",
            self.eigenvalues.len(),
            self.bandwidth,
            self.diag_energy_ratio,
            self.count_above(10.0),
            max,
            min,
            self.eigenvalues.iter().sum::<f64>(),
        )
    }
}
