//! Coordinate networks built from plain, residual and high-order blocks.

mod blocks;
mod model;

pub use blocks::{
    apply_block, block_ho, block_plain, block_residual, ho_hessian_analytic, ho_jacobian_analytic,
    plain_jacobian_analytic, residual_jacobian_analytic, Activation, BlockKind,
};
pub use model::{Family, Model, ModelSpec};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};
    use crate::encoders::EncoderSpec;
    use crate::error::Error;

    fn scalar_block(kind: BlockKind, z: f64, w: f64, b: f64, act: Activation) -> (f64, f64) {
        let mut t = Tape::new();
        let zv = t.param(Tensor::matrix(1, 1, vec![z]).unwrap());
        let wv = t.constant(Tensor::matrix(1, 1, vec![w]).unwrap());
        let bv = t.constant(Tensor::vector(vec![b]));
        let out = apply_block(&mut t, kind, zv, wv, bv, act).unwrap();
        let s = t.sum(out);
        t.backward(s).unwrap();
        (t.value(out).item(), t.grad(zv).unwrap().item())
    }

    #[test]
    fn plain_block_examples() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::matrix(1, 3, vec![0.3, -1.0, 2.0]).unwrap());
        let mut eye = Tensor::zeros(vec![3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        let w = t.constant(eye);
        let b = t.constant(Tensor::zeros(vec![3]));
        let y = block_plain(&mut t, z, w, b, Activation::Linear).unwrap();
        assert_eq!(t.value(y).data(), &[0.3, -1.0, 2.0]);

        let z = t.constant(Tensor::matrix(1, 1, vec![2.0]).unwrap());
        let w = t.constant(Tensor::matrix(2, 1, vec![1.0, -1.0]).unwrap());
        let b = t.constant(Tensor::zeros(vec![2]));
        let y = block_plain(&mut t, z, w, b, Activation::Relu).unwrap();
        assert_eq!(t.value(y).data(), &[2.0, 0.0]);
    }

    #[test]
    fn residual_block_examples() {
        assert_eq!(scalar_block(BlockKind::Residual, 0.7, 0.0, 0.0, Activation::Linear).0, 0.7);
        let (y, dy) = scalar_block(BlockKind::Residual, 2.0, 3.0, 1.0, Activation::Linear);
        assert_eq!(y, 9.0);
        assert_eq!(dy, 4.0);
    }

    #[test]
    fn ho_block_examples() {
        assert_eq!(scalar_block(BlockKind::Ho, -0.4, 0.0, 0.0, Activation::Linear).0, -0.4);
        let (y, dy) = scalar_block(BlockKind::Ho, 2.0, 3.0, 1.0, Activation::Linear);
        assert_eq!(y, 16.0);
        assert_eq!(dy, 14.0);
    }

    #[test]
    fn square_weight_required() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let w = t.constant(Tensor::zeros(vec![3, 2]));
        let b = t.constant(Tensor::zeros(vec![3]));
        assert!(matches!(block_residual(&mut t, z, w, b, Activation::Linear), Err(Error::Shape { .. })));
        assert!(matches!(block_ho(&mut t, z, w, b, Activation::Linear), Err(Error::Shape { .. })));
        assert!(ho_jacobian_analytic(&[1.0, 2.0], &Tensor::zeros(vec![3, 2]), &[0.0; 3]).is_err());
    }

    #[test]
    fn ho_block_overflow_is_divergence() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::matrix(1, 1, vec![1e200]).unwrap());
        let w = t.constant(Tensor::matrix(1, 1, vec![1e200]).unwrap());
        let b = t.constant(Tensor::zeros(vec![1]));
        assert!(matches!(block_ho(&mut t, z, w, b, Activation::Linear), Err(Error::Divergence(_))));
    }

    #[test]
    fn analytic_derivative_examples() {
        let w = Tensor::matrix(1, 1, vec![3.0]).unwrap();
        let j = ho_jacobian_analytic(&[2.0], &w, &[1.0]).unwrap();
        assert_eq!(j.item(), 14.0);
        let h = ho_hessian_analytic(&w).unwrap();
        assert_eq!(h[0].item(), 6.0);

        let zero = Tensor::zeros(vec![3, 3]);
        let j = ho_jacobian_analytic(&[0.5, -0.2, 0.9], &zero, &[0.0; 3]).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(j.data()[i * 3 + k], if i == k { 1.0 } else { 0.0 });
            }
        }
        assert!(ho_hessian_analytic(&zero).unwrap().iter().all(|h| h.data().iter().all(|&v| v == 0.0)));
        assert_eq!(residual_jacobian_analytic(&w).unwrap().item(), 4.0);
        assert_eq!(plain_jacobian_analytic(&w).item(), 3.0);
    }

    fn plain_spec(encoder: EncoderSpec, widths: usize, hidden: usize, out: usize) -> ModelSpec {
        ModelSpec {
            encoder,
            in_dim: 2,
            block: BlockKind::Plain,
            hidden_layers: hidden,
            width: widths,
            activation: Activation::Relu,
            out_dim: out,
        }
    }

    #[test]
    fn build_is_deterministic() {
        for family in [Family::Siren, Family::PosEnc, Family::Ffn] {
            let spec = family.spec(BlockKind::Ho, 16, 3, 3);
            let a = Model::build(&spec, 9).unwrap();
            let b = Model::build(&spec, 9).unwrap();
            assert_eq!(a.params(), b.params());
            let c = Model::build(&spec, 10).unwrap();
            assert_ne!(a.params(), c.params());
        }
    }

    #[test]
    fn parameter_count_closed_form() {
        let spec = plain_spec(EncoderSpec::positional(), 256, 3, 3);
        let enc = spec.encoded_dim();
        let want = 256 * (enc + 1) + 2 * 256 * 257 + 3 * 257;
        assert_eq!(spec.param_count(), want);
        assert_eq!(Model::build(&spec, 0).unwrap().param_count(), want);

        let hashed = ModelSpec { encoder: EncoderSpec::hashgrid(), ..spec };
        assert_eq!(Model::build(&hashed, 0).unwrap().param_count(), hashed.param_count());
    }

    #[test]
    fn init_bounds_follow_activation() {
        let spec = Family::Siren.spec(BlockKind::Plain, 64, 2, 1);
        let m = Model::build(&spec, 1).unwrap();
        let first = m.params()[0].data();
        assert!(first.iter().all(|v| v.abs() <= 1.0 / 2.0));
        let hidden = m.params()[2].data();
        let bound = (6.0f64 / 64.0).sqrt() / 30.0;
        assert!(hidden.iter().all(|v| v.abs() <= bound));
        assert!(hidden.iter().any(|v| v.abs() > 0.5 * bound));
    }

    #[test]
    fn zero_weights_give_bias_output() {
        let spec = plain_spec(EncoderSpec::positional(), 8, 2, 2);
        let mut m = Model::build(&spec, 0).unwrap();
        let n = m.params().len();
        for p in m.params_mut()[..n - 1].iter_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let head_bias = m.params()[n - 1].data().to_vec();
        let out = m.forward(&[0.1, 0.2, -0.7, 0.4]).unwrap();
        assert_eq!(out.data(), [head_bias.clone(), head_bias].concat().as_slice());
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = plain_spec(EncoderSpec::identity(), 8, 0, 1);
        assert!(matches!(Model::build(&spec, 0), Err(Error::InvalidSpec(_))));
        spec.hidden_layers = 1;
        spec.activation = Activation::Sine { w0: -1.0 };
        assert!(Model::build(&spec, 0).is_err());
    }
}
