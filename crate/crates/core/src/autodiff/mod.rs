//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod adam;
mod gemm;
mod sparse;
mod tape;
mod tensor;

pub use adam::Adam;
pub use sparse::CsrMatrix;
pub use tape::{Elementwise, GatherPlan, SinusoidPlan, Tape, Unary, Var};
pub use tensor::Tensor;
