//! Dense tensor algebra under changes of basis, metric machinery, tensor
//! fields with vector-calculus operators, curvilinear coordinate charts and an
//! Einstein index-notation checker.
//!
//! Everything is generic over the scalar type ([`Real`], implemented for `f32`
//! and `f64`); the aliases below fix it to `f64` or `f32`. Public tensor
//! indices are 1-based; component storage lists upper slots first, then lower
//! slots, in row-major order.

// NaN must fail the positivity and tolerance checks, hence `!(a <= b)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod curvilinear;
pub mod error;
pub mod field;
pub mod formula;
pub mod frames;
pub mod index_lang;
pub mod linalg;
pub mod metric;
pub mod scalar;
pub mod tensor;

pub use curvilinear::{Chart, ChartSpec, ChristoffelArray};
pub use error::{Error, Result};
pub use field::{DifferentiationScheme, FdOrder, Geometry, TensorField};
pub use frames::{Basis, BilinearForm, CartesianSystem};
pub use linalg::Matrix;
pub use metric::Metric;
pub use scalar::Real;
pub use tensor::{DenseTensor, Direction, TransitionPair, Valency, MAX_ORDER};

pub type Tensor = DenseTensor<f64>;
pub type Tensor32 = DenseTensor<f32>;
pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Pair64 = TransitionPair<f64>;
pub type Pair32 = TransitionPair<f32>;
pub type Metric64 = Metric<f64>;
pub type Metric32 = Metric<f32>;
pub type Field64 = TensorField<f64>;
pub type Field32 = TensorField<f32>;
pub type Chart64 = Chart<f64>;
pub type Chart32 = Chart<f32>;
