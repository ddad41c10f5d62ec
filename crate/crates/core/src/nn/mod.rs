//! A small, dependency-light MLP engine sized for implicit surface networks:
//! residual SiLU stacks, positional encoding, exact reverse-mode gradients,
//! forward-mode input Jacobians, AdamW, fp16 quantization and the on-disk
//! container.

mod container;
mod encoding;
mod mlp;
mod optim;
mod quant;

use std::fmt::{Debug, Display};

use nalgebra::Matrix3;
use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use thiserror::Error;

use crate::mesh::Vec3;

pub use container::{
    deserialize, serialize, CompressedModel, FormatError, Smoothing, StoredMlp, FORMAT_VERSION,
    HEADER_LEN, MAGIC,
};
pub use encoding::{encode_batch, positional_encode};
pub use mlp::{Dense, Gradients, Mlp, MlpArchitecture};
pub use optim::{cosine_lr, AdamWConfig, OptimizerState};
pub use quant::{dequantize_value, quantize, quantize_value, HalfMlp};

/// Floating-point type the network can be instantiated with.
pub trait Real:
    Float
    + FromPrimitive
    + LinalgScalar
    + num_traits::NumAssignOps
    + ScalarOperand
    + Default
    + Send
    + Sync
    + Debug
    + Display
    + std::iter::Sum
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }

    fn to_f64_lossless(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("parameter {index} of layer {layer} ({value}) does not fit in binary16")]
    Fp16Overflow { layer: usize, index: usize, value: f32 },
}

/// A smooth map from the unit sphere into R^3 (the coarse network, or an
/// analytic stand-in for it in tests).
pub trait SurfaceMap: Sync {
    fn eval(&self, p: &Vec3) -> Vec3;

    /// d(output)/d(input) at `p`.
    fn jacobian(&self, p: &Vec3) -> Matrix3<f64>;

    fn eval_many(&self, points: &[Vec3]) -> Vec<Vec3> {
        use rayon::prelude::*;
        points.par_iter().map(|p| self.eval(p)).collect()
    }
}
