//! BiLSTM-CRF tagger with a character-level CNN.
//!
//! Per token the network concatenates a word embedding with a character
//! representation (character embeddings, a width-`k` convolution, max-pooling
//! over positions), runs a forward and a backward LSTM over the sequence,
//! projects the concatenated hidden states to per-tag emission scores and
//! decodes with a linear-chain CRF.
//!
//! Computation is generic over [`Scalar`] so that the same code runs in `f32`
//! for training and inference and in `f64` for gradient checking.

pub mod crf;
pub mod kernels;
mod model;
pub mod network;
mod params;

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

pub use crf::{CrfGradient, CrfView, Emissions};
pub use model::TaggerModel;
pub use network::{batch_loss_and_gradient, log_loss, log_loss_and_gradient, ForwardCache};
pub use params::{
    init_params, FrozenMask, Gradients, Hyperparams, Layers, LstmParams, Params, SparseRows, Tensor,
    FORBIDDEN_SCORE, TENSOR_NAMES,
};

/// Floating-point element type of parameters and activations.
pub trait Scalar:
    num_traits::Float + AddAssign + SubAssign + MulAssign + Default + Debug + Send + Sync + 'static
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
