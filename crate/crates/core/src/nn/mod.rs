//! Policy/value network with hand-written reverse-mode gradients.
//!
//! Only the operations the architecture needs are implemented: valid 2-D
//! convolution, max pooling, dense layers, ReLU and the sigmoid/linear output
//! head. Every layer stores what its backward pass needs on a [`Tape`].

mod checkpoint;
pub mod gradcheck;
mod model;
mod ops;
mod optim;
mod params;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use model::{ConvMode, NetOutput, NetShape, Network, Tape};
pub use optim::{Adam, Optimizer, Sgd};
pub use params::{Param, ParamStore};

/// Scalar type of the network: `f32` for training, `f64` for gradient checks.
pub trait Real:
    Float + AddAssign + SubAssign + MulAssign + DivAssign + Sum + Debug + Default + Send + Sync + 'static
{
    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Probabilities are clamped to this distance from 0 and 1 before any log
/// or ratio.
pub const PROB_EPS: f64 = 1e-6;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Derivative of [`clamp_prob`]: 1 inside the clamp range, 0 outside.
pub fn clamp_mask(p: f64) -> f64 {
    if (PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        1.0
    } else {
        0.0
    }
}
