//! Convolutional, normalization, linear and loss primitives.
//!
//! Image-domain convolutions are cross-correlations with zero padding;
//! circular semantics live only in [`crate::spectral`].

mod conv;
mod linear;
mod loss;
mod norm;
mod shuffle;

pub use conv::{conv2d, Conv2dSpec, Padding};
pub use linear::{group_linear, linear};
pub use loss::{global_avg_pool, softmax_cross_entropy};
pub use norm::{layer_norm, LAYER_NORM_EPS};
pub use shuffle::{group_shuffle, shuffle_permutation};
