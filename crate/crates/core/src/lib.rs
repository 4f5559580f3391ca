//! Dual-domain token mixing for vision backbones.
//!
//! The crate alternates an image-domain large-kernel filter (depthwise +
//! dilated depthwise + 1x1 convolution with channel group shuffles) with a
//! Fourier-domain channel mask, and assembles these filters into the
//! lightweight AFIDAF / AFIDAF-T networks and the hierarchical HAFIDAF
//! network. Everything runs on a small tape-based reverse-mode autodiff
//! engine so the whole stack can be gradient-checked in `f64`.
//!
//! Module map:
//!
//! * [`tensor`]: dense tensors, the autodiff [`tensor::Tape`] and the
//!   finite-difference [`tensor::grad_check`].
//! * [`spectral`]: real 2D FFT over the spatial plane and convolution-theorem
//!   utilities.
//! * [`ops`]: convolutions, group shuffle, layer norm, linear layers, pooling
//!   and the cross-entropy loss.
//! * [`blocks`]: image filter, Fourier mask, Fourier convolution, GSMLP and
//!   the composite AFIDAF / HAFIDAF blocks.
//! * [`params`]: the named parameter store and weight initialization.
//! * [`models`]: network assembly and parameter/FLOP counting.
//! * [`train`]: AdamW, cosine schedule, synthetic data and the training loop.
//! * [`container`]: the `AFWT` weight file format.
//! * [`verify`]: self-check suites used by `afidaf verify`.

pub mod blocks;
pub mod container;
pub mod error;
pub mod models;
pub mod ops;
pub mod params;
pub mod spectral;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{DType, Scalar, Tape, Tensor, Var};
