//! Interleaved group convolutions from first principles.
//!
//! An IGC block is a primary spatial group convolution (`L` partitions of `M`
//! channels), a fixed channel interleave, a secondary point-wise group
//! convolution (`M` partitions of `L` channels) and the inverse interleave.
//! The block is equivalent to one dense convolution whose kernel is the
//! product of two block-diagonal factors and two permutations.
//!
//! Layout of the crate:
//!
//! * [`tensor`], [`linalg`], [`conv`], [`layers`]: a small dense engine with
//!   hand-written forward and backward passes.
//! * [`block`]: the IGC block, its interleave and the GPC alternative.
//! * [`algebra`]: explicit sparse factors, the composed dense kernel and the
//!   constructions that express regular convolution, summation fusion and the
//!   channel-wise extreme as IGC instances.
//! * [`budget`]: parameter, width and multiply-add accounting.
//! * [`net`]: network families, SGD training and evaluation.
//! * [`data`]: CIFAR binary ingestion, augmentation, synthetic data and
//!   checkpoints.

pub mod algebra;
pub mod block;
pub mod budget;
pub mod conv;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod linalg;
pub mod net;
pub mod par;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Matrix, Precision, Scalar, Tensor};
