//! Hybrid quantum-classical attention CNN for tumor image classification.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`nn`]: dense tensors and classical layers with manual backprop.
//! - [`qsim`]: exact statevector simulation of the amplitude-embedded,
//!   strongly entangling circuits, with adjoint gradients.
//! - [`attention`]: channel then multi-scale spatial attention.
//! - [`model`]: the end-to-end hybrid network, its classical counterpart and checkpoints.
//! - [`loss`], [`optim`], [`train`]: composite loss, AdamW, clipping, plateau scheduler, training loop.
//! - [`data`]: synthetic dataset generation, PGM/CSV ingestion, augmentation.
//! - [`eval`]: classification report, attention Jaccard, Wilcoxon comparison, embedding export.
//! - [`cli`]: command implementations behind the `hqcm` binary.

pub mod attention;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod nn;
pub mod optim;
pub mod qsim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
