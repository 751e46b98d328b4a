//! Learned pose descriptors for rendered depth/intensity patches.
//!
//! The pipeline turns procedurally generated objects into template and
//! training patches rendered from viewpoints on an icosphere hemisphere,
//! trains a small convolutional network with a triplet + pair objective so
//! that descriptor distances mirror pose differences, and evaluates nearest
//! neighbour retrieval against a stacked HOG baseline.
//!
//! Modules follow the data flow:
//!
//! * [`tensor`], [`net`] - dense tensors, network layers, optimizer, checkpoints
//! * [`loss`] - the triplet ratio / pair objective and its gradients
//! * [`scene`] - icosphere viewpoints, procedural meshes, rendering, noise,
//!   patch normalization and dataset generation
//! * [`trainer`] - mini batch assembly, bootstrapping and the training loop
//! * [`retrieval`] - descriptor databases, k-NN queries and evaluation metrics
//! * [`hog`] - the stacked HOG baseline descriptor
//! * [`config`], [`pipeline`] - run configuration and the CLI entry points

pub mod config;
pub mod error;
pub mod gradcheck;
pub mod hog;
pub mod imageio;
pub mod loss;
pub mod net;
pub mod pipeline;
pub mod retrieval;
pub mod rng;
pub mod scene;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
