//! BMNet: a shallow 1-D convolutional classifier over region-of-interest
//! feature vectors, with an optional factorized bilinear pooling stage and
//! metric-learning auxiliary losses, plus the training, evaluation, and
//! experiment machinery around it.
//!
//! The crate is self-contained: tensors and reverse-mode autodiff live in
//! [`tensor`], the network in [`model`], objectives in [`losses`], batch and
//! pair/triplet construction in [`mining`], SGD in [`optim`], dataset
//! handling in [`data`], metrics and statistical tests in [`eval`], and the
//! reproducible experiment harness in [`experiment`].

pub mod data;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod losses;
pub mod mining;
pub mod model;
pub mod optim;
pub mod tensor;
