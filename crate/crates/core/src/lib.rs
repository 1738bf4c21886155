//! Modeling toolkit for catalytic steam reforming of tar compounds.

// `!(a > b)` is used on purpose so that NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod rng;
pub mod xrd;
pub mod regressors;
pub mod metrics;
pub mod swarm;
pub mod tuner;
pub mod shap;
pub mod stats;
pub mod synth;
