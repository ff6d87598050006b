//! Synthetic testbed for relational composition in vector representations.
//!
//! The crate builds ground-truth sparse feature models, composes them with
//! matrix, tensor, binary and multi-token binding mechanisms, and runs the
//! dictionary-learning, echo-detection, probing and steering experiments that
//! measure how those mechanisms interact with linear feature recovery.

pub mod binding;
pub mod capacity_bench;
pub mod dict_learning;
pub mod echo_analysis;
pub mod error;
pub mod experiments;
pub mod feature_space;
pub mod linalg;
pub mod relational;
pub mod rng;
pub mod stats;
pub mod steering_lab;

pub use error::{Error, Result};

/// Dense real vector used for every representation.
pub type Vector = nalgebra::DVector<f64>;
