//! Finite-width mean-field ReLU networks, neural trees and the numerical
//! machinery around their path norms: evaluation, tree conversion, norm
//! functionals, constructive calculus, Maurey subsampling, layer-scaled
//! gradient descent, Rademacher estimators and data generation.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common 64-bit instantiation.

pub mod approx;
pub mod calculus;
pub mod complexity;
pub mod datagen;
mod error;
pub mod io;
mod matrix;
pub mod netcore;
pub mod norms;
mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use netcore::{net_to_tree, tree_to_net, EvalPoint, MeanFieldNet, NeuralTree, RawWeights, Realization};
pub use scalar::Scalar;

pub type Net = MeanFieldNet<f64>;
pub type Tree = NeuralTree<f64>;
pub type Net32 = MeanFieldNet<f32>;
pub type Tree32 = NeuralTree<f32>;
pub type Dataset = datagen::Dataset<f64>;
