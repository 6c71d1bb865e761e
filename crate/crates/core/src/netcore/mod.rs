//! Finite-width mean-field networks, neural trees and the index rearrangements
//! between them.
//!
//! A [`MeanFieldNet`] with widths `(m_1, …, m_L)` evaluates
//!
//! ```text
//! f(x) = 1/m_L Σ a^L_i σ( 1/m_{L-1} Σ a^{L-1}_ij σ( … σ( 1/(d+1) Σ a^0_jk x̃_k ))))
//! ```
//!
//! with `x̃ = (x, 1)`. A [`NeuralTree`] gives every node its own descendant
//! weights and evaluates raw (un-averaged) sums.

mod convert;
mod net;
mod tree;

pub use convert::{net_to_tree, tree_to_net};
pub use net::{MeanFieldNet, RawWeights};
pub use tree::NeuralTree;

use crate::{Error, Result, Scalar};

/// Anything that realizes a function `R^d -> R`.
pub trait Realization<T: Scalar> {
    fn input_dim(&self) -> usize;

    /// Evaluate at `x`; `x` must have length `input_dim()`.
    fn eval(&self, x: &[T]) -> Result<T>;
}

impl<T: Scalar, R: Realization<T> + ?Sized> Realization<T> for &R {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn eval(&self, x: &[T]) -> Result<T> {
        (**self).eval(x)
    }
}

/// A point of the input space. Internally augmented to `(x, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPoint<T>(Vec<T>);

impl<T: Scalar> EvalPoint<T> {
    pub fn new(x: Vec<T>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("evaluation point has non-finite entries".into()));
        }
        Ok(Self(x))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn augmented(&self) -> Vec<T> {
        let mut v = self.0.clone();
        v.push(T::one());
        v
    }
}

impl<T> std::ops::Deref for EvalPoint<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `forward_net` as a free function.
pub fn forward_net<T: Scalar>(net: &MeanFieldNet<T>, x: &EvalPoint<T>) -> Result<T> {
    net.forward(x)
}

/// `forward_tree` as a free function.
pub fn forward_tree<T: Scalar>(tree: &NeuralTree<T>, x: &EvalPoint<T>) -> Result<T> {
    tree.forward(x)
}
