use super::{check_dim, Realization};
use crate::{Error, Result, Scalar};

/// Complete neural tree of depth `L` with raw-sum evaluation.
///
/// With branching `(b_1, …, b_L)`, a hidden neuron at layer `k` is addressed by
/// the index tuple `(i_L, …, i_k)` flattened row-major (`i_L` most significant).
/// Level `ℓ ∈ 1..L` stores `a^ℓ_{i_L…i_ℓ}` with the same addressing as the
/// neurons of layer `ℓ`; level `L` is the outer vector; level 0 stores
/// `a^0_{i_L…i_1 i_0}` with `i_0 ∈ 0..=d` as the fastest index.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralTree<T> {
    input_dim: usize,
    branching: Vec<usize>,
    levels: Vec<Vec<T>>,
}

impl<T: Scalar> NeuralTree<T> {
    pub fn new(input_dim: usize, branching: Vec<usize>, levels: Vec<Vec<T>>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Shape("input_dim must be at least 1".into()));
        }
        let depth = branching.len();
        if depth == 0 {
            return Err(Error::Shape("depth must be at least 1".into()));
        }
        if branching.contains(&0) {
            return Err(Error::Shape("branching factors must be positive".into()));
        }
        if levels.len() != depth + 1 {
            return Err(Error::Shape(format!(
                "expected {} weight levels, got {}",
                depth + 1,
                levels.len()
            )));
        }
        let tree = Self {
            input_dim,
            branching,
            levels,
        };
        for (l, w) in tree.levels.iter().enumerate() {
            let expected = tree.level_len(l);
            if w.len() != expected {
                return Err(Error::Shape(format!(
                    "level {l} has {} weights, expected {expected}",
                    w.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("level {l} has non-finite entries")));
            }
        }
        Ok(tree)
    }

    pub fn zeros(input_dim: usize, branching: Vec<usize>) -> Result<Self> {
        let depth = branching.len();
        let mut levels = Vec::with_capacity(depth + 1);
        for l in 0..=depth {
            levels.push(vec![T::zero(); Self::len_for(input_dim, &branching, l)]);
        }
        Self::new(input_dim, branching, levels)
    }

    fn len_for(input_dim: usize, branching: &[usize], level: usize) -> usize {
        if level == 0 {
            branching.iter().product::<usize>() * (input_dim + 1)
        } else {
            branching[level - 1..].iter().product()
        }
    }

    /// Number of neurons in hidden layer `k ∈ 1..=L`: `Π_{j ≥ k} b_j`.
    pub fn layer_size(&self, k: usize) -> usize {
        self.branching[k - 1..].iter().product()
    }

    pub fn level_len(&self, level: usize) -> usize {
        Self::len_for(self.input_dim, &self.branching, level)
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.branching.len()
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn branching(&self) -> &[usize] {
        &self.branching
    }

    pub fn level(&self, level: usize) -> &[T] {
        &self.levels[level]
    }

    pub fn level_mut(&mut self, level: usize) -> &mut [T] {
        &mut self.levels[level]
    }

    pub fn levels(&self) -> &[Vec<T>] {
        &self.levels
    }

    pub fn num_weights(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Raw-sum nested evaluation over tree indices; cost `O(num_weights)`.
    pub fn forward(&self, x: &[T]) -> Result<T> {
        check_dim(self.input_dim, x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[T]) -> T {
        let d = self.input_dim;
        let a0 = &self.levels[0];
        let mut h: Vec<T> = a0
            .chunks_exact(d + 1)
            .map(|w| {
                let mut z = w[d];
                for k in 0..d {
                    z += w[k] * x[k];
                }
                z.relu()
            })
            .collect();
        for k in 2..=self.depth() {
            let b = self.branching[k - 2];
            let a = &self.levels[k - 1];
            h = a
                .chunks_exact(b)
                .zip(h.chunks_exact(b))
                .map(|(w, hv)| {
                    let mut z = T::zero();
                    for (&wi, &hi) in w.iter().zip(hv) {
                        z += wi * hi;
                    }
                    z.relu()
                })
                .collect();
        }
        let outer = &self.levels[self.depth()];
        let mut out = T::zero();
        for (&w, &hv) in outer.iter().zip(&h) {
            out += w * hv;
        }
        out
    }
}

impl<T: Scalar> Realization<T> for NeuralTree<T> {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn eval(&self, x: &[T]) -> Result<T> {
        self.forward(x)
    }
}
