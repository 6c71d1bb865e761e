use super::{check_dim, Realization};
use crate::{Error, Matrix, Result, Scalar};

/// Finite-width mean-field ReLU network with `L` hidden layers.
///
/// Layer `ℓ` for `0 ≤ ℓ < L` is the matrix `a^ℓ` of shape `m_{ℓ+1} × m_ℓ`
/// (with `m_0 = d + 1`, the last input column being the bias). Layer `L` is
/// the outer vector `a^L` of length `m_L`. Every layer sum is divided by its
/// fan-in.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldNet<T> {
    input_dim: usize,
    hidden: Vec<Matrix<T>>,
    outer: Vec<T>,
}

/// Weights of the same function with the `1/fan-in` factors folded in, i.e.
/// evaluated with raw sums.
#[derive(Clone, Debug, PartialEq)]
pub struct RawWeights<T> {
    pub hidden: Vec<Matrix<T>>,
    pub outer: Vec<T>,
}

impl<T: Scalar> MeanFieldNet<T> {
    pub fn new(input_dim: usize, hidden: Vec<Matrix<T>>, outer: Vec<T>) -> Result<Self> {
        let net = Self {
            input_dim,
            hidden,
            outer,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Shape("input_dim must be at least 1".into()));
        }
        if self.hidden.is_empty() {
            return Err(Error::Shape("depth must be at least 1".into()));
        }
        let mut fan_in = self.input_dim + 1;
        for (l, a) in self.hidden.iter().enumerate() {
            if a.rows() == 0 {
                return Err(Error::Shape(format!("layer {l} has zero width")));
            }
            if a.cols() != fan_in {
                return Err(Error::Shape(format!(
                    "layer {l} has {} columns, expected {fan_in}",
                    a.cols()
                )));
            }
            if !a.is_finite() {
                return Err(Error::Shape(format!("layer {l} has non-finite entries")));
            }
            fan_in = a.rows();
        }
        if self.outer.len() != fan_in {
            return Err(Error::Shape(format!(
                "outer layer has length {}, expected {fan_in}",
                self.outer.len()
            )));
        }
        if self.outer.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("outer layer has non-finite entries".into()));
        }
        Ok(())
    }

    /// Build from raw-sum weights by multiplying each layer with its fan-in.
    pub fn from_raw(input_dim: usize, raw: RawWeights<T>) -> Result<Self> {
        let RawWeights { mut hidden, mut outer } = raw;
        let mut fan_in = input_dim + 1;
        for a in &mut hidden {
            a.scale(T::from_usize_lossy(fan_in));
            fan_in = a.rows();
        }
        let c = T::from_usize_lossy(fan_in);
        for v in &mut outer {
            *v *= c;
        }
        Self::new(input_dim, hidden, outer)
    }

    /// Raw-sum view: the same function with every `1/fan-in` folded into the weights.
    pub fn to_raw(&self) -> RawWeights<T> {
        let hidden = self
            .hidden
            .iter()
            .enumerate()
            .map(|(l, a)| a.scaled(T::one() / T::from_usize_lossy(self.fan_in(l))))
            .collect();
        let c = T::one() / T::from_usize_lossy(self.fan_in(self.depth()));
        let outer = self.outer.iter().map(|&v| v * c).collect();
        RawWeights { hidden, outer }
    }

    /// All-zero network of the given architecture.
    pub fn zeros(input_dim: usize, widths: &[usize]) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::Shape("depth must be at least 1".into()));
        }
        let mut hidden = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim + 1;
        for &w in widths {
            hidden.push(Matrix::zeros(w, fan_in));
            fan_in = w;
        }
        Self::new(input_dim, hidden, vec![T::zero(); fan_in])
    }

    /// Width-one network computing the constant `c`: the bias path carries
    /// `σ(1) = 1` up to the outer weight `c`.
    pub fn constant(input_dim: usize, depth: usize, c: T) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Shape("depth must be at least 1".into()));
        }
        let mut hidden = Vec::with_capacity(depth);
        let mut a0 = Matrix::zeros(1, input_dim + 1);
        a0.set(0, input_dim, T::from_usize_lossy(input_dim + 1));
        hidden.push(a0);
        for _ in 1..depth {
            hidden.push(Matrix::filled(1, 1, T::one()));
        }
        Self::new(input_dim, hidden, vec![c])
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.hidden.len()
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// `(m_1, …, m_L)`.
    pub fn widths(&self) -> Vec<usize> {
        self.hidden.iter().map(Matrix::rows).collect()
    }

    /// Number of summands feeding layer `ℓ` (`d+1` for `ℓ = 0`, `m_ℓ` otherwise).
    #[inline]
    pub fn fan_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim + 1
        } else {
            self.hidden[layer - 1].rows()
        }
    }

    /// Number of rows of layer `ℓ` (`1` for the outer vector).
    #[inline]
    pub fn fan_out(&self, layer: usize) -> usize {
        if layer == self.depth() {
            1
        } else {
            self.hidden[layer].rows()
        }
    }

    pub fn hidden(&self) -> &[Matrix<T>] {
        &self.hidden
    }

    pub fn hidden_layer(&self, layer: usize) -> &Matrix<T> {
        &self.hidden[layer]
    }

    pub fn outer(&self) -> &[T] {
        &self.outer
    }

    /// Flat row-major view of layer `ℓ ∈ 0..=L`.
    pub fn layer(&self, layer: usize) -> &[T] {
        if layer == self.depth() {
            &self.outer
        } else {
            self.hidden[layer].as_slice()
        }
    }

    /// Mutable flat view of layer `ℓ ∈ 0..=L`. Callers must keep entries finite.
    pub fn layer_mut(&mut self, layer: usize) -> &mut [T] {
        if layer == self.depth() {
            &mut self.outer
        } else {
            self.hidden[layer].as_mut_slice()
        }
    }

    pub fn scale_layer(&mut self, layer: usize, c: T) {
        for v in self.layer_mut(layer) {
            *v *= c;
        }
    }

    pub fn num_params(&self) -> usize {
        self.hidden.iter().map(|a| a.rows() * a.cols()).sum::<usize>() + self.outer.len()
    }

    pub fn is_finite(&self) -> bool {
        self.hidden.iter().all(Matrix::is_finite) && self.outer.iter().all(|v| v.is_finite())
    }

    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        out.scale_layer(self.depth(), -T::one());
        out
    }

    /// Same function at `k` times the width: every neuron is copied `k` times.
    pub fn replicate(&self, k: usize) -> Self {
        assert!(k >= 1, "replication factor must be positive");
        let hidden = self
            .hidden
            .iter()
            .enumerate()
            .map(|(l, a)| {
                let col_rep = if l == 0 { 1 } else { k };
                Matrix::from_fn(a.rows() * k, a.cols() * col_rep, |i, j| a.get(i / k, j / col_rep))
            })
            .collect();
        let outer = self.outer.iter().flat_map(|&v| std::iter::repeat_n(v, k)).collect();
        Self {
            input_dim: self.input_dim,
            hidden,
            outer,
        }
    }

    /// Nested mean-field evaluation. Cost `O(Σ m_{ℓ+1} m_ℓ)`.
    pub fn forward(&self, x: &[T]) -> Result<T> {
        check_dim(self.input_dim, x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[T]) -> T {
        let d = self.input_dim;
        let a0 = &self.hidden[0];
        let norm0 = T::one() / T::from_usize_lossy(d + 1);
        let mut h: Vec<T> = (0..a0.rows())
            .map(|i| {
                let row = a0.row(i);
                let mut z = row[d];
                for k in 0..d {
                    z += row[k] * x[k];
                }
                (z * norm0).relu()
            })
            .collect();
        for a in &self.hidden[1..] {
            let norm = T::one() / T::from_usize_lossy(a.cols());
            h = (0..a.rows()).map(|i| (dot(a.row(i), &h) * norm).relu()).collect();
        }
        dot(&self.outer, &h) / T::from_usize_lossy(self.outer.len())
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&u, &v) in a.iter().zip(b) {
        s += u * v;
    }
    s
}

impl<T: Scalar> Realization<T> for MeanFieldNet<T> {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn eval(&self, x: &[T]) -> Result<T> {
        self.forward(x)
    }
}
