//! Backpropagation through the mean-field forward pass and the path-norm
//! penalty gradient.

use rayon::prelude::*;

use super::{Loss, SigmaPrime};
use crate::datagen::Dataset;
use crate::netcore::MeanFieldNet;
use crate::norms::path_norm_proxy;
use crate::Scalar;

/// Data points per leaf of the gradient reduction tree.
pub const CHUNK: usize = 64;

/// Description of the reduction order, recorded in log headers.
pub const REDUCTION: &str = "chunk64-pairwise";

/// Per-layer arrays shaped like [`MeanFieldNet::layer`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T> {
    pub layers: Vec<Vec<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(net: &MeanFieldNet<T>) -> Self {
        Self {
            layers: (0..=net.depth()).map(|l| vec![T::zero(); net.layer(l).len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// `Σ_ℓ s_ℓ ‖g^ℓ‖²` with Euclidean norms and learning-rate factors `s_ℓ`;
    /// equals `−dR/dt` along the scaled flow.
    pub fn scaled_norm_sq(&self, net: &MeanFieldNet<T>) -> T {
        lr_factors(net)
            .iter()
            .zip(&self.layers)
            .map(|(&s, g)| s * g.iter().map(|&v| v * v).sum::<T>())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flatten().all(|v| v.is_finite())
    }
}

/// Learning-rate factors `s_ℓ = m_{ℓ+1} m_ℓ` with `m_0 = d+1` and `m_{L+1} = 1`.
pub fn lr_factors<T: Scalar>(net: &MeanFieldNet<T>) -> Vec<T> {
    (0..=net.depth())
        .map(|l| T::from_usize_lossy(net.fan_in(l) * net.fan_out(l)))
        .collect()
}

fn sigma_prime<T: Scalar>(z: T, at_zero: SigmaPrime) -> T {
    if z > T::zero() {
        T::one()
    } else if z < T::zero() {
        T::zero()
    } else {
        match at_zero {
            SigmaPrime::Zero => T::zero(),
            SigmaPrime::One => T::one(),
        }
    }
}

/// Activations `h^1 … h^L` and preactivations of one forward pass.
struct Tape<T> {
    z: Vec<Vec<T>>,
    h: Vec<Vec<T>>,
}

fn forward_tape<T: Scalar>(net: &MeanFieldNet<T>, x: &[T]) -> (T, Tape<T>) {
    let d = net.input_dim();
    let a0 = net.hidden_layer(0);
    let n0 = T::one() / T::from_usize_lossy(d + 1);
    let mut z = Vec::with_capacity(net.depth());
    let mut h = Vec::with_capacity(net.depth());
    let z1: Vec<T> = (0..a0.rows())
        .map(|i| {
            let row = a0.row(i);
            let mut s = row[d];
            for k in 0..d {
                s += row[k] * x[k];
            }
            s * n0
        })
        .collect();
    h.push(z1.iter().map(|v| v.relu()).collect::<Vec<T>>());
    z.push(z1);
    for a in &net.hidden()[1..] {
        let norm = T::one() / T::from_usize_lossy(a.cols());
        let prev = h.last().expect("nonempty");
        let zl: Vec<T> = (0..a.rows())
            .map(|i| {
                let mut s = T::zero();
                for (&w, &v) in a.row(i).iter().zip(prev) {
                    s += w * v;
                }
                s * norm
            })
            .collect();
        h.push(zl.iter().map(|v| v.relu()).collect());
        z.push(zl);
    }
    let top = h.last().expect("nonempty");
    let mut f = T::zero();
    for (&w, &v) in net.outer().iter().zip(top) {
        f += w * v;
    }
    (f / T::from_usize_lossy(top.len()), Tape { z, h })
}

/// Add `coef · ∂f(x)/∂a` to `grads`.
fn backward<T: Scalar>(
    net: &MeanFieldNet<T>,
    x: &[T],
    tape: &Tape<T>,
    coef: T,
    at_zero: SigmaPrime,
    grads: &mut Grads<T>,
) {
    let depth = net.depth();
    let d = net.input_dim();
    let m_top = T::from_usize_lossy(net.outer().len());
    let c = coef / m_top;
    // outer layer and ∂/∂h^L
    let top = &tape.h[depth - 1];
    for (g, &v) in grads.layers[depth].iter_mut().zip(top) {
        *g += c * v;
    }
    let mut dh: Vec<T> = net.outer().iter().map(|&w| c * w).collect();
    for l in (1..depth).rev() {
        let a = net.hidden_layer(l);
        let norm = T::one() / T::from_usize_lossy(a.cols());
        let dz: Vec<T> = dh
            .iter()
            .zip(&tape.z[l])
            .map(|(&g, &z)| g * sigma_prime(z, at_zero) * norm)
            .collect();
        let below = &tape.h[l - 1];
        let gl = &mut grads.layers[l];
        let mut dh_below = vec![T::zero(); a.cols()];
        for (i, &dzi) in dz.iter().enumerate() {
            if dzi == T::zero() {
                continue;
            }
            let row = a.row(i);
            let grow = &mut gl[i * a.cols()..(i + 1) * a.cols()];
            for j in 0..a.cols() {
                grow[j] += dzi * below[j];
                dh_below[j] += dzi * row[j];
            }
        }
        dh = dh_below;
    }
    let norm0 = T::one() / T::from_usize_lossy(d + 1);
    let g0 = &mut grads.layers[0];
    for (i, (&g, &z)) in dh.iter().zip(&tape.z[0]).enumerate() {
        let dz = g * sigma_prime(z, at_zero) * norm0;
        if dz == T::zero() {
            continue;
        }
        let grow = &mut g0[i * (d + 1)..(i + 1) * (d + 1)];
        for k in 0..d {
            grow[k] += dz * x[k];
        }
        grow[d] += dz;
    }
}

fn loss_and_slope<T: Scalar>(loss: Loss, f: T, y: T) -> (T, T) {
    let r = f - y;
    let sq = r * r;
    match loss {
        Loss::Squared => (sq, T::lit(2.0) * r),
        Loss::ClippedSquared { cap } => {
            let cap = T::lit(cap);
            if sq < cap {
                (sq, T::lit(2.0) * r)
            } else {
                (cap, T::zero())
            }
        }
    }
}

/// Combine partial results pairwise in a fixed tree shape.
pub(crate) fn pairwise_reduce<A>(mut parts: Vec<A>, add: impl Fn(&mut A, A)) -> Option<A> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                add(&mut a, b);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}

fn chunks(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n)))
        .collect()
}

/// Empirical risk `(1/N) Σ ℓ(f(x_i), y_i)`.
pub fn empirical_risk<T: Scalar>(net: &MeanFieldNet<T>, data: &Dataset<T>, loss: Loss) -> T {
    let n = data.len();
    if n == 0 {
        return T::zero();
    }
    let parts: Vec<T> = chunks(n)
        .par_iter()
        .map(|&(lo, hi)| {
            let mut s = T::zero();
            for i in lo..hi {
                let f = net.forward_unchecked(data.x(i));
                s += loss_and_slope(loss, f, data.ys[i]).0;
            }
            s
        })
        .collect();
    pairwise_reduce(parts, |a, b| *a += b).unwrap_or_else(T::zero) / T::from_usize_lossy(n)
}

/// Empirical risk and its gradient with respect to every weight.
///
/// Per-point contributions are summed sequentially inside chunks of
/// [`CHUNK`] points and the chunk sums combined pairwise, so the result is
/// bitwise independent of the number of threads.
pub fn gradients<T: Scalar>(
    net: &MeanFieldNet<T>,
    data: &Dataset<T>,
    loss: Loss,
    at_zero: SigmaPrime,
) -> (T, Grads<T>) {
    let n = data.len();
    if n == 0 {
        return (T::zero(), Grads::zeros_like(net));
    }
    let inv_n = T::one() / T::from_usize_lossy(n);
    let parts: Vec<(T, Grads<T>)> = chunks(n)
        .par_iter()
        .map(|&(lo, hi)| {
            let mut g = Grads::zeros_like(net);
            let mut risk = T::zero();
            for i in lo..hi {
                let x = data.x(i);
                let (f, tape) = forward_tape(net, x);
                let (l, slope) = loss_and_slope(loss, f, data.ys[i]);
                risk += l;
                if slope != T::zero() {
                    backward(net, x, &tape, slope * inv_n, at_zero, &mut g);
                }
            }
            (risk, g)
        })
        .collect();
    let (risk, g) = pairwise_reduce(parts, |a, b| {
        a.0 += b.0;
        a.1.add_assign(&b.1);
    })
    .expect("nonempty");
    (risk * inv_n, g)
}

/// Gradient of `f(x)` itself with respect to every weight.
pub fn output_gradient<T: Scalar>(net: &MeanFieldNet<T>, x: &[T], at_zero: SigmaPrime) -> (T, Grads<T>) {
    let (f, tape) = forward_tape(net, x);
    let mut g = Grads::zeros_like(net);
    backward(net, x, &tape, T::one(), at_zero, &mut g);
    (f, g)
}

/// Smallest preactivation magnitude over all neurons at `x`.
pub fn min_abs_preactivation<T: Scalar>(net: &MeanFieldNet<T>, x: &[T]) -> T {
    let (_, tape) = forward_tape(net, x);
    tape.z.iter().flatten().map(|v| v.abs()).fold(T::infinity(), T::min)
}

/// Penalty `λ P²` (with `P` the path-norm proxy) and its gradient
/// `2 λ P sign(a) ∂P/∂|a|`; the subgradient at a zero weight is 0.
pub fn penalty_gradient<T: Scalar>(net: &MeanFieldNet<T>, lambda: T) -> (T, Grads<T>) {
    let mut g = Grads::zeros_like(net);
    if lambda == T::zero() {
        return (T::zero(), g);
    }
    let depth = net.depth();
    // v[ℓ][j]: path sum below neuron j of layer ℓ (ℓ = 0 are the inputs, all 1).
    let mut v: Vec<Vec<T>> = vec![vec![T::one(); net.input_dim() + 1]];
    for l in 0..depth {
        let a = net.hidden_layer(l);
        let norm = T::from_usize_lossy(a.cols());
        let below = &v[l];
        let next = (0..a.rows())
            .map(|i| a.row(i).iter().zip(below).map(|(w, b)| w.abs() * *b).sum::<T>() / norm)
            .collect();
        v.push(next);
    }
    let m_top = T::from_usize_lossy(net.outer().len());
    let proxy: T = net.outer().iter().zip(&v[depth]).map(|(w, b)| w.abs() * *b).sum::<T>() / m_top;
    debug_assert!((proxy - path_norm_proxy(net)).abs() <= T::lit(1e-10) * (T::one() + proxy));
    let coef = T::lit(2.0) * lambda * proxy;
    let sign = |w: T| {
        if w > T::zero() {
            T::one()
        } else if w < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    };
    // u: path sum above each neuron of the current layer, including its own fan-in factor.
    let mut u: Vec<T> = net.outer().iter().map(|w| w.abs() / m_top).collect();
    for (gw, (&w, &b)) in g.layers[depth].iter_mut().zip(net.outer().iter().zip(&v[depth])) {
        *gw = coef * sign(w) * b / m_top;
    }
    for l in (0..depth).rev() {
        let a = net.hidden_layer(l);
        let norm = T::from_usize_lossy(a.cols());
        let below = &v[l];
        let gl = &mut g.layers[l];
        let mut u_below = vec![T::zero(); a.cols()];
        for i in 0..a.rows() {
            let row = a.row(i);
            for j in 0..a.cols() {
                gl[i * a.cols() + j] = coef * sign(row[j]) * u[i] * below[j] / norm;
                u_below[j] += u[i] * row[j].abs() / norm;
            }
        }
        u = u_below;
    }
    (lambda * proxy * proxy, g)
}
