//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use mflab::{Matrix, Net, Tree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// `|a − b| ≤ tol (1 + |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller keeps the oracle free of the library's sampling code.
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Net with the given shape and i.i.d. standard normal weights.
pub fn gaussian_net(rng: &mut ChaCha8Rng, d: usize, widths: &[usize]) -> Net {
    let mut fan_in = d + 1;
    let mut hidden = Vec::new();
    for &w in widths {
        hidden.push(Matrix::from_fn(w, fan_in, |_, _| gaussian(rng)));
        fan_in = w;
    }
    let outer = (0..fan_in).map(|_| gaussian(rng)).collect();
    Net::new(d, hidden, outer).unwrap()
}

/// Random shape with depth in `1..=max_depth`, widths in `1..=max_width`, `d` in `1..=max_d`.
pub fn random_shape(rng: &mut ChaCha8Rng, max_depth: usize, max_width: usize, max_d: usize) -> (usize, Vec<usize>) {
    let depth = rng.random_range(1..=max_depth);
    let d = rng.random_range(1..=max_d);
    (d, (0..depth).map(|_| rng.random_range(1..=max_width)).collect())
}

pub fn random_net(rng: &mut ChaCha8Rng, max_depth: usize, max_width: usize, max_d: usize) -> Net {
    let (d, widths) = random_shape(rng, max_depth, max_width, max_d);
    gaussian_net(rng, d, &widths)
}

pub fn cube_point(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-radius..=radius)).collect()
}

/// Value of hidden neuron `i` in layer `layer` (1-based), recomputing every
/// child from scratch; cost grows with the number of paths.
fn neuron(net: &Net, layer: usize, i: usize, x: &[f64]) -> f64 {
    let a = net.hidden_layer(layer - 1);
    let mut s = 0.0;
    if layer == 1 {
        let d = net.input_dim();
        for k in 0..d {
            s += a.get(i, k) * x[k];
        }
        s += a.get(i, d);
        relu(s / (d + 1) as f64)
    } else {
        for j in 0..a.cols() {
            s += a.get(i, j) * neuron(net, layer - 1, j, x);
        }
        relu(s / a.cols() as f64)
    }
}

/// Non-memoized recursive evaluation of the mean-field forward pass.
pub fn recursive_eval(net: &Net, x: &[f64]) -> f64 {
    let depth = net.depth();
    let outer = net.outer();
    let mut s = 0.0;
    for (i, &w) in outer.iter().enumerate() {
        s += w * neuron(net, depth, i, x);
    }
    s / outer.len() as f64
}

/// `(d+1) Π m_ℓ`.
pub fn path_count(net: &Net) -> usize {
    (net.input_dim() + 1) * net.widths().iter().product::<usize>()
}

/// Enumerate every index tuple `(i_L, …, i_1, i_0)` with an odometer and sum
/// `|a^L_{i_L} a^{L-1}_{i_L i_{L-1}} ⋯ a^0_{i_1 i_0}|` times the normalizers.
pub fn brute_force_proxy(net: &Net) -> f64 {
    let depth = net.depth();
    let mut dims: Vec<usize> = vec![net.input_dim() + 1];
    dims.extend(net.widths());
    // dims[ℓ] = size of index i_ℓ
    let norm: f64 = dims.iter().map(|&m| m as f64).product();
    let mut idx = vec![0usize; depth + 1];
    let mut total = 0.0;
    loop {
        let mut prod = net.outer()[idx[depth]].abs();
        for l in 0..depth {
            prod *= net.hidden_layer(l).get(idx[l + 1], idx[l]).abs();
        }
        total += prod;
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k > depth {
                return total / norm;
            }
        }
    }
}

/// Raw path sum of a tree by explicit enumeration of its index tuples.
pub fn brute_force_tree_proxy(tree: &Tree) -> f64 {
    let depth = tree.depth();
    let b = tree.branching();
    let d1 = tree.input_dim() + 1;
    let leaves: usize = b.iter().product();
    let mut total = 0.0;
    for leaf in 0..leaves {
        for k in 0..d1 {
            // leaf = flat (i_L … i_1); its layer-ℓ ancestor is leaf / Π_{j<ℓ} b_j.
            let mut prod = tree.level(0)[leaf * d1 + k].abs();
            let mut div = 1;
            for l in 1..=depth {
                prod *= tree.level(l)[leaf / div].abs();
                div *= b[l - 1];
            }
            total += prod;
        }
    }
    total
}

/// Straight-line evaluator for `L = 2`, `d = 1`, widths `(2, 1)`.
pub fn straight_line_2_1(a0: [[f64; 2]; 2], a1: [f64; 2], a2: f64, x: f64) -> f64 {
    let h10 = relu((a0[0][0] * x + a0[0][1]) / 2.0);
    let h11 = relu((a0[1][0] * x + a0[1][1]) / 2.0);
    let h2 = relu((a1[0] * h10 + a1[1] * h11) / 2.0);
    a2 * h2
}

/// Signs `z > 0` of every hidden preactivation at `x`, layer by layer.
pub fn activation_pattern(net: &Net, x: &[f64]) -> Vec<bool> {
    let mut h: Vec<f64> = x.iter().copied().chain([1.0]).collect();
    let mut pattern = Vec::new();
    for l in 0..net.depth() {
        let a = net.hidden_layer(l);
        let z: Vec<f64> = (0..a.rows())
            .map(|i| a.row(i).iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() / a.cols() as f64)
            .collect();
        pattern.extend(z.iter().map(|&v| v > 0.0));
        h = z.into_iter().map(relu).collect();
    }
    pattern
}

/// Central-difference check of a gradient: `(normwise relative error,
/// worst entrywise excess)` where an entry passes when
/// `|fd − g| ≤ tol · max(|fd|, |g|) + 10 u |R| / ε` (the last term bounds the
/// rounding error of the difference quotient).
pub fn fd_compare(fd: &[f64], g: &[f64], risk: f64, eps: f64, tol: f64) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    let mut excess = f64::NEG_INFINITY;
    let floor = 10.0 * f64::EPSILON * risk.abs() / eps;
    for (a, b) in fd.iter().zip(g) {
        num += (a - b) * (a - b);
        den += b * b;
        excess = excess.max((a - b).abs() - tol * a.abs().max(b.abs()) - floor);
    }
    let normwise = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    (normwise, excess)
}
