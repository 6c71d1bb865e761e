//! Norm-like functionals of finite networks: the path-norm proxy (network and
//! tree), the Hilbert-weight complexity `Q`, layer balancing, an upper bound
//! on the Hilbert-weight distance and a Lipschitz sanity check.
//!
//! All layer norms are probability-normalized: the squared entries of `a^ℓ`
//! are averaged over the `m_{ℓ+1} · m_ℓ` index pairs (`m_0 = d + 1`), and the
//! outer vector over its `m_L` entries. With that convention the path-norm
//! proxy of a mean-field net is the average of `|a^L a^{L-1} ⋯ a^0|` over all
//! paths, which is bounded by `Q = Π_ℓ ‖a^ℓ‖` (Cauchy–Schwarz on alternating
//! layers).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::DataDistribution;
use crate::netcore::{MeanFieldNet, NeuralTree, RawWeights};
use crate::{Error, Result, Scalar};

/// Path-norm proxy, Hilbert-weight complexity and the per-layer norms it is built from.
#[derive(Clone, Debug, PartialEq)]
pub struct PathNormReport<T> {
    pub proxy: T,
    /// `‖a^0‖, …, ‖a^L‖`.
    pub per_layer_l2: Vec<T>,
    pub hilbert_q: T,
}

impl<T: Scalar> PathNormReport<T> {
    pub fn csv_header(depth: usize) -> String {
        let mut h = String::from("proxy,Q");
        for l in 0..=depth {
            h.push_str(&format!(",norm_l{l}"));
        }
        h
    }

    pub fn to_csv_row(&self) -> String {
        let mut row = format!("{},{}", self.proxy, self.hilbert_q);
        for n in &self.per_layer_l2 {
            row.push_str(&format!(",{n}"));
        }
        row
    }

    /// `proxy ≤ Q` up to relative `1e-9`.
    pub fn satisfies_cauchy_schwarz(&self) -> bool {
        self.proxy <= self.hilbert_q + T::lit(1e-9) * self.hilbert_q
    }
}

/// Path-norm proxy of a mean-field net by the layered dynamic program
/// `v^0 = |a^0| 1 / (d+1)`, `v^ℓ = |a^ℓ| v^{ℓ-1} / m_ℓ`, `proxy = |a^L| · v^{L-1} / m_L`.
pub fn path_norm_proxy<T: Scalar>(net: &MeanFieldNet<T>) -> T {
    let mut v = abs_row_sums(net.hidden_layer(0), T::from_usize_lossy(net.input_dim() + 1));
    for a in &net.hidden()[1..] {
        v = abs_matvec(a.as_slice(), a.cols(), &v, T::from_usize_lossy(a.cols()));
    }
    abs_matvec(net.outer(), v.len(), &v, T::from_usize_lossy(v.len()))[0]
}

/// Path-norm proxy of the raw-sum weights: `Σ_paths |a^L ⋯ a^0|` with no averaging.
///
/// For the raw view of a mean-field net this equals [`path_norm_proxy`]; it is
/// the `W^L` norm upper bound of the realized function.
pub fn raw_path_norm_proxy<T: Scalar>(raw: &RawWeights<T>) -> T {
    let mut v = abs_row_sums(&raw.hidden[0], T::one());
    for a in &raw.hidden[1..] {
        v = abs_matvec(a.as_slice(), a.cols(), &v, T::one());
    }
    abs_matvec(&raw.outer, v.len(), &v, T::one())[0]
}

/// Upper bound on the `W^L` norm of the realized function: the raw path proxy.
pub fn embedding_norm_bound<T: Scalar>(net: &MeanFieldNet<T>) -> T {
    raw_path_norm_proxy(&net.to_raw())
}

fn abs_row_sums<T: Scalar>(a: &crate::Matrix<T>, norm: T) -> Vec<T> {
    (0..a.rows())
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<T>() / norm)
        .collect()
}

fn abs_matvec<T: Scalar>(a: &[T], cols: usize, v: &[T], norm: T) -> Vec<T> {
    a.chunks_exact(cols)
        .map(|row| {
            let mut s = T::zero();
            for (&w, &x) in row.iter().zip(v) {
                s += w.abs() * x;
            }
            s / norm
        })
        .collect()
}

/// Raw path-sum of a tree by a bottom-up pass.
pub fn path_norm_proxy_tree<T: Scalar>(tree: &NeuralTree<T>) -> T {
    let d = tree.input_dim();
    let mut s: Vec<T> = tree
        .level(0)
        .chunks_exact(d + 1)
        .map(|w| w.iter().map(|v| v.abs()).sum())
        .collect();
    for k in 2..=tree.depth() {
        let b = tree.branching()[k - 2];
        s = tree
            .level(k - 1)
            .chunks_exact(b)
            .zip(s.chunks_exact(b))
            .map(|(w, sv)| w.iter().zip(sv).map(|(a, c)| a.abs() * *c).sum())
            .collect();
    }
    tree.level(tree.depth()).iter().zip(&s).map(|(a, c)| a.abs() * *c).sum()
}

/// Probability-normalized L2 norms `‖a^0‖, …, ‖a^L‖`.
pub fn layer_norms<T: Scalar>(net: &MeanFieldNet<T>) -> Vec<T> {
    (0..=net.depth())
        .map(|l| {
            let w = net.layer(l);
            let ss: T = w.iter().map(|&v| v * v).sum();
            (ss / T::from_usize_lossy(w.len())).sqrt()
        })
        .collect()
}

pub fn hilbert_complexity<T: Scalar>(net: &MeanFieldNet<T>) -> PathNormReport<T> {
    let per_layer_l2 = layer_norms(net);
    let hilbert_q = per_layer_l2.iter().fold(T::one(), |acc, &n| acc * n);
    PathNormReport {
        proxy: path_norm_proxy(net),
        per_layer_l2,
        hilbert_q,
    }
}

/// Rescale the layers so that every `‖a^ℓ‖` equals `Q^{1/(L+1)}`.
///
/// The realized function and `Q` are unchanged. Fails with
/// [`Error::ZeroLayer`] if some layer vanishes.
pub fn balance<T: Scalar>(net: &MeanFieldNet<T>) -> Result<MeanFieldNet<T>> {
    let norms = layer_norms(net);
    if let Some(layer) = norms.iter().position(|n| *n == T::zero()) {
        return Err(Error::ZeroLayer { layer });
    }
    // Geometric mean computed in log space to avoid under/overflow of Q.
    let log_mean = norms.iter().map(|n| n.ln()).sum::<T>() / T::from_usize_lossy(norms.len());
    let mut out = net.clone();
    for (l, n) in norms.iter().enumerate() {
        let factor = (log_mean - n.ln()).exp();
        out.scale_layer(l, factor);
    }
    Ok(out)
}

/// `Σ_ℓ ‖a^{ℓ,f} − a^{ℓ,g}‖` after balancing both nets at their stored
/// representation. This is an upper bound on the Hilbert-weight distance; no
/// infimum over representations is attempted.
pub fn d_hw_upper<T: Scalar>(f: &MeanFieldNet<T>, g: &MeanFieldNet<T>) -> Result<T> {
    if f.input_dim() != g.input_dim() || f.widths() != g.widths() {
        return Err(Error::ArchitectureMismatch(format!(
            "d={} widths={:?} vs d={} widths={:?}",
            f.input_dim(),
            f.widths(),
            g.input_dim(),
            g.widths()
        )));
    }
    let fb = balance(f)?;
    let gb = balance(g)?;
    let mut total = T::zero();
    for l in 0..=f.depth() {
        let (u, v) = (fb.layer(l), gb.layer(l));
        let ss: T = u.iter().zip(v).map(|(&a, &b)| (a - b) * (a - b)).sum();
        total += (ss / T::from_usize_lossy(u.len())).sqrt();
    }
    Ok(total)
}

/// Sample `n_pairs` pairs from `dist` and check `|f(x) − f(y)| ≤ P ‖x − y‖_∞ + 1e-9`
/// where `P` is the raw path proxy. Returns `true` iff every pair passes.
pub fn lipschitz_bound_check<T: Scalar>(
    net: &MeanFieldNet<T>,
    dist: &DataDistribution,
    n_pairs: usize,
    seed: u64,
) -> bool {
    lipschitz_worst_ratio(net, dist, n_pairs, seed).1 == 0
}

/// Largest observed `|f(x) − f(y)| / ‖x − y‖_∞` and the number of pairs violating the bound.
pub fn lipschitz_worst_ratio<T: Scalar>(
    net: &MeanFieldNet<T>,
    dist: &DataDistribution,
    n_pairs: usize,
    seed: u64,
) -> (f64, usize) {
    let bound = embedding_norm_bound(net).as_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut violations = 0;
    for _ in 0..n_pairs {
        let x: Vec<T> = dist.draw(&mut rng);
        let y: Vec<T> = dist.draw(&mut rng);
        let fx = net.forward_unchecked(&x).as_f64();
        let fy = net.forward_unchecked(&y).as_f64();
        let dist_inf = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max);
        let diff = (fx - fy).abs();
        if diff > bound * dist_inf + 1e-9 {
            violations += 1;
        }
        if dist_inf > 0.0 {
            worst = worst.max(diff / dist_inf);
        }
    }
    (worst, violations)
}
