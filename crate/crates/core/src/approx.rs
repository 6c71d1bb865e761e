//! Maurey subsampling of a network into a complete tree of branching `m`, and
//! Monte-Carlo measurement of the approximation error.
//!
//! In the raw view every neuron `i` of layer `ℓ` carries the path sum `P^ℓ_i`
//! of its subtree. Writing each preactivation as a signed mixture of unit-proxy
//! atoms `±σ(z_j / P_j)` with weights `|a_{ij}| P_j / P_i`, the tree draws `m`
//! atoms per node i.i.d. from that mixture, keeps the signs, and recurses into
//! each draw. Level 0 stores the normalized affine map `a^0_i / P^0_i`, so every
//! node has unit proxy and the tree's path sum equals the source proxy exactly.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datagen::{stream, DataDistribution};
use crate::netcore::{MeanFieldNet, NeuralTree, Realization};
use crate::{Error, Matrix, Result, Scalar};

/// Output of [`maurey`].
#[derive(Clone, Debug)]
pub struct MaureyResult<T> {
    pub tree: NeuralTree<T>,
    /// Raw path proxy of the source network.
    pub target_proxy: T,
    pub l2_error: f64,
    pub m: usize,
    /// `L (2 + R) proxy / √m`.
    pub bound: f64,
}

/// Per-layer sampling tables built from the raw weights.
struct Sampler<T> {
    /// Raw layer matrices; row `i` of layer `ℓ` feeds neuron `i` of layer `ℓ+1`.
    raw: Vec<Matrix<T>>,
    outer: Vec<T>,
    /// `P^0_i = ‖a^0_i‖_1`.
    p0: Vec<T>,
    /// `tables[ℓ-1][i]`: child distribution of neuron `i` in layer `ℓ+1` over layer `ℓ`.
    tables: Vec<Vec<Option<WeightedIndex<f64>>>>,
    root: WeightedIndex<f64>,
    proxy: T,
}

fn weighted(weights: &[f64]) -> Option<WeightedIndex<f64>> {
    WeightedIndex::new(weights.iter().copied()).ok()
}

impl<T: Scalar> Sampler<T> {
    fn new(net: &MeanFieldNet<T>) -> Result<Self> {
        let raw = net.to_raw();
        let p0: Vec<T> = (0..raw.hidden[0].rows())
            .map(|i| raw.hidden[0].row(i).iter().map(|v| v.abs()).sum())
            .collect();
        let mut p = p0.clone();
        let mut tables = Vec::with_capacity(net.depth() - 1);
        for a in &raw.hidden[1..] {
            let mut next = Vec::with_capacity(a.rows());
            let mut table = Vec::with_capacity(a.rows());
            for i in 0..a.rows() {
                let w: Vec<T> = a.row(i).iter().zip(&p).map(|(v, pj)| v.abs() * *pj).collect();
                next.push(w.iter().copied().sum());
                table.push(weighted(&w.iter().map(|v| v.as_f64()).collect::<Vec<_>>()));
            }
            tables.push(table);
            p = next;
        }
        let w: Vec<T> = raw.outer.iter().zip(&p).map(|(v, pj)| v.abs() * *pj).collect();
        let proxy: T = w.iter().copied().sum();
        let root = weighted(&w.iter().map(|v| v.as_f64()).collect::<Vec<_>>()).ok_or(Error::DegenerateNet)?;
        if !(proxy > T::zero()) {
            return Err(Error::DegenerateNet);
        }
        Ok(Self {
            outer: raw.outer,
            raw: raw.hidden,
            p0,
            tables,
            root,
            proxy,
        })
    }

    fn sign(v: T) -> T {
        if v < T::zero() {
            -T::one()
        } else {
            T::one()
        }
    }

    fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> NeuralTree<T> {
        let depth = self.raw.len();
        let d = self.raw[0].cols() - 1;
        let mut tree = NeuralTree::zeros(d, vec![m; depth]).expect("m ≥ 1");
        let inv_m = T::one() / T::from_usize_lossy(m);

        // Net indices of the sampled neurons at the current tree level, in
        // tree order (most significant index first).
        let mut picked: Vec<usize> = (0..m).map(|_| self.root.sample(rng)).collect();
        let scale = self.proxy * inv_m;
        for (w, &i) in tree.level_mut(depth).iter_mut().zip(&picked) {
            *w = Self::sign(self.outer[i]) * scale;
        }
        for l in (1..depth).rev() {
            let a = &self.raw[l];
            let table = &self.tables[l - 1];
            let mut children = Vec::with_capacity(picked.len() * m);
            let mut weights = Vec::with_capacity(picked.len() * m);
            for &i in &picked {
                let dist = table[i].as_ref().expect("sampled neurons have positive mass");
                for _ in 0..m {
                    let j = dist.sample(rng);
                    children.push(j);
                    weights.push(Self::sign(a.get(i, j)) * inv_m);
                }
            }
            tree.level_mut(l).copy_from_slice(&weights);
            picked = children;
        }
        let level0 = tree.level_mut(0);
        for (w, &i) in level0.chunks_exact_mut(d + 1).zip(&picked) {
            let norm = self.p0[i];
            for (dst, &src) in w.iter_mut().zip(self.raw[0].row(i)) {
                *dst = src / norm;
            }
        }
        tree
    }
}

/// Draw a branching-`m` tree approximating `net`; deterministic in `seed`.
pub fn maurey_subsample<T: Scalar>(net: &MeanFieldNet<T>, m: usize, seed: u64) -> Result<NeuralTree<T>> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let sampler = Sampler::new(net)?;
    Ok(sampler.sample(m, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// `L (2 + R) · proxy / √m`.
pub fn maurey_bound(depth: usize, radius: f64, proxy: f64, m: usize) -> f64 {
    depth as f64 * (2.0 + radius) * proxy / (m as f64).sqrt()
}

/// Subsample and measure the `L²(P)` error on `n_eval` fresh points.
pub fn maurey<T: Scalar>(
    net: &MeanFieldNet<T>,
    m: usize,
    dist: &DataDistribution,
    n_eval: usize,
    seed: u64,
) -> Result<MaureyResult<T>> {
    let tree = maurey_subsample(net, m, seed)?;
    let target_proxy = crate::norms::path_norm_proxy(net);
    let l2_error = l2_distance(net, &tree, dist, n_eval, seed ^ 0x5eed_e7a1)?;
    Ok(MaureyResult {
        tree,
        target_proxy,
        l2_error,
        m,
        bound: maurey_bound(net.depth(), dist.radius, target_proxy.as_f64(), m),
    })
}

/// Monte-Carlo estimate of `‖f − g‖_{L²(P)}` from `n` i.i.d. draws.
pub fn l2_distance<T: Scalar, F: Realization<T>, G: Realization<T>>(
    f: &F,
    g: &G,
    dist: &DataDistribution,
    n: usize,
    seed: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let points = dist.sample::<T>(n, seed);
    l2_distance_on(f, g, &points)
}

/// Empirical `L²` distance on a fixed point set (rows of `points`).
pub fn l2_distance_on<T: Scalar, F: Realization<T>, G: Realization<T>>(
    f: &F,
    g: &G,
    points: &Matrix<T>,
) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..points.rows() {
        let x = points.row(i);
        let diff = (f.eval(x)? - g.eval(x)?).as_f64();
        acc += diff * diff;
    }
    Ok((acc / points.rows() as f64).sqrt())
}

/// `Σ_{ℓ<L} m^{2ℓ+1} + m^L (d+1)`: weights of the flattened approximating network.
pub fn tree_param_count(m: usize, depth: usize, input_dim: usize) -> f64 {
    let m = m as f64;
    (0..depth).map(|l| m.powi(2 * l as i32 + 1)).sum::<f64>() + m.powi(depth as i32) * (input_dim + 1) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub m: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub bound: f64,
    pub tree_param_count: f64,
    pub seeds: usize,
    /// Per-seed errors in seed order.
    pub errors: Vec<f64>,
}

impl RateRow {
    pub const CSV_HEADER: &'static str = "m,mean_error,std_error,bound,tree_param_count,seeds";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.m, self.mean_error, self.std_error, self.bound, self.tree_param_count, self.seeds
        )
    }

    pub fn mean_sq_error(&self) -> f64 {
        self.errors.iter().map(|e| e * e).sum::<f64>() / self.errors.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct RateSweep {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `log mean_error` against `log m`; NaN when the
    /// errors vanish.
    pub slope: f64,
}

impl RateSweep {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", RateRow::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(w, "{}", r.to_csv())?;
        }
        Ok(())
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Error statistics over `seeds` independent trees for each `m`.
///
/// Replicate `s` draws its tree from stream `s` of `seed`; errors are measured
/// on one shared evaluation sample of size `n_eval`. Replicates run on the
/// current rayon pool and are collected in replicate order.
pub fn rate_sweep<T: Scalar>(
    net: &MeanFieldNet<T>,
    ms: &[usize],
    dist: &DataDistribution,
    seeds: usize,
    n_eval: usize,
    seed: u64,
) -> Result<RateSweep> {
    if ms.is_empty() || ms.windows(2).any(|w| w[0] >= w[1]) || ms[0] == 0 {
        return Err(Error::InvalidArgument(
            "ms must be a nonempty increasing list of positive widths".into(),
        ));
    }
    if seeds == 0 || n_eval == 0 {
        return Err(Error::InvalidArgument("seeds and n_eval must be positive".into()));
    }
    let sampler = Sampler::new(net)?;
    let points = dist.sample::<T>(n_eval, seed);
    let target: Vec<T> = (0..points.rows())
        .map(|i| net.forward_unchecked(points.row(i)))
        .collect();
    let proxy = sampler.proxy.as_f64();
    let mut rows = Vec::with_capacity(ms.len());
    for &m in ms {
        let errors: Vec<f64> = (0..seeds)
            .into_par_iter()
            .map(|s| {
                let mut rng = stream(seed.wrapping_add(m as u64), s as u64);
                let tree = sampler.sample(m, &mut rng);
                let acc: f64 = (0..points.rows())
                    .map(|i| {
                        let e = (tree.forward_unchecked(points.row(i)) - target[i]).as_f64();
                        e * e
                    })
                    .sum();
                (acc / points.rows() as f64).sqrt()
            })
            .collect();
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let var = if errors.len() > 1 {
            errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        rows.push(RateRow {
            m,
            mean_error: mean,
            std_error: (var / n).sqrt(),
            bound: maurey_bound(net.depth(), dist.radius, proxy, m),
            tree_param_count: tree_param_count(m, net.depth(), net.input_dim()),
            seeds,
            errors,
        });
    }
    let tiny = 1e-12 * (1.0 + proxy);
    let slope = if rows.len() < 2 || rows.iter().any(|r| r.mean_error <= tiny) {
        f64::NAN
    } else {
        let xs: Vec<f64> = rows.iter().map(|r| (r.m as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.mean_error.ln()).collect();
        fit_slope(&xs, &ys)
    };
    Ok(RateSweep { rows, slope })
}

/// Bookkeeping for sequences of approximants converging in `L²(P)`: their
/// proxies must stay bounded and the limit's proxy may not exceed their
/// liminf.
#[derive(Clone, Debug, Default)]
pub struct InverseApproxMonitor {
    /// `(l2 distance to the limit, proxy)` in sequence order.
    pub entries: Vec<(f64, f64)>,
}

impl InverseApproxMonitor {
    pub fn push(&mut self, l2_error: f64, proxy: f64) {
        self.entries.push((l2_error, proxy));
    }

    pub fn sup_proxy(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    /// Minimum proxy over the second half of the sequence.
    pub fn liminf_proxy(&self) -> f64 {
        let tail = &self.entries[self.entries.len() / 2..];
        tail.iter().map(|e| e.1).fold(f64::INFINITY, f64::min)
    }

    /// Proxies bounded by `cap` and the limit's proxy below the liminf.
    pub fn check(&self, cap: f64, limit_proxy: f64) -> bool {
        !self.entries.is_empty()
            && self.sup_proxy() <= cap * (1.0 + 1e-9)
            && limit_proxy <= self.liminf_proxy() * (1.0 + 1e-9)
    }
}
