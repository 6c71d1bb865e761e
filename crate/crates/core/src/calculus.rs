//! Constructive closure operations on networks: sums, depth lifting,
//! composition, absolute value, max/min, squares and products.
//!
//! All constructions are assembled in the raw-sum view and converted back, so
//! the block structure is explicit: parallel networks become block-diagonal
//! layers padded with stored zeros, and constants travel along a dedicated
//! width-one chain carrying `σ(1) = 1`.

use crate::netcore::{MeanFieldNet, RawWeights};
use crate::norms::path_norm_proxy;
use crate::{Error, Matrix, Result, Scalar};

/// Components `(f_1, …, f_k)` of a vector-valued network sharing depth and input dimension.
pub type VectorNet<T> = [MeanFieldNet<T>];

fn proxy_ok<T: Scalar>(net: &MeanFieldNet<T>, bound: T) -> bool {
    path_norm_proxy(net) <= bound + T::lit(1e-9) * (T::one() + bound)
}

/// Pointwise sum `f + g`.
pub fn add<T: Scalar>(f: &MeanFieldNet<T>, g: &MeanFieldNet<T>) -> Result<MeanFieldNet<T>> {
    if f.depth() != g.depth() {
        return Err(Error::DepthMismatch {
            left: f.depth(),
            right: g.depth(),
        });
    }
    if f.input_dim() != g.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: f.input_dim(),
            got: g.input_dim(),
        });
    }
    let (rf, rg) = (f.to_raw(), g.to_raw());
    let hidden = rf
        .hidden
        .iter()
        .zip(&rg.hidden)
        .enumerate()
        .map(|(l, (a, b))| {
            if l == 0 {
                Matrix::vstack(a, b)
            } else {
                Matrix::block_diag(a, b)
            }
        })
        .collect();
    let mut outer = rf.outer;
    outer.extend(rg.outer);
    let out = MeanFieldNet::from_raw(f.input_dim(), RawWeights { hidden, outer })?;
    debug_assert!(proxy_ok(&out, path_norm_proxy(f) + path_norm_proxy(g)));
    Ok(out)
}

/// `c · f` (for `c < 0` the sign goes into the outer layer).
pub fn scale<T: Scalar>(f: &MeanFieldNet<T>, c: T) -> MeanFieldNet<T> {
    let mut out = f.clone();
    out.scale_layer(f.depth(), c);
    out
}

/// Depth `L + extra` network with the same function: `f = σ(f) − σ(−f)`
/// followed by identity pass-through layers. Raw proxy at most doubles.
pub fn lift_depth<T: Scalar>(f: &MeanFieldNet<T>, extra: usize) -> Result<MeanFieldNet<T>> {
    if extra == 0 {
        return Err(Error::InvalidArgument("lift_depth needs extra ≥ 1".into()));
    }
    let raw = f.to_raw();
    let mut hidden = raw.hidden;
    let top = Matrix::vstack(
        &Matrix::from_vec(1, raw.outer.len(), raw.outer.clone()),
        &Matrix::from_vec(1, raw.outer.len(), raw.outer.iter().map(|&v| -v).collect()),
    );
    hidden.push(top);
    for _ in 1..extra {
        hidden.push(Matrix::identity(2));
    }
    let outer = vec![T::one(), -T::one()];
    let out = MeanFieldNet::from_raw(f.input_dim(), RawWeights { hidden, outer })?;
    debug_assert!(proxy_ok(&out, T::lit(2.0) * path_norm_proxy(f)));
    Ok(out)
}

/// `x ↦ g(f_1(x), …, f_k(x))` as a single network of depth `L + ℓ`.
///
/// The top layer of every `f_i` is merged into the first layer of `g`:
/// `ā_{t,(i,j)} = g^0_{t,i} a^{L,(i)}_j`. If `g` has a nonzero bias, a
/// constant chain is appended to the `f` block to carry it.
///
/// The raw proxy of the result is at most `proxy(g) · max(1, Σ_i proxy(f_i))`.
pub fn compose<T: Scalar>(g: &MeanFieldNet<T>, f: &VectorNet<T>) -> Result<MeanFieldNet<T>> {
    let k = f.len();
    if k == 0 || g.input_dim() != k {
        return Err(Error::ArityMismatch {
            expected: g.input_dim(),
            got: k,
        });
    }
    let depth = f[0].depth();
    let d = f[0].input_dim();
    for fi in f {
        if fi.depth() != depth {
            return Err(Error::DepthMismatch {
                left: depth,
                right: fi.depth(),
            });
        }
        if fi.input_dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: fi.input_dim(),
            });
        }
    }
    let rg = g.to_raw();
    let g0 = &rg.hidden[0];
    let needs_const = (0..g0.rows()).any(|t| g0.get(t, k) != T::zero());
    let rf: Vec<RawWeights<T>> = f.iter().map(MeanFieldNet::to_raw).collect();

    let mut hidden: Vec<Matrix<T>> = Vec::with_capacity(depth + g.depth());
    for l in 0..depth {
        let mut layer = rf[0].hidden[l].clone();
        for r in &rf[1..] {
            layer = if l == 0 {
                Matrix::vstack(&layer, &r.hidden[l])
            } else {
                Matrix::block_diag(&layer, &r.hidden[l])
            };
        }
        if needs_const {
            let chain = if l == 0 {
                let mut row = Matrix::zeros(1, d + 1);
                row.set(0, d, T::one());
                Matrix::vstack(&layer, &row)
            } else {
                Matrix::block_diag(&layer, &Matrix::filled(1, 1, T::one()))
            };
            layer = chain;
        }
        hidden.push(layer);
    }

    let tops: Vec<&[T]> = rf.iter().map(|r| r.outer.as_slice()).collect();
    let cols: usize = tops.iter().map(|t| t.len()).sum::<usize>() + usize::from(needs_const);
    let mut merged = Matrix::zeros(g0.rows(), cols);
    for t in 0..g0.rows() {
        let row = merged.row_mut(t);
        let mut off = 0;
        for (i, top) in tops.iter().enumerate() {
            let c = g0.get(t, i);
            for (j, &w) in top.iter().enumerate() {
                row[off + j] = c * w;
            }
            off += top.len();
        }
        if needs_const {
            row[off] = g0.get(t, k);
        }
    }
    hidden.push(merged);
    hidden.extend(rg.hidden[1..].iter().cloned());

    let out = MeanFieldNet::from_raw(
        d,
        RawWeights {
            hidden,
            outer: rg.outer,
        },
    )?;
    debug_assert!({
        let sum: T = f.iter().map(path_norm_proxy).sum();
        proxy_ok(&out, path_norm_proxy(g) * sum.max(T::one()))
    });
    Ok(out)
}

/// Depth-one network on `R^k` with raw weights `rows` (each of length `k+1`)
/// and raw outer weights `outer`.
fn shallow<T: Scalar>(k: usize, rows: &[&[f64]], outer: &[f64]) -> MeanFieldNet<T> {
    let data = rows.iter().flat_map(|r| r.iter().map(|&v| T::lit(v))).collect();
    let raw = RawWeights {
        hidden: vec![Matrix::from_vec(rows.len(), k + 1, data)],
        outer: outer.iter().map(|&v| T::lit(v)).collect(),
    };
    MeanFieldNet::from_raw(k, raw).expect("static shapes")
}

/// `z ↦ σ(z) − σ(−z) = z`.
pub fn identity_1d<T: Scalar>() -> MeanFieldNet<T> {
    shallow(1, &[&[1.0, 0.0], &[-1.0, 0.0]], &[1.0, -1.0])
}

/// `z ↦ σ(z)`.
pub fn relu_1d<T: Scalar>() -> MeanFieldNet<T> {
    shallow(1, &[&[1.0, 0.0]], &[1.0])
}

/// `(y_1, y_2) ↦ y_1 + σ(y_2 − y_1) = max{y_1, y_2}`.
pub fn max_2d<T: Scalar>() -> MeanFieldNet<T> {
    shallow(
        2,
        &[&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0], &[-1.0, 1.0, 0.0]],
        &[1.0, -1.0, 1.0],
    )
}

/// `(y_1, y_2) ↦ y_1 − σ(y_1 − y_2) = min{y_1, y_2}`.
pub fn min_2d<T: Scalar>() -> MeanFieldNet<T> {
    shallow(
        2,
        &[&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0], &[1.0, -1.0, 0.0]],
        &[1.0, -1.0, -1.0],
    )
}

/// `|f| = σ(f) + σ(−f)`.
pub fn abs_of<T: Scalar>(f: &MeanFieldNet<T>) -> Result<MeanFieldNet<T>> {
    let g = shallow(1, &[&[1.0, 0.0], &[-1.0, 0.0]], &[1.0, 1.0]);
    compose(&g, std::slice::from_ref(f))
}

/// Positive part `σ(f)`.
pub fn relu_of<T: Scalar>(f: &MeanFieldNet<T>) -> Result<MeanFieldNet<T>> {
    compose(&relu_1d(), std::slice::from_ref(f))
}

pub fn max_of<T: Scalar>(f: &MeanFieldNet<T>, g: &MeanFieldNet<T>) -> Result<MeanFieldNet<T>> {
    compose(&max_2d(), &[f.clone(), g.clone()])
}

pub fn min_of<T: Scalar>(f: &MeanFieldNet<T>, g: &MeanFieldNet<T>) -> Result<MeanFieldNet<T>> {
    compose(&min_2d(), &[f.clone(), g.clone()])
}

/// Quadrature node `ξ_k = (k + ½) M / n`, `k = 0..n`.
fn node(bound: f64, n: usize, k: usize) -> f64 {
    (k as f64 + 0.5) * bound / n as f64
}

/// Width-`n` network approximating `σ(z)²` on `[−M, M]` by the midpoint rule for
/// `σ(z)² = ∫_0^M 2σ(z − ξ) dξ`.
///
/// Only the cell containing the kink `ξ = z` contributes error, so the sup
/// error is `M²/(4n²)`; it is exact for `z ≤ 0` and at the cell edges.
pub fn square_barron<T: Scalar>(bound: f64, n: usize) -> Result<MeanFieldNet<T>> {
    if !(bound > 0.0 && bound.is_finite()) || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "square_barron needs M > 0 and n ≥ 2, got M = {bound}, n = {n}"
        )));
    }
    let w = 2.0 * bound / n as f64;
    let a0 = Matrix::from_fn(n, 2, |k, j| T::lit(if j == 0 { 1.0 } else { -node(bound, n, k) }));
    let raw = RawWeights {
        hidden: vec![a0],
        outer: vec![T::lit(w); n],
    };
    MeanFieldNet::from_raw(1, raw)
}

/// Sup error of [`square_barron`] on `[−M, M]`.
pub fn square_error_bound(bound: f64, n: usize) -> f64 {
    bound * bound / (4.0 * (n * n) as f64)
}

/// Network on `R^2` approximating `y_1 y_2 = ¼[(y_1+y_2)² − (y_1−y_2)²]` for
/// `|y_1|, |y_2| ≤ B`, with `u² = σ(u)² + σ(−u)²` and the square quadrature on
/// `[0, 2B]`.
///
/// Neurons are ordered so that at `y_2 = 0` paired terms cancel exactly.
pub fn product_2d<T: Scalar>(bound: f64, n: usize) -> Result<MeanFieldNet<T>> {
    if !(bound > 0.0 && bound.is_finite()) || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "product needs B > 0 and n ≥ 2, got B = {bound}, n = {n}"
        )));
    }
    let m = 2.0 * bound;
    let c = 0.25 * 2.0 * m / n as f64;
    let mut rows = Vec::with_capacity(4 * n * 3);
    let mut outer = Vec::with_capacity(4 * n);
    for k in 0..n {
        let xi = -node(m, n, k);
        // σ(±(y1+y2) − ξ) paired with σ(±(y1−y2) − ξ)
        for s in [1.0, -1.0] {
            rows.extend([s, s, xi]);
            outer.push(c);
            rows.extend([s, -s, xi]);
            outer.push(-c);
        }
    }
    let raw = RawWeights {
        hidden: vec![Matrix::from_vec(4 * n, 3, rows.into_iter().map(T::lit).collect())],
        outer: outer.into_iter().map(T::lit).collect(),
    };
    MeanFieldNet::from_raw(2, raw)
}

/// Sup error of [`product_2d`] on `[−B, B]²`: each square is off by at most
/// `(2B)²/(4n²)` and polarization takes a quarter of the difference.
pub fn product_error_bound(bound: f64, n: usize) -> f64 {
    0.5 * square_error_bound(2.0 * bound, n)
}

/// `f · g` for `|f|, |g| ≤ bound` on the data cube (caller-asserted).
pub fn product_of<T: Scalar>(
    f: &MeanFieldNet<T>,
    g: &MeanFieldNet<T>,
    bound: f64,
    quad_points: usize,
) -> Result<MeanFieldNet<T>> {
    compose(&product_2d(bound, quad_points)?, &[f.clone(), g.clone()])
}

/// `x ↦ f(x + shift)`, absorbed into the layer-0 biases.
pub fn translate_input<T: Scalar>(f: &MeanFieldNet<T>, shift: &[T]) -> Result<MeanFieldNet<T>> {
    let d = f.input_dim();
    if shift.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: shift.len(),
        });
    }
    let mut raw = f.to_raw();
    let a0 = &mut raw.hidden[0];
    for i in 0..a0.rows() {
        let row = a0.row_mut(i);
        let mut b = row[d];
        for k in 0..d {
            b += row[k] * shift[k];
        }
        row[d] = b;
    }
    MeanFieldNet::from_raw(d, raw)
}
