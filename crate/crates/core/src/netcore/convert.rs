use super::{MeanFieldNet, NeuralTree, RawWeights};
use crate::{Matrix, Result, Scalar};

/// Eliminate parameter sharing: every weight is duplicated along all of its
/// ancestor indices, with the mean-field normalizers folded in.
///
/// The tree has branching `(m_1, …, m_L)` and computes the same function.
pub fn net_to_tree<T: Scalar>(net: &MeanFieldNet<T>) -> NeuralTree<T> {
    let raw = net.to_raw();
    let d = net.input_dim();
    let branching = net.widths();
    let depth = branching.len();

    let mut tree = NeuralTree::zeros(d, branching.clone()).expect("widths are positive");
    // Level 0: prefix (i_L … i_1), i_1 is the fastest tuple index.
    {
        let b1 = branching[0];
        let a0 = &raw.hidden[0];
        let level = tree.level_mut(0);
        for (p, w) in level.chunks_exact_mut(d + 1).enumerate() {
            w.copy_from_slice(a0.row(p % b1));
        }
    }
    for l in 1..depth {
        let (b_l, b_up) = (branching[l - 1], branching[l]);
        let a = &raw.hidden[l];
        let level = tree.level_mut(l);
        for (p, w) in level.iter_mut().enumerate() {
            let i_l = p % b_l;
            let i_up = (p / b_l) % b_up;
            *w = a.get(i_up, i_l);
        }
    }
    tree.level_mut(depth).copy_from_slice(&raw.outer);
    tree
}

/// Flatten a tree into a network by listing the non-shared branches with
/// explicit zeros. Widths become `m'_k = Π_{j ≥ k} b_j`.
pub fn tree_to_net<T: Scalar>(tree: &NeuralTree<T>) -> Result<MeanFieldNet<T>> {
    let d = tree.input_dim();
    let depth = tree.depth();
    let mut hidden = Vec::with_capacity(depth);
    hidden.push(Matrix::from_vec(tree.layer_size(1), d + 1, tree.level(0).to_vec()));
    for l in 1..depth {
        let b = tree.branching()[l - 1];
        let rows = tree.layer_size(l + 1);
        let cols = tree.layer_size(l);
        let mut a = Matrix::zeros(rows, cols);
        for (q, &w) in tree.level(l).iter().enumerate() {
            a.set(q / b, q, w);
        }
        hidden.push(a);
    }
    let raw = RawWeights {
        hidden,
        outer: tree.level(depth).to_vec(),
    };
    MeanFieldNet::from_raw(d, raw)
}
