//! Row-oriented dense kernels.
//!
//! Every output row is computed from the matching input row (and, for
//! aggregation, the rows of its neighbours) in a fixed order, so appending
//! rows never changes existing results bit for bit.

use ndarray::{Array1, Array2, ArrayView2};

use crate::graph::Graph;

/// `a * b`, skipping zero entries of `a`.
pub(crate) fn matmul(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    debug_assert_eq!(a.ncols(), b.nrows());
    let mut out = Array2::<f64>::zeros((a.nrows(), b.ncols()));
    for (a_row, mut o_row) in a.rows().into_iter().zip(out.rows_mut()) {
        let o = o_row.as_slice_mut().expect("standard layout");
        for (k, &x) in a_row.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (oj, &bj) in o.iter_mut().zip(b.row(k).iter()) {
                *oj += x * bj;
            }
        }
    }
    out
}

/// `a^T * g`, skipping rows of `g` that are entirely zero.
pub(crate) fn matmul_tn(a: ArrayView2<'_, f64>, g: ArrayView2<'_, f64>) -> Array2<f64> {
    debug_assert_eq!(a.nrows(), g.nrows());
    let mut out = Array2::<f64>::zeros((a.ncols(), g.ncols()));
    for (a_row, g_row) in a.rows().into_iter().zip(g.rows()) {
        if g_row.iter().all(|&x| x == 0.0) {
            continue;
        }
        for (k, &x) in a_row.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (oj, &gj) in out.row_mut(k).iter_mut().zip(g_row.iter()) {
                *oj += x * gj;
            }
        }
    }
    out
}

/// `g * b^T`.
pub(crate) fn matmul_nt(g: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    debug_assert_eq!(g.ncols(), b.ncols());
    let mut out = Array2::<f64>::zeros((g.nrows(), b.nrows()));
    for (g_row, mut o_row) in g.rows().into_iter().zip(out.rows_mut()) {
        if g_row.iter().all(|&x| x == 0.0) {
            continue;
        }
        for (o, b_row) in o_row.iter_mut().zip(b.rows()) {
            *o = g_row.iter().zip(b_row.iter()).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Mean over the closed neighbourhood: `(m_v + sum_{u in N(v)} m_u) / (d_v + 1)`.
pub(crate) fn aggregate(graph: &Graph, m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for v in 0..graph.num_nodes() {
        let nbrs = graph.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let mut row = out.row_mut(v);
        for &u in nbrs {
            row += &m.row(u as usize);
        }
        row /= (nbrs.len() + 1) as f64;
    }
    out
}

/// Transpose of [`aggregate`]: `g_u / (d_u + 1) + sum_{v in N(u)} g_v / (d_v + 1)`.
pub(crate) fn aggregate_transpose(graph: &Graph, g: &Array2<f64>) -> Array2<f64> {
    let mut scaled = g.clone();
    for v in 0..graph.num_nodes() {
        let d = graph.neighbors(v).len();
        if d > 0 {
            scaled.row_mut(v).mapv_inplace(|x| x / (d + 1) as f64);
        }
    }
    let mut out = scaled.clone();
    for u in 0..graph.num_nodes() {
        let nbrs = graph.neighbors(u);
        let mut row = out.row_mut(u);
        for &v in nbrs {
            row += &scaled.row(v as usize);
        }
    }
    out
}

pub(crate) fn add_bias(m: &mut Array2<f64>, b: &Array1<f64>) {
    for mut row in m.rows_mut() {
        row += b;
    }
}

pub(crate) fn relu_inplace(m: &mut Array2<f64>) {
    m.mapv_inplace(|x| if x > 0.0 { x } else { 0.0 });
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(row: ndarray::ArrayView1<'_, f64>) -> u32 {
    let mut best = 0;
    for (j, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = j;
        }
    }
    best as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2)], Array2::zeros((3, 1)), vec![None; 3], None).unwrap()
    }

    #[test]
    fn products_match_ndarray() {
        let a = array![[1.0, 0.0, 2.0], [0.5, -1.0, 0.0]];
        let b = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(matmul(a.view(), b.view()), a.dot(&b));
        let g = array![[1.0, -2.0], [0.0, 0.0]];
        assert_eq!(matmul_tn(a.view(), g.view()), a.t().dot(&g));
        let w = array![[1.0, 1.0], [2.0, -1.0], [0.0, 3.0]];
        assert_eq!(matmul_nt(g.view(), w.view()), g.dot(&w.t()));
    }

    #[test]
    fn aggregate_transpose_is_adjoint() {
        let g = path3();
        let m = array![[1.0, 2.0], [3.0, -1.0], [0.5, 4.0]];
        let h = array![[0.3, -2.0], [1.5, 1.0], [-1.0, 2.0]];
        // <A m, h> == <m, A^T h>
        let lhs: f64 = (&aggregate(&g, &m) * &h).sum();
        let rhs: f64 = (&m * &aggregate_transpose(&g, &h)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        let agg = aggregate(&g, &m);
        assert!((agg[[1, 0]] - (1.0 + 3.0 + 0.5) / 3.0).abs() < 1e-15);
        assert_eq!(agg[[0, 1]], (2.0 + -1.0) / 2.0);
    }

    #[test]
    fn argmax_ties_low() {
        assert_eq!(argmax(array![1.0, 3.0, 3.0].view()), 1);
        assert_eq!(argmax(array![0.0, 0.0].view()), 0);
    }
}
