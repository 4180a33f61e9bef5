//! Small dense linear algebra on top of nalgebra: numeric rank, null spaces
//! and real eigen-decomposition of non-symmetric matrices.

use nalgebra::{DMatrix, DVector};

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rel * largest`.
pub fn numeric_rank(m: &DMatrix<f64>, rel: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > rel * top).count(),
        _ => 0,
    }
}

/// Numeric rank of the span of `vectors`, each first scaled to unit length.
///
/// Vectors whose norm is below `zero_floor` count as zero.
pub fn span_rank(vectors: &[Vec<f64>], rel: f64, zero_floor: f64) -> usize {
    let rows: Vec<&Vec<f64>> = vectors.iter().filter(|v| norm(v) > zero_floor).collect();
    if rows.is_empty() {
        return 0;
    }
    let cols = rows[0].len();
    let m = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j] / norm(rows[i]));
    numeric_rank(&m, rel)
}

/// Whether appending `w` leaves the rank of `basis` unchanged.
pub fn in_span(basis: &[Vec<f64>], w: &[f64], rel: f64, zero_floor: f64) -> bool {
    let before = span_rank(basis, rel, zero_floor);
    let mut all = basis.to_vec();
    all.push(w.to_vec());
    span_rank(&all, rel, zero_floor) <= before
}

/// Euclidean distance from `w` to the span of `basis`, by Gram-Schmidt with
/// largest-residual pivoting; directions below `rel` times the largest basis
/// norm are dropped.
pub fn distance_to_span(basis: &[Vec<f64>], w: &[f64], rel: f64) -> f64 {
    let cutoff = rel * basis.iter().map(|b| norm(b)).fold(0.0, f64::max);
    let mut rest: Vec<Vec<f64>> = basis.to_vec();
    let mut out = w.to_vec();
    while let Some(k) = (0..rest.len()).max_by(|&a, &b| norm(&rest[a]).total_cmp(&norm(&rest[b]))) {
        let q = rest.swap_remove(k);
        let len = norm(&q);
        if len <= cutoff || len == 0.0 {
            break;
        }
        let q: Vec<f64> = q.iter().map(|a| a / len).collect();
        for v in rest.iter_mut().chain(std::iter::once(&mut out)) {
            let c: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(&q).for_each(|(a, b)| *a -= c * b);
        }
    }
    norm(&out)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, a| m.max(a.abs()))
}

/// Orthonormal basis (as columns) of the `k`-dimensional subspace of
/// right singular vectors belonging to the `k` smallest singular values.
pub fn approximate_null_space(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    // a wide input has fewer singular values than columns; pad with the
    // orthogonal complement of the computed rows
    let mut cols: Vec<DVector<f64>> = order
        .iter()
        .take(k)
        .map(|&r| v_t.row(r).transpose())
        .collect();
    if cols.len() < k {
        let rowspace: Vec<DVector<f64>> =
            (0..v_t.nrows()).map(|r| v_t.row(r).transpose()).collect();
        for e in 0..n {
            if cols.len() == k {
                break;
            }
            let mut v = DVector::from_fn(n, |i, _| if i == e { 1.0 } else { 0.0 });
            for b in rowspace.iter().chain(cols.iter()) {
                let c = b.dot(&v);
                v -= b * c;
            }
            let nv = v.norm();
            if nv > 1e-8 {
                cols.push(v / nv);
            }
        }
    }
    DMatrix::from_columns(&cols)
}

/// Eigenvalue of a real matrix, possibly complex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

/// All eigenvalues, sorted by real part (ties broken by imaginary part).
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Eigenvalue> {
    assert!(m.is_square(), "eigenvalues of a non-square matrix");
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<Eigenvalue> = m
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| Eigenvalue { re: c.re, im: c.im })
        .collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    ev
}

/// Groups sorted reals into clusters whose consecutive members differ by at
/// most `gap`. Returns `(mean, multiplicity)` per cluster.
pub fn cluster_sorted(values: &[f64], gap: f64) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize, f64)> = Vec::new();
    for &v in values {
        match out.last_mut() {
            Some((sum, count, last)) if (v - *last).abs() <= gap => {
                *sum += v;
                *count += 1;
                *last = v;
            }
            _ => out.push((v, 1, v)),
        }
    }
    out.into_iter().map(|(s, c, _)| (s / c as f64, c)).collect()
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, |v| v.len());
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}
