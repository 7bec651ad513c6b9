//! Small dense helpers on top of faer.

use faer::linalg::matmul::matmul;
use faer::{Accum, ColMut, ColRef, Mat, MatRef};

/// Parallelism for dense kernels, following faer's global setting.
pub fn par() -> faer::Par {
    faer::get_global_parallelism()
}

/// Set the thread count for dense kernels; 1 runs sequentially.
pub fn set_threads(n: usize) {
    let p = if n <= 1 { faer::Par::Seq } else { faer::Par::rayon(n) };
    faer::set_global_parallelism(p);
}

/// `A x`.
pub fn matvec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.ncols(), x.len(), "matvec dimension mismatch");
    let mut y = vec![0.0; a.nrows()];
    if a.nrows() == 0 {
        return y;
    }
    if a.ncols() == 0 {
        return y;
    }
    matmul(
        ColMut::from_slice_mut(&mut y).as_mat_mut(),
        Accum::Replace,
        a,
        ColRef::from_slice(x).as_mat(),
        1.0,
        par(),
    );
    y
}

/// `A^T x`.
pub fn matvec_t(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    matvec(a.transpose(), x)
}

/// `A^T A`.
pub fn gram(a: MatRef<'_, f64>) -> Mat<f64> {
    let n = a.ncols();
    let mut g = Mat::<f64>::zeros(n, n);
    if a.nrows() > 0 {
        matmul(g.as_mut(), Accum::Replace, a.transpose(), a, 1.0, par());
    }
    g
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    norm2(x) / (x.len() as f64).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `||a - b|| / ||b||`, or the absolute norm when `b` vanishes.
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let nb = norm2(b);
    if nb > 0.0 {
        diff / nb
    } else {
        diff
    }
}

/// Stack matrices with equal column counts on top of each other.
pub fn vstack(parts: &[MatRef<'_, f64>]) -> Mat<f64> {
    let n = parts.first().map_or(0, |p| p.ncols());
    assert!(parts.iter().all(|p| p.ncols() == n), "vstack column mismatch");
    let m: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Mat::<f64>::zeros(m, n);
    let mut r0 = 0;
    for p in parts {
        out.as_mut().submatrix_mut(r0, 0, p.nrows(), n).copy_from(p);
        r0 += p.nrows();
    }
    out
}

/// Row-major `rows x cols` slice as a matrix.
pub fn from_row_major(data: &[f64], rows: usize, cols: usize) -> Mat<f64> {
    assert_eq!(data.len(), rows * cols);
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

/// Row `i` of a matrix as a vector.
pub fn row(a: MatRef<'_, f64>, i: usize) -> Vec<f64> {
    (0..a.ncols()).map(|j| a[(i, j)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_small() {
        let a = Mat::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(matvec(a.as_ref(), &[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(matvec_t(a.as_ref(), &[1.0, 1.0]), vec![3.0, 5.0, 7.0]);
        let g = gram(a.as_ref());
        assert_eq!(g[(0, 0)], 9.0);
        assert_eq!(g[(1, 2)], 1.0 * 2.0 + 4.0 * 5.0);
    }

    #[test]
    fn stacking() {
        let a = Mat::from_fn(1, 2, |_, j| j as f64);
        let b = Mat::from_fn(2, 2, |i, j| 10.0 + (i + j) as f64);
        let s = vstack(&[a.as_ref(), b.as_ref()]);
        assert_eq!(s.nrows(), 3);
        assert_eq!(s[(2, 1)], 12.0);
    }
}
