//! Dense least-squares kernels: Householder QR with an SVD fallback,
//! Tikhonov solves, and reusable factorizations.

use std::cell::Cell;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::householder;
use faer::linalg::qr::no_pivoting::factor as qr_factor;
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{ColMut, Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram, matvec, matvec_t, par};

thread_local! {
    static FACTORIZATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Factorizations performed on this thread since the last reset.
pub fn factorization_count() -> u64 {
    FACTORIZATIONS.with(Cell::get)
}

pub fn reset_factorization_count() {
    FACTORIZATIONS.with(|c| c.set(0));
}

fn count_factorization() {
    FACTORIZATIONS.with(|c| c.set(c.get() + 1));
}

/// How a least-squares solution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Qr,
    Svd,
    Tikhonov,
    Cholesky,
}

impl std::fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveMethod::Qr => "qr",
            SolveMethod::Svd => "svd",
            SolveMethod::Tikhonov => "tikhonov",
            SolveMethod::Cholesky => "cholesky",
        })
    }
}

#[derive(Debug, Clone)]
pub struct LstsqOutcome {
    pub x: Vec<f64>,
    pub rank: usize,
    pub method: SolveMethod,
}

/// `R` diagonal ratio above which the triangular factor counts as singular.
pub fn rank_threshold() -> f64 {
    1e-3 / f64::EPSILON
}

fn check_finite(a: MatRef<'_, f64>, b: &[f64]) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::invalid(format!(
            "least-squares matrix must be nonempty, got {} x {}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() != b.len() {
        return Err(Error::invalid(format!(
            "right-hand side has length {}, matrix has {} rows",
            b.len(),
            a.nrows()
        )));
    }
    let bad_a = (0..a.ncols()).any(|j| (0..a.nrows()).any(|i| !a[(i, j)].is_finite()));
    if bad_a || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("least-squares input contains non-finite entries"));
    }
    Ok(())
}

/// Householder QR of a tall matrix, factors kept for reuse.
#[derive(Debug, Clone)]
struct HouseholderQr {
    basis: Mat<f64>,
    coeff: Mat<f64>,
    r: Mat<f64>,
}

impl HouseholderQr {
    fn factor(mut a: Mat<f64>) -> Self {
        let (m, n) = a.shape();
        debug_assert!(m >= n);
        let bs = qr_factor::recommended_blocksize::<f64>(m, n);
        let mut coeff = Mat::<f64>::zeros(bs, n);
        let p = par();
        let mut mem = MemBuffer::new(qr_factor::qr_in_place_scratch::<f64>(m, n, bs, p, Default::default()));
        qr_factor::qr_in_place(a.as_mut(), coeff.as_mut(), p, MemStack::new(&mut mem), Default::default());
        let mut r = Mat::<f64>::zeros(n, n);
        r.copy_from_triangular_upper(a.as_ref().submatrix(0, 0, n, n));
        for j in 0..n {
            for i in 0..j {
                a[(i, j)] = 0.0;
            }
            a[(j, j)] = 1.0;
        }
        Self { basis: a, coeff, r }
    }

    /// `b <- Q^T b`.
    fn apply_qt(&self, b: &mut [f64]) {
        let m = self.basis.nrows();
        let bs = self.coeff.nrows();
        let mut mem = MemBuffer::new(
            householder::apply_block_householder_sequence_transpose_on_the_left_in_place_scratch::<f64>(m, bs, 1),
        );
        householder::apply_block_householder_sequence_transpose_on_the_left_in_place_with_conj(
            self.basis.as_ref(),
            self.coeff.as_ref(),
            faer::Conj::No,
            ColMut::from_slice_mut(b).as_mat_mut(),
            par(),
            MemStack::new(&mut mem),
        );
    }

    fn diag_ratio(&self) -> f64 {
        let n = self.r.nrows();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..n {
            let d = self.r[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Back-substitution on the leading `n` entries of `Q^T b`.
    fn solve_r(&self, qtb: &[f64]) -> Vec<f64> {
        let n = self.r.nrows();
        let mut x = qtb[..n].to_vec();
        solve_upper_triangular_in_place(self.r.as_ref(), ColMut::from_slice_mut(&mut x).as_mat_mut(), par());
        x
    }
}

/// Minimum-norm solution `V S^+ U^T c` with singular values below
/// `rcond * s_max` discarded. Returns the solution and the numerical rank.
fn svd_solve(a: MatRef<'_, f64>, c: &[f64], rcond: f64) -> Result<(Vec<f64>, usize)> {
    let svd = a
        .thin_svd()
        .map_err(|_| Error::Factorization {
            reason: "singular value decomposition did not converge".into(),
            suggested_mu: None,
        })?;
    let s = svd.S().column_vector();
    let k = s.nrows();
    let smax = (0..k).map(|i| s[i]).fold(0.0, f64::max);
    let cut = rcond * smax;
    let utc = matvec_t(svd.U(), c);
    let mut w = vec![0.0; k];
    let mut rank = 0;
    for i in 0..k {
        if s[i] > cut && s[i] > 0.0 {
            w[i] = utc[i] / s[i];
            rank += 1;
        }
    }
    Ok((matvec(svd.V(), &w), rank))
}

/// `argmin ||A x - b||`.
///
/// Unpivoted Householder QR; when the diagonal of `R` spans more than
/// `1e-3 / eps` the problem is treated as rank deficient and the
/// minimum-norm solution is taken from an SVD of `R`.
pub fn lstsq(a: MatRef<'_, f64>, b: &[f64]) -> Result<LstsqOutcome> {
    check_finite(a, b)?;
    count_factorization();
    let (m, n) = a.shape();
    let rcond = f64::EPSILON * m.max(n) as f64;
    if m < n {
        let (x, rank) = svd_solve(a, b, rcond)?;
        return Ok(LstsqOutcome {
            x,
            rank,
            method: SolveMethod::Svd,
        });
    }
    let qr = HouseholderQr::factor(a.to_owned());
    let mut qtb = b.to_vec();
    qr.apply_qt(&mut qtb);
    if qr.diag_ratio() <= rank_threshold() {
        return Ok(LstsqOutcome {
            x: qr.solve_r(&qtb),
            rank: n,
            method: SolveMethod::Qr,
        });
    }
    let (x, rank) = svd_solve(qr.r.as_ref(), &qtb[..n], rcond)?;
    Ok(LstsqOutcome {
        x,
        rank,
        method: SolveMethod::Svd,
    })
}

fn stacked(a: MatRef<'_, f64>, mu: f64) -> Mat<f64> {
    let (m, n) = a.shape();
    let mut s = Mat::<f64>::zeros(m + n, n);
    s.as_mut().submatrix_mut(0, 0, m, n).copy_from(a);
    let r = mu.sqrt();
    for j in 0..n {
        s[(m + j, j)] = r;
    }
    s
}

/// `argmin ||A x - b||^2 + mu ||x||^2` via QR of `[A; sqrt(mu) I]`.
/// `mu = 0` is plain [`lstsq`].
pub fn solve_tikhonov(a: MatRef<'_, f64>, b: &[f64], mu: f64) -> Result<LstsqOutcome> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("Tikhonov parameter must be >= 0, got {mu}")));
    }
    if mu == 0.0 {
        return lstsq(a, b);
    }
    check_finite(a, b)?;
    count_factorization();
    let (m, n) = a.shape();
    let qr = HouseholderQr::factor(stacked(a, mu));
    let mut rhs = vec![0.0; m + n];
    rhs[..m].copy_from_slice(b);
    qr.apply_qt(&mut rhs);
    Ok(LstsqOutcome {
        x: qr.solve_r(&rhs),
        rank: n,
        method: SolveMethod::Tikhonov,
    })
}

/// Which factorization a [`PrefactoredSolver`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PrefactorKind {
    /// Cholesky of `A^T A + mu I`; a solve is `A^T b` and two triangular solves.
    #[default]
    Cholesky,
    /// Householder QR of `[A; sqrt(mu) I]`; a solve applies `Q^T` and one
    /// triangular solve.
    Qr,
}

#[derive(Debug, Clone)]
enum Factor {
    Cholesky { a: Mat<f64>, l: Mat<f64> },
    Qr(HouseholderQr),
}

/// A factorization of a fixed matrix, reusable for any right-hand side.
#[derive(Debug, Clone)]
pub struct PrefactoredSolver {
    factor: Factor,
    rows: usize,
    cols: usize,
    mu: f64,
}

/// Factor `A` once for repeated regularized solves.
pub fn prefactor(a: MatRef<'_, f64>, mu: f64, kind: PrefactorKind) -> Result<PrefactoredSolver> {
    let (m, n) = a.shape();
    check_finite(a, &vec![0.0; m])?;
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::invalid(format!("Tikhonov parameter must be >= 0, got {mu}")));
    }
    let factor = match kind {
        PrefactorKind::Cholesky => {
            if mu <= 0.0 {
                return Err(Error::invalid("the normal-equations factorization needs mu > 0"));
            }
            count_factorization();
            let mut g = gram(a);
            for j in 0..n {
                g[(j, j)] += mu;
            }
            let llt = g.llt(Side::Lower).map_err(|e| {
                let scale = (0..n).map(|j| g[(j, j)]).fold(0.0, f64::max);
                Error::Factorization {
                    reason: format!("normal matrix not positive definite ({e:?})"),
                    suggested_mu: Some((mu * 100.0).max(scale * 1e-12)),
                }
            })?;
            Factor::Cholesky {
                a: a.to_owned(),
                l: llt.L().to_owned(),
            }
        }
        PrefactorKind::Qr => {
            if m + if mu > 0.0 { n } else { 0 } < n {
                return Err(Error::invalid("QR prefactorization needs at least as many rows as columns"));
            }
            count_factorization();
            let s = if mu > 0.0 { stacked(a, mu) } else { a.to_owned() };
            Factor::Qr(HouseholderQr::factor(s))
        }
    };
    Ok(PrefactoredSolver {
        factor,
        rows: m,
        cols: n,
        mu,
    })
}

impl PrefactoredSolver {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn kind(&self) -> PrefactorKind {
        match self.factor {
            Factor::Cholesky { .. } => PrefactorKind::Cholesky,
            Factor::Qr(_) => PrefactorKind::Qr,
        }
    }

    /// Regularized solution for a new right-hand side. No factorization.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.rows {
            return Err(Error::invalid(format!(
                "right-hand side has length {}, factor expects {}",
                b.len(),
                self.rows
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("right-hand side contains non-finite entries"));
        }
        match &self.factor {
            Factor::Cholesky { a, l } => {
                let mut x = matvec_t(a.as_ref(), b);
                let p = par();
                solve_lower_triangular_in_place(l.as_ref(), ColMut::from_slice_mut(&mut x).as_mat_mut(), p);
                solve_upper_triangular_in_place(
                    l.as_ref().transpose(),
                    ColMut::from_slice_mut(&mut x).as_mat_mut(),
                    p,
                );
                Ok(x)
            }
            Factor::Qr(qr) => {
                let mut rhs = vec![0.0; qr.basis.nrows()];
                rhs[..self.rows].copy_from_slice(b);
                qr.apply_qt(&mut rhs);
                Ok(qr.solve_r(&rhs))
            }
        }
    }
}

/// Cached solve (free-function form).
pub fn solve_cached(fac: &PrefactoredSolver, b: &[f64]) -> Result<Vec<f64>> {
    fac.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm2, rel_diff};
    use crate::rng::{Stream, StreamRng};

    fn random(m: usize, n: usize, seed: u64) -> Mat<f64> {
        let mut r = StreamRng::new(seed, Stream::Probe);
        Mat::from_fn(m, n, |_, _| r.normal())
    }

    fn random_vec(m: usize, seed: u64) -> Vec<f64> {
        let mut r = StreamRng::new(seed, Stream::Noise);
        (0..m).map(|_| r.normal()).collect()
    }

    fn residual(a: &Mat<f64>, x: &[f64], b: &[f64]) -> f64 {
        let ax = matvec(a.as_ref(), x);
        norm2(&ax.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>())
    }

    #[test]
    fn identity_returns_rhs() {
        let a = Mat::<f64>::identity(4, 4);
        let b = vec![1.0, -2.0, 3.0, 0.5];
        let out = lstsq(a.as_ref(), &b).unwrap();
        assert!(rel_diff(&out.x, &b) < 1e-15);
        assert_eq!(out.method, SolveMethod::Qr);
    }

    #[test]
    fn normal_equations_hold() {
        let a = random(50, 10, 1);
        let b = random_vec(50, 2);
        let x = lstsq(a.as_ref(), &b).unwrap().x;
        let r: Vec<f64> = matvec(a.as_ref(), &x).iter().zip(&b).map(|(p, q)| p - q).collect();
        let g = matvec_t(a.as_ref(), &r);
        assert!(norm2(&g) <= 1e-10 * norm2(&matvec_t(a.as_ref(), &b)));
        let base = residual(&a, &x, &b);
        for s in 0..20 {
            let d = random_vec(10, 100 + s);
            let xp: Vec<f64> = x.iter().zip(&d).map(|(p, q)| p + 1e-3 * q).collect();
            assert!(residual(&a, &xp, &b) > base);
        }
    }

    #[test]
    fn rank_deficient_uses_svd_min_norm() {
        // duplicated column: minimum-norm solution splits the weight evenly
        let mut a = random(30, 3, 3);
        for i in 0..30 {
            a[(i, 2)] = a[(i, 1)];
        }
        let b: Vec<f64> = (0..30).map(|i| a[(i, 0)] + 2.0 * a[(i, 1)]).collect();
        let out = lstsq(a.as_ref(), &b).unwrap();
        assert_eq!(out.method, SolveMethod::Svd);
        assert_eq!(out.rank, 2);
        assert!(rel_diff(&out.x, &[1.0, 1.0, 1.0]) < 1e-10);
    }

    #[test]
    fn wide_system_min_norm() {
        let a = Mat::from_fn(1, 2, |_, _| 1.0);
        let out = lstsq(a.as_ref(), &[2.0]).unwrap();
        assert!(rel_diff(&out.x, &[1.0, 1.0]) < 1e-14);
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = random(5, 2, 4);
        a[(1, 1)] = f64::NAN;
        assert_eq!(lstsq(a.as_ref(), &[0.0; 5]).unwrap_err().kind(), "invalid-argument");
        assert!(solve_tikhonov(random(5, 2, 4).as_ref(), &[0.0; 5], -1.0).is_err());
    }

    #[test]
    fn tikhonov_limits() {
        let a = random(40, 8, 5);
        let b = random_vec(40, 6);
        let plain = lstsq(a.as_ref(), &b).unwrap().x;
        let zero = solve_tikhonov(a.as_ref(), &b, 0.0).unwrap().x;
        assert!(rel_diff(&zero, &plain) < 1e-10);
        let big = solve_tikhonov(a.as_ref(), &b, 1e6).unwrap();
        assert_eq!(big.method, SolveMethod::Tikhonov);
        assert!(norm2(&big.x) <= 1e-3 * norm2(&plain));
        // normal equations of the regularized problem
        let mu = 0.3;
        let x = solve_tikhonov(a.as_ref(), &b, mu).unwrap().x;
        let r: Vec<f64> = matvec(a.as_ref(), &x).iter().zip(&b).map(|(p, q)| p - q).collect();
        let g: Vec<f64> = matvec_t(a.as_ref(), &r).iter().zip(&x).map(|(p, q)| p + mu * q).collect();
        assert!(norm2(&g) < 1e-12 * norm2(&b));
    }

    #[test]
    fn cached_matches_direct() {
        let a = random(60, 12, 7);
        for kind in [PrefactorKind::Cholesky, PrefactorKind::Qr] {
            let fac = prefactor(a.as_ref(), 1e-6, kind).unwrap();
            for s in 0..10 {
                let b = random_vec(60, 20 + s);
                let direct = solve_tikhonov(a.as_ref(), &b, 1e-6).unwrap().x;
                let cached = solve_cached(&fac, &b).unwrap();
                assert!(rel_diff(&cached, &direct) < 1e-8, "{kind:?}");
            }
            assert!(fac.solve(&[0.0; 60]).unwrap().iter().all(|&v| v == 0.0));
        }
        assert!(prefactor(a.as_ref(), 0.0, PrefactorKind::Cholesky).is_err());
    }

    #[test]
    fn counter_tracks_factorizations() {
        reset_factorization_count();
        let a = random(20, 4, 8);
        let fac = prefactor(a.as_ref(), 1e-8, PrefactorKind::Cholesky).unwrap();
        for _ in 0..5 {
            fac.solve(&[1.0; 20]).unwrap();
        }
        assert_eq!(factorization_count(), 1);
        lstsq(a.as_ref(), &[1.0; 20]).unwrap();
        assert_eq!(factorization_count(), 2);
    }

    #[test]
    fn scaling_equivariance() {
        let a = random(30, 6, 9);
        let b = random_vec(30, 10);
        let x = lstsq(a.as_ref(), &b).unwrap().x;
        for s in [1e-3, 1e3] {
            let sa = Mat::from_fn(30, 6, |i, j| s * a[(i, j)]);
            let sb: Vec<f64> = b.iter().map(|v| s * v).collect();
            assert!(rel_diff(&lstsq(sa.as_ref(), &sb).unwrap().x, &x) < 1e-12);
        }
    }
}
