//! Closed-form exact solutions with analytic partial derivatives.
//!
//! Solutions are built from ridge profiles `g(a . x + c)`, whose derivatives
//! are `prod_k a_k^alpha_k g^(|alpha|)`, combined by sums, scalings and
//! products (general Leibniz rule). Anything else is a hand-written
//! closure.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use crate::basis::MultiIndex;
use crate::error::{Error, Result};
use crate::tanh::TanhDerivTable;

/// One-variable profile of a ridge function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Sin,
    Cos,
    Exp,
    Tanh,
}

impl Profile {
    /// `g^(n)(z)`.
    pub fn derivative(self, n: u32, z: f64) -> Result<f64> {
        Ok(match self {
            Profile::Sin => (z + n as f64 * FRAC_PI_2).sin(),
            Profile::Cos => (z + n as f64 * FRAC_PI_2).cos(),
            Profile::Exp => z.exp(),
            Profile::Tanh => TanhDerivTable::new().eval(n, z.tanh())?,
        })
    }
}

type CustomFn = dyn Fn(&[f64], &MultiIndex) -> Result<f64> + Send + Sync;

#[derive(Clone)]
pub enum Exact {
    Const(f64),
    /// `g(dir . x + offset)`.
    Ridge { profile: Profile, dir: Vec<f64>, offset: f64 },
    Sum(Vec<Exact>),
    Product(Vec<Exact>),
    Scaled(f64, Box<Exact>),
    Custom { name: String, f: Arc<CustomFn> },
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exact::Const(c) => write!(f, "{c}"),
            Exact::Ridge { profile, dir, offset } => write!(f, "{profile:?}({dir:?}.x + {offset})"),
            Exact::Sum(v) => f.debug_tuple("Sum").field(v).finish(),
            Exact::Product(v) => f.debug_tuple("Product").field(v).finish(),
            Exact::Scaled(s, e) => write!(f, "{s}*{e:?}"),
            Exact::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All `beta <= alpha` componentwise.
fn sub_indices(alpha: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::with_capacity(alpha.len())];
    for &a in alpha {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..=a).map(move |b| {
                    let mut p = prefix.clone();
                    p.push(b);
                    p
                })
            })
            .collect();
    }
    out
}

impl Exact {
    /// `sin(a x_axis + c)` in `dim` dimensions.
    pub fn sin_axis(dim: usize, axis: usize, a: f64, c: f64) -> Self {
        Self::ridge_axis(Profile::Sin, dim, axis, a, c)
    }

    pub fn cos_axis(dim: usize, axis: usize, a: f64, c: f64) -> Self {
        Self::ridge_axis(Profile::Cos, dim, axis, a, c)
    }

    pub fn ridge_axis(profile: Profile, dim: usize, axis: usize, a: f64, c: f64) -> Self {
        let mut dir = vec![0.0; dim];
        dir[axis] = a;
        Exact::Ridge { profile, dir, offset: c }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(&[f64], &MultiIndex) -> Result<f64> + Send + Sync + 'static) -> Self {
        Exact::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn scaled(self, s: f64) -> Self {
        Exact::Scaled(s, Box::new(self))
    }

    /// `D^alpha u(x)`.
    pub fn deriv(&self, x: &[f64], alpha: &MultiIndex) -> Result<f64> {
        match self {
            Exact::Const(c) => Ok(if alpha.is_zero() { *c } else { 0.0 }),
            Exact::Ridge { profile, dir, offset } => {
                let z: f64 = dir.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + offset;
                let pre = alpha.monomial(dir);
                if pre == 0.0 {
                    return Ok(0.0);
                }
                Ok(pre * profile.derivative(alpha.total_order(), z)?)
            }
            Exact::Sum(v) => v.iter().map(|e| e.deriv(x, alpha)).sum(),
            Exact::Scaled(s, e) => Ok(s * e.deriv(x, alpha)?),
            Exact::Product(v) => match v.len() {
                0 => Exact::Const(1.0).deriv(x, alpha),
                1 => v[0].deriv(x, alpha),
                _ => {
                    let rest = Exact::Product(v[1..].to_vec());
                    let a = alpha.orders();
                    let mut acc = 0.0;
                    for beta in sub_indices(a) {
                        let c: f64 = a.iter().zip(&beta).map(|(&ak, &bk)| binomial(ak, bk)).product();
                        let gamma: Vec<u32> = a.iter().zip(&beta).map(|(&ak, &bk)| ak - bk).collect();
                        let f = v[0].deriv(x, &MultiIndex::new(beta)?)?;
                        if f == 0.0 {
                            continue;
                        }
                        acc += c * f * rest.deriv(x, &MultiIndex::new(gamma)?)?;
                    }
                    Ok(acc)
                }
            },
            Exact::Custom { f, .. } => f(x, alpha),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.deriv(x, &MultiIndex::zeros(x.len())).expect("value of an exact solution")
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|k| self.deriv(x, &MultiIndex::unit(x.len(), k)).expect("gradient of an exact solution"))
            .collect()
    }
}

/// Sine-Gordon breather `u = 4 atan(q)`, `q = (s/w) sin(w t) sech(s x)`,
/// `s = sqrt(1 - w^2)`, on `(x, t)`. Derivatives up to total order 2.
///
/// With `A(t) = (s/w) sin(w t)` and `B(x) = sech(s x)`:
/// `A' = s cos(w t)`, `A'' = -s w sin(w t)`, `B' = -s B tanh(s x)`,
/// `B'' = s^2 B (2 tanh^2(s x) - 1)`; then `u_i = g'(q) q_i` and
/// `u_ij = g''(q) q_i q_j + g'(q) q_ij` with `g' = 4/(1+q^2)` and
/// `g'' = -8q/(1+q^2)^2`.
pub fn breather(w: f64) -> Exact {
    let s = (1.0 - w * w).sqrt();
    Exact::custom(format!("breather(w={w})"), move |x: &[f64], alpha: &MultiIndex| {
        let (xx, t) = (x[0], x[1]);
        let a = [s / w * (w * t).sin(), s * (w * t).cos(), -s * w * (w * t).sin()];
        let th = (s * xx).tanh();
        let b0 = 1.0 / (s * xx).cosh();
        let b = [b0, -s * b0 * th, s * s * b0 * (2.0 * th * th - 1.0)];
        let q = a[0] * b[0];
        let g1 = 4.0 / (1.0 + q * q);
        let g2 = -8.0 * q / (1.0 + q * q).powi(2);
        // q derivative with i x-derivatives and j t-derivatives
        let dq = |i: usize, j: usize| a[j] * b[i];
        match (alpha.orders()[0], alpha.orders()[1]) {
            (0, 0) => Ok(4.0 * q.atan()),
            (1, 0) => Ok(g1 * dq(1, 0)),
            (0, 1) => Ok(g1 * dq(0, 1)),
            (2, 0) => Ok(g2 * dq(1, 0).powi(2) + g1 * dq(2, 0)),
            (0, 2) => Ok(g2 * dq(0, 1).powi(2) + g1 * dq(0, 2)),
            (1, 1) => Ok(g2 * dq(1, 0) * dq(0, 1) + g1 * dq(1, 1)),
            _ => Err(Error::UnsupportedOrder {
                order: alpha.total_order(),
                max: 2,
            }),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(e: &Exact, x: &[f64], alpha: &MultiIndex, axis: usize) {
        // derivative of D^alpha along axis vs D^{alpha + e_axis}
        let h = 1e-5;
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[axis] += h;
        xm[axis] -= h;
        let fd = (e.deriv(&xp, alpha).unwrap() - e.deriv(&xm, alpha).unwrap()) / (2.0 * h);
        let an = e.deriv(x, &alpha.raised(axis, 1)).unwrap();
        assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "{e:?} {alpha:?} axis {axis}: {fd} vs {an}");
    }

    #[test]
    fn product_leibniz_matches_fd() {
        let e = Exact::Product(vec![
            Exact::ridge_axis(Profile::Exp, 2, 1, -1.0, 0.0),
            Exact::sin_axis(2, 0, 3.0, 0.2),
            Exact::Ridge {
                profile: Profile::Tanh,
                dir: vec![0.7, -0.4],
                offset: 0.1,
            },
        ]);
        let x = [0.3, 0.6];
        for a in [vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1], vec![2, 1]] {
            let alpha = MultiIndex::new(a).unwrap();
            fd_check(&e, &x, &alpha, 0);
            fd_check(&e, &x, &alpha, 1);
        }
    }

    #[test]
    fn breather_derivatives_match_fd() {
        let e = breather(0.8);
        for x in [[0.3, 0.9], [-1.2, 2.5], [2.0, 0.1]] {
            for a in [vec![0, 0], vec![1, 0], vec![0, 1]] {
                let alpha = MultiIndex::new(a).unwrap();
                fd_check(&e, &x, &alpha, 0);
                fd_check(&e, &x, &alpha, 1);
            }
        }
        assert!(e.deriv(&[0.0, 0.0], &MultiIndex::new(vec![3, 0]).unwrap()).is_err());
    }

    #[test]
    fn cos_and_sin_agree() {
        let s = Exact::sin_axis(1, 0, 2.0, FRAC_PI_2);
        let c = Exact::cos_axis(1, 0, 2.0, 0.0);
        for n in 0..5 {
            let a = MultiIndex::axis(1, 0, n);
            assert!((s.deriv(&[0.37], &a).unwrap() - c.deriv(&[0.37], &a).unwrap()).abs() < 1e-12);
        }
    }
}
