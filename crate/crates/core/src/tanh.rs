//! Baseline tanh features sharing the sinusoidal sampler.
//!
//! Derivatives of `tanh` are polynomials in `tanh` itself:
//! `d^n/dz^n tanh(z) = p_n(tanh z)` with `p_0(t) = t` and
//! `p_{n+1}(t) = p_n'(t) (1 - t^2)`. The chain-rule weight monomial is the
//! same as for the sine features, so only the profile function differs.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::basis::{check_alpha, prefactors, FeatureBasis, FeatureMap, MultiIndex, PhaseCache};
use crate::error::{Error, Result};

/// Highest derivative order the recurrence table supports.
pub const MAX_TANH_ORDER: u32 = 4;

/// Integer coefficients of `p_n`, lowest degree first (length `n + 2`).
pub fn tanh_derivative_poly(n: u32) -> Result<Vec<i64>> {
    if n > MAX_TANH_ORDER {
        return Err(Error::UnsupportedOrder {
            order: n,
            max: MAX_TANH_ORDER,
        });
    }
    let mut p = vec![0, 1];
    for _ in 0..n {
        // p' then multiply by (1 - t^2)
        let dp: Vec<i64> = p.iter().enumerate().skip(1).map(|(k, &c)| k as i64 * c).collect();
        let mut next = vec![0i64; dp.len() + 2];
        for (k, &c) in dp.iter().enumerate() {
            next[k] += c;
            next[k + 2] -= c;
        }
        p = next;
    }
    p.resize(n as usize + 2, 0);
    Ok(p)
}

/// `p_0 .. p_4` precomputed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TanhDerivTable {
    polys: Vec<Vec<i64>>,
}

impl Default for TanhDerivTable {
    fn default() -> Self {
        Self::new()
    }
}

impl TanhDerivTable {
    pub fn new() -> Self {
        let polys = (0..=MAX_TANH_ORDER)
            .map(|n| tanh_derivative_poly(n).expect("order within table"))
            .collect();
        Self { polys }
    }

    pub fn poly(&self, n: u32) -> Result<&[i64]> {
        self.polys
            .get(n as usize)
            .map(Vec::as_slice)
            .ok_or(Error::UnsupportedOrder {
                order: n,
                max: MAX_TANH_ORDER,
            })
    }

    /// Horner evaluation of `p_n(t)`.
    pub fn eval(&self, n: u32, t: f64) -> Result<f64> {
        Ok(horner(self.poly(n)?, t))
    }
}

fn horner(p: &[i64], t: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * t + c as f64)
}

/// Tanh features `psi_j(x) = tanh(W_j . x + b_j)` on the weights of a
/// sinusoidal basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanhBasis {
    features: FeatureBasis,
}

impl TanhBasis {
    pub fn new(features: FeatureBasis) -> Self {
        Self { features }
    }

    pub fn sample(dim: usize, features_per_block: &[usize], bandwidths: &[f64], seed: u64) -> Result<Self> {
        Ok(Self::new(FeatureBasis::sample(dim, features_per_block, bandwidths, seed)?))
    }

    pub fn features(&self) -> &FeatureBasis {
        &self.features
    }

    fn tanh_of<'a>(&self, cache: &'a PhaseCache) -> Result<&'a Mat<f64>> {
        match &cache.tanh {
            Some(t) if t.ncols() == self.features.len() => Ok(t),
            _ => Err(Error::invalid("phase cache was not built for this tanh basis")),
        }
    }
}

/// Matrix `p_n(T)` elementwise.
fn profile(t: &Mat<f64>, p: &[i64]) -> Mat<f64> {
    Mat::from_fn(t.nrows(), t.ncols(), |i, j| horner(p, t[(i, j)]))
}

impl FeatureMap for TanhBasis {
    fn dim(&self) -> usize {
        self.features.dim()
    }

    fn num_features(&self) -> usize {
        self.features.len()
    }

    fn build_cache(&self, points: MatRef<'_, f64>) -> Result<PhaseCache> {
        let phases = self.features.phases(points)?;
        let tanh = Mat::from_fn(phases.nrows(), phases.ncols(), |i, j| phases[(i, j)].tanh());
        Ok(PhaseCache {
            phases,
            sin: Mat::zeros(0, 0),
            cos: Mat::zeros(0, 0),
            tanh: Some(tanh),
        })
    }

    fn derivative(&self, cache: &PhaseCache, alpha: &MultiIndex) -> Result<Mat<f64>> {
        self.combination(cache, &[(1.0, alpha)])
    }

    fn combination(&self, cache: &PhaseCache, terms: &[(f64, &MultiIndex)]) -> Result<Mat<f64>> {
        let t = self.tanh_of(cache)?;
        let table = TanhDerivTable::new();
        let n = self.features.len();
        let mut per_order: Vec<Option<Vec<f64>>> = vec![None; MAX_TANH_ORDER as usize + 1];
        for &(c, alpha) in terms {
            check_alpha(alpha, self.dim())?;
            let order = alpha.total_order();
            table.poly(order)?;
            let pre = prefactors(&self.features, alpha);
            let slot = per_order[order as usize].get_or_insert_with(|| vec![0.0; n]);
            for (s, p) in slot.iter_mut().zip(&pre) {
                *s += c * p;
            }
        }
        let mut out = Mat::<f64>::zeros(t.nrows(), n);
        for (order, pre) in per_order.iter().enumerate() {
            let Some(pre) = pre else { continue };
            let prof = profile(t, table.poly(order as u32)?);
            for (j, &pj) in pre.iter().enumerate() {
                if pj == 0.0 {
                    continue;
                }
                for (o, &v) in out.col_as_slice_mut(j).iter_mut().zip(prof.col_as_slice(j)) {
                    *o += pj * v;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{eval_derivative, FeatureBlock};

    #[test]
    fn known_polynomials() {
        assert_eq!(tanh_derivative_poly(0).unwrap(), vec![0, 1]);
        assert_eq!(tanh_derivative_poly(1).unwrap(), vec![1, 0, -1]);
        assert_eq!(tanh_derivative_poly(2).unwrap(), vec![0, -2, 0, 2]);
        assert_eq!(tanh_derivative_poly(3).unwrap(), vec![-2, 0, 8, 0, -6]);
        assert_eq!(tanh_derivative_poly(4).unwrap(), vec![0, 16, 0, -40, 0, 24]);
    }

    #[test]
    fn order_cap() {
        let err = tanh_derivative_poly(5).unwrap_err();
        assert_eq!(err.kind(), "unsupported-order");
        let tb = TanhBasis::sample(1, &[3], &[1.0], 0).unwrap();
        let x = Mat::from_fn(2, 1, |i, _| i as f64 * 0.1);
        assert!(eval_derivative(&tb, x.as_ref(), &MultiIndex::axis(1, 0, 5), None).is_err());
    }

    #[test]
    fn plain_features_and_odd_second_derivative() {
        let block = FeatureBlock::new(vec![1.7], vec![0.0], 1.0, 1).unwrap();
        let tb = TanhBasis::new(FeatureBasis::from_blocks(1, vec![block], false).unwrap());
        let x = Mat::from_fn(2, 1, |i, _| [0.0, 0.4][i]);
        let h = eval_derivative(&tb, x.as_ref(), &MultiIndex::zeros(1), None).unwrap();
        assert_eq!(h[(1, 0)], (1.7f64 * 0.4).tanh());
        let d2 = eval_derivative(&tb, x.as_ref(), &MultiIndex::axis(1, 0, 2), None).unwrap();
        assert_eq!(d2[(0, 0)], 0.0);
    }

    #[test]
    fn table_matches_finite_differences() {
        let table = TanhDerivTable::new();
        let h = 1e-3f64;
        for &z in &[-1.3f64, -0.2, 0.0, 0.5, 2.1] {
            for n in 1..=MAX_TANH_ORDER {
                // central difference of p_{n-1}
                let fd = (table.eval(n - 1, (z + h).tanh()).unwrap()
                    - table.eval(n - 1, (z - h).tanh()).unwrap())
                    / (2.0 * h);
                let exact = table.eval(n, z.tanh()).unwrap();
                assert!((fd - exact).abs() < 1e-5 * (1.0 + exact.abs()), "n={n} z={z}");
            }
        }
    }
}
