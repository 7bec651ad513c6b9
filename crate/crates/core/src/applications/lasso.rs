//! LASSO paths by coordinate descent and sparse equation discovery.
//!
//! The objective at penalty `lam` is `(1/2M) ||y - c0 - X w||^2 + lam ||w||_1`
//! on internally standardized columns (zero mean, unit population variance).
//! Coefficients are reported on the original column scale together with the
//! intercept `c0`.

use std::collections::BTreeMap;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::solve::lstsq;

/// `count` log-spaced penalties from `hi` down to `lo`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && count >= 1) {
        return Err(Error::invalid(format!("bad penalty grid [{lo}, {hi}] x {count}")));
    }
    if count == 1 {
        return Ok(vec![hi]);
    }
    let (a, b) = (hi.log10(), lo.log10());
    Ok((0..count)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64))
        .collect())
}

/// The 100-point grid over `[1e-5, 1e1]`.
pub fn default_penalty_grid() -> Vec<f64> {
    log_grid(1e-5, 1e1, 100).expect("static grid")
}

/// Centered and scaled copy of a design matrix.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub z: Mat<f64>,
    pub y: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub y_mean: f64,
    /// Columns with zero variance never enter the model.
    pub constant: Vec<bool>,
}

pub fn standardize(x: &Mat<f64>, y: &[f64]) -> Result<Standardized> {
    let (m, p) = x.shape();
    if m == 0 || m != y.len() {
        return Err(Error::invalid(format!("design has {m} rows, target has {}", y.len())));
    }
    if x.col_iter().any(|c| c.iter().any(|v| !v.is_finite())) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("LASSO inputs".into()));
    }
    let mf = m as f64;
    let mut means = vec![0.0; p];
    let mut scales = vec![1.0; p];
    let mut constant = vec![false; p];
    let mut z = Mat::<f64>::zeros(m, p);
    for j in 0..p {
        let mean = (0..m).map(|i| x[(i, j)]).sum::<f64>() / mf;
        let var = (0..m).map(|i| (x[(i, j)] - mean).powi(2)).sum::<f64>() / mf;
        means[j] = mean;
        if var.sqrt() <= 1e-12 * (1.0 + mean.abs()) {
            constant[j] = true;
            continue;
        }
        scales[j] = var.sqrt();
        for i in 0..m {
            z[(i, j)] = (x[(i, j)] - mean) / scales[j];
        }
    }
    let y_mean = y.iter().sum::<f64>() / mf;
    Ok(Standardized {
        z,
        y: y.iter().map(|v| v - y_mean).collect(),
        means,
        scales,
        y_mean,
        constant,
    })
}

impl Standardized {
    /// `Z^T r / M` for the residual of standardized weights `w`.
    pub fn correlations(&self, w: &[f64]) -> Vec<f64> {
        let (m, p) = self.z.shape();
        let mut r = self.y.clone();
        for j in 0..p {
            if w[j] != 0.0 {
                for i in 0..m {
                    r[i] -= self.z[(i, j)] * w[j];
                }
            }
        }
        (0..p)
            .map(|j| (0..m).map(|i| self.z[(i, j)] * r[i]).sum::<f64>() / m as f64)
            .collect()
    }

    /// Largest violation of the LASSO optimality conditions at `w`.
    pub fn kkt_violation(&self, w: &[f64], penalty: f64) -> f64 {
        let g = self.correlations(w);
        g.iter()
            .zip(w)
            .zip(&self.constant)
            .filter(|(_, &c)| !c)
            .map(|((&gj, &wj), _)| {
                if wj == 0.0 {
                    (gj.abs() - penalty).max(0.0)
                } else {
                    (gj - penalty * wj.signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    /// Stop when no standardized coefficient moves by more than this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPoint {
    pub penalty: f64,
    /// Standardized-scale weights.
    pub weights: Vec<f64>,
    /// Original-scale coefficients.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub support: Vec<usize>,
    pub sweeps: usize,
    /// False when `max_sweeps` ran out before the tolerance was met.
    pub converged: bool,
}

/// OLS fit on a fixed support, with intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refit {
    pub support: Vec<usize>,
    /// Full length; zero off the support.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub residual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct LassoPath {
    pub points: Vec<LassoPoint>,
    /// One refit per distinct support, in order of first appearance.
    pub refits: Vec<Refit>,
    pub standardized: Standardized,
}

impl LassoPath {
    pub fn flagged(&self) -> Vec<f64> {
        self.points.iter().filter(|p| !p.converged).map(|p| p.penalty).collect()
    }
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Plain least squares of `y` on the listed columns plus an intercept.
pub fn ols_refit(x: &Mat<f64>, y: &[f64], support: &[usize]) -> Result<Refit> {
    let m = x.nrows();
    let a = Mat::from_fn(m, support.len() + 1, |i, k| if k < support.len() { x[(i, support[k])] } else { 1.0 });
    let sol = lstsq(a.as_ref(), y)?.x;
    let mut coefficients = vec![0.0; x.ncols()];
    for (k, &j) in support.iter().enumerate() {
        coefficients[j] = sol[k];
    }
    let intercept = sol[support.len()];
    let r: Vec<f64> = (0..m)
        .map(|i| y[i] - intercept - support.iter().zip(&sol).map(|(&j, c)| c * x[(i, j)]).sum::<f64>())
        .collect();
    Ok(Refit {
        support: support.to_vec(),
        coefficients,
        intercept,
        residual_norm: norm2(&r),
    })
}

/// Coordinate-descent LASSO over `penalties`, warm-started from the
/// previous penalty in the given order.
pub fn lasso_path(x: &Mat<f64>, y: &[f64], penalties: &[f64], cfg: &LassoConfig) -> Result<LassoPath> {
    if penalties.is_empty() || penalties.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
        return Err(Error::invalid("penalties must be a nonempty list of finite non-negative values"));
    }
    let st = standardize(x, y)?;
    let (m, p) = st.z.shape();
    let mf = m as f64;
    let mut w = vec![0.0; p];
    let mut r = st.y.clone();
    let mut points = Vec::with_capacity(penalties.len());
    let mut refits: Vec<Refit> = Vec::new();
    for &lam in penalties {
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < cfg.max_sweeps {
            sweeps += 1;
            let mut delta: f64 = 0.0;
            for j in (0..p).filter(|&j| !st.constant[j]) {
                let zj = st.z.col(j);
                let rho = (0..m).map(|i| zj[i] * r[i]).sum::<f64>() / mf + w[j];
                let new = soft(rho, lam);
                let d = new - w[j];
                if d != 0.0 {
                    for i in 0..m {
                        r[i] -= zj[i] * d;
                    }
                    w[j] = new;
                    delta = delta.max(d.abs());
                }
            }
            if delta <= cfg.tol {
                converged = true;
                break;
            }
        }
        let support: Vec<usize> = (0..p).filter(|&j| w[j] != 0.0).collect();
        let coefficients: Vec<f64> = (0..p).map(|j| w[j] / st.scales[j]).collect();
        let intercept = st.y_mean - (0..p).map(|j| coefficients[j] * st.means[j]).sum::<f64>();
        if !refits.iter().any(|f| f.support == support) {
            refits.push(ols_refit(x, y, &support)?);
        }
        points.push(LassoPoint {
            penalty: lam,
            weights: w.clone(),
            coefficients,
            intercept,
            support,
            sweeps,
            converged,
        });
    }
    Ok(LassoPath {
        points,
        refits,
        standardized: st,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub penalties: Vec<f64>,
    pub lasso: LassoConfig,
    /// A support qualifies when its refit residual is within this relative
    /// margin of the dense OLS residual.
    pub residual_margin: f64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            penalties: default_penalty_grid(),
            lasso: LassoConfig::default(),
            residual_margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub penalty: f64,
    pub support: Vec<String>,
    pub converged: bool,
}

/// Selected equation `target = intercept + sum_k c_k term_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    pub target: String,
    pub support: Vec<String>,
    pub coefficients: BTreeMap<String, f64>,
    pub intercept: f64,
    pub residual_norm: f64,
    pub dense_residual_norm: f64,
    pub path: Vec<PathEntry>,
    pub flagged: Vec<f64>,
}

impl Discovery {
    pub fn coefficient(&self, label: &str) -> f64 {
        self.coefficients.get(label).copied().unwrap_or(0.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Run the LASSO path for `target` against every other column and keep
/// the smallest support whose OLS refit residual is within the margin of
/// dense OLS. Ties go to the smaller residual.
pub fn discover(dict: &Dictionary, target: &str, cfg: &DiscoveryConfig) -> Result<Discovery> {
    let (y, cands) = dict.split_target(target)?;
    if cands.ncols() == 0 {
        return Err(Error::invalid("dictionary has no candidate terms besides the target"));
    }
    let path = lasso_path(&cands.matrix, &y, &cfg.penalties, &cfg.lasso)?;
    let all: Vec<usize> = (0..cands.ncols()).filter(|&j| !path.standardized.constant[j]).collect();
    let dense = ols_refit(&cands.matrix, &y, &all)?;
    let limit = (1.0 + cfg.residual_margin) * dense.residual_norm;
    let best = path
        .refits
        .iter()
        .filter(|f| f.residual_norm <= limit)
        .min_by(|a, b| {
            a.support
                .len()
                .cmp(&b.support.len())
                .then(a.residual_norm.total_cmp(&b.residual_norm))
        })
        .unwrap_or(&dense);
    let names = |s: &[usize]| s.iter().map(|&j| cands.labels[j].clone()).collect::<Vec<_>>();
    Ok(Discovery {
        target: target.into(),
        support: names(&best.support),
        coefficients: best.support.iter().map(|&j| (cands.labels[j].clone(), best.coefficients[j])).collect(),
        intercept: best.intercept,
        residual_norm: best.residual_norm,
        dense_residual_norm: dense.residual_norm,
        path: path
            .points
            .iter()
            .map(|p| PathEntry {
                penalty: p.penalty,
                support: names(&p.support),
                converged: p.converged,
            })
            .collect(),
        flagged: path.flagged(),
    })
}
