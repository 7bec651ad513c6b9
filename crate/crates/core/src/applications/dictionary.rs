//! Candidate-term dictionaries built from a fitted expansion.
//!
//! Labels follow a small grammar: a factor is `u` or `u_<axes>` where each
//! axis letter adds one derivative (`u_xx`, `u_xt`), optionally raised to a
//! power (`u^2`, `u_x^3`). A term is one factor or the product of two
//! (`u*u_x`). `1` is the constant column.

use faer::{Mat, MatRef};

use crate::basis::{MultiIndex, PhaseCache, Solution};
use crate::error::{Error, Result};
use crate::basis::FeatureMap;

/// Default axis letters by dimension.
pub fn default_axes(dim: usize) -> Vec<char> {
    match dim {
        1 => vec!['x'],
        2 => vec!['x', 'y'],
        3 => vec!['x', 'y', 'z'],
        _ => (0..dim).map(|k| char::from(b'a' + k as u8)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub alpha: MultiIndex,
    pub power: u32,
}

/// A parsed dictionary label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub label: String,
    pub factors: Vec<Factor>,
}

fn parse_factor(s: &str, axes: &[char]) -> Result<Factor> {
    let bad = || Error::invalid(format!("unknown dictionary factor `{s}`"));
    let (base, power) = match s.split_once('^') {
        Some((b, p)) => (b, p.parse::<u32>().map_err(|_| bad())?),
        None => (s, 1),
    };
    if power == 0 {
        return Err(bad());
    }
    let mut orders = vec![0u32; axes.len()];
    match base.strip_prefix('u') {
        Some("") => {}
        Some(rest) => {
            let letters = rest.strip_prefix('_').filter(|l| !l.is_empty()).ok_or_else(bad)?;
            for c in letters.chars() {
                let k = axes.iter().position(|&a| a == c).ok_or_else(bad)?;
                orders[k] += 1;
            }
        }
        None => return Err(bad()),
    }
    Ok(Factor {
        alpha: MultiIndex::new(orders)?,
        power,
    })
}

impl Term {
    pub fn parse(label: &str, axes: &[char]) -> Result<Self> {
        let label = label.trim();
        if label == "1" {
            return Ok(Self {
                label: label.into(),
                factors: Vec::new(),
            });
        }
        let parts: Vec<&str> = label.split('*').map(str::trim).collect();
        if parts.len() > 2 {
            return Err(Error::invalid(format!(
                "dictionary term `{label}` has more than two factors"
            )));
        }
        let factors = parts.iter().map(|p| parse_factor(p, axes)).collect::<Result<_>>()?;
        Ok(Self {
            label: label.into(),
            factors,
        })
    }
}

/// `M x P` matrix of candidate terms at sample points.
#[derive(Debug, Clone)]
pub struct Dictionary {
    pub labels: Vec<String>,
    pub matrix: Mat<f64>,
}

impl Dictionary {
    pub fn ncols(&self) -> usize {
        self.labels.len()
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::invalid(format!("label `{label}` is not in the dictionary")))
    }

    pub fn column(&self, label: &str) -> Result<Vec<f64>> {
        let j = self.index(label)?;
        Ok((0..self.nrows()).map(|i| self.matrix[(i, j)]).collect())
    }

    /// Split into the target column and the remaining candidates.
    pub fn split_target(&self, target: &str) -> Result<(Vec<f64>, Dictionary)> {
        let t = self.index(target)?;
        let y = self.column(target)?;
        let keep: Vec<usize> = (0..self.ncols()).filter(|&j| j != t).collect();
        let matrix = Mat::from_fn(self.nrows(), keep.len(), |i, k| self.matrix[(i, keep[k])]);
        let labels = keep.iter().map(|&j| self.labels[j].clone()).collect();
        Ok((y, Dictionary { labels, matrix }))
    }
}

/// Evaluate `labels` from the fitted expansion at `points`, with the
/// default axis letters for the fit's dimension.
pub fn build_dictionary(fit: &Solution, points: MatRef<'_, f64>, labels: &[&str]) -> Result<Dictionary> {
    build_dictionary_with_axes(fit, points, labels, &default_axes(fit.dim()))
}

/// Derivative columns come from `D^alpha H beta` with one shared phase
/// cache, the same path as `eval_derivative`.
pub fn build_dictionary_with_axes(
    fit: &Solution,
    points: MatRef<'_, f64>,
    labels: &[&str],
    axes: &[char],
) -> Result<Dictionary> {
    if axes.len() != fit.dim() {
        return Err(Error::invalid(format!(
            "{} axis letters for a {}-dimensional fit",
            axes.len(),
            fit.dim()
        )));
    }
    let terms: Vec<Term> = labels.iter().map(|l| Term::parse(l, axes)).collect::<Result<_>>()?;
    let cache: PhaseCache = fit.basis.build_cache(points)?;
    let mut derivs: Vec<(MultiIndex, Vec<f64>)> = Vec::new();
    let m = points.nrows();
    let mut matrix = Mat::<f64>::zeros(m, terms.len());
    for (j, term) in terms.iter().enumerate() {
        let mut col = vec![1.0; m];
        for f in &term.factors {
            if !derivs.iter().any(|(a, _)| *a == f.alpha) {
                let v = fit.derivative(points, &f.alpha, Some(&cache))?;
                derivs.push((f.alpha.clone(), v));
            }
            let d = &derivs.iter().find(|(a, _)| *a == f.alpha).expect("cached column").1;
            for (c, &v) in col.iter_mut().zip(d) {
                *c *= v.powi(f.power as i32);
            }
        }
        for (i, v) in col.into_iter().enumerate() {
            matrix[(i, j)] = v;
        }
    }
    Ok(Dictionary {
        labels: terms.into_iter().map(|t| t.label).collect(),
        matrix,
    })
}
