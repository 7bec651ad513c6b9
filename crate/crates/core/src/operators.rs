//! Linear differential operators as lists of `(coefficient, multi-index)`
//! terms, assembled against a feature basis in closed form.

use std::fmt;
use std::sync::Arc;

use faer::{Mat, MatRef};

use crate::basis::{check_points, FeatureMap, MultiIndex, PhaseCache};
use crate::error::{Error, Result};

type FieldFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A named scalar function of position.
#[derive(Clone)]
pub struct ScalarField {
    name: String,
    f: Arc<FieldFn>,
}

impl ScalarField {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), move |_| c)
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    /// Values at every row of `points`; a non-finite value is reported with
    /// the offending row.
    pub fn eval_points(&self, points: MatRef<'_, f64>) -> Result<Vec<f64>> {
        let d = points.ncols();
        let mut x = vec![0.0; d];
        let mut out = Vec::with_capacity(points.nrows());
        for i in 0..points.nrows() {
            for (k, xk) in x.iter_mut().enumerate() {
                *xk = points[(i, k)];
            }
            let v = self.eval(&x);
            if !v.is_finite() {
                return Err(Error::CoefficientField { index: i });
            }
            out.push(v);
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let f = Arc::clone(&self.f);
        Self {
            name: format!("{s}*{}", self.name),
            f: Arc::new(move |x| s * f(x)),
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({})", self.name)
    }
}

#[derive(Debug, Clone)]
pub enum Coefficient {
    Constant(f64),
    Field(ScalarField),
}

impl Coefficient {
    fn scaled(&self, s: f64) -> Self {
        match self {
            Coefficient::Constant(c) => Coefficient::Constant(c * s),
            Coefficient::Field(f) => Coefficient::Field(f.scaled(s)),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Field(f) => f.eval(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OperatorTerm {
    pub coefficient: Coefficient,
    pub alpha: MultiIndex,
}

/// `L = sum_t c_t(x) D^{alpha_t}`.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    dim: usize,
    terms: Vec<OperatorTerm>,
}

/// Boundary operators share the representation.
pub type BoundaryOperator = LinearOperator;

impl LinearOperator {
    pub fn new(dim: usize, terms: Vec<OperatorTerm>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("operator dimension must be at least 1"));
        }
        if terms.is_empty() {
            return Err(Error::invalid("operator needs at least one term"));
        }
        if let Some(t) = terms.iter().find(|t| t.alpha.dim() != dim) {
            return Err(Error::invalid(format!(
                "term multi-index has {} axes, operator dimension is {dim}",
                t.alpha.dim()
            )));
        }
        Ok(Self { dim, terms })
    }

    fn from_constants(dim: usize, terms: Vec<(f64, MultiIndex)>) -> Self {
        let terms = terms
            .into_iter()
            .map(|(c, alpha)| OperatorTerm {
                coefficient: Coefficient::Constant(c),
                alpha,
            })
            .collect();
        Self { dim, terms }
    }

    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("operator dimension must be at least 1"));
        }
        Ok(Self::from_constants(dim, vec![(1.0, MultiIndex::zeros(dim))]))
    }

    /// `d^order / dx_axis^order`.
    pub fn partial(dim: usize, axis: usize, order: u32) -> Result<Self> {
        if axis >= dim {
            return Err(Error::invalid(format!("axis {axis} out of range for dimension {dim}")));
        }
        if order == 0 {
            return Err(Error::invalid("partial derivative order must be at least 1"));
        }
        Ok(Self::from_constants(dim, vec![(1.0, MultiIndex::axis(dim, axis, order))]))
    }

    pub fn laplacian(dim: usize) -> Result<Self> {
        Self::laplacian_on(dim, dim)
    }

    /// Laplacian over the first `axes` coordinates of a `dim`-dimensional space.
    fn laplacian_on(dim: usize, axes: usize) -> Result<Self> {
        if dim == 0 || axes == 0 || axes > dim {
            return Err(Error::invalid("laplacian needs at least one spatial axis"));
        }
        Ok(Self::from_constants(
            dim,
            (0..axes).map(|k| (1.0, MultiIndex::axis(dim, k, 2))).collect(),
        ))
    }

    /// `sum_{k,l} d^4 / dx_k^2 dx_l^2`, mixed terms written out explicitly.
    pub fn biharmonic(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("operator dimension must be at least 1"));
        }
        let mut terms = Vec::new();
        for k in 0..dim {
            terms.push((1.0, MultiIndex::axis(dim, k, 4)));
            for l in k + 1..dim {
                terms.push((2.0, MultiIndex::axis(dim, k, 2).raised(l, 2)));
            }
        }
        Ok(Self::from_constants(dim, terms))
    }

    /// `v . grad`.
    pub fn advection(velocity: &[f64]) -> Result<Self> {
        let dim = velocity.len();
        if dim == 0 {
            return Err(Error::invalid("velocity must have at least one component"));
        }
        Ok(Self::from_constants(
            dim,
            velocity
                .iter()
                .enumerate()
                .map(|(k, &v)| (v, MultiIndex::unit(dim, k)))
                .collect(),
        ))
    }

    /// `Laplacian + k^2 I`.
    pub fn helmholtz(dim: usize, k: f64) -> Result<Self> {
        Self::laplacian(dim)?.add(&Self::identity(dim)?.scale(k * k))
    }

    /// `d_t - kappa * spatial Laplacian`, time on the last axis.
    pub fn heat(space_dim: usize, kappa: f64) -> Result<Self> {
        let dim = space_dim + 1;
        let dt = Self::partial(dim, space_dim, 1)?;
        dt.add(&Self::laplacian_on(dim, space_dim)?.scale(-kappa))
    }

    /// `d_tt - c^2 * spatial Laplacian`, time on the last axis.
    pub fn wave(space_dim: usize, c: f64) -> Result<Self> {
        let dim = space_dim + 1;
        let dtt = Self::partial(dim, space_dim, 2)?;
        dtt.add(&Self::laplacian_on(dim, space_dim)?.scale(-c * c))
    }

    /// `div(nu grad u) = nu Laplacian u + grad(nu) . grad u` for a scalar
    /// coefficient with known gradient.
    pub fn divergence_form(nu: ScalarField, grad_nu: Vec<ScalarField>) -> Result<Self> {
        let dim = grad_nu.len();
        if dim == 0 {
            return Err(Error::invalid("coefficient gradient must have at least one component"));
        }
        let mut terms = Vec::with_capacity(2 * dim);
        for k in 0..dim {
            terms.push(OperatorTerm {
                coefficient: Coefficient::Field(nu.clone()),
                alpha: MultiIndex::axis(dim, k, 2),
            });
        }
        for (k, g) in grad_nu.into_iter().enumerate() {
            terms.push(OperatorTerm {
                coefficient: Coefficient::Field(g),
                alpha: MultiIndex::unit(dim, k),
            });
        }
        Self::new(dim, terms)
    }

    /// Outward normal derivative on the faces of `[lower, upper]`. At edges
    /// and corners the contributions of all touching faces are summed.
    pub fn normal_derivative(lower: &[f64], upper: &[f64]) -> Result<Self> {
        let dim = lower.len();
        if dim == 0 || upper.len() != dim {
            return Err(Error::invalid("box bounds must have equal nonzero length"));
        }
        let mut terms = Vec::with_capacity(dim);
        for k in 0..dim {
            let (lo, hi) = (lower[k], upper[k]);
            let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            let n = ScalarField::new(format!("n{k}"), move |x: &[f64]| {
                if (x[k] - hi).abs() <= tol {
                    1.0
                } else if (x[k] - lo).abs() <= tol {
                    -1.0
                } else {
                    0.0
                }
            });
            terms.push(OperatorTerm {
                coefficient: Coefficient::Field(n),
                alpha: MultiIndex::unit(dim, k),
            });
        }
        Self::new(dim, terms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[OperatorTerm] {
        &self.terms
    }

    pub fn max_order(&self) -> u32 {
        self.terms.iter().map(|t| t.alpha.total_order()).max().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|t| matches!(t.coefficient, Coefficient::Constant(_)))
    }

    /// Sum of two operators. Constant terms with equal multi-indices merge.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::invalid(format!(
                "cannot add operators of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        let mut terms = self.terms.clone();
        for t in &other.terms {
            let merged = match &t.coefficient {
                Coefficient::Constant(c) => terms.iter_mut().find_map(|s| match &mut s.coefficient {
                    Coefficient::Constant(sc) if s.alpha == t.alpha => {
                        *sc += c;
                        Some(())
                    }
                    _ => None,
                }),
                Coefficient::Field(_) => None,
            };
            if merged.is_none() {
                terms.push(t.clone());
            }
        }
        Ok(Self { dim: self.dim, terms })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| OperatorTerm {
                    coefficient: t.coefficient.scaled(s),
                    alpha: t.alpha.clone(),
                })
                .collect(),
        }
    }

    pub fn negate(&self) -> Self {
        self.scale(-1.0)
    }

    /// Apply the operator to a function given through its partial
    /// derivatives at `x`.
    pub fn eval_with(&self, x: &[f64], mut deriv: impl FnMut(&MultiIndex) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient.eval(x) * deriv(&t.alpha))
            .sum()
    }
}

/// `A_ij = L[phi_j](x_i)`. Constant-coefficient terms are folded into one
/// pass over the cached trig matrices; field terms add `diag(c) D^alpha`.
pub fn apply<B: FeatureMap + ?Sized>(
    op: &LinearOperator,
    basis: &B,
    points: MatRef<'_, f64>,
    cache: Option<&PhaseCache>,
) -> Result<Mat<f64>> {
    check_points(points, basis.dim())?;
    if op.dim() != basis.dim() {
        return Err(Error::invalid(format!(
            "operator dimension {} does not match basis dimension {}",
            op.dim(),
            basis.dim()
        )));
    }
    let owned;
    let cache = match cache {
        Some(c) => {
            if c.nrows() != points.nrows() {
                return Err(Error::invalid("phase cache was built for a different point set"));
            }
            c
        }
        None => {
            owned = basis.build_cache(points)?;
            &owned
        }
    };
    let constants: Vec<(f64, &MultiIndex)> = op
        .terms()
        .iter()
        .filter_map(|t| match t.coefficient {
            Coefficient::Constant(c) => Some((c, &t.alpha)),
            Coefficient::Field(_) => None,
        })
        .collect();
    let mut out = if constants.is_empty() {
        Mat::<f64>::zeros(points.nrows(), basis.num_features())
    } else {
        basis.combination(cache, &constants)?
    };
    for t in op.terms() {
        if let Coefficient::Field(f) = &t.coefficient {
            let c = f.eval_points(points)?;
            let d = basis.derivative(cache, &t.alpha)?;
            for j in 0..out.ncols() {
                let o = out.col_as_slice_mut(j);
                for ((oi, &di), &ci) in o.iter_mut().zip(d.col_as_slice(j)).zip(&c) {
                    *oi += ci * di;
                }
            }
        }
    }
    Ok(out)
}

fn superscript(n: u32) -> String {
    const DIGITS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    n.to_string()
        .chars()
        .map(|c| DIGITS[c.to_digit(10).unwrap() as usize])
        .collect()
}

fn subscript(n: usize) -> String {
    const DIGITS: [char; 10] = ['₀', '₁', '₂', '₃', '₄', '₅', '₆', '₇', '₈', '₉'];
    n.to_string()
        .chars()
        .map(|c| DIGITS[c.to_digit(10).unwrap() as usize])
        .collect()
}

fn fmt_alpha(alpha: &MultiIndex) -> String {
    let total = alpha.total_order();
    if total == 0 {
        return "I".into();
    }
    let num = if total == 1 {
        "∂".to_string()
    } else {
        format!("∂{}", superscript(total))
    };
    let den: String = alpha
        .orders()
        .iter()
        .enumerate()
        .filter(|(_, &o)| o > 0)
        .map(|(k, &o)| {
            if o == 1 {
                format!("∂x{}", subscript(k))
            } else {
                format!("∂x{}{}", subscript(k), superscript(o))
            }
        })
        .collect();
    format!("{num}/{den}")
}

impl fmt::Display for LinearOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            match &t.coefficient {
                Coefficient::Constant(c) => {
                    let sign = if *c < 0.0 { '−' } else { '+' };
                    if i == 0 && *c >= 0.0 {
                        write!(f, "{:?}·{}", c, fmt_alpha(&t.alpha))?;
                    } else {
                        write!(f, "{sign}{:?}·{}", c.abs(), fmt_alpha(&t.alpha))?;
                    }
                }
                Coefficient::Field(s) => {
                    if i > 0 {
                        f.write_str("+")?;
                    }
                    write!(f, "{}(x)·{}", s.name(), fmt_alpha(&t.alpha))?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{eval_derivative, FeatureBasis};

    fn sample_points(m: usize, d: usize) -> Mat<f64> {
        Mat::from_fn(m, d, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin())
    }

    #[test]
    fn constructors_validate() {
        assert!(LinearOperator::partial(2, 2, 1).is_err());
        assert!(LinearOperator::partial(2, 0, 0).is_err());
        assert!(LinearOperator::new(2, vec![]).is_err());
        assert_eq!(LinearOperator::biharmonic(3).unwrap().terms().len(), 6);
        assert_eq!(LinearOperator::heat(5, 1.0).unwrap().dim(), 6);
    }

    #[test]
    fn pretty_print() {
        let op = LinearOperator::laplacian(2)
            .unwrap()
            .negate()
            .add(&LinearOperator::identity(2).unwrap().scale(100.0))
            .unwrap();
        assert_eq!(op.to_string(), "−1.0·∂²/∂x₀² −1.0·∂²/∂x₁² +100.0·I");
        let bh = LinearOperator::biharmonic(2).unwrap();
        assert!(bh.to_string().contains("2.0·∂⁴/∂x₀²∂x₁²"));
    }

    #[test]
    fn identity_is_plain_features() {
        let b = FeatureBasis::sample(2, &[20], &[2.0], 3).unwrap();
        let x = sample_points(9, 2);
        let a = apply(&LinearOperator::identity(2).unwrap(), &b, x.as_ref(), None).unwrap();
        let h = eval_derivative(&b, x.as_ref(), &MultiIndex::zeros(2), None).unwrap();
        assert_eq!(a, h);
    }

    #[test]
    fn laplacian_and_biharmonic_prefactors() {
        let b = FeatureBasis::sample(2, &[25], &[3.0], 4).unwrap();
        let x = sample_points(11, 2);
        let h = eval_derivative(&b, x.as_ref(), &MultiIndex::zeros(2), None).unwrap();
        let lap = apply(&LinearOperator::laplacian(2).unwrap(), &b, x.as_ref(), None).unwrap();
        let bih = apply(&LinearOperator::biharmonic(2).unwrap(), &b, x.as_ref(), None).unwrap();
        let k = 10.0;
        let helm = apply(&LinearOperator::helmholtz(2, k).unwrap(), &b, x.as_ref(), None).unwrap();
        for j in 0..25 {
            let w2: f64 = b.weight(j).iter().map(|v| v * v).sum();
            for i in 0..11 {
                let hij = h[(i, j)];
                assert!((lap[(i, j)] + w2 * hij).abs() <= 1e-12 * (1.0 + (w2 * hij).abs()));
                assert!((bih[(i, j)] - w2 * w2 * hij).abs() <= 1e-12 * (1.0 + (w2 * w2 * hij).abs()));
                let want = (k * k - w2) * hij;
                assert!((helm[(i, j)] - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn advection_is_cosine_column() {
        let b = FeatureBasis::sample(2, &[10], &[2.0], 5).unwrap();
        let x = sample_points(6, 2);
        let v = [0.7, -1.3];
        let a = apply(&LinearOperator::advection(&v).unwrap(), &b, x.as_ref(), None).unwrap();
        let cache = b.build_cache(x.as_ref()).unwrap();
        let s = b.scale();
        for j in 0..10 {
            let w = b.weight(j);
            let vw = v[0] * w[0] + v[1] * w[1];
            for i in 0..6 {
                let want = s * vw * cache.cos[(i, j)];
                assert!((a[(i, j)] - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn coefficient_failure_reports_index() {
        let b = FeatureBasis::sample(1, &[4], &[1.0], 0).unwrap();
        let x = Mat::from_fn(3, 1, |i, _| i as f64);
        let bad = ScalarField::new("bad", |x: &[f64]| if x[0] > 1.5 { f64::NAN } else { 1.0 });
        let op = LinearOperator::divergence_form(bad, vec![ScalarField::zero()]).unwrap();
        match apply(&op, &b, x.as_ref(), None).unwrap_err() {
            Error::CoefficientField { index } => assert_eq!(index, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn normal_derivative_signs() {
        let op = LinearOperator::normal_derivative(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        let v = op.eval_with(&[1.0, 0.5], |a| a.orders()[0] as f64 * 3.0 + a.orders()[1] as f64 * 5.0);
        assert_eq!(v, 3.0);
        let v = op.eval_with(&[0.5, 0.0], |a| a.orders()[0] as f64 * 3.0 + a.orders()[1] as f64 * 5.0);
        assert_eq!(v, -5.0);
    }
}
