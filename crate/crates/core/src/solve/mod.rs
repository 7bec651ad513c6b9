//! One-shot linear PDE solves.
//!
//! The interior rows `L[phi_j](x_i) = f(x_i)` are stacked with penalty
//! weighted boundary and initial rows, and the whole system is solved by a
//! single least-squares call.

pub mod dense;

use std::time::Instant;

use faer::Mat;
use serde::{Deserialize, Serialize};

pub use dense::{
    factorization_count, lstsq, prefactor, reset_factorization_count, solve_cached, solve_tikhonov,
    LstsqOutcome, PrefactorKind, PrefactoredSolver, SolveMethod,
};

use crate::basis::{Basis, BasisKind, CoefficientVector, FeatureMap, Solution};
use crate::collocation::{
    sample_boundary_faces, sample_initial, sample_interior, BoxDomain, PointRole, PointSet,
};
use crate::error::{Error, Result};
use crate::linalg::{matvec, norm2, vstack};
use crate::operators::{apply, LinearOperator, ScalarField};

/// Boundary penalty used unless a problem overrides it.
pub const DEFAULT_PENALTY: f64 = 100.0;

/// A side condition `B[u] = g` enforced on a point set.
#[derive(Debug, Clone)]
pub struct Condition {
    pub label: String,
    pub operator: LinearOperator,
    pub data: ScalarField,
    /// Overrides the problem penalty for these rows.
    pub penalty: Option<f64>,
}

impl Condition {
    pub fn new(label: impl Into<String>, operator: LinearOperator, data: ScalarField) -> Self {
        Self {
            label: label.into(),
            operator,
            data,
            penalty: None,
        }
    }

    /// `u = g`.
    pub fn dirichlet(dim: usize, data: ScalarField) -> Result<Self> {
        Ok(Self::new("dirichlet", LinearOperator::identity(dim)?, data))
    }

    pub fn with_penalty(mut self, penalty: f64) -> Self {
        self.penalty = Some(penalty);
        self
    }
}

/// `L[u] = f` in the box with boundary and optional initial conditions.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub operator: LinearOperator,
    pub source: ScalarField,
    pub domain: BoxDomain,
    pub boundary: Vec<Condition>,
    pub initial: Vec<Condition>,
    /// Time coordinate for space-time problems (by convention the last).
    pub time_axis: Option<usize>,
    pub penalty: f64,
}

impl LinearProblem {
    pub fn new(operator: LinearOperator, source: ScalarField, domain: BoxDomain, boundary: Vec<Condition>) -> Result<Self> {
        let p = Self {
            operator,
            source,
            domain,
            boundary,
            initial: Vec::new(),
            time_axis: None,
            penalty: DEFAULT_PENALTY,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_initial(mut self, time_axis: usize, initial: Vec<Condition>) -> Result<Self> {
        self.time_axis = Some(time_axis);
        self.initial = initial;
        self.validate()?;
        Ok(self)
    }

    pub fn with_penalty(mut self, penalty: f64) -> Result<Self> {
        self.penalty = penalty;
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Faces carrying boundary rows: every axis except time.
    pub fn boundary_axes(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&k| Some(k) != self.time_axis).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::invalid(format!("penalty must be positive, got {}", self.penalty)));
        }
        if self.operator.dim() != d {
            return Err(Error::invalid("operator and domain dimensions differ"));
        }
        for c in self.boundary.iter().chain(&self.initial) {
            if c.operator.dim() != d {
                return Err(Error::invalid(format!("condition `{}` has the wrong dimension", c.label)));
            }
            if let Some(p) = c.penalty {
                if !(p > 0.0 && p.is_finite()) {
                    return Err(Error::invalid(format!("penalty must be positive, got {p}")));
                }
            }
        }
        if let Some(t) = self.time_axis {
            if t >= d {
                return Err(Error::invalid(format!("time axis {t} out of range for dimension {d}")));
            }
            if self.boundary_axes().is_empty() && !self.boundary.is_empty() {
                return Err(Error::invalid("boundary conditions need a spatial axis"));
            }
        } else if !self.initial.is_empty() {
            return Err(Error::invalid("initial conditions need a time axis"));
        }
        Ok(())
    }
}

/// Which block of rows a span covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Pde,
    Bc,
    Ic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSpan {
    pub kind: RowKind,
    pub label: String,
    pub start: usize,
    pub end: usize,
}

/// Stacked `[A_pde; lambda A_bc; lambda A_ic] beta = [f; lambda g; lambda h]`.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: Mat<f64>,
    pub rhs: Vec<f64>,
    pub row_spans: Vec<RowSpan>,
}

impl AssembledSystem {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `A beta - b`.
    pub fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = matvec(self.matrix.as_ref(), beta);
        for (ri, bi) in r.iter_mut().zip(&self.rhs) {
            *ri -= bi;
        }
        r
    }

    /// Residual norm restricted to each span kind.
    pub fn residual_by_kind(&self, beta: &[f64]) -> Vec<(RowKind, f64)> {
        let r = self.residual(beta);
        [RowKind::Pde, RowKind::Bc, RowKind::Ic]
            .into_iter()
            .map(|k| {
                let s: f64 = self
                    .row_spans
                    .iter()
                    .filter(|sp| sp.kind == k)
                    .flat_map(|sp| r[sp.start..sp.end].iter())
                    .map(|v| v * v)
                    .sum();
                (k, s.sqrt())
            })
            .collect()
    }
}

/// Collocation points for one solve.
#[derive(Debug, Clone)]
pub struct CollocationPoints {
    pub interior: PointSet,
    pub boundary: PointSet,
    pub initial: Option<PointSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationConfig {
    pub interior: usize,
    pub boundary: usize,
    /// Initial-slab points for space-time problems.
    pub initial: usize,
}

impl CollocationConfig {
    pub fn new(interior: usize, boundary: usize, initial: usize) -> Self {
        Self {
            interior,
            boundary,
            initial,
        }
    }
}

impl CollocationPoints {
    pub fn sample(problem: &LinearProblem, cfg: &CollocationConfig, seed: u64) -> Result<Self> {
        Self::sample_on(&problem.domain, &problem.boundary_axes(), problem.time_axis, cfg, seed)
    }

    pub fn sample_on(
        domain: &BoxDomain,
        boundary_axes: &[usize],
        time_axis: Option<usize>,
        cfg: &CollocationConfig,
        seed: u64,
    ) -> Result<Self> {
        let interior = sample_interior(domain, cfg.interior, seed);
        let boundary = if boundary_axes.is_empty() {
            PointSet::from_points(Mat::zeros(0, domain.dim()), PointRole::Boundary, seed)
        } else {
            sample_boundary_faces(domain, cfg.boundary, seed, boundary_axes)?
        };
        let initial = match time_axis {
            Some(t) => Some(sample_initial(domain, cfg.initial, seed, t)?),
            None => None,
        };
        Ok(Self {
            interior,
            boundary,
            initial,
        })
    }
}

fn condition_rows<B: FeatureMap + ?Sized>(
    conds: &[Condition],
    default_penalty: f64,
    basis: &B,
    points: &PointSet,
    kind: RowKind,
    blocks: &mut Vec<Mat<f64>>,
    rhs: &mut Vec<f64>,
    spans: &mut Vec<RowSpan>,
) -> Result<()> {
    if conds.is_empty() || points.is_empty() {
        return Ok(());
    }
    let cache = basis.build_cache(points.points.as_ref())?;
    for c in conds {
        let lam = c.penalty.unwrap_or(default_penalty);
        let mut a = apply(&c.operator, basis, points.points.as_ref(), Some(&cache))?;
        a *= faer::Scale(lam);
        let g = c.data.eval_points(points.points.as_ref())?;
        let start = rhs.len();
        rhs.extend(g.iter().map(|v| lam * v));
        spans.push(RowSpan {
            kind,
            label: c.label.clone(),
            start,
            end: rhs.len(),
        });
        blocks.push(a);
    }
    Ok(())
}

/// Build the augmented system. One phase cache is shared by all operators
/// evaluated on the same point set.
pub fn assemble<B: FeatureMap + ?Sized>(
    problem: &LinearProblem,
    basis: &B,
    points: &CollocationPoints,
) -> Result<AssembledSystem> {
    problem.validate()?;
    let d = problem.dim();
    if basis.dim() != d {
        return Err(Error::invalid(format!(
            "basis dimension {} does not match problem dimension {d}",
            basis.dim()
        )));
    }
    for ps in [Some(&points.interior), Some(&points.boundary), points.initial.as_ref()]
        .into_iter()
        .flatten()
    {
        if ps.dim() != d {
            return Err(Error::invalid(format!("{} points have the wrong dimension", ps.role)));
        }
    }
    if !problem.initial.is_empty() && points.initial.is_none() {
        return Err(Error::invalid("problem has initial conditions but no initial points were given"));
    }
    let mut blocks = Vec::new();
    let mut rhs = Vec::new();
    let mut spans = Vec::new();
    let x = points.interior.points.as_ref();
    blocks.push(apply(&problem.operator, basis, x, None)?);
    rhs.extend(problem.source.eval_points(x)?);
    spans.push(RowSpan {
        kind: RowKind::Pde,
        label: "pde".into(),
        start: 0,
        end: rhs.len(),
    });
    condition_rows(&problem.boundary, problem.penalty, basis, &points.boundary, RowKind::Bc, &mut blocks, &mut rhs, &mut spans)?;
    if let Some(ic) = &points.initial {
        condition_rows(&problem.initial, problem.penalty, basis, ic, RowKind::Ic, &mut blocks, &mut rhs, &mut spans)?;
    }
    let refs: Vec<_> = blocks.iter().map(|b| b.as_ref()).collect();
    Ok(AssembledSystem {
        matrix: vstack(&refs),
        rhs,
        row_spans: spans,
    })
}

/// Feature family, block layout and bandwidths for a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub kind: BasisKind,
    pub features_per_block: Vec<usize>,
    pub bandwidths: Vec<f64>,
    pub normalized: bool,
}

impl BasisConfig {
    /// `blocks` equal blocks sharing one bandwidth.
    pub fn uniform(kind: BasisKind, total: usize, blocks: usize, sigma: f64) -> Self {
        let blocks = blocks.max(1);
        let mut counts = vec![total / blocks; blocks];
        counts[blocks - 1] += total % blocks;
        Self {
            kind,
            features_per_block: counts,
            bandwidths: vec![sigma; blocks],
            normalized: true,
        }
    }

    pub fn total(&self) -> usize {
        self.features_per_block.iter().sum()
    }

    pub fn build(&self, dim: usize, seed: u64) -> Result<Basis> {
        Basis::sample(
            self.kind,
            dim,
            &self.features_per_block,
            &self.bandwidths,
            seed,
            self.normalized,
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub basis: f64,
    pub sampling: f64,
    pub assembly: f64,
    pub solve: f64,
}

impl WallTimes {
    pub fn total(&self) -> f64 {
        self.basis + self.sampling + self.assembly + self.solve
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub coefficients: CoefficientVector,
    /// `||A beta - b||_2` over all rows.
    pub residual_norm: f64,
    pub residual_pde: f64,
    pub residual_bc: f64,
    pub residual_ic: f64,
    pub wall_times: WallTimes,
    pub rank_estimate: usize,
    pub method: SolveMethod,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    /// Boundary points are spread uniformly over faces, not by face area.
    pub face_allocation: String,
}

/// Solve an assembled system with one factorization.
pub fn solve_system(system: &AssembledSystem, mu: f64) -> Result<LstsqOutcome> {
    if mu > 0.0 {
        solve_tikhonov(system.matrix.as_ref(), &system.rhs, mu)
    } else {
        lstsq(system.matrix.as_ref(), &system.rhs)
    }
}

/// Assemble and solve on a given basis and point sets.
pub fn solve_on<B>(problem: &LinearProblem, basis: B, points: &CollocationPoints, mu: f64, seed: u64) -> Result<(Solution, SolveReport)>
where
    B: Into<Basis>,
{
    let basis: Basis = basis.into();
    let t0 = Instant::now();
    let system = assemble(problem, &basis, points)?;
    let t_assembly = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let out = solve_system(&system, mu)?;
    let t_solve = t1.elapsed().as_secs_f64();
    if out.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares coefficients".into()));
    }
    let parts = system.residual_by_kind(&out.x);
    let get = |k: RowKind| parts.iter().find(|(kk, _)| *kk == k).map_or(0.0, |p| p.1);
    let residual_norm = norm2(&system.residual(&out.x));
    let coefficients = CoefficientVector(out.x);
    let report = SolveReport {
        coefficients: coefficients.clone(),
        residual_norm,
        residual_pde: get(RowKind::Pde),
        residual_bc: get(RowKind::Bc),
        residual_ic: get(RowKind::Ic),
        wall_times: WallTimes {
            assembly: t_assembly,
            solve: t_solve,
            ..Default::default()
        },
        rank_estimate: out.rank,
        method: out.method,
        rows: system.nrows(),
        cols: system.ncols(),
        seed,
        face_allocation: "uniform".into(),
    };
    Ok((Solution::new(basis, coefficients)?, report))
}

/// End-to-end pipeline: sample the basis and points from `seed`, assemble,
/// solve once.
pub fn solve_linear(
    problem: &LinearProblem,
    basis_cfg: &BasisConfig,
    colloc: &CollocationConfig,
    seed: u64,
    mu: f64,
) -> Result<(Solution, SolveReport)> {
    let t0 = Instant::now();
    let basis = basis_cfg.build(problem.dim(), seed)?;
    let t_basis = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let points = CollocationPoints::sample(problem, colloc, seed)?;
    let t_sampling = t1.elapsed().as_secs_f64();
    let (sol, mut report) = solve_on(problem, basis, &points, mu, seed)?;
    report.wall_times.basis = t_basis;
    report.wall_times.sampling = t_sampling;
    Ok((sol, report))
}

impl SolveReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
