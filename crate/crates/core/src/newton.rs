//! Regularized Newton iteration for `L[u] + N(u, grad u, x) = f`.
//!
//! Each step solves the boundary-augmented Tikhonov problem
//! `min ||J d + R||^2 + mu ||d||^2` with the analytic Jacobian
//! `J = A_lin + diag(N_u) H + sum_k diag(N_{u_k}) D_k`, followed by Armijo
//! backtracking on `||R||^2 / 2`. Convergence is judged on the change of
//! `u` at the interior collocation points.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, CoefficientVector, FeatureMap, MultiIndex, Solution};
use crate::error::{Error, Result};
use crate::linalg::{dot, matvec, norm2};
use crate::rng::{Stream, StreamRng};
use crate::solve::{assemble, lstsq, solve_tikhonov, CollocationPoints, LinearProblem, RowKind};

type NlFn = dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync;
type NlGradFn = dyn Fn(f64, &[f64], &[f64], usize) -> f64 + Send + Sync;

/// Pointwise nonlinearity `N(u, grad u, x)` with its partial derivatives.
#[derive(Clone)]
pub struct Nonlinearity {
    name: String,
    value: Arc<NlFn>,
    d_u: Arc<NlFn>,
    d_grad: Option<Arc<NlGradFn>>,
    grad_axes: Vec<usize>,
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Nonlinearity({})", self.name)
    }
}

impl Nonlinearity {
    /// `N(u, x)` with `N_u`.
    pub fn pointwise(
        name: impl Into<String>,
        value: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        d_u: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(move |u, _g, x| value(u, x)),
            d_u: Arc::new(move |u, _g, x| d_u(u, x)),
            d_grad: None,
            grad_axes: Vec::new(),
        }
    }

    /// `N(u, grad u, x)` depending on the gradient components in `axes`.
    pub fn with_gradient(
        name: impl Into<String>,
        axes: Vec<usize>,
        value: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
        d_u: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
        d_grad: impl Fn(f64, &[f64], &[f64], usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            d_u: Arc::new(d_u),
            d_grad: Some(Arc::new(d_grad)),
            grad_axes: axes,
        }
    }

    /// `N = 0`.
    pub fn none() -> Self {
        Self::pointwise("0", |_, _| 0.0, |_, _| 0.0)
    }

    /// `c u^3`.
    pub fn cubic(c: f64) -> Self {
        Self::pointwise(format!("{c}*u^3"), move |u, _| c * u * u * u, move |u, _| 3.0 * c * u * u)
    }

    /// `c exp(u)`.
    pub fn exponential(c: f64) -> Self {
        Self::pointwise(format!("{c}*exp(u)"), move |u, _| c * u.exp(), move |u, _| c * u.exp())
    }

    /// `u du/dx_axis`.
    pub fn convective(axis: usize) -> Self {
        Self::with_gradient(
            format!("u*u_x{axis}"),
            vec![axis],
            move |u, g, _| u * g[axis],
            move |_, g, _| g[axis],
            move |u, _, _, k| if k == axis { u } else { 0.0 },
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Gradient components the nonlinearity reads.
    pub fn grad_axes(&self) -> &[usize] {
        &self.grad_axes
    }

    pub fn value(&self, u: f64, grad: &[f64], x: &[f64]) -> f64 {
        (self.value)(u, grad, x)
    }

    pub fn d_u(&self, u: f64, grad: &[f64], x: &[f64]) -> f64 {
        (self.d_u)(u, grad, x)
    }

    pub fn d_grad(&self, u: f64, grad: &[f64], x: &[f64], k: usize) -> f64 {
        self.d_grad.as_ref().map_or(0.0, |f| f(u, grad, x, k))
    }

    /// Central-difference check of the supplied partials at random states.
    pub fn check_consistency(&self, dim: usize, seed: u64, tol: f64) -> Result<()> {
        let mut rng = StreamRng::new(seed, Stream::Probe);
        let h = 1e-6;
        for _ in 0..20 {
            let u = rng.uniform_in(-1.5, 1.5);
            let g: Vec<f64> = (0..dim).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
            let x: Vec<f64> = (0..dim).map(|_| rng.uniform()).collect();
            let fd = (self.value(u + h, &g, &x) - self.value(u - h, &g, &x)) / (2.0 * h);
            let an = self.d_u(u, &g, &x);
            if (fd - an).abs() > tol * (1.0 + an.abs()) {
                return Err(Error::invalid(format!(
                    "nonlinearity `{}`: d/du disagrees with finite differences ({an} vs {fd})",
                    self.name
                )));
            }
            for &k in &self.grad_axes {
                let mut gp = g.clone();
                let mut gm = g.clone();
                gp[k] += h;
                gm[k] -= h;
                let fd = (self.value(u, &gp, &x) - self.value(u, &gm, &x)) / (2.0 * h);
                let an = self.d_grad(u, &g, &x, k);
                if (fd - an).abs() > tol * (1.0 + an.abs()) {
                    return Err(Error::invalid(format!(
                        "nonlinearity `{}`: d/du_{k} disagrees with finite differences",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `L[u] + N = f` with the side conditions of the linear part.
#[derive(Debug, Clone)]
pub struct NonlinearProblem {
    pub linear: LinearProblem,
    pub nonlinearity: Nonlinearity,
}

impl NonlinearProblem {
    pub fn new(linear: LinearProblem, nonlinearity: Nonlinearity) -> Result<Self> {
        linear.validate()?;
        if let Some(&k) = nonlinearity.grad_axes().iter().find(|&&k| k >= linear.dim()) {
            return Err(Error::invalid(format!("nonlinearity reads gradient axis {k} out of range")));
        }
        nonlinearity.check_consistency(linear.dim(), 0, 1e-6)?;
        Ok(Self { linear, nonlinearity })
    }

    pub fn dim(&self) -> usize {
        self.linear.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub mu: f64,
    pub max_iter: usize,
    /// `None` takes full steps.
    pub line_search: Option<LineSearch>,
    pub tol_rel: f64,
    pub warm_start: bool,
    /// Residual growth over the starting level counted as a strike.
    pub divergence_factor: f64,
    pub divergence_strikes: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            mu: 1e-10,
            max_iter: 30,
            line_search: Some(LineSearch::default()),
            tol_rel: 1e-12,
            warm_start: true,
            divergence_factor: 10.0,
            divergence_strikes: 3,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid(format!("mu must be >= 0, got {}", self.mu)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        if !(self.tol_rel > 0.0) {
            return Err(Error::invalid("tol_rel must be positive"));
        }
        if let Some(ls) = &self.line_search {
            if !(ls.shrink > 0.0 && ls.shrink < 1.0) || !(ls.sufficient_decrease > 0.0 && ls.sufficient_decrease < 1.0) {
                return Err(Error::invalid("line search needs shrink and decrease constants in (0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NewtonStatus {
    Converged,
    MaxIter,
    Diverged,
    /// The line search found no decrease along the Newton direction.
    Stalled,
}

impl std::fmt::Display for NewtonStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NewtonStatus::Converged => "converged",
            NewtonStatus::MaxIter => "max-iter",
            NewtonStatus::Diverged => "diverged",
            NewtonStatus::Stalled => "stalled",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Augmented residual norm after the step.
    pub residual_norm: f64,
    pub step_norm: f64,
    pub alpha: f64,
    pub rel_change: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewtonTrace {
    /// Residual norm at the starting iterate.
    pub initial_residual: f64,
    pub records: Vec<IterationRecord>,
    pub status: NewtonStatus,
}

impl NewtonTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.records.last().map_or(self.initial_residual, |r| r.residual_norm)
    }

    /// Columns `iter,residual,alpha,rel_change,time` (plus `step_norm`).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["iter", "residual", "alpha", "rel_change", "time", "step_norm"])?;
        wr.write_record(["0", &format!("{:e}", self.initial_residual), "", "", "0", ""])?;
        for r in &self.records {
            wr.write_record([
                r.iter.to_string(),
                format!("{:e}", r.residual_norm),
                format!("{}", r.alpha),
                format!("{:e}", r.rel_change),
                format!("{:.6}", r.wall_time),
                format!("{:e}", r.step_norm),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Matrices of one Newton problem on a fixed basis and point set.
pub struct NewtonSystem<'a> {
    problem: &'a NonlinearProblem,
    /// `[A_lin; lambda B]` and `[f; lambda g]`.
    linear: Mat<f64>,
    rhs: Vec<f64>,
    pde_rows: usize,
    values: Mat<f64>,
    grads: Vec<(usize, Mat<f64>)>,
    points: Vec<Vec<f64>>,
}

impl<'a> NewtonSystem<'a> {
    pub fn new<B: FeatureMap + ?Sized>(problem: &'a NonlinearProblem, basis: &B, points: &CollocationPoints) -> Result<Self> {
        let sys = assemble(&problem.linear, basis, points)?;
        let pde = sys
            .row_spans
            .iter()
            .find(|s| s.kind == RowKind::Pde)
            .expect("pde rows always present");
        let x = points.interior.points.as_ref();
        let cache = basis.build_cache(x)?;
        let d = basis.dim();
        let values = basis.derivative(&cache, &MultiIndex::zeros(d))?;
        let grads = problem
            .nonlinearity
            .grad_axes()
            .iter()
            .map(|&k| Ok((k, basis.derivative(&cache, &MultiIndex::unit(d, k))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            problem,
            linear: sys.matrix,
            rhs: sys.rhs,
            pde_rows: pde.end,
            values,
            grads,
            points: points.interior.iter().collect(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.linear.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.linear.ncols()
    }

    /// `u` at the interior points.
    pub fn u(&self, beta: &[f64]) -> Vec<f64> {
        matvec(self.values.as_ref(), beta)
    }

    fn state(&self, beta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let u = self.u(beta);
        let d = self.problem.dim();
        let mut g = vec![vec![0.0; d]; u.len()];
        for (k, dk) in &self.grads {
            for (i, v) in matvec(dk.as_ref(), beta).into_iter().enumerate() {
                g[i][*k] = v;
            }
        }
        (u, g)
    }

    /// Augmented residual `[A_lin beta + N - f; lambda (B beta - g)]`.
    pub fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = matvec(self.linear.as_ref(), beta);
        for (ri, bi) in r.iter_mut().zip(&self.rhs) {
            *ri -= bi;
        }
        let (u, g) = self.state(beta);
        let nl = &self.problem.nonlinearity;
        for i in 0..self.pde_rows {
            r[i] += nl.value(u[i], &g[i], &self.points[i]);
        }
        r
    }

    /// PDE rows of the residual only.
    pub fn pde_residual(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = self.residual(beta);
        r.truncate(self.pde_rows);
        r
    }

    /// Augmented Jacobian `dR/dbeta`.
    pub fn jacobian(&self, beta: &[f64]) -> Mat<f64> {
        let mut j = self.linear.clone();
        let (u, g) = self.state(beta);
        let nl = &self.problem.nonlinearity;
        let nu: Vec<f64> = (0..self.pde_rows).map(|i| nl.d_u(u[i], &g[i], &self.points[i])).collect();
        let ng: Vec<Vec<f64>> = self
            .grads
            .iter()
            .map(|(k, _)| (0..self.pde_rows).map(|i| nl.d_grad(u[i], &g[i], &self.points[i], *k)).collect())
            .collect();
        for c in 0..j.ncols() {
            let col = &mut j.col_as_slice_mut(c)[..self.pde_rows];
            let h = self.values.col_as_slice(c);
            for i in 0..self.pde_rows {
                col[i] += nu[i] * h[i];
            }
            for ((_, dk), w) in self.grads.iter().zip(&ng) {
                let dc = dk.col_as_slice(c);
                for i in 0..self.pde_rows {
                    col[i] += w[i] * dc[i];
                }
            }
        }
        j
    }

    /// Solution of the linear part alone (`N` dropped).
    pub fn linear_warm_start(&self, mu: f64) -> Result<Vec<f64>> {
        tikhonov_or_lstsq(&self.linear, &self.rhs, mu)
    }
}

fn tikhonov_or_lstsq(a: &Mat<f64>, b: &[f64], mu: f64) -> Result<Vec<f64>> {
    Ok(if mu > 0.0 {
        solve_tikhonov(a.as_ref(), b, mu)?.x
    } else {
        lstsq(a.as_ref(), b)?.x
    })
}

/// Augmented residual at `beta`.
pub fn residual<B: FeatureMap + ?Sized>(problem: &NonlinearProblem, basis: &B, beta: &CoefficientVector, points: &CollocationPoints) -> Result<Vec<f64>> {
    if beta.len() != basis.num_features() {
        return Err(Error::invalid("coefficient vector does not match the basis"));
    }
    Ok(NewtonSystem::new(problem, basis, points)?.residual(beta.as_slice()))
}

/// Augmented Jacobian at `beta`.
pub fn jacobian<B: FeatureMap + ?Sized>(problem: &NonlinearProblem, basis: &B, beta: &CoefficientVector, points: &CollocationPoints) -> Result<Mat<f64>> {
    if beta.len() != basis.num_features() {
        return Err(Error::invalid("coefficient vector does not match the basis"));
    }
    Ok(NewtonSystem::new(problem, basis, points)?.jacobian(beta.as_slice()))
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Result of a Newton solve. A diverged run still carries its last iterate.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub solution: Solution,
    pub trace: NewtonTrace,
}

/// Newton iteration from `start` (or the warm start / zero when `None`).
pub fn newton_iterate(system: &NewtonSystem<'_>, config: &NewtonConfig, start: Option<Vec<f64>>) -> Result<(Vec<f64>, NewtonTrace)> {
    config.validate()?;
    let t0 = Instant::now();
    let n = system.ncols();
    let mut beta = match start {
        Some(b) => {
            if b.len() != n {
                return Err(Error::invalid("starting coefficients do not match the basis"));
            }
            b
        }
        None if config.warm_start => system.linear_warm_start(config.mu)?,
        None => vec![0.0; n],
    };
    let mut r = system.residual(&beta);
    let initial_residual = norm2(&r);
    let mut trace = NewtonTrace {
        initial_residual,
        records: Vec::new(),
        status: NewtonStatus::MaxIter,
    };
    if !finite(&r) || !finite(&beta) {
        trace.status = NewtonStatus::Diverged;
        return Ok((beta, trace));
    }
    let mut u = system.u(&beta);
    let mut strikes = 0;
    for iter in 1..=config.max_iter {
        let j = system.jacobian(&beta);
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = match tikhonov_or_lstsq(&j, &neg_r, config.mu) {
            Ok(d) => d,
            Err(Error::InvalidArgument(_)) => {
                trace.status = NewtonStatus::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        let step_norm = norm2(&delta);
        let du = system.u(&delta);
        let full_change = norm2(&du) / norm2(&u).max(f64::MIN_POSITIVE);
        let phi0 = 0.5 * dot(&r, &r);
        let trial = |alpha: f64| -> (Vec<f64>, Vec<f64>, f64) {
            let b: Vec<f64> = beta.iter().zip(&delta).map(|(x, d)| x + alpha * d).collect();
            let rr = system.residual(&b);
            let phi = 0.5 * dot(&rr, &rr);
            (b, rr, if phi.is_finite() { phi } else { f64::INFINITY })
        };
        let accepted = match &config.line_search {
            None => Some((1.0, trial(1.0))),
            Some(ls) => {
                let slope = dot(&r, &matvec(j.as_ref(), &delta));
                let mut alpha = 1.0;
                let mut found = None;
                let mut smallest_decrease = None;
                for _ in 0..=ls.max_backtracks {
                    let t = trial(alpha);
                    let armijo = if slope < 0.0 {
                        t.2 <= phi0 + ls.sufficient_decrease * alpha * slope
                    } else {
                        t.2 < phi0
                    };
                    if armijo {
                        found = Some((alpha, t));
                        break;
                    }
                    if t.2 < phi0 {
                        smallest_decrease = Some((alpha, t));
                    }
                    alpha *= ls.shrink;
                }
                found.or(smallest_decrease)
            }
        };
        let Some((alpha, (new_beta, new_r, phi))) = accepted else {
            if full_change < config.tol_rel {
                trace.status = NewtonStatus::Converged;
            } else {
                trace.status = NewtonStatus::Stalled;
            }
            break;
        };
        let new_u = system.u(&new_beta);
        let change: Vec<f64> = new_u.iter().zip(&u).map(|(a, b)| a - b).collect();
        let rel_change = norm2(&change) / norm2(&new_u).max(f64::MIN_POSITIVE);
        let res_norm = (2.0 * phi).sqrt();
        trace.records.push(IterationRecord {
            iter,
            residual_norm: res_norm,
            step_norm: alpha * step_norm,
            alpha,
            rel_change,
            wall_time: t0.elapsed().as_secs_f64(),
        });
        beta = new_beta;
        r = new_r;
        u = new_u;
        if !res_norm.is_finite() || !finite(&beta) {
            trace.status = NewtonStatus::Diverged;
            break;
        }
        if res_norm > config.divergence_factor * initial_residual {
            strikes += 1;
            if strikes >= config.divergence_strikes {
                trace.status = NewtonStatus::Diverged;
                break;
            }
        } else {
            strikes = 0;
        }
        if rel_change < config.tol_rel {
            trace.status = NewtonStatus::Converged;
            break;
        }
    }
    Ok((beta, trace))
}

/// Newton solve on a given basis and point set.
pub fn solve_newton(problem: &NonlinearProblem, config: &NewtonConfig, basis: Basis, points: &CollocationPoints) -> Result<NewtonOutcome> {
    let system = NewtonSystem::new(problem, &basis, points)?;
    let (beta, trace) = newton_iterate(&system, config, None)?;
    Ok(NewtonOutcome {
        solution: Solution::new(basis, CoefficientVector(beta))?,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct ContinuationOutcome {
    pub solution: Solution,
    pub traces: Vec<NewtonTrace>,
    pub status: NewtonStatus,
}

impl ContinuationOutcome {
    pub fn total_iterations(&self) -> usize {
        self.traces.iter().map(NewtonTrace::iterations).sum()
    }
}

/// Split `budget` iterations over `stages`, remainder to the last stage.
pub fn split_budget(budget: usize, stages: usize) -> Vec<usize> {
    if stages == 0 {
        return Vec::new();
    }
    let mut v = vec![budget / stages; stages];
    v[stages - 1] += budget % stages;
    v
}

/// Solve a sequence of problems along `schedule`, each stage starting from
/// the previous coefficients. `budget` is the total iteration count.
pub fn solve_continuation(
    family: impl Fn(f64) -> Result<NonlinearProblem>,
    schedule: &[f64],
    config: &NewtonConfig,
    budget: usize,
    basis: Basis,
    points: &CollocationPoints,
) -> Result<ContinuationOutcome> {
    if schedule.is_empty() {
        return Err(Error::invalid("continuation schedule must not be empty"));
    }
    let caps = split_budget(budget, schedule.len());
    if caps.contains(&0) {
        return Err(Error::invalid("iteration budget is smaller than the number of stages"));
    }
    let mut beta: Option<Vec<f64>> = None;
    let mut traces = Vec::with_capacity(schedule.len());
    let mut status = NewtonStatus::MaxIter;
    for (&p, &cap) in schedule.iter().zip(&caps) {
        let problem = family(p)?;
        let system = NewtonSystem::new(&problem, &basis, points)?;
        let cfg = NewtonConfig {
            max_iter: cap,
            ..config.clone()
        };
        let (b, trace) = newton_iterate(&system, &cfg, beta.take())?;
        status = trace.status;
        traces.push(trace);
        beta = Some(b);
        if status == NewtonStatus::Diverged {
            break;
        }
    }
    let beta = beta.expect("at least one stage ran");
    Ok(ContinuationOutcome {
        solution: Solution::new(basis, CoefficientVector(beta))?,
        traces,
        status,
    })
}
