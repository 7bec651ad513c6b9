//! Benchmark PDE cases with manufactured exact solutions, default
//! hyperparameters and error metrics.

pub mod ablation;
pub mod bench;
pub mod exact;
mod registry;

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use faer::Mat;
use serde::{Deserialize, Serialize};

pub use ablation::{run_ablation, AblationRecord, AblationVariant};
pub use bench::{aggregate, run_benchmark, write_csv, write_markdown, BenchOptions, BenchRecord, BenchSummary};
pub use exact::{breather, Exact, Profile};
pub use registry::{find, registry};

use crate::basis::{Basis, BasisKind, FeatureMap, MultiIndex, Solution};
use crate::collocation::{sample_boundary, sample_interior, sample_test, BoxDomain};
use crate::error::{Error, Result};
use crate::linalg::{matvec, rms};
use crate::newton::{
    solve_continuation, solve_newton, NewtonConfig, NewtonStatus, NewtonTrace, NonlinearProblem, Nonlinearity,
};
use crate::operators::{apply, LinearOperator, ScalarField};
use crate::solve::{
    lstsq, solve_linear, solve_tikhonov, BasisConfig, CollocationConfig, CollocationPoints, Condition,
    LinearProblem, SolveReport, WallTimes, DEFAULT_PENALTY,
};

/// Test points used by the load-time manufactured-consistency check.
pub const CONSISTENCY_POINTS: usize = 1000;
/// Largest governing-equation RMS on `u*` accepted at load.
pub const CONSISTENCY_TOL: f64 = 1e-8;
/// Size of the dense test set for error metrics.
pub const DEFAULT_TEST_POINTS: usize = 5000;
/// Test-set seed used unless overridden. Test points come from their own
/// RNG stream, so they never coincide with collocation points.
pub const DEFAULT_TEST_SEED: u64 = 12345;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseMode {
    /// One least-squares solve.
    SolverLinear,
    /// Newton iteration, possibly with continuation.
    SolverNewton,
    /// Fit the exact solution from values only.
    Regression,
}

impl fmt::Display for CaseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseMode::SolverLinear => "solver-linear",
            CaseMode::SolverNewton => "solver-newton",
            CaseMode::Regression => "regression",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// Protocol sizes: N = 3 x 500, M1 = 10000 (5000 for Newton and
    /// regression), M2 = 2000.
    Full,
    /// N = 3 x 200, M1 = 3000, M2 = 800.
    Desk,
}

/// Basis size and point counts for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub n_total: usize,
    pub blocks: usize,
    pub m_interior: usize,
    pub m_boundary: usize,
    pub m_initial: usize,
}

impl Protocol {
    pub fn collocation(&self) -> CollocationConfig {
        CollocationConfig::new(self.m_interior, self.m_boundary, self.m_initial)
    }
}

/// Per-case defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseDefaults {
    pub sigma: f64,
    pub penalty: f64,
    /// Tikhonov parameter for linear solves and regression fits (0 = lstsq).
    pub mu: f64,
    pub newton: NewtonConfig,
    /// Continuation schedule. A single entry means a direct solve.
    pub schedule: Vec<f64>,
    /// Total Newton iterations across the schedule.
    pub budget: usize,
}

impl Default for CaseDefaults {
    fn default() -> Self {
        Self {
            sigma: 3.0,
            penalty: DEFAULT_PENALTY,
            mu: 0.0,
            newton: NewtonConfig::default(),
            schedule: Vec::new(),
            budget: NewtonConfig::default().max_iter,
        }
    }
}

type FamilyFn = dyn Fn(f64) -> Result<NonlinearProblem> + Send + Sync;

/// A registered benchmark problem.
#[derive(Clone)]
pub struct PdeCase {
    pub name: String,
    pub title: String,
    pub description: String,
    pub mode: CaseMode,
    pub domain: BoxDomain,
    pub time_axis: Option<usize>,
    pub exact: Exact,
    /// Linear part of the governing equation.
    pub operator: LinearOperator,
    pub nonlinearity: Option<Nonlinearity>,
    pub source: ScalarField,
    /// Initial-slab conditions `B[u] = B[u*]` at `t = t0`.
    pub initial_operators: Vec<(String, LinearOperator)>,
    pub defaults: CaseDefaults,
    family: Option<Arc<FamilyFn>>,
}

impl fmt::Debug for PdeCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdeCase")
            .field("name", &self.name)
            .field("mode", &self.mode)
            .field("dim", &self.dim())
            .finish()
    }
}

impl PdeCase {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn protocol(&self, scale: Scale) -> Protocol {
        let spatial = if self.time_axis.is_some() { 1000 } else { 0 };
        match scale {
            Scale::Full => Protocol {
                n_total: 1500,
                blocks: 3,
                m_interior: if self.mode == CaseMode::SolverLinear { 10_000 } else { 5000 },
                m_boundary: 2000,
                m_initial: spatial,
            },
            Scale::Desk => Protocol {
                n_total: 600,
                blocks: 3,
                m_interior: 3000,
                m_boundary: 800,
                m_initial: spatial * 2 / 5,
            },
        }
    }

    pub fn basis_config(&self, kind: BasisKind, protocol: &Protocol, sigma: Option<f64>) -> BasisConfig {
        BasisConfig::uniform(kind, protocol.n_total, protocol.blocks, sigma.unwrap_or(self.defaults.sigma))
    }

    fn exact_field(&self, op: Option<&LinearOperator>, label: &str) -> ScalarField {
        let exact = self.exact.clone();
        let name = format!("{label} of {}", self.name);
        match op.cloned() {
            None => ScalarField::new(name, move |x: &[f64]| exact.value(x)),
            Some(op) => ScalarField::new(name, move |x: &[f64]| {
                op.eval_with(x, |a| exact.deriv(x, a).unwrap_or(f64::NAN))
            }),
        }
    }

    /// Dirichlet data from `u*` on every non-time face, initial conditions
    /// from `u*` on the `t = t0` slab.
    fn conditions(&self) -> Result<(Vec<Condition>, Vec<Condition>)> {
        let d = self.dim();
        let bc = vec![Condition::dirichlet(d, self.exact_field(None, "boundary data"))?];
        let ic = self
            .initial_operators
            .iter()
            .map(|(label, op)| Condition::new(label.clone(), op.clone(), self.exact_field(Some(op), label)))
            .collect();
        Ok((bc, ic))
    }

    /// The linear part with its manufactured source and side conditions.
    /// Only boundary and initial data derive from `u*`.
    pub fn linear_problem(&self) -> Result<LinearProblem> {
        let (bc, ic) = self.conditions()?;
        let mut p = LinearProblem::new(self.operator.clone(), self.source.clone(), self.domain.clone(), bc)?
            .with_penalty(self.defaults.penalty)?;
        if let Some(t) = self.time_axis {
            p = p.with_initial(t, ic)?;
        }
        Ok(p)
    }

    /// The full nonlinear problem at the target parameter.
    pub fn nonlinear_problem(&self) -> Result<NonlinearProblem> {
        match (&self.family, self.defaults.schedule.last()) {
            (Some(f), Some(&p)) => f(p),
            _ => NonlinearProblem::new(
                self.linear_problem()?,
                self.nonlinearity.clone().unwrap_or_else(Nonlinearity::none),
            ),
        }
    }

    /// Problem at continuation parameter `p`.
    pub fn problem_at(&self, p: f64) -> Result<NonlinearProblem> {
        match &self.family {
            Some(f) => f(p),
            None => self.nonlinear_problem(),
        }
    }

    pub fn has_continuation(&self) -> bool {
        self.family.is_some() && self.defaults.schedule.len() > 1
    }

    /// Governing-equation residual `L[v] + N(v) - f` from derivative values.
    fn governing_residual(&self, x: &[f64], deriv: &dyn Fn(&MultiIndex) -> f64) -> f64 {
        let d = self.dim();
        let lu = self.operator.eval_with(x, deriv);
        let nu = match &self.nonlinearity {
            Some(n) => {
                let u = deriv(&MultiIndex::zeros(d));
                let g: Vec<f64> = (0..d).map(|k| deriv(&MultiIndex::unit(d, k))).collect();
                n.value(u, &g, x)
            }
            None => 0.0,
        };
        lu + nu - self.source.eval(x)
    }

    /// RMS of the governing equation on `u*` over random interior points.
    pub fn consistency_rms(&self) -> Result<f64> {
        let pts = sample_interior(&self.domain, CONSISTENCY_POINTS, 0x5eed);
        let mut r = Vec::with_capacity(pts.len());
        for x in pts.iter() {
            // derivatives beyond what u* supports show up as NaN
            r.push(self.governing_residual(&x, &|a| self.exact.deriv(&x, a).unwrap_or(f64::NAN)));
        }
        Ok(rms(&r))
    }

    pub fn check_consistency(&self) -> Result<()> {
        let r = self.consistency_rms()?;
        if !(r <= CONSISTENCY_TOL) {
            return Err(Error::Manufactured {
                case: self.name.clone(),
                rms: r,
            });
        }
        Ok(())
    }
}

/// Builder used by the registry.
pub(crate) struct CaseBuilder {
    case: PdeCase,
}

impl CaseBuilder {
    pub(crate) fn new(name: &str, title: &str, mode: CaseMode, domain: BoxDomain, exact: Exact, operator: LinearOperator, source: ScalarField) -> Self {
        Self {
            case: PdeCase {
                name: name.into(),
                title: title.into(),
                description: String::new(),
                mode,
                domain,
                time_axis: None,
                exact,
                operator,
                nonlinearity: None,
                source,
                initial_operators: Vec::new(),
                defaults: CaseDefaults::default(),
                family: None,
            },
        }
    }

    pub(crate) fn description(mut self, s: &str) -> Self {
        self.case.description = s.into();
        self
    }

    pub(crate) fn time(mut self, axis: usize, initial: Vec<(&str, LinearOperator)>) -> Self {
        self.case.time_axis = Some(axis);
        self.case.initial_operators = initial.into_iter().map(|(l, o)| (l.to_string(), o)).collect();
        self
    }

    pub(crate) fn nonlinearity(mut self, n: Nonlinearity) -> Self {
        self.case.nonlinearity = Some(n);
        self
    }

    pub(crate) fn sigma(mut self, s: f64) -> Self {
        self.case.defaults.sigma = s;
        self
    }

    pub(crate) fn continuation(
        mut self,
        schedule: Vec<f64>,
        budget: usize,
        family: impl Fn(f64) -> Result<NonlinearProblem> + Send + Sync + 'static,
    ) -> Self {
        self.case.defaults.schedule = schedule;
        self.case.defaults.budget = budget;
        self.case.family = Some(Arc::new(family));
        self
    }

    pub(crate) fn build(self) -> PdeCase {
        self.case
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `||u_N - u*|| / ||u*||` on the test set.
    pub l2_value: f64,
    /// Same for the gradient, all components pooled.
    pub l2_grad: f64,
    /// RMS of `L[u_N] + N(u_N) - f` on the test set.
    pub residual_rms: f64,
    pub test_seed: u64,
}

/// Relative errors of `solution` against the case's exact solution on a
/// fresh test set.
pub fn evaluate_errors(solution: &Solution, case: &PdeCase, test_count: usize, test_seed: u64) -> Result<ErrorReport> {
    let d = case.dim();
    if solution.dim() != d {
        return Err(Error::invalid(format!(
            "solution has dimension {}, case `{}` has {d}",
            solution.dim(),
            case.name
        )));
    }
    if test_count == 0 {
        return Err(Error::invalid("test set must not be empty"));
    }
    let pts = sample_test(&case.domain, test_count, test_seed);
    let x = pts.points.as_ref();
    let u = solution.values(x)?;
    let g = solution.gradient(x)?;
    let (mut ev, mut nv, mut eg, mut ng) = (0.0, 0.0, 0.0, 0.0);
    for (i, p) in pts.iter().enumerate() {
        let ue = case.exact.value(&p);
        ev += (u[i] - ue).powi(2);
        nv += ue * ue;
        for (k, ge) in case.exact.gradient(&p).into_iter().enumerate() {
            eg += (g[(i, k)] - ge).powi(2);
            ng += ge * ge;
        }
    }
    if nv == 0.0 {
        return Err(Error::invalid(format!("exact solution of `{}` vanishes on the test set", case.name)));
    }
    let l2_grad = if ng > 0.0 { (eg / ng).sqrt() } else { eg.sqrt() };

    // residual through the basis derivative matrices
    let beta = solution.coefficients.as_slice();
    let cache = solution.basis.build_cache(x)?;
    let lu = matvec(apply(&case.operator, &solution.basis, x, Some(&cache))?.as_ref(), beta);
    let mut res = Vec::with_capacity(pts.len());
    for (i, p) in pts.iter().enumerate() {
        let nl = match &case.nonlinearity {
            Some(n) => {
                let gi: Vec<f64> = (0..d).map(|k| g[(i, k)]).collect();
                n.value(u[i], &gi, &p)
            }
            None => 0.0,
        };
        res.push(lu[i] + nl - case.source.eval(&p));
    }
    Ok(ErrorReport {
        l2_value: (ev / nv).sqrt(),
        l2_grad,
        residual_rms: rms(&res),
        test_seed,
    })
}

/// Least-squares fit of values only. `mu = 0` uses plain lstsq.
pub fn fit_values(basis: Basis, points: &Mat<f64>, values: &[f64], mu: f64) -> Result<Solution> {
    if points.nrows() != values.len() {
        return Err(Error::invalid(format!(
            "{} points but {} values",
            points.nrows(),
            values.len()
        )));
    }
    let a = crate::basis::eval_derivative(&basis, points.as_ref(), &MultiIndex::zeros(basis.dim()), None)?;
    let out = if mu > 0.0 {
        solve_tikhonov(a.as_ref(), values, mu)?
    } else {
        lstsq(a.as_ref(), values)?
    };
    Solution::new(basis, out.x.into())
}

/// Regression mode: fit `u*` from its values at interior and boundary
/// points sampled from `seed`.
pub fn fit_regression(case: &PdeCase, basis_cfg: &BasisConfig, protocol: &Protocol, seed: u64, mu: f64) -> Result<Solution> {
    let basis = basis_cfg.build(case.dim(), seed)?;
    let interior = sample_interior(&case.domain, protocol.m_interior, seed);
    let boundary = sample_boundary(&case.domain, protocol.m_boundary, seed);
    let pts = crate::linalg::vstack(&[interior.points.as_ref(), boundary.points.as_ref()]);
    let values: Vec<f64> = (0..pts.nrows())
        .map(|i| case.exact.value(&crate::linalg::row(pts.as_ref(), i)))
        .collect();
    fit_values(basis, &pts, &values, mu)
}

/// Overrides applied on top of a case's defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOverrides {
    pub sigma: Option<f64>,
    pub normalized: Option<bool>,
    /// Boundary and initial penalty.
    pub penalty: Option<f64>,
    pub mu: Option<f64>,
    pub newton: Option<NewtonConfig>,
    /// Replace the continuation schedule; an empty vector forces a direct
    /// solve at the target parameter.
    pub schedule: Option<Vec<f64>>,
    pub budget: Option<usize>,
}

/// Result of solving one case once.
#[derive(Debug, Clone)]
pub struct CaseRun {
    pub solution: Solution,
    pub report: Option<SolveReport>,
    pub traces: Vec<NewtonTrace>,
    pub status: Option<NewtonStatus>,
    pub times: WallTimes,
}

impl CaseRun {
    pub fn iterations(&self) -> usize {
        self.traces.iter().map(NewtonTrace::iterations).sum()
    }
}

/// Solve `case` in its mode. The solver path only sees the problem
/// definition; `u*` enters through boundary and initial data.
pub fn solve_case(case: &PdeCase, kind: BasisKind, protocol: &Protocol, seed: u64, ov: &RunOverrides) -> Result<CaseRun> {
    let mut cfg = case.basis_config(kind, protocol, ov.sigma);
    if let Some(n) = ov.normalized {
        cfg.normalized = n;
    }
    let mu = ov.mu.unwrap_or(case.defaults.mu);
    match case.mode {
        CaseMode::SolverLinear => {
            let mut problem = case.linear_problem()?;
            if let Some(lam) = ov.penalty {
                problem = problem.with_penalty(lam)?;
            }
            let (solution, report) = solve_linear(&problem, &cfg, &protocol.collocation(), seed, mu)?;
            Ok(CaseRun {
                solution,
                times: report.wall_times,
                report: Some(report),
                traces: Vec::new(),
                status: None,
            })
        }
        CaseMode::Regression => {
            let t0 = Instant::now();
            let solution = fit_regression(case, &cfg, protocol, seed, mu)?;
            Ok(CaseRun {
                solution,
                report: None,
                traces: Vec::new(),
                status: None,
                times: WallTimes {
                    solve: t0.elapsed().as_secs_f64(),
                    ..Default::default()
                },
            })
        }
        CaseMode::SolverNewton => {
            let config = ov.newton.clone().unwrap_or_else(|| case.defaults.newton.clone());
            let t0 = Instant::now();
            let basis = cfg.build(case.dim(), seed)?;
            let with_penalty = |mut np: NonlinearProblem| -> Result<NonlinearProblem> {
                if let Some(lam) = ov.penalty {
                    np.linear = np.linear.with_penalty(lam)?;
                }
                Ok(np)
            };
            let target = with_penalty(case.nonlinear_problem()?)?;
            let points = CollocationPoints::sample(&target.linear, &protocol.collocation(), seed)?;
            let t_setup = t0.elapsed().as_secs_f64();
            let schedule = ov.schedule.clone().unwrap_or_else(|| case.defaults.schedule.clone());
            let t1 = Instant::now();
            let (solution, traces, status) = if schedule.len() > 1 && case.family.is_some() {
                let budget = ov.budget.unwrap_or(case.defaults.budget);
                let out = solve_continuation(|p| with_penalty(case.problem_at(p)?), &schedule, &config, budget, basis, &points)?;
                (out.solution, out.traces, out.status)
            } else {
                let mut config = config;
                if let Some(b) = ov.budget {
                    config.max_iter = b;
                }
                let out = solve_newton(&target, &config, basis, &points)?;
                let status = out.trace.status;
                (out.solution, vec![out.trace], status)
            };
            Ok(CaseRun {
                solution,
                report: None,
                traces,
                status: Some(status),
                times: WallTimes {
                    basis: t_setup,
                    solve: t1.elapsed().as_secs_f64(),
                    ..Default::default()
                },
            })
        }
    }
}
