//! Source recovery through a prefactored forward map.
//!
//! The operator matrix depends only on the basis and the collocation
//! points, so it is factored once. Each forward evaluation for new source
//! parameters is a right-hand side change: one cached solve and a sensor
//! evaluation.

use std::io::Write;
use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use crate::basis::{eval_derivative, Basis, BasisKind, FeatureMap, MultiIndex};
use crate::collocation::{sample_boundary, sample_interior, BoxDomain};
use crate::error::{Error, Result};
use crate::linalg::{matvec, rms, row, vstack};
use crate::operators::{apply, LinearOperator, ScalarField};
use crate::rng::{Stream, StreamRng};
use crate::solve::{factorization_count, prefactor, BasisConfig, PrefactorKind, PrefactoredSolver, DEFAULT_PENALTY};

/// Source field `f(x; theta)`.
pub type SourceModel = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Isotropic Gaussian `exp(-|x - c|^2 / width)` centred at `theta`.
pub fn gaussian_source(width: f64) -> SourceModel {
    Arc::new(move |theta: &[f64], x: &[f64]| {
        let r2: f64 = x.iter().zip(theta).map(|(a, b)| (a - b).powi(2)).sum();
        (-r2 / width).exp()
    })
}

/// Forward map `theta -> u(sensors)` for `L u = f(.; theta)` with fixed
/// Dirichlet data.
pub struct ForwardModel {
    pub basis: Basis,
    solver: PrefactoredSolver,
    interior: Mat<f64>,
    boundary_rhs: Vec<f64>,
    sensor_matrix: Mat<f64>,
    source: SourceModel,
}

impl std::fmt::Debug for ForwardModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardModel")
            .field("features", &self.basis.num_features())
            .field("interior", &self.interior.nrows())
            .field("boundary", &self.boundary_rhs.len())
            .field("sensors", &self.sensor_matrix.nrows())
            .finish()
    }
}

pub struct ForwardSpec<'a> {
    pub operator: &'a LinearOperator,
    pub basis: Basis,
    pub interior: Mat<f64>,
    pub boundary: Mat<f64>,
    pub boundary_data: ScalarField,
    pub penalty: f64,
    pub mu: f64,
    pub sensors: Mat<f64>,
    pub source: SourceModel,
}

impl ForwardModel {
    /// Assemble the operator matrix and factor it. This is the only
    /// factorization the model ever performs.
    pub fn build(spec: ForwardSpec<'_>) -> Result<Self> {
        if spec.sensors.nrows() == 0 {
            return Err(Error::invalid("need at least one sensor"));
        }
        let b = &spec.basis;
        let a_pde = apply(spec.operator, b, spec.interior.as_ref(), None)?;
        let mut a_bc = eval_derivative(b, spec.boundary.as_ref(), &MultiIndex::zeros(b.dim()), None)?;
        a_bc *= faer::Scale(spec.penalty);
        let a = vstack(&[a_pde.as_ref(), a_bc.as_ref()]);
        let solver = prefactor(a.as_ref(), spec.mu, PrefactorKind::Cholesky)?;
        let boundary_rhs = spec
            .boundary_data
            .eval_points(spec.boundary.as_ref())?
            .into_iter()
            .map(|g| spec.penalty * g)
            .collect();
        let sensor_matrix = eval_derivative(b, spec.sensors.as_ref(), &MultiIndex::zeros(b.dim()), None)?;
        Ok(Self {
            basis: spec.basis,
            solver,
            interior: spec.interior,
            boundary_rhs,
            sensor_matrix,
            source: spec.source,
        })
    }

    pub fn sensor_count(&self) -> usize {
        self.sensor_matrix.nrows()
    }

    /// Coefficients for source parameters `theta` (one cached solve).
    pub fn coefficients(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut rhs: Vec<f64> = (0..self.interior.nrows())
            .map(|i| (self.source)(theta, &row(self.interior.as_ref(), i)))
            .collect();
        rhs.extend_from_slice(&self.boundary_rhs);
        self.solver.solve(&rhs)
    }

    pub fn predict(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let beta = self.coefficients(theta)?;
        Ok(matvec(self.sensor_matrix.as_ref(), &beta))
    }
}

#[derive(Debug)]
pub struct InverseProblem {
    pub model: ForwardModel,
    pub observations: Vec<f64>,
}

impl InverseProblem {
    pub fn new(model: ForwardModel, observations: Vec<f64>) -> Result<Self> {
        if observations.len() != model.sensor_count() {
            return Err(Error::invalid(format!(
                "{} observations for {} sensors",
                observations.len(),
                model.sensor_count()
            )));
        }
        if observations.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observations must be finite"));
        }
        Ok(Self { model, observations })
    }

    /// Mean squared sensor misfit.
    pub fn loss(&self, theta: &[f64]) -> Result<f64> {
        let p = self.model.predict(theta)?;
        Ok(p.iter().zip(&self.observations).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseConfig {
    pub steps: usize,
    pub adam: AdamConfig,
    /// Central-difference step for each parameter.
    pub fd_step: f64,
    /// Stop once the loss is at or below this value.
    pub loss_tol: f64,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            adam: AdamConfig::with_step(0.01),
            fd_step: 1e-5,
            loss_tol: 1e-28,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub loss: f64,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InverseStatus {
    Converged,
    MaxSteps,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseOutcome {
    /// Best parameters seen.
    pub theta: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub status: InverseStatus,
    pub trajectory: Vec<TrajectoryRow>,
    pub cached_solves: usize,
}

/// Minimize the sensor misfit from `theta0` with moment-based steps and
/// central-difference gradients.
pub fn inverse_solve(problem: &InverseProblem, theta0: &[f64], cfg: &InverseConfig) -> Result<InverseOutcome> {
    if theta0.is_empty() {
        return Err(Error::invalid("parameter vector is empty"));
    }
    let p = theta0.len();
    let mut theta = theta0.to_vec();
    let mut opt = Adam::new(cfg.adam, p);
    let mut trajectory = Vec::new();
    let mut best = (f64::INFINITY, theta.clone());
    let mut solves = 0;
    let mut status = InverseStatus::MaxSteps;
    let mut iterations = 0;
    for step in 0..=cfg.steps {
        let loss = problem.loss(&theta)?;
        solves += 1;
        trajectory.push(TrajectoryRow {
            step,
            loss,
            theta: theta.clone(),
        });
        if !loss.is_finite() {
            status = InverseStatus::NonFinite;
            break;
        }
        if loss < best.0 {
            best = (loss, theta.clone());
        }
        if loss <= cfg.loss_tol {
            status = InverseStatus::Converged;
            break;
        }
        if step == cfg.steps {
            break;
        }
        let mut grad = vec![0.0; p];
        for k in 0..p {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[k] += cfg.fd_step;
            tm[k] -= cfg.fd_step;
            grad[k] = (problem.loss(&tp)? - problem.loss(&tm)?) / (2.0 * cfg.fd_step);
            solves += 2;
        }
        opt.update(&mut theta, &grad);
        iterations += 1;
    }
    Ok(InverseOutcome {
        theta: best.1,
        loss: best.0,
        iterations,
        status,
        trajectory,
        cached_solves: solves,
    })
}

/// `step,loss,theta_0,...` rows.
pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let p = rows.first().map_or(0, |r| r.theta.len());
    let mut header = vec!["step".to_string(), "loss".to_string()];
    header.extend((0..p).map(|k| format!("theta_{k}")));
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.step.to_string(), format!("{:e}", r.loss)];
        rec.extend(r.theta.iter().map(|t| t.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Operator used by the source-recovery demo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InverseOperator {
    /// `-Laplace u`.
    #[default]
    Poisson,
    /// `-div(nu grad u)` with `nu = 1 + (x^2 + y^2)/2`.
    Magnetostatics,
}

impl InverseOperator {
    pub fn build(self) -> Result<LinearOperator> {
        match self {
            InverseOperator::Poisson => Ok(LinearOperator::laplacian(2)?.negate()),
            InverseOperator::Magnetostatics => {
                let nu = ScalarField::new("1 + (x^2 + y^2)/2", |x: &[f64]| 1.0 + 0.5 * (x[0] * x[0] + x[1] * x[1]));
                let gx = ScalarField::new("x", |x: &[f64]| x[0]);
                let gy = ScalarField::new("y", |x: &[f64]| x[1]);
                Ok(LinearOperator::divergence_form(nu, vec![gx, gy])?.negate())
            }
        }
    }
}

impl std::fmt::Display for InverseOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InverseOperator::Poisson => "poisson",
            InverseOperator::Magnetostatics => "magnetostatics",
        })
    }
}

impl std::str::FromStr for InverseOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(Self::Poisson),
            "magnetostatics" => Ok(Self::Magnetostatics),
            _ => Err(Error::invalid(format!("unknown inverse operator `{s}` (poisson, magnetostatics)"))),
        }
    }
}

/// Single Gaussian source on the unit square, zero Dirichlet data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDemoConfig {
    pub operator: InverseOperator,
    pub features: usize,
    pub sigma: f64,
    pub interior: usize,
    pub boundary: usize,
    pub penalty: f64,
    pub mu: f64,
    pub width: f64,
    pub sensors: Vec<[f64; 2]>,
    pub theta_true: Vec<f64>,
    pub theta0: Vec<f64>,
    /// Observation noise relative to the RMS sensor value.
    pub noise: f64,
    pub seed: u64,
    pub optimizer: InverseConfig,
}

impl Default for SourceDemoConfig {
    fn default() -> Self {
        Self {
            operator: InverseOperator::Poisson,
            features: 800,
            sigma: 5.0,
            interior: 3000,
            boundary: 400,
            penalty: DEFAULT_PENALTY,
            mu: 1e-8,
            width: 0.1,
            sensors: vec![[0.3, 0.3], [0.7, 0.7], [0.3, 0.7], [0.7, 0.3]],
            theta_true: vec![0.4, 0.6],
            theta0: vec![0.5, 0.5],
            noise: 0.0,
            seed: 0,
            optimizer: InverseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDemoReport {
    pub outcome: InverseOutcome,
    pub theta_true: Vec<f64>,
    pub max_abs_error: f64,
    /// Factorizations performed while building the model and optimizing.
    pub factorizations: u64,
}

pub fn build_source_demo(cfg: &SourceDemoConfig) -> Result<InverseProblem> {
    let domain = BoxDomain::unit(2)?;
    let basis = BasisConfig::uniform(BasisKind::Sin, cfg.features, 1, cfg.sigma).build(2, cfg.seed)?;
    let op = cfg.operator.build()?;
    let sensors = Mat::from_fn(cfg.sensors.len(), 2, |i, k| cfg.sensors[i][k]);
    let model = ForwardModel::build(ForwardSpec {
        operator: &op,
        basis,
        interior: sample_interior(&domain, cfg.interior, cfg.seed).points,
        boundary: sample_boundary(&domain, cfg.boundary, cfg.seed).points,
        boundary_data: ScalarField::zero(),
        penalty: cfg.penalty,
        mu: cfg.mu,
        sensors,
        source: gaussian_source(cfg.width),
    })?;
    let mut obs = model.predict(&cfg.theta_true)?;
    if cfg.noise > 0.0 {
        let scale = cfg.noise * rms(&obs);
        let mut rng = StreamRng::new(cfg.seed, Stream::Noise);
        for o in &mut obs {
            *o += scale * rng.normal();
        }
    }
    InverseProblem::new(model, obs)
}

pub fn run_source_demo(cfg: &SourceDemoConfig) -> Result<SourceDemoReport> {
    let before = factorization_count();
    let problem = build_source_demo(cfg)?;
    let outcome = inverse_solve(&problem, &cfg.theta0, &cfg.optimizer)?;
    let factorizations = factorization_count() - before;
    let max_abs_error = outcome
        .theta
        .iter()
        .zip(&cfg.theta_true)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(SourceDemoReport {
        outcome,
        theta_true: cfg.theta_true.clone(),
        max_abs_error,
        factorizations,
    })
}
