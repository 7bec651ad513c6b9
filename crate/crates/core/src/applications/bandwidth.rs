//! Learnable bandwidth by reparameterized frozen features.
//!
//! Base frequencies `W_hat ~ N(0, I)` and phases stay frozen; the actual
//! frequencies are `sigma W_hat_j` or `L W_hat_j` with `L` lower
//! triangular. Each outer step rebuilds the operator matrix for the current
//! bandwidth, solves the inner least-squares problem exactly, and moves the
//! bandwidth parameters by a moment-based step on a central-difference
//! gradient of the outer loss `||A beta* - b||^2`.

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use crate::basis::{Basis, FeatureBasis, FeatureBlock};
use crate::error::{Error, Result};
use crate::linalg::{matvec, matvec_t, norm2};
use crate::solve::{assemble, lstsq, CollocationPoints, LinearProblem};

/// Lower bound for `sigma` and for the diagonal of `L`.
pub const BANDWIDTH_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthParam {
    Scalar(f64),
    /// Row-major `d x d` lower-triangular factor.
    Cholesky(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthState {
    pub param: BandwidthParam,
    dim: usize,
    /// Row-major `N x d` unit-variance frequencies.
    base_weights: Vec<f64>,
    biases: Vec<f64>,
    pub normalized: bool,
}

impl BandwidthState {
    fn frozen(dim: usize, features: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let fb = FeatureBasis::sample(dim, &[features], &[1.0], seed)?;
        let b = &fb.blocks()[0];
        Ok((b.weights().to_vec(), b.biases().to_vec()))
    }

    pub fn scalar(dim: usize, features: usize, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {sigma}")));
        }
        let (base_weights, biases) = Self::frozen(dim, features, seed)?;
        Ok(Self {
            param: BandwidthParam::Scalar(sigma),
            dim,
            base_weights,
            biases,
            normalized: true,
        })
    }

    /// `l` is row-major `d x d`; entries above the diagonal must be zero
    /// and the diagonal positive.
    pub fn cholesky(dim: usize, features: usize, l: Vec<f64>, seed: u64) -> Result<Self> {
        if l.len() != dim * dim {
            return Err(Error::invalid(format!("factor has {} entries, expected {}", l.len(), dim * dim)));
        }
        for i in 0..dim {
            if !(l[i * dim + i] > 0.0) {
                return Err(Error::invalid("factor diagonal must be positive"));
            }
            if (i + 1..dim).any(|j| l[i * dim + j] != 0.0) {
                return Err(Error::invalid("factor must be lower triangular"));
            }
        }
        let (base_weights, biases) = Self::frozen(dim, features, seed)?;
        Ok(Self {
            param: BandwidthParam::Cholesky(l),
            dim,
            base_weights,
            biases,
            normalized: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base_weights(&self) -> &[f64] {
        &self.base_weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// Free parameters: `[sigma]` or the lower triangle of `L` row by row.
    pub fn params(&self) -> Vec<f64> {
        match &self.param {
            BandwidthParam::Scalar(s) => vec![*s],
            BandwidthParam::Cholesky(l) => {
                let d = self.dim;
                (0..d).flat_map(|i| (0..=i).map(move |j| l[i * d + j])).collect()
            }
        }
    }

    /// Apply `p`, projecting onto the floor. Returns true if projected.
    pub fn set_params(&mut self, p: &[f64]) -> bool {
        let mut hit = false;
        let mut floor = |v: f64| {
            if v < BANDWIDTH_FLOOR || !v.is_finite() {
                hit = true;
                BANDWIDTH_FLOOR
            } else {
                v
            }
        };
        match &mut self.param {
            BandwidthParam::Scalar(s) => *s = floor(p[0]),
            BandwidthParam::Cholesky(l) => {
                let d = self.dim;
                let mut k = 0;
                for i in 0..d {
                    for j in 0..=i {
                        l[i * d + j] = if i == j { floor(p[k]) } else { p[k] };
                        k += 1;
                    }
                }
            }
        }
        hit
    }

    /// Features with the current frequencies.
    pub fn basis(&self) -> Result<Basis> {
        let d = self.dim;
        let n = self.biases.len();
        let (weights, bw) = match &self.param {
            BandwidthParam::Scalar(s) => (self.base_weights.iter().map(|w| s * w).collect::<Vec<_>>(), *s),
            BandwidthParam::Cholesky(l) => {
                let mut w = vec![0.0; n * d];
                for j in 0..n {
                    let wh = &self.base_weights[j * d..(j + 1) * d];
                    for i in 0..d {
                        w[j * d + i] = (0..=i).map(|k| l[i * d + k] * wh[k]).sum();
                    }
                }
                let mean_diag = (0..d).map(|i| l[i * d + i]).sum::<f64>() / d as f64;
                (w, mean_diag)
            }
        };
        let block = FeatureBlock::new(weights, self.biases.clone(), bw, d)?;
        Ok(FeatureBasis::from_blocks(d, vec![block], self.normalized)?.into())
    }
}

/// Outer loss and inner optimality for one bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerSolve {
    pub loss: f64,
    /// `||A^T (A beta - b)|| / (||A||_F ||b||)`.
    pub optimality: f64,
}

pub fn inner_solve(problem: &LinearProblem, points: &CollocationPoints, state: &BandwidthState) -> Result<InnerSolve> {
    let basis = state.basis()?;
    let sys = assemble(problem, &basis, points)?;
    let beta = lstsq(sys.matrix.as_ref(), &sys.rhs)?.x;
    let ab = matvec(sys.matrix.as_ref(), &beta);
    let r: Vec<f64> = ab.iter().zip(&sys.rhs).map(|(a, b)| a - b).collect();
    let atr = matvec_t(sys.matrix.as_ref(), &r);
    let scale = sys.matrix.norm_l2() * norm2(&sys.rhs);
    Ok(InnerSolve {
        loss: norm2(&r).powi(2),
        optimality: if scale > 0.0 { norm2(&atr) / scale } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthConfig {
    pub steps: usize,
    pub adam: AdamConfig,
    /// Central-difference step relative to `max(|p|, 1)`.
    pub fd_rel_step: f64,
}

impl Default for BandwidthConfig {
    fn default() -> Self {
        Self {
            steps: 80,
            adam: AdamConfig::with_step(0.2),
            fd_rel_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthStep {
    pub step: usize,
    pub params: Vec<f64>,
    pub loss: f64,
    pub optimality: f64,
    pub projected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthOutcome {
    pub state: BandwidthState,
    /// Entry `k` is the state before update `k`; the last entry is the
    /// final state.
    pub history: Vec<BandwidthStep>,
    pub adam: Adam,
}

impl BandwidthOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.history[0].loss
    }

    pub fn final_loss(&self) -> f64 {
        self.history.last().expect("non-empty history").loss
    }

    pub fn max_optimality(&self) -> f64 {
        self.history.iter().map(|h| h.optimality).fold(0.0, f64::max)
    }
}

/// Run `cfg.steps` outer updates from `state0` on fixed collocation points.
pub fn optimize_bandwidth(
    problem: &LinearProblem,
    points: &CollocationPoints,
    state0: BandwidthState,
    cfg: &BandwidthConfig,
) -> Result<BandwidthOutcome> {
    if cfg.steps == 0 {
        return Err(Error::invalid("bandwidth optimization needs at least one step"));
    }
    if state0.dim() != problem.dim() {
        return Err(Error::invalid("bandwidth state and problem dimensions differ"));
    }
    let mut state = state0;
    let mut adam = Adam::new(cfg.adam, state.params().len());
    let mut history = Vec::with_capacity(cfg.steps + 1);
    let mut projected = false;
    for step in 0..=cfg.steps {
        let here = inner_solve(problem, points, &state)?;
        let p = state.params();
        history.push(BandwidthStep {
            step,
            params: p.clone(),
            loss: here.loss,
            optimality: here.optimality,
            projected,
        });
        if !here.loss.is_finite() {
            return Err(Error::NonFinite(format!("outer loss at step {step}")));
        }
        if step == cfg.steps {
            break;
        }
        let mut grad = vec![0.0; p.len()];
        for k in 0..p.len() {
            let h = cfg.fd_rel_step * p[k].abs().max(1.0);
            let mut probe = state.clone();
            let mut q = p.clone();
            q[k] = p[k] + h;
            probe.set_params(&q);
            let lp = inner_solve(problem, points, &probe)?.loss;
            q[k] = p[k] - h;
            probe.set_params(&q);
            let lm = inner_solve(problem, points, &probe)?.loss;
            grad[k] = (lp - lm) / (2.0 * h);
        }
        let mut next = p;
        adam.update(&mut next, &grad);
        projected = state.set_params(&next);
    }
    Ok(BandwidthOutcome { state, history, adam })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::find;
    use crate::solve::CollocationConfig;

    #[test]
    fn scalar_and_cholesky_agree_for_scaled_identity() {
        let s = BandwidthState::scalar(2, 20, 3.0, 7).unwrap();
        let c = BandwidthState::cholesky(2, 20, vec![3.0, 0.0, 0.0, 3.0], 7).unwrap();
        let (a, b) = (s.basis().unwrap(), c.basis().unwrap());
        assert_eq!(a.features().weight_matrix(), b.features().weight_matrix());
        assert_eq!(c.params(), vec![3.0, 0.0, 3.0]);
    }

    #[test]
    fn floor_projection_flags() {
        let mut s = BandwidthState::scalar(1, 5, 1.0, 0).unwrap();
        assert!(s.set_params(&[-2.0]));
        assert_eq!(s.params(), vec![BANDWIDTH_FLOOR]);
        assert!(!s.set_params(&[2.0]));
        assert!(BandwidthState::cholesky(2, 5, vec![1.0, 0.5, 0.0, 1.0], 0).is_err());
    }

    #[test]
    fn frozen_weights_stay_fixed() {
        let case = find("poisson1d").unwrap();
        let problem = case.linear_problem().unwrap();
        let points = CollocationPoints::sample(&problem, &CollocationConfig::new(200, 2, 0), 0).unwrap();
        let s0 = BandwidthState::scalar(1, 40, 4.0, 1).unwrap();
        let cfg = BandwidthConfig {
            steps: 3,
            ..Default::default()
        };
        let out = optimize_bandwidth(&problem, &points, s0.clone(), &cfg).unwrap();
        assert_eq!(out.history.len(), 4);
        assert_eq!(out.state.base_weights(), s0.base_weights());
        assert_eq!(out.state.biases(), s0.biases());
        assert!(out.max_optimality() < 1e-8, "{}", out.max_optimality());
    }
}
