//! Fresh versus prefactored solves over many right-hand sides.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::BasisKind;
use crate::error::Result;
use crate::linalg::rel_diff;
use crate::problems::{bench::median, find, Protocol};
use crate::rng::{Stream, StreamRng};
use crate::solve::{assemble, prefactor, solve_tikhonov, CollocationPoints, PrefactorKind, RowKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheBenchConfig {
    pub problem: String,
    pub features: usize,
    pub interior: usize,
    pub boundary: usize,
    pub sigma: Option<f64>,
    pub mu: f64,
    pub rhs_count: usize,
    pub seed: u64,
}

impl Default for CacheBenchConfig {
    fn default() -> Self {
        Self {
            problem: "helmholtz2d".into(),
            features: 1500,
            interior: 6000,
            boundary: 800,
            sigma: None,
            mu: 1e-10,
            rhs_count: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheBenchReport {
    pub rows: usize,
    pub cols: usize,
    pub factor_seconds: f64,
    pub fresh_median_seconds: f64,
    pub cached_median_seconds: f64,
    pub speedup: f64,
    /// Largest relative coefficient difference between the two paths.
    pub max_rel_deviation: f64,
}

/// Right-hand sides differ in their boundary rows, as in a sweep over
/// boundary data. Each is solved by a fresh regularized least-squares call
/// and by the cached QR factor of the same stacked system.
pub fn cache_benchmark(cfg: &CacheBenchConfig) -> Result<CacheBenchReport> {
    let case = find(&cfg.problem)?;
    let protocol = Protocol {
        n_total: cfg.features,
        blocks: 1,
        m_interior: cfg.interior,
        m_boundary: cfg.boundary,
        m_initial: if case.time_axis.is_some() { cfg.boundary } else { 0 },
    };
    let problem = case.linear_problem()?;
    let basis = case.basis_config(BasisKind::Sin, &protocol, cfg.sigma).build(case.dim(), cfg.seed)?;
    let points = CollocationPoints::sample(&problem, &protocol.collocation(), cfg.seed)?;
    let sys = assemble(&problem, &basis, &points)?;
    let t0 = Instant::now();
    let fac = prefactor(sys.matrix.as_ref(), cfg.mu, PrefactorKind::Qr)?;
    let factor_seconds = t0.elapsed().as_secs_f64();
    let mut rng = StreamRng::new(cfg.seed, Stream::Probe);
    let mut fresh = Vec::with_capacity(cfg.rhs_count);
    let mut cached = Vec::with_capacity(cfg.rhs_count);
    let mut dev: f64 = 0.0;
    for _ in 0..cfg.rhs_count {
        let mut b = sys.rhs.clone();
        for span in sys.row_spans.iter().filter(|s| s.kind != RowKind::Pde) {
            let shift = rng.normal();
            for v in &mut b[span.start..span.end] {
                *v += problem.penalty * shift;
            }
        }
        let t = Instant::now();
        let x_fresh = solve_tikhonov(sys.matrix.as_ref(), &b, cfg.mu)?.x;
        fresh.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        let x_cached = fac.solve(&b)?;
        cached.push(t.elapsed().as_secs_f64());
        dev = dev.max(rel_diff(&x_cached, &x_fresh));
    }
    let fresh_median_seconds = median(&fresh);
    let cached_median_seconds = median(&cached);
    Ok(CacheBenchReport {
        rows: sys.nrows(),
        cols: sys.ncols(),
        factor_seconds,
        fresh_median_seconds,
        cached_median_seconds,
        speedup: fresh_median_seconds / cached_median_seconds,
        max_rel_deviation: dev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cache_bench_agrees() {
        let cfg = CacheBenchConfig {
            features: 120,
            interior: 500,
            boundary: 100,
            rhs_count: 3,
            ..Default::default()
        };
        let r = cache_benchmark(&cfg).unwrap();
        assert_eq!(r.cols, 120);
        assert_eq!(r.rows, 600);
        assert!(r.max_rel_deviation <= 1e-8, "{}", r.max_rel_deviation);
        assert!(r.speedup > 1.0);
    }
}
