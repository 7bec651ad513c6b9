//! Bandwidth sensitivity sweeps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::basis::BasisKind;
use crate::error::{Error, Result};
use crate::problems::bench::median;
use crate::problems::{evaluate_errors, solve_case, PdeCase, Protocol, RunOverrides};

/// The 9-point bandwidth grid.
pub const DEFAULT_SIGMA_GRID: [f64; 9] = [0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 10.0, 12.0, 15.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub grid: Vec<f64>,
    /// Trial `t` uses seed `t`.
    pub trials: usize,
    pub kinds: Vec<BasisKind>,
    pub test_count: usize,
    pub test_seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            grid: DEFAULT_SIGMA_GRID.to_vec(),
            trials: 3,
            kinds: vec![BasisKind::Sin],
            test_count: crate::problems::DEFAULT_TEST_POINTS,
            test_seed: crate::problems::DEFAULT_TEST_SEED,
        }
    }
}

/// One (sigma, basis, trial) run; NaN errors mark a failed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sigma: f64,
    pub basis: BasisKind,
    pub l2_value: f64,
    pub l2_grad: f64,
    pub trial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sigma: f64,
    pub basis: BasisKind,
    pub l2_value: f64,
    pub l2_grad: f64,
    pub failures: usize,
}

pub fn sigma_sweep(case: &PdeCase, protocol: &Protocol, opts: &SweepOptions) -> Result<Vec<SweepRecord>> {
    if opts.grid.is_empty() || opts.trials == 0 || opts.kinds.is_empty() {
        return Err(Error::invalid("sweep needs a nonempty grid, at least one trial and one basis"));
    }
    let mut out = Vec::with_capacity(opts.grid.len() * opts.trials * opts.kinds.len());
    for &kind in &opts.kinds {
        for &sigma in &opts.grid {
            for trial in 0..opts.trials {
                let ov = RunOverrides {
                    sigma: Some(sigma),
                    ..Default::default()
                };
                let res = solve_case(case, kind, protocol, trial as u64, &ov)
                    .and_then(|run| evaluate_errors(&run.solution, case, opts.test_count, opts.test_seed));
                let (l2_value, l2_grad) = match res {
                    Ok(e) => (e.l2_value, e.l2_grad),
                    Err(_) => (f64::NAN, f64::NAN),
                };
                out.push(SweepRecord {
                    sigma,
                    basis: kind,
                    l2_value,
                    l2_grad,
                    trial,
                });
            }
        }
    }
    Ok(out)
}

/// Median over trials per (basis, sigma), in sweep order.
pub fn summarize(records: &[SweepRecord]) -> Vec<SweepPoint> {
    let mut out: Vec<SweepPoint> = Vec::new();
    for r in records {
        if out.iter().any(|p| p.basis == r.basis && p.sigma == r.sigma) {
            continue;
        }
        let rows: Vec<&SweepRecord> = records.iter().filter(|s| s.basis == r.basis && s.sigma == r.sigma).collect();
        out.push(SweepPoint {
            sigma: r.sigma,
            basis: r.basis,
            l2_value: median(&rows.iter().map(|s| s.l2_value).collect::<Vec<_>>()),
            l2_grad: median(&rows.iter().map(|s| s.l2_grad).collect::<Vec<_>>()),
            failures: rows.iter().filter(|s| !s.l2_value.is_finite()).count(),
        });
    }
    out
}

/// Sigma with the smallest median value error for `kind`.
pub fn argmin_sigma(points: &[SweepPoint], kind: BasisKind) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.basis == kind && p.l2_value.is_finite())
        .min_by(|a, b| a.l2_value.total_cmp(&b.l2_value))
        .map(|p| p.sigma)
}

pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::find;

    #[test]
    fn default_grid_has_nine_points() {
        assert_eq!(SweepOptions::default().grid.len(), 9);
    }

    #[test]
    fn records_and_medians() {
        let case = find("poisson1d").unwrap();
        let protocol = Protocol {
            n_total: 40,
            blocks: 1,
            m_interior: 200,
            m_boundary: 2,
            m_initial: 0,
        };
        let opts = SweepOptions {
            grid: vec![1.0, 3.0, -1.0],
            trials: 2,
            test_count: 200,
            ..Default::default()
        };
        let recs = sigma_sweep(&case, &protocol, &opts).unwrap();
        assert_eq!(recs.len(), 6);
        let pts = summarize(&recs);
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[2].failures, 2);
        assert!(argmin_sigma(&pts, BasisKind::Sin).is_some());
        let mut buf = Vec::new();
        write_sweep_csv(&recs, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("sigma,basis,l2_value,l2_grad,trial"));
        assert!(sigma_sweep(&case, &protocol, &SweepOptions { grid: vec![], ..opts }).is_err());
    }
}
