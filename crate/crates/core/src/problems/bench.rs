//! Benchmark tables: one row per (case, basis, seed), medians over seeds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{evaluate_errors, solve_case, PdeCase, Protocol, RunOverrides, Scale, DEFAULT_TEST_POINTS, DEFAULT_TEST_SEED};
use crate::basis::BasisKind;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub scale: Scale,
    /// Replaces the scale preset when set.
    pub protocol: Option<Protocol>,
    pub kinds: Vec<BasisKind>,
    pub seeds: Vec<u64>,
    pub overrides: RunOverrides,
    pub test_count: usize,
    pub test_seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            scale: Scale::Full,
            protocol: None,
            kinds: vec![BasisKind::Sin],
            seeds: vec![0],
            overrides: RunOverrides::default(),
            test_count: DEFAULT_TEST_POINTS,
            test_seed: DEFAULT_TEST_SEED,
        }
    }
}

/// One benchmark row. Failed runs keep NaN metrics and the error text in
/// `status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub problem: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M1")]
    pub m1: usize,
    #[serde(rename = "M2")]
    pub m2: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub l2_value: f64,
    pub l2_grad: f64,
    pub residual: f64,
    pub t_assemble: f64,
    pub t_solve: f64,
    pub seed: u64,
    pub basis: BasisKind,
    pub iterations: usize,
    pub status: String,
}

impl BenchRecord {
    pub fn ok(&self) -> bool {
        !self.status.starts_with("failed")
    }
}

fn run_one(case: &PdeCase, kind: BasisKind, seed: u64, opts: &BenchOptions) -> BenchRecord {
    let protocol = opts.protocol.unwrap_or_else(|| case.protocol(opts.scale));
    let sigma = opts.overrides.sigma.unwrap_or(case.defaults.sigma);
    let mut rec = BenchRecord {
        problem: case.name.clone(),
        n: protocol.n_total,
        m1: protocol.m_interior,
        m2: protocol.m_boundary,
        sigma,
        lambda: opts.overrides.penalty.unwrap_or(case.defaults.penalty),
        l2_value: f64::NAN,
        l2_grad: f64::NAN,
        residual: f64::NAN,
        t_assemble: f64::NAN,
        t_solve: f64::NAN,
        seed,
        basis: kind,
        iterations: 0,
        status: String::new(),
    };
    let outcome = solve_case(case, kind, &protocol, seed, &opts.overrides)
        .and_then(|run| evaluate_errors(&run.solution, case, opts.test_count, opts.test_seed).map(|e| (run, e)));
    match outcome {
        Ok((run, err)) => {
            rec.l2_value = err.l2_value;
            rec.l2_grad = err.l2_grad;
            rec.residual = err.residual_rms;
            rec.t_assemble = run.times.assembly;
            rec.t_solve = run.times.solve;
            rec.iterations = run.iterations();
            rec.status = run.status.map_or_else(|| "ok".to_string(), |s| s.to_string());
        }
        Err(e) => rec.status = format!("failed: {e}"),
    }
    rec
}

/// Run every (case, basis, seed) combination. A failing run becomes a
/// failed row and the loop continues.
pub fn run_benchmark(cases: &[PdeCase], opts: &BenchOptions) -> Vec<BenchRecord> {
    let mut out = Vec::with_capacity(cases.len() * opts.kinds.len() * opts.seeds.len());
    for case in cases {
        for &kind in &opts.kinds {
            for &seed in &opts.seeds {
                out.push(run_one(case, kind, seed, opts));
            }
        }
    }
    out
}

pub fn write_csv<W: Write>(records: &[BenchRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Median-aggregated row per (case, basis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub problem: String,
    pub basis: BasisKind,
    pub runs: usize,
    pub failures: usize,
    pub l2_value: f64,
    pub l2_grad: f64,
    pub residual: f64,
    pub t_solve: f64,
}

/// Median of the finite entries, NaN if there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn aggregate(records: &[BenchRecord]) -> Vec<BenchSummary> {
    let mut keys: Vec<(String, BasisKind)> = Vec::new();
    for r in records {
        let k = (r.problem.clone(), r.basis);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(problem, basis)| {
            let rows: Vec<&BenchRecord> = records
                .iter()
                .filter(|r| r.problem == problem && r.basis == basis)
                .collect();
            let ok: Vec<&&BenchRecord> = rows.iter().filter(|r| r.ok()).collect();
            let col = |f: fn(&BenchRecord) -> f64| median(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            BenchSummary {
                runs: rows.len(),
                failures: rows.len() - ok.len(),
                l2_value: col(|r| r.l2_value),
                l2_grad: col(|r| r.l2_grad),
                residual: col(|r| r.residual),
                t_solve: col(|r| r.t_solve),
                problem,
                basis,
            }
        })
        .collect()
}

pub fn write_markdown<W: Write>(summaries: &[BenchSummary], mut w: W) -> Result<()> {
    writeln!(w, "| problem | basis | runs | failed | rel. L2 | grad L2 | residual | t_solve (s) |")?;
    writeln!(w, "|---|---|---|---|---|---|---|---|")?;
    for s in summaries {
        writeln!(
            w,
            "| {} | {} | {} | {} | {:.2e} | {:.2e} | {:.2e} | {:.3} |",
            s.problem, s.basis, s.runs, s.failures, s.l2_value, s.l2_grad, s.residual, s.t_solve
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::find;

    fn tiny() -> Protocol {
        Protocol {
            n_total: 60,
            blocks: 1,
            m_interior: 200,
            m_boundary: 20,
            m_initial: 20,
        }
    }

    #[test]
    fn row_count_and_failures() {
        let mut bad = find("poisson1d").unwrap();
        bad.defaults.sigma = -1.0;
        bad.name = "broken".into();
        let cases = vec![find("poisson1d").unwrap(), bad];
        let opts = BenchOptions {
            protocol: Some(tiny()),
            kinds: vec![BasisKind::Sin, BasisKind::Tanh],
            seeds: vec![0, 1],
            test_count: 100,
            ..Default::default()
        };
        let rows = run_benchmark(&cases, &opts);
        assert_eq!(rows.len(), 8);
        assert!(rows[..4].iter().all(BenchRecord::ok));
        assert!(rows[4..].iter().all(|r| !r.ok() && r.l2_value.is_nan()));
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 4);
        assert_eq!(agg[2].failures, 2);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("problem,N,M1,M2,sigma,lambda,l2_value,l2_grad,residual,t_assemble,t_solve,seed"));
        assert_eq!(text.lines().count(), 9);
    }

    #[test]
    fn median_ignores_nan() {
        assert_eq!(median(&[3.0, f64::NAN, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[1.0, 4.0]), 2.5);
        assert!(median(&[f64::NAN]).is_nan());
    }
}
