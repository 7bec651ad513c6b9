//! Single-component removals for the Newton solver.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{evaluate_errors, solve_case, PdeCase, Protocol, RunOverrides};
use crate::basis::BasisKind;
use crate::error::{Error, Result};
use crate::newton::NewtonStatus;

/// Iteration cap for the direct (no continuation) variant.
pub const DIRECT_ITERATIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    Full,
    NoNormalization,
    NoTikhonov,
    NoWarmStart,
    NoLineSearch,
    NoContinuation,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 6] = [
        AblationVariant::Full,
        AblationVariant::NoNormalization,
        AblationVariant::NoTikhonov,
        AblationVariant::NoWarmStart,
        AblationVariant::NoLineSearch,
        AblationVariant::NoContinuation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoNormalization => "no-normalization",
            AblationVariant::NoTikhonov => "no-tikhonov",
            AblationVariant::NoWarmStart => "no-warm-start",
            AblationVariant::NoLineSearch => "no-line-search",
            AblationVariant::NoContinuation => "no-continuation",
        }
    }

    /// Overrides that remove this component, or `None` when the case does
    /// not use it.
    pub fn overrides(self, case: &PdeCase) -> Option<RunOverrides> {
        let mut cfg = case.defaults.newton.clone();
        let mut ov = RunOverrides::default();
        match self {
            AblationVariant::Full => {}
            AblationVariant::NoNormalization => ov.normalized = Some(false),
            AblationVariant::NoTikhonov => cfg.mu = 0.0,
            AblationVariant::NoWarmStart => cfg.warm_start = false,
            AblationVariant::NoLineSearch => cfg.line_search = None,
            AblationVariant::NoContinuation => {
                if !case.has_continuation() {
                    return None;
                }
                ov.schedule = Some(Vec::new());
                ov.budget = Some(DIRECT_ITERATIONS);
            }
        }
        ov.newton = Some(cfg);
        Some(ov)
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown ablation variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub problem: String,
    pub variant: AblationVariant,
    /// NaN when the variant does not apply or the run failed.
    pub l2_value: f64,
    pub iterations: usize,
    /// Newton status, `n/a` or `failed: ...`.
    pub status: String,
}

impl AblationRecord {
    pub fn diverged(&self) -> bool {
        self.status == NewtonStatus::Diverged.to_string()
    }
}

/// Run the listed variants on one Newton case with a shared basis and
/// point seed.
pub fn run_ablation(
    case: &PdeCase,
    protocol: &Protocol,
    seed: u64,
    variants: &[AblationVariant],
    test_count: usize,
    test_seed: u64,
) -> Vec<AblationRecord> {
    variants
        .iter()
        .map(|&variant| {
            let mut rec = AblationRecord {
                problem: case.name.clone(),
                variant,
                l2_value: f64::NAN,
                iterations: 0,
                status: "n/a".into(),
            };
            let Some(ov) = variant.overrides(case) else {
                return rec;
            };
            let out = solve_case(case, BasisKind::Sin, protocol, seed, &ov)
                .and_then(|run| evaluate_errors(&run.solution, case, test_count, test_seed).map(|e| (run, e)));
            match out {
                Ok((run, err)) => {
                    rec.l2_value = err.l2_value;
                    rec.iterations = run.iterations();
                    rec.status = run.status.map_or_else(|| "ok".into(), |s| s.to_string());
                }
                Err(e) => rec.status = format!("failed: {e}"),
            }
            rec
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::find;

    #[test]
    fn names_round_trip() {
        for v in AblationVariant::ALL {
            assert_eq!(v.name().parse::<AblationVariant>().unwrap(), v);
        }
        assert!("no-such".parse::<AblationVariant>().is_err());
    }

    #[test]
    fn continuation_variant_only_for_continuation_cases() {
        let p = find("nlpoisson2d").unwrap();
        assert!(AblationVariant::NoContinuation.overrides(&p).is_none());
        let b = find("burgers1d").unwrap();
        let ov = AblationVariant::NoContinuation.overrides(&b).unwrap();
        assert_eq!(ov.schedule, Some(Vec::new()));
        assert_eq!(ov.budget, Some(DIRECT_ITERATIONS));
        let ov = AblationVariant::NoTikhonov.overrides(&b).unwrap();
        assert_eq!(ov.newton.unwrap().mu, 0.0);
    }
}
