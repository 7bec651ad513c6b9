//! Run configuration: TOML file values overlaid by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use rfpde::newton::{LineSearch, NewtonConfig};
use rfpde::problems::{PdeCase, Protocol, RunOverrides, Scale, DEFAULT_TEST_POINTS, DEFAULT_TEST_SEED};
use rfpde::BasisKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Markdown,
    Json,
}

/// Newton settings a config file may override.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonFile {
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub mu: Option<f64>,
    pub line_search: Option<bool>,
    pub warm_start: Option<bool>,
}

/// Every field is optional; unset fields fall back to each case's
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problems: Option<Vec<String>>,
    pub basis: Option<Vec<BasisKind>>,
    pub seeds: Option<Vec<u64>>,
    pub sigma: Option<f64>,
    pub grid: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub n_total: Option<usize>,
    pub blocks: Option<usize>,
    pub m_interior: Option<usize>,
    pub m_boundary: Option<usize>,
    pub m_initial: Option<usize>,
    pub penalty: Option<f64>,
    pub mu: Option<f64>,
    pub normalized: Option<bool>,
    pub desk_scale: Option<bool>,
    pub test_points: Option<usize>,
    pub test_seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub newton: Option<NewtonFile>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &RunConfig) -> Self {
        overlay!(self, top; problems, basis, seeds, sigma, grid, trials, n_total, blocks, m_interior,
            m_boundary, m_initial, penalty, mu, normalized, desk_scale, test_points, test_seed, output, format);
        match (&mut self.newton, &top.newton) {
            (Some(a), Some(b)) => {
                overlay!(a, b; max_iter, tol, mu, line_search, warm_start);
            }
            (None, Some(b)) => self.newton = Some(b.clone()),
            _ => {}
        }
        self
    }

    pub fn scale(&self) -> Scale {
        if self.desk_scale.unwrap_or(false) {
            Scale::Desk
        } else {
            Scale::Full
        }
    }

    /// The case's protocol at the configured scale with explicit counts
    /// applied on top.
    pub fn protocol(&self, case: &PdeCase) -> Protocol {
        let mut p = case.protocol(self.scale());
        if let Some(v) = self.n_total {
            p.n_total = v;
        }
        if let Some(v) = self.blocks {
            p.blocks = v;
        }
        if let Some(v) = self.m_interior {
            p.m_interior = v;
        }
        if let Some(v) = self.m_boundary {
            p.m_boundary = v;
        }
        if let Some(v) = self.m_initial {
            p.m_initial = v;
        }
        p
    }

    pub fn has_protocol_override(&self) -> bool {
        self.n_total.is_some()
            || self.blocks.is_some()
            || self.m_interior.is_some()
            || self.m_boundary.is_some()
            || self.m_initial.is_some()
    }

    pub fn overrides(&self, case: &PdeCase) -> RunOverrides {
        let newton = self.newton.as_ref().map(|n| {
            let mut c: NewtonConfig = case.defaults.newton.clone();
            if let Some(v) = n.max_iter {
                c.max_iter = v;
            }
            if let Some(v) = n.tol {
                c.tol_rel = v;
            }
            if let Some(v) = n.mu {
                c.mu = v;
            }
            if let Some(v) = n.line_search {
                c.line_search = v.then(LineSearch::default);
            }
            if let Some(v) = n.warm_start {
                c.warm_start = v;
            }
            c
        });
        RunOverrides {
            sigma: self.sigma,
            normalized: self.normalized,
            penalty: self.penalty,
            mu: self.mu,
            newton,
            ..Default::default()
        }
    }

    pub fn kinds(&self) -> Vec<BasisKind> {
        self.basis.clone().unwrap_or_else(|| vec![BasisKind::Sin])
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![0])
    }

    pub fn test_points(&self) -> usize {
        self.test_points.unwrap_or(DEFAULT_TEST_POINTS)
    }

    pub fn test_seed(&self) -> u64 {
        self.test_seed.unwrap_or(DEFAULT_TEST_SEED)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    /// Reject values no run could use.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_total", self.n_total),
            ("blocks", self.blocks),
            ("m_interior", self.m_interior),
            ("trials", self.trials),
            ("test_points", self.test_points),
        ] {
            if v == Some(0) {
                anyhow::bail!(rfpde::Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.seeds.as_ref().is_some_and(Vec::is_empty) || self.basis.as_ref().is_some_and(Vec::is_empty) {
            anyhow::bail!(rfpde::Error::InvalidArgument("seed and basis lists must be nonempty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: RunConfig = toml::from_str(
            r#"
            problems = ["wave1d"]
            sigma = 2.0
            seeds = [0, 1]
            [newton]
            max_iter = 10
            "#,
        )
        .unwrap();
        let flags = RunConfig {
            sigma: Some(5.0),
            newton: Some(NewtonFile {
                tol: Some(1e-6),
                ..Default::default()
            }),
            ..Default::default()
        };
        let c = file.overlay(&flags);
        assert_eq!(c.sigma, Some(5.0));
        assert_eq!(c.seeds, Some(vec![0, 1]));
        let n = c.newton.unwrap();
        assert_eq!((n.max_iter, n.tol), (Some(10), Some(1e-6)));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("sigmaa = 1.0").is_err());
    }
}
