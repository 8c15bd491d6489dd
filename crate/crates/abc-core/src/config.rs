//! Run configuration: a single TOML file validated against the chain
//! constraints before any compute happens.
//!
//! Schema (defaults in parentheses):
//!
//! ```toml
//! d = 2                     # torus dimension, >= 2
//! seed_p = 1                # alpha_1 = seed_p / seed_q, coprime
//! seed_q = 3
//! rho = 0.1                 # strip half-width for analytic diagnostics
//! mode = "exact"            # exact | analytic | both     ("exact")
//! epsilon_variant = "strict12d"   # coarse4 | eight_d | strict12d
//! cell_budget = 100000000   # exact-mode grid cell cap    (1e8)
//! seed = 0                  # sampling seed               (0)
//! out = "artifacts"         # output directory, optional
//!
//! [[stages]]                # one table per stage, in order
//! k = 1
//! l = 6
//!
//! [analytic]                # optional, analytic-mode budgets
//! eps = 1e-4                # closeness budget for T_n    (1e-4)
//! delta = 0.5               # bad-set measure budget      (0.5)
//! closeness_samples = 600
//! commutation_samples = 500
//! jacobian_samples = 1000
//! metric_samples = 48
//! ```
//!
//! Stage shape rules: exact mode needs 2·q_n | l_n (the block layout does
//! not exist otherwise); analytic mode additionally accepts the degenerate
//! l_n = 1 stage, whose conjugator is the identity. Violations are
//! configuration errors, rejected before compute.

use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{AbcError, Result};
use crate::params::{EpsilonVariant, ParamSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Analytic,
    Both,
}

impl Default for Mode {
    fn default() -> Self {
        Mode::Exact
    }
}

impl Mode {
    pub fn wants_exact(self) -> bool {
        matches!(self, Mode::Exact | Mode::Both)
    }
    pub fn wants_analytic(self) -> bool {
        matches!(self, Mode::Analytic | Mode::Both)
    }
}

impl std::str::FromStr for Mode {
    type Err = AbcError;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "exact" => Ok(Mode::Exact),
            "analytic" => Ok(Mode::Analytic),
            "both" => Ok(Mode::Both),
            other => Err(AbcError::Config(format!(
                "mode must be exact, analytic or both, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Analytic => "analytic",
            Mode::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub k: i64,
    pub l: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticConfig {
    pub eps: f64,
    pub delta: f64,
    pub closeness_samples: usize,
    pub commutation_samples: usize,
    pub jacobian_samples: usize,
    pub metric_samples: usize,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        AnalyticConfig {
            eps: 1e-4,
            delta: 0.5,
            closeness_samples: 600,
            commutation_samples: 500,
            jacobian_samples: 1000,
            metric_samples: 48,
        }
    }
}

fn default_rho() -> f64 {
    0.1
}
fn default_cell_budget() -> u64 {
    100_000_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub d: u32,
    pub seed_p: i64,
    pub seed_q: i64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub stages: Vec<StageConfig>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub epsilon_variant: EpsilonVariant,
    #[serde(default = "default_cell_budget")]
    pub cell_budget: u64,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; echoed nowhere so reports stay byte-identical
    /// regardless of where they are written.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub analytic: AnalyticConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let config: RunConfig = toml::from_str(text)
            .map_err(|e| AbcError::Config(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            AbcError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        RunConfig::from_toml_str(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(AbcError::Config("at least one stage is required".into()));
        }
        if !(self.analytic.eps > 0.0) || !(self.analytic.delta > 0.0 && self.analytic.delta < 1.0)
        {
            return Err(AbcError::Config(format!(
                "analytic budgets need eps > 0 and delta in (0,1), got eps={}, delta={}",
                self.analytic.eps, self.analytic.delta
            )));
        }
        // builds the schedule once, purely for validation
        self.schedule().map(|_| ())
    }

    /// Build and shape-check the stage chain. Stage l must be a multiple of
    /// 2q for the block conjugator to exist; analytic mode also accepts the
    /// degenerate l = 1. Cross-stage divisibility failures are recorded in
    /// the schedule flags, not rejected.
    pub fn schedule(&self) -> Result<ParamSchedule> {
        let mut schedule = ParamSchedule::new(
            BigInt::from(self.seed_p),
            BigInt::from(self.seed_q),
            self.d,
            self.rho,
            self.epsilon_variant,
        )?;
        for (i, stage) in self.stages.iter().enumerate() {
            if stage.k < 1 || stage.l < 1 {
                return Err(AbcError::Config(format!(
                    "stage {}: k and l must be >= 1, got k={}, l={}",
                    i + 1,
                    stage.k,
                    stage.l
                )));
            }
            let (_, q) = schedule.pending_pq();
            let l = BigInt::from(stage.l);
            let two_q = BigInt::from(2) * &q;
            let block_ok = (&l % &two_q).is_zero();
            let degenerate = stage.l == 1;
            if self.mode.wants_exact() && !block_ok {
                return Err(AbcError::Config(format!(
                    "stage {}: exact mode needs 2q = {two_q} to divide l = {l}",
                    i + 1
                )));
            }
            if !block_ok && !degenerate {
                return Err(AbcError::Config(format!(
                    "stage {}: l = {l} is neither a multiple of 2q = {two_q} nor \
                     the degenerate 1; no conjugator realization exists",
                    i + 1
                )));
            }
            schedule
                .extend_unchecked_leven(BigInt::from(stage.k), l)
                .map_err(|e| AbcError::Config(e.to_string()))?;
        }
        Ok(schedule)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
d = 2
seed_p = 1
seed_q = 3

[[stages]]
k = 1
l = 6
";

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.mode, Mode::Exact);
        assert_eq!(c.rho, 0.1);
        assert_eq!(c.cell_budget, 100_000_000);
        let s = c.schedule().unwrap();
        assert_eq!(s.stages.len(), 1);
        assert_eq!(s.stages[0].q_next, BigInt::from(54));
        assert!(s.leven_ok[0]);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let bad = format!("{MINIMAL}\nturbo = true\n");
        assert!(matches!(
            RunConfig::from_toml_str(&bad),
            Err(AbcError::Config(_))
        ));
    }

    #[test]
    fn stage_shape_is_checked_per_mode() {
        // 2q = 6 does not divide l = 8
        let bad = MINIMAL.replace("l = 6", "l = 8");
        let err = RunConfig::from_toml_str(&bad).unwrap_err();
        assert!(matches!(err, AbcError::Config(_)), "{err}");

        // l = 1 is fine in analytic mode, rejected in exact mode
        let degenerate = "\
d = 2
seed_p = 1
seed_q = 2
mode = \"analytic\"

[[stages]]
k = 64
l = 1
";
        let c = RunConfig::from_toml_str(degenerate).unwrap();
        assert!(!c.schedule().unwrap().leven_ok[0]);
        let exact = degenerate.replace("\"analytic\"", "\"exact\"");
        assert!(RunConfig::from_toml_str(&exact).is_err());
    }

    #[test]
    fn bad_seed_fraction_is_rejected() {
        let bad = MINIMAL.replace("seed_p = 1", "seed_p = 6");
        assert!(matches!(
            RunConfig::from_toml_str(&bad),
            Err(AbcError::Config(_))
        ));
    }

    #[test]
    fn mode_strings_round_trip() {
        for (s, m) in [
            ("exact", Mode::Exact),
            ("analytic", Mode::Analytic),
            ("both", Mode::Both),
        ] {
            assert_eq!(s.parse::<Mode>().unwrap(), m);
            assert_eq!(m.to_string(), s);
        }
        assert!("turbo".parse::<Mode>().is_err());
    }
}
