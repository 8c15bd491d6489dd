//! Run reports. Every check verdict records the inequality it tested with
//! both sides spelled out, exact values as decimal strings, so a report is
//! meaningful without rerunning anything. Serialization order follows
//! struct declaration order and all maps are ordered, so a fixed seed gives
//! byte-identical JSON.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::rational::Rational;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub id: String,
    pub passed: bool,
    pub lhs: String,
    pub relation: String,
    pub rhs: String,
    pub detail: String,
}

impl Verdict {
    pub fn new(
        id: impl Into<String>,
        passed: bool,
        lhs: impl Into<String>,
        relation: impl Into<String>,
        rhs: impl Into<String>,
        detail: impl Into<String>,
    ) -> Verdict {
        Verdict {
            id: id.into(),
            passed,
            lhs: lhs.into(),
            relation: relation.into(),
            rhs: rhs.into(),
            detail: detail.into(),
        }
    }

    /// Exact rational equality.
    pub fn rational_eq(
        id: impl Into<String>,
        lhs: &Rational,
        rhs: &Rational,
        detail: impl Into<String>,
    ) -> Verdict {
        Verdict::new(id, lhs == rhs, lhs.to_string(), "==", rhs.to_string(), detail)
    }

    /// Exact rational bound lhs ≤ rhs.
    pub fn rational_le(
        id: impl Into<String>,
        lhs: &Rational,
        rhs: &Rational,
        detail: impl Into<String>,
    ) -> Verdict {
        Verdict::new(id, lhs <= rhs, lhs.to_string(), "<=", rhs.to_string(), detail)
    }

    /// Sampled float bound lhs < rhs.
    pub fn float_lt(
        id: impl Into<String>,
        lhs: f64,
        rhs: f64,
        detail: impl Into<String>,
    ) -> Verdict {
        Verdict::new(id, lhs < rhs, lhs.to_string(), "<", rhs.to_string(), detail)
    }

    /// A structural yes/no fact.
    pub fn fact(id: impl Into<String>, holds: bool, detail: impl Into<String>) -> Verdict {
        Verdict::new(id, holds, holds.to_string(), "==", "true", detail)
    }
}

/// One stage of the chain, all integers as decimal strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageManifest {
    pub n: u32,
    pub p: String,
    pub q: String,
    pub k: String,
    pub l: String,
    pub m: String,
    pub r: String,
    pub p_next: String,
    pub q_next: String,
    pub alpha: String,
    pub alpha_next: String,
    pub delta: String,
    pub epsilon: String,
    pub cross_stage_divisibility: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_dens: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_cells: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticStageManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyticStageManifest {
    pub eps: f64,
    pub delta: f64,
    pub slides: usize,
    pub commutation_residual: f64,
    pub closeness_samples: u64,
    pub closeness_bad_fraction: f64,
    pub closeness_worst_good_error: f64,
}

/// Speed-of-approximation row for the CSV table and the curve figure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedRow {
    pub stage: u32,
    pub eta_total: String,
    pub eta_total_f64: f64,
    pub cyclic_total: String,
    pub cyclic_total_f64: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub h: u64,
    pub r: f64,
    pub rel_residual: f64,
    pub r_gap_between_observable_halves: f64,
    pub fejer_mass: f64,
    pub fejer_c0: f64,
    pub fejer_min_density: f64,
    /// Fejér density curve as (θ/2π, value) pairs for the figure.
    pub density: Vec<(f64, f64)>,
}

/// Everything the figure renderer needs, embedded so `render` can work
/// from a report file alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FigureData {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_pattern: Option<HPatternFigure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub towers: Option<TowerFigure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed: Option<Vec<SpeedRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral_density: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mollify: Option<MollifyFigure>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HPatternFigure {
    pub l: u64,
    pub p: u64,
    pub q: u64,
    pub r: u64,
}

/// Stripe offsets of the two tower bases on the x₁ axis, plus heights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TowerFigure {
    pub q: u64,
    pub m: u64,
    /// Left edges of tower-1 base stripes (exact strings and f64).
    pub base1_offsets: Vec<(String, f64)>,
    pub base2_offsets: Vec<(String, f64)>,
    pub stripe_width: f64,
    pub alpha_next: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MollifyFigure {
    /// Piece boundaries and values of the target step (one period).
    pub den: u64,
    pub values: Vec<f64>,
    /// Sampled (x, smoothed) curve.
    pub curve: Vec<(f64, f64)>,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub mode: String,
    pub seed: u64,
    pub passed: bool,
    pub config: RunConfig,
    pub stages: Vec<StageManifest>,
    pub checks: Vec<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed: Option<Vec<SpeedRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral: Option<SpectralSummary>,
    pub figures: FigureData,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> crate::error::Result<RunReport> {
        serde_json::from_str(text).map_err(|e| {
            crate::error::AbcError::Artifact(format!("cannot parse report: {e}"))
        })
    }

    pub fn failed_checks(&self) -> Vec<&Verdict> {
        self.checks.iter().filter(|v| !v.passed).collect()
    }
}
