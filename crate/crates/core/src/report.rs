//! JSON documents emitted by the command-line tool.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::prior::PriorKind;
use crate::propriety::Verdict;
use crate::sampler::{ResampleScheme, SMode};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything that determines a run, echoed into each report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub data_path: Option<String>,
    pub intercept: bool,
    pub prior: PriorKind,
    pub q_scale: Option<f64>,
    pub q_file: Option<String>,
    pub proposals: usize,
    pub draws: usize,
    pub seed: u64,
    pub s_mode: SMode,
    pub resample: ResampleScheme,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub out: Option<String>,
    pub draws_out: Option<String>,
}

impl RunConfig {
    /// Checks `N ≥ M ≥ 1`.
    pub fn validate(&self) -> Result<(), String> {
        if self.draws == 0 || self.proposals < self.draws {
            return Err(format!("need N ≥ M ≥ 1, got N={}, M={}", self.proposals, self.draws));
        }
        Ok(())
    }
}

/// Posterior summary from `fit`, `moments` or `gibbs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub tool_version: String,
    pub config: RunConfig,
    pub n: usize,
    pub p: usize,
    pub prior: PriorKind,
    pub verdict: Verdict,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub mc_se_mean: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mc_se_cov: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_normalized_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub log_marginal_likelihood: Option<f64>,
    pub seed: u64,
    pub timings_ms: BTreeMap<String, f64>,
}

pub fn vector(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Body printed when the propriety gate rejects a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImproperBody {
    pub error: String,
    pub verdict: Verdict,
    pub certificate: Option<Vec<f64>>,
    pub message: String,
}
