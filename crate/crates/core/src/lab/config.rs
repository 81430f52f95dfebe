use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{GradmapError, Result};
use crate::scenarios::ScenarioDescriptor;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Validate,
    Flow,
    Weight,
    Classify,
    Strata,
    Polytope,
    Density,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Validate => "validate",
            Task::Flow => "flow",
            Task::Weight => "weight",
            Task::Classify => "classify",
            Task::Strata => "strata",
            Task::Polytope => "polytope",
            Task::Density => "density",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Gradient residual at which flows stop.
    pub flow: f64,
    /// Integrator relative tolerance.
    pub rtol: f64,
    pub f_p: f64,
    pub lambda: f64,
    /// Cauchy tolerance of the maximal-weight doubling.
    pub weight: f64,
    pub merge: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { flow: 1e-6, rtol: 1e-9, f_p: 1e-8, lambda: 1e-6, weight: 1e-10, merge: 1e-4 }
    }
}

fn d_samples() -> usize {
    100
}
fn d_directions() -> usize {
    16
}
fn d_pairs() -> usize {
    500
}
fn d_nk() -> usize {
    50
}
fn d_knn() -> usize {
    10
}
fn d_tmax() -> f64 {
    1e4
}
fn d_grid() -> usize {
    50
}
fn d_grid_end() -> f64 {
    10.0
}
fn d_pilot() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub task: Task,
    pub scenario: ScenarioDescriptor,
    /// Further scenarios run with the same task and parameters.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_scenarios: Vec<ScenarioDescriptor>,
    pub seed: u64,
    #[serde(default = "d_samples")]
    pub n_samples: usize,
    #[serde(default = "d_directions")]
    pub n_directions: usize,
    #[serde(default = "d_pairs")]
    pub n_pairs: usize,
    #[serde(default = "d_nk")]
    pub n_k: usize,
    #[serde(default = "d_knn")]
    pub k_neighbors: usize,
    #[serde(default = "d_pilot")]
    pub n_pilot: usize,
    #[serde(default = "d_tmax")]
    pub t_max: f64,
    /// Points of the `λ(x, β, t)` grid and its right end.
    #[serde(default = "d_grid")]
    pub t_grid: usize,
    #[serde(default = "d_grid_end")]
    pub t_grid_end: f64,
    /// Fraction of samples drawn from real frames (the real locus).
    #[serde(default)]
    pub real_fraction: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// 1-based line of the first `"key":` in the text, or 1.
fn line_of(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    let is_key = |line: &str| {
        line.match_indices(&needle).any(|(i, _)| line[i + needle.len()..].trim_start().starts_with(':'))
    };
    text.lines().position(is_key).map_or(1, |i| i + 1)
}

fn schema_error(text: &str, key: &str, message: impl Into<String>) -> GradmapError {
    GradmapError::Config { line: line_of(text, key), message: message.into() }
}

/// Parses and validates a JSON experiment config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text)
        .map_err(|e| GradmapError::Config { line: e.line(), message: e.to_string() })?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(schema_error(
            text,
            "schema_version",
            format!("unsupported schema_version {}, expected {SCHEMA_VERSION}", cfg.schema_version),
        ));
    }
    let t = &cfg.tolerances;
    for (name, v) in [
        ("flow", t.flow),
        ("rtol", t.rtol),
        ("f_p", t.f_p),
        ("lambda", t.lambda),
        ("weight", t.weight),
        ("merge", t.merge),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(schema_error(text, name, format!("tolerance {name} must be positive, got {v}")));
        }
    }
    if !(cfg.t_max > 0.0 && cfg.t_max.is_finite()) {
        return Err(schema_error(text, "t_max", "t_max must be positive"));
    }
    if !(cfg.t_grid_end > 0.0) || cfg.t_grid < 2 {
        return Err(schema_error(text, "t_grid", "t_grid needs at least 2 points and a positive end"));
    }
    if cfg.n_samples == 0 {
        return Err(schema_error(text, "n_samples", "n_samples must be at least 1"));
    }
    if !(0.0..=1.0).contains(&cfg.real_fraction) {
        return Err(schema_error(text, "real_fraction", "real_fraction must lie in [0, 1]"));
    }
    if cfg.threads == Some(0) {
        return Err(schema_error(text, "threads", "threads must be at least 1"));
    }
    Ok(cfg)
}
