//! Run configuration: one TOML file fully specifies a run.
//!
//! ```toml
//! [spacetime]
//! catalog = "weighted_minkowski2"   # or explicit n/metric/psi/chart
//! N = 3.0
//!
//! [numerics]
//! seed = 42
//!
//! [task]
//! K = 0.0
//! epsilon_floor = 0.4
//! ```
//!
//! Unknown keys are rejected. Metric and weight expressions are parsed
//! and the spacetime invariants (signature, weight/dimension coupling)
//! are validated at load. Every module precondition that can be checked
//! statically is checked here.

use crate::catalog;
use crate::exprparse;
use crate::flow::FlowOptions;
use crate::geometry::WeightedSpacetime;
use crate::ode::OdeOptions;
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub spacetime: SpacetimeSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub task: TaskSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacetimeSection {
    pub catalog: Option<String>,
    pub n: Option<usize>,
    pub metric: Option<Vec<Vec<String>>>,
    pub psi: Option<String>,
    #[serde(rename = "N")]
    pub n_param: Option<f64>,
    pub chart: Option<Vec<[f64; 2]>>,
    /// Weight coefficient for the weighted catalog entries.
    pub weight_coeff: Option<f64>,
    /// Switch the weighted catalog entries to the quadratic profile.
    #[serde(default)]
    pub weight_quadratic: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    /// Finite-difference step for first metric derivatives.
    pub fd_step: f64,
    /// Finite-difference step for curvature (second derivatives).
    pub curvature_step: f64,
    /// Adaptive integrator tolerance.
    pub ode_tol: f64,
    /// Voxel side; 0 derives `delta/64` per task.
    pub voxel_side: f64,
    pub pair_samples: usize,
    pub theta_samples: usize,
    pub seed: u64,
}

impl Default for NumericsSection {
    fn default() -> Self {
        NumericsSection {
            fd_step: crate::geometry::DEFAULT_FD_STEP,
            curvature_step: crate::geometry::DEFAULT_CURVATURE_STEP,
            ode_tol: 1e-10,
            voxel_side: 0.0,
            pair_samples: 1 << 18,
            theta_samples: 4096,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub x0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    #[serde(rename = "K")]
    pub k_bound: Option<f64>,
    pub epsilon: Option<f64>,
    pub epsilon_floor: Option<f64>,
    pub lambda: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub lambda_max: Option<f64>,
    pub lambda_steps: Option<usize>,
    pub delta: Option<f64>,
    pub t: Option<f64>,
    pub t_list: Option<Vec<f64>>,
    pub t_samples: Option<usize>,
    pub q: Option<f64>,
    pub t_end: Option<f64>,
    pub samples: Option<usize>,
    /// Region side for the TBM check.
    pub region_delta: Option<f64>,
    /// Second region generator: "translate" or "transport".
    pub region_b: Option<String>,
    pub translate: Option<Vec<f64>>,
    /// Counterexample scan.
    pub search_box: Option<Vec<[f64; 2]>>,
    pub scan_samples: Option<usize>,
    pub v_aperture: Option<f64>,
    pub v_samples: Option<usize>,
    /// Distortion table grids.
    pub theta_max: Option<f64>,
    pub theta_grid: Option<usize>,
    pub t_grid: Option<usize>,
    /// Discrete coupling atoms.
    pub mu_atoms: Option<Vec<Vec<f64>>>,
    pub nu_atoms: Option<Vec<Vec<f64>>>,
    /// Optional voxel-center dump path for region commands.
    pub dump_voxels: Option<String>,
}

/// Fully validated configuration.
#[derive(Debug)]
pub struct RunConfig {
    pub spacetime: WeightedSpacetime,
    pub numerics: NumericsSection,
    pub task: TaskSection,
}

impl RunConfig {
    pub fn flow_options(&self) -> FlowOptions {
        FlowOptions {
            ode: OdeOptions::with_tol(self.numerics.ode_tol),
            fd_step: self.numerics.fd_step,
            curvature_step: self.numerics.curvature_step,
        }
    }
}

/// Loads and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Parses and validates config text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text)?;
    let spacetime = build_spacetime(&raw.spacetime)?;
    let num = &raw.numerics;
    for (key, value) in [
        ("numerics.fd_step", num.fd_step),
        ("numerics.curvature_step", num.curvature_step),
        ("numerics.ode_tol", num.ode_tol),
    ] {
        if !value.is_finite() || value <= 0.0 {
            return Err(invalid(key, "must be positive"));
        }
    }
    if num.voxel_side < 0.0 {
        return Err(invalid("numerics.voxel_side", "must be nonnegative"));
    }
    for key in ["x0", "v0", "y0"] {
        let vec = match key {
            "x0" => &raw.task.x0,
            "v0" => &raw.task.v0,
            _ => &raw.task.y0,
        };
        if let Some(v) = vec {
            if v.len() != spacetime.dim() {
                return Err(invalid(
                    &format!("task.{key}"),
                    format!(
                        "needs {} entries for n={}",
                        spacetime.dim(),
                        spacetime.dim()
                    ),
                ));
            }
        }
    }
    if let Some(t) = raw.task.t {
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid("task.t", "must lie in [0, 1]"));
        }
    }
    if let Some(q) = raw.task.q {
        if !(0.0 < q && q < 1.0) {
            return Err(invalid("task.q", "must lie in (0, 1)"));
        }
    }
    Ok(RunConfig {
        spacetime,
        numerics: raw.numerics,
        task: raw.task,
    })
}

fn build_spacetime(section: &SpacetimeSection) -> Result<WeightedSpacetime, ConfigError> {
    if let Some(name) = &section.catalog {
        if section.metric.is_some() || section.psi.is_some() || section.n.is_some() {
            return Err(invalid(
                "spacetime.catalog",
                "catalog and explicit metric/psi/n are mutually exclusive",
            ));
        }
        return catalog::by_name(
            name,
            section.weight_coeff,
            section.weight_quadratic,
            section.n_param,
        )
        .ok_or_else(|| {
            invalid(
                "spacetime.catalog",
                format!(
                    "unknown catalog `{name}`; known: {:?}",
                    catalog::CATALOG_NAMES
                ),
            )
        })?
        .map_err(|e| invalid("spacetime", e.to_string()));
    }

    let n = section
        .n
        .ok_or_else(|| invalid("spacetime.n", "required for explicit metrics"))?;
    let metric_src = section
        .metric
        .as_ref()
        .ok_or_else(|| invalid("spacetime.metric", "required for explicit metrics"))?;
    if metric_src.len() != n || metric_src.iter().any(|row| row.len() != n) {
        return Err(invalid("spacetime.metric", format!("must be {n}x{n}")));
    }
    let mut metric = Vec::with_capacity(n);
    for (i, row) in metric_src.iter().enumerate() {
        let mut out_row = Vec::with_capacity(n);
        for (j, src) in row.iter().enumerate() {
            let expr = exprparse::parse(src)
                .map_err(|e| invalid(&format!("spacetime.metric[{i}][{j}]"), e.to_string()))?;
            out_row.push(expr);
        }
        metric.push(out_row);
    }
    let psi_src = section.psi.as_deref().unwrap_or("0");
    let psi = exprparse::parse(psi_src).map_err(|e| invalid("spacetime.psi", e.to_string()))?;
    let n_param = section.n_param.unwrap_or(n as f64);
    let chart: Vec<(f64, f64)> = section
        .chart
        .clone()
        .map(|c| c.into_iter().map(|[a, b]| (a, b)).collect())
        .unwrap_or_else(|| vec![(-10.0, 10.0); n]);
    if chart.len() != n || chart.iter().any(|(a, b)| a >= b) {
        return Err(invalid("spacetime.chart", "needs n ordered intervals"));
    }
    WeightedSpacetime::new(n, metric, psi, n_param, chart)
        .map_err(|e| invalid("spacetime", e.to_string()))
}
