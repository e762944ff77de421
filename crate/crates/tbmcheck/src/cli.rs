//! Command surface: config-driven subcommands, line-delimited records,
//! and human summaries.
//!
//! Every command reads one TOML config (spacetime + numerics + task
//! parameters), runs the corresponding module operation, writes one
//! record per result line to the output path (or standard output), and
//! prints a short summary. Identical config and seed produce
//! byte-identical records; floats are printed with full precision.
//!
//! Exit statuses: `counterexample` exits 0 when a certified violation
//! was found, 1 when the curvature scan produced no candidate, 2 when
//! the scale grid was exhausted inconclusively. Other commands exit 0 on
//! success. Any error is emitted as a single `type=error` record with
//! exit status 10.

use crate::config::{ConfigError, RunConfig};
use crate::distortion::{self, ExtReal};
use crate::geodesics;
use crate::regions::{self, RegionSpec};
use crate::report::{fmt_f64, Record};
use crate::tbm::{self, SearchOutcome, TbmParams};
use nalgebra::DVector;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NO_CANDIDATE: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_ERROR: i32 = 10;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("task parameter missing: {0}")]
    MissingParam(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Run(String),
}

macro_rules! run_err {
    ($e:expr) => {
        CliError::Run($e.to_string())
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Curvature,
    Geodesic,
    Separation,
    DistortionTable,
    CheckOde,
    CheckTbm,
    Counterexample,
    LwDistance,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Curvature => "curvature",
            Command::Geodesic => "geodesic",
            Command::Separation => "separation",
            Command::DistortionTable => "distortion-table",
            Command::CheckOde => "check-ode",
            Command::CheckTbm => "check-tbm",
            Command::Counterexample => "counterexample",
            Command::LwDistance => "lw-distance",
        }
    }
}

/// Outcome of a command run: records, summary lines, exit status.
pub struct RunOutput {
    pub records: Vec<Record>,
    pub summary: Vec<String>,
    pub exit: i32,
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

fn task_vec(
    cfg: &RunConfig,
    field: &Option<Vec<f64>>,
    name: &'static str,
) -> Result<DVector<f64>, CliError> {
    match field {
        Some(v) => Ok(dv(v)),
        None => Err(CliError::MissingParam(name)),
    }
    .or_else(|e| {
        // x0 defaults to the chart center; v0 to the normalized time axis
        match name {
            "x0" => Ok(dv(&cfg
                .spacetime
                .chart()
                .iter()
                .map(|(a, b)| 0.5 * (a + b))
                .collect::<Vec<_>>())),
            "v0" => {
                let x0 = cfg.task.x0.clone().unwrap_or_else(|| {
                    cfg.spacetime
                        .chart()
                        .iter()
                        .map(|(a, b)| 0.5 * (a + b))
                        .collect()
                });
                let n = cfg.spacetime.dim();
                let mut axis = DVector::zeros(n);
                axis[0] = 1.0;
                let g = cfg.spacetime.metric_at(&x0).map_err(|err| run_err!(err))?;
                let q = (axis.transpose() * &g * &axis)[(0, 0)];
                Ok(axis / q.sqrt())
            }
            _ => Err(e),
        }
    })
}

fn ext_to_string(v: ExtReal) -> String {
    match v {
        ExtReal::Finite(x) => fmt_f64(x),
        ExtReal::PosInfinity => "inf".to_string(),
    }
}

fn header(cfg: &RunConfig, command: Command) -> Record {
    Record::new("run")
        .str("command", command.name())
        .usize("n", cfg.spacetime.dim())
        .f64("N", cfg.spacetime.n_param())
        .int("seed", cfg.numerics.seed as i64)
}

/// Runs a command against a validated config.
pub fn run_command(cfg: &RunConfig, command: Command) -> Result<RunOutput, CliError> {
    let opts = cfg.flow_options();
    let mut records = vec![header(cfg, command)];
    let mut summary = Vec::new();
    let mut exit = EXIT_OK;
    match command {
        Command::Curvature => {
            let x0 = task_vec(cfg, &cfg.task.x0, "x0")?;
            let h = cfg.numerics.curvature_step;
            let report = cfg
                .spacetime
                .curvature_report(x0.as_slice(), h)
                .map_err(|e| run_err!(e))?;
            let mut rec = Record::new("curvature")
                .vec("x", x0.as_slice())
                .f64("h", h)
                .vec("ricci", report.ricci.as_slice())
                .vec("bakry_emery_ricci", report.bakry_emery_ricci.as_slice());
            if let Some(v0) = &cfg.task.v0 {
                let quad = cfg
                    .spacetime
                    .bakry_emery_ricci(x0.as_slice(), &dv(v0), h)
                    .map_err(|e| run_err!(e))?;
                rec = rec.f64("be_quadratic", quad);
            }
            records.push(rec);
            summary.push(format!(
                "curvature at {:?}: max |Ric| = {:.3e}",
                x0.as_slice(),
                report.ricci.amax()
            ));
        }
        Command::Geodesic => {
            let x0 = task_vec(cfg, &cfg.task.x0, "x0")?;
            let v0 = task_vec(cfg, &cfg.task.v0, "v0")?;
            let t_end = cfg.task.t_end.unwrap_or(1.0);
            let samples = cfg.task.samples.unwrap_or(16);
            let sol = geodesics::geodesic(&cfg.spacetime, &x0, &v0, t_end, samples, &opts)
                .map_err(|e| run_err!(e))?;
            for (i, t) in sol.times.iter().enumerate() {
                records.push(
                    Record::new("geodesic_sample")
                        .f64("t", *t)
                        .vec("x", sol.positions[i].as_slice())
                        .vec("v", sol.velocities[i].as_slice()),
                );
            }
            summary.push(format!(
                "geodesic endpoint at t={t_end}: {:?}",
                sol.end_position().as_slice()
            ));
        }
        Command::Separation => {
            let x0 = task_vec(cfg, &cfg.task.x0, "x0")?;
            let y0 = cfg
                .task
                .y0
                .as_ref()
                .map(|v| dv(v))
                .ok_or(CliError::MissingParam("y0"))?;
            let sep = geodesics::time_separation(&cfg.spacetime, &x0, &y0, &opts)
                .map_err(|e| run_err!(e))?;
            let class = match sep {
                geodesics::SeparationValue::Timelike(_) => "timelike",
                geodesics::SeparationValue::Lightlike => "lightlike",
                geodesics::SeparationValue::NotCausal => "spacelike-or-acausal",
            };
            records.push(
                Record::new("separation")
                    .vec("x", x0.as_slice())
                    .vec("y", y0.as_slice())
                    .f64("value", sep.value())
                    .f64("ell_plus", sep.ell_plus())
                    .str("class", class),
            );
            summary.push(format!("separation = {} ({class})", fmt_f64(sep.value())));
        }
        Command::DistortionTable => {
            let k_bound = cfg.task.k_bound.unwrap_or(0.0);
            let n_param = cfg.spacetime.n_param();
            let t_grid = cfg.task.t_grid.unwrap_or(11);
            let theta_grid = cfg.task.theta_grid.unwrap_or(9);
            let theta_max = cfg.task.theta_max.unwrap_or(2.0);
            for ti in 0..t_grid {
                let t = ti as f64 / (t_grid.max(2) - 1) as f64;
                for hi in 0..theta_grid {
                    let theta = theta_max * hi as f64 / (theta_grid.max(2) - 1) as f64;
                    let sig = distortion::sigma(k_bound / n_param, t, theta);
                    let tau =
                        distortion::tau(k_bound, n_param, t, theta).map_err(|e| run_err!(e))?;
                    records.push(
                        Record::new("distortion_row")
                            .f64("K", k_bound)
                            .f64("N", n_param)
                            .f64("t", t)
                            .f64("theta", theta)
                            .str("sigma", ext_to_string(sig))
                            .str("tau", ext_to_string(tau)),
                    );
                }
            }
            summary.push(format!(
                "distortion table: K={k_bound}, N={n_param}, {t_grid}x{theta_grid} rows"
            ));
        }
        Command::CheckOde => {
            let x0 = task_vec(cfg, &cfg.task.x0, "x0")?;
            let v0 = task_vec(cfg, &cfg.task.v0, "v0")?;
            let k_bound = cfg.task.k_bound.unwrap_or(0.0);
            let epsilon = cfg.task.epsilon.unwrap_or(0.4);
            let t_samples = cfg.task.t_samples.unwrap_or(64);
            let lambdas = cfg
                .task
                .lambdas
                .clone()
                .or_else(|| cfg.task.lambda.map(|l| vec![l]))
                .unwrap_or_else(|| vec![0.1, 0.05, 0.025]);
            let field = tbm::build_transport_field(&cfg.spacetime, &x0, &v0, &opts)
                .map_err(|e| run_err!(e))?;
            let mut all_hold = true;
            for lambda in &lambdas {
                let rep = tbm::check_distortion_ode(
                    &cfg.spacetime,
                    &field,
                    *lambda,
                    k_bound,
                    epsilon,
                    t_samples,
                    &opts,
                )
                .map_err(|e| run_err!(e))?;
                all_hold &= rep.holds;
                records.push(
                    Record::new("ode_check")
                        .f64("lambda", *lambda)
                        .f64("K", k_bound)
                        .f64("epsilon", epsilon)
                        .f64("margin", rep.residual_margin)
                        .bool("holds", rep.holds)
                        .f64("sup_error_term", rep.sup_error_term)
                        .f64("error_term_at_zero", rep.error_term_at_zero)
                        .f64("identity_residual", rep.identity_residual),
                );
            }
            summary.push(format!(
                "distortion inequality {} for K={k_bound}, eps={epsilon}, lambdas {lambdas:?}",
                if all_hold { "holds" } else { "FAILED" }
            ));
        }
        Command::CheckTbm => {
            let (region_a, region_b, diag) = build_regions(cfg, &opts)?;
            let k_bound = cfg.task.k_bound.unwrap_or(0.0);
            let t_list = cfg
                .task
                .t_list
                .clone()
                .or_else(|| cfg.task.t.map(|t| vec![t]))
                .unwrap_or_else(|| vec![0.5]);
            let params = tbm_params(cfg)?;
            let results = tbm::check_tbm(
                &cfg.spacetime,
                &region_a,
                &region_b,
                k_bound,
                &t_list,
                &params,
                diag,
                &opts,
            )
            .map_err(|e| run_err!(e))?;
            for r in &results {
                records.push(tbm_record("tbm_check", r, None));
                summary.push(format!(
                    "t={}: lhs={} rhs={} verdict={}",
                    r.t,
                    fmt_f64(r.lhs),
                    fmt_f64(r.rhs),
                    r.verdict.as_str()
                ));
            }
            if let Some(path) = &cfg.task.dump_voxels {
                dump_interpolant_voxels(cfg, &region_a, &region_b, &t_list, &params, path)?;
                summary.push(format!("voxel centers written to {path}"));
            }
        }
        Command::Counterexample => {
            let k_bound = cfg.task.k_bound.unwrap_or(0.0);
            let epsilon_floor = cfg.task.epsilon_floor.unwrap_or(0.4);
            let search = search_params(cfg)?;
            let report =
                tbm::find_counterexample(&cfg.spacetime, k_bound, epsilon_floor, &search, &opts)
                    .map_err(|e| run_err!(e))?;
            records.push(
                Record::new("scan")
                    .usize("samples", search.scan_samples)
                    .f64("minimum", report.scan_minimum)
                    .f64("threshold", k_bound - 2.0 * epsilon_floor),
            );
            for (lambda, attempt) in report.lambdas.iter().zip(&report.attempts) {
                records.push(tbm_record("attempt", attempt, Some(*lambda)));
            }
            let outcome = match report.outcome {
                SearchOutcome::Found => "violation",
                SearchOutcome::NoCandidate => "none",
                SearchOutcome::Exhausted => "inconclusive",
            };
            let mut rec = Record::new("counterexample").str("outcome", outcome);
            if let Some(c) = &report.candidate {
                rec = rec
                    .vec("x0", c.x0.as_slice())
                    .vec("v0", c.v0.as_slice())
                    .f64("be_ricci", c.be_ricci);
            }
            records.push(rec);
            exit = match report.outcome {
                SearchOutcome::Found => EXIT_OK,
                SearchOutcome::NoCandidate => EXIT_NO_CANDIDATE,
                SearchOutcome::Exhausted => EXIT_INCONCLUSIVE,
            };
            summary.push(match report.outcome {
                SearchOutcome::Found => format!(
                    "certified violation at lambda={}",
                    report.lambdas.last().unwrap()
                ),
                SearchOutcome::NoCandidate => format!(
                    "no candidate: scan minimum {} above threshold {}",
                    fmt_f64(report.scan_minimum),
                    fmt_f64(k_bound - 2.0 * epsilon_floor)
                ),
                SearchOutcome::Exhausted => "scale grid exhausted without certification".into(),
            });
        }
        Command::LwDistance => {
            let mu: Vec<DVector<f64>> = cfg
                .task
                .mu_atoms
                .as_ref()
                .ok_or(CliError::MissingParam("mu_atoms"))?
                .iter()
                .map(|v| dv(v))
                .collect();
            let nu: Vec<DVector<f64>> = cfg
                .task
                .nu_atoms
                .as_ref()
                .ok_or(CliError::MissingParam("nu_atoms"))?
                .iter()
                .map(|v| dv(v))
                .collect();
            let q = cfg.task.q.unwrap_or(0.5);
            let coupling = tbm::lw_distance_discrete(&cfg.spacetime, &mu, &nu, q, &opts)
                .map_err(|e| run_err!(e))?;
            let mut rec = Record::new("lw_distance")
                .usize("atoms", mu.len())
                .f64("q", q)
                .f64("value", coupling.value.unwrap_or(f64::NEG_INFINITY))
                .bool("finite", coupling.value.is_some());
            if let Some(a) = &coupling.assignment {
                let joined = a
                    .iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                rec = rec.str("assignment", joined);
            }
            records.push(rec);
            summary.push(match coupling.value {
                Some(v) => format!("coupling value {}", fmt_f64(v)),
                None => "coupling value -inf (no feasible timelike coupling)".into(),
            });
        }
    }
    Ok(RunOutput {
        records,
        summary,
        exit,
    })
}

fn tbm_params(cfg: &RunConfig) -> Result<TbmParams, CliError> {
    let delta = cfg.task.region_delta.or(cfg.task.delta).unwrap_or(0.1);
    let voxel = if cfg.numerics.voxel_side > 0.0 {
        cfg.numerics.voxel_side
    } else {
        delta / 64.0
    };
    Ok(TbmParams {
        pair_samples: cfg.numerics.pair_samples,
        theta_samples: cfg.numerics.theta_samples,
        voxel_side: voxel,
        tolerance: tbm::VERDICT_TOLERANCE,
        q: cfg.task.q.unwrap_or(0.5),
    })
}

fn search_params(cfg: &RunConfig) -> Result<tbm::SearchParams, CliError> {
    let mut tbm_p = tbm_params(cfg)?;
    if cfg.numerics.voxel_side == 0.0 {
        tbm_p.voxel_side = 0.0; // derive delta/64 per lambda
    }
    Ok(tbm::SearchParams {
        x_box: cfg
            .task
            .search_box
            .clone()
            .map(|b| b.into_iter().map(|[a, c]| (a, c)).collect()),
        scan_samples: cfg.task.scan_samples.unwrap_or(256),
        v_aperture: cfg.task.v_aperture.unwrap_or(0.0),
        v_samples: cfg.task.v_samples.unwrap_or(8),
        lambda_max: cfg.task.lambda_max.unwrap_or(0.2),
        lambda_steps: cfg.task.lambda_steps.unwrap_or(5),
        t: cfg.task.t.unwrap_or(0.5),
        tbm: tbm_p,
    })
}

fn build_regions(
    cfg: &RunConfig,
    opts: &crate::flow::FlowOptions,
) -> Result<(RegionSpec, RegionSpec, Option<Arc<dyn regions::PointMap>>), CliError> {
    let x0 = task_vec(cfg, &cfg.task.x0, "x0")?;
    let v0 = task_vec(cfg, &cfg.task.v0, "v0")?;
    let delta = cfg
        .task
        .region_delta
        .or(cfg.task.delta)
        .ok_or(CliError::MissingParam("region_delta"))?;
    let region_a =
        regions::eigen_cube(&cfg.spacetime, &x0, &v0, delta, opts).map_err(|e| run_err!(e))?;
    let kind = cfg.task.region_b.as_deref().unwrap_or("transport");
    match kind {
        "translate" => {
            let z = cfg
                .task
                .translate
                .as_ref()
                .ok_or(CliError::MissingParam("translate"))?;
            let map: Arc<dyn regions::PointMap> = Arc::new(regions::Translation(dv(z)));
            let region_b = regions::map_region(&region_a, map.clone());
            Ok((region_a, region_b, Some(map)))
        }
        "transport" => {
            let lambda = cfg.task.lambda.ok_or(CliError::MissingParam("lambda"))?;
            let field = tbm::build_transport_field(&cfg.spacetime, &x0, &v0, opts)
                .map_err(|e| run_err!(e))?;
            let map: Arc<dyn regions::PointMap> = Arc::new(tbm::TransportMap {
                field: Arc::new(field),
                lambda,
            });
            let region_b = regions::map_region(&region_a, map.clone());
            Ok((region_a, region_b, Some(map)))
        }
        other => Err(run_err!(format!(
            "task.region_b must be `translate` or `transport`, got `{other}`"
        ))),
    }
}

fn tbm_record(kind: &'static str, r: &tbm::TbmCheckResult, lambda: Option<f64>) -> Record {
    let mut rec = Record::new(kind);
    if let Some(l) = lambda {
        rec = rec.f64("lambda", l);
    }
    rec.f64("t", r.t)
        .f64("K", r.k_bound)
        .f64("N", r.n_param)
        .f64("theta", r.theta.value)
        .str("tau_1mt", ext_to_string(r.tau_1mt))
        .str("tau_t", ext_to_string(r.tau_t))
        .f64("lhs", r.lhs)
        .f64("lhs_gap", r.lhs_gap)
        .f64("rhs", r.rhs)
        .f64("rhs_gap", r.rhs_gap)
        .str("verdict", r.verdict.as_str())
        .usize("pairs", r.dualizability.sampled_pairs)
        .f64("min_ell_plus", r.dualizability.min_ell_plus)
        .bool("dualizability_sampled_only", r.dualizability.sampled_only)
        .bool("dualizable_evidence", r.dualizability.all_timelike)
}

fn dump_interpolant_voxels(
    cfg: &RunConfig,
    region_a: &RegionSpec,
    region_b: &RegionSpec,
    t_list: &[f64],
    params: &TbmParams,
    path: &str,
) -> Result<(), CliError> {
    let opts = cfg.flow_options();
    let t = t_list.first().copied().unwrap_or(0.5);
    let interp_params = regions::InterpolantParams {
        t,
        pair_samples: params.pair_samples,
        voxel_side: params.voxel_side,
        extra_pairs: vec![],
    };
    let interp =
        regions::interpolant_region(&cfg.spacetime, region_a, region_b, &interp_params, &opts)
            .map_err(|e| run_err!(e))?;
    let mut out = std::fs::File::create(path)?;
    if let regions::RegionKind::Voxels(levels) = &interp.kind {
        for center in levels.fine.occupied_centers() {
            let line = center
                .iter()
                .map(|c| fmt_f64(*c))
                .collect::<Vec<_>>()
                .join("\t");
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// Full CLI entry: parse config, run, write records, print summary.
pub fn execute(
    config_path: &Path,
    out_path: Option<&Path>,
    seed_override: Option<u64>,
    command: Command,
    verbose: bool,
) -> i32 {
    let mut cfg = match crate::config::load_config(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("type=error stage=config message={e}");
            return EXIT_ERROR;
        }
    };
    if let Some(seed) = seed_override {
        cfg.numerics.seed = seed;
    }
    match run_command(&cfg, command) {
        Ok(output) => {
            for line in &output.summary {
                println!("{line}");
            }
            match out_path {
                Some(path) => {
                    let mut f = match std::fs::File::create(path) {
                        Ok(f) => f,
                        Err(e) => {
                            eprintln!("type=error stage=output message={e}");
                            return EXIT_ERROR;
                        }
                    };
                    for rec in &output.records {
                        if writeln!(f, "{rec}").is_err() {
                            return EXIT_ERROR;
                        }
                    }
                    if verbose {
                        println!("{} records written", output.records.len());
                    }
                }
                None => {
                    for rec in &output.records {
                        println!("{rec}");
                    }
                }
            }
            output.exit
        }
        Err(e) => {
            eprintln!("type=error command={} message={e}", command.name());
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn curvature_minkowski_all_zero() {
        let cfg = parse_config(
            r#"
            [spacetime]
            catalog = "minkowski2"
            [task]
            x0 = [0.0, 0.0]
            "#,
        )
        .unwrap();
        let out = run_command(&cfg, Command::Curvature).unwrap();
        assert_eq!(out.exit, EXIT_OK);
        let rec = out
            .records
            .iter()
            .find(|r| r.kind() == "curvature")
            .unwrap()
            .to_string();
        // all Ricci entries are zero
        assert!(rec.contains("ricci="), "{rec}");
        let ric_field = rec
            .split_whitespace()
            .find(|f| f.starts_with("ricci="))
            .unwrap();
        for part in ric_field.trim_start_matches("ricci=").split(',') {
            let v: f64 = part.parse_via_sci();
            assert!(v.abs() < 1e-8);
        }
    }

    trait ParseSci {
        fn parse_via_sci(&self) -> f64;
    }
    impl ParseSci for &str {
        fn parse_via_sci(&self) -> f64 {
            self.parse::<f64>().unwrap()
        }
    }

    #[test]
    fn distortion_table_flat_tau_equals_t() {
        let cfg = parse_config(
            r#"
            [spacetime]
            catalog = "minkowski2"
            N = 3.0
            [task]
            K = 0.0
            t_grid = 5
            theta_grid = 3
            "#,
        )
        .unwrap();
        let out = run_command(&cfg, Command::DistortionTable).unwrap();
        for rec in out.records.iter().filter(|r| r.kind() == "distortion_row") {
            let line = rec.to_string();
            let get = |key: &str| -> f64 {
                line.split_whitespace()
                    .find(|f| f.starts_with(&format!("{key}=")))
                    .unwrap()
                    .split('=')
                    .nth(1)
                    .unwrap()
                    .parse()
                    .unwrap()
            };
            assert!((get("tau") - get("t")).abs() < 1e-12, "{line}");
        }
    }

    #[test]
    fn determinism_byte_identical_records() {
        let text = r#"
            [spacetime]
            catalog = "weighted_minkowski2"
            N = 3.0
            [numerics]
            seed = 7
            pair_samples = 2048
            theta_samples = 128
            [task]
            x0 = [0.0, 0.0]
            v0 = [1.0, 0.0]
            K = 0.0
            region_delta = 0.01
            lambda = 0.1
            region_b = "transport"
            t_list = [0.5]
        "#;
        let render = || {
            let cfg = parse_config(text).unwrap();
            let out = run_command(&cfg, Command::CheckTbm).unwrap();
            out.records
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join("\n")
        };
        let a = render();
        let b = render();
        assert_eq!(a, b);
    }

    #[test]
    fn separation_record() {
        let cfg = parse_config(
            r#"
            [spacetime]
            catalog = "minkowski2"
            [task]
            x0 = [0.0, 0.0]
            y0 = [2.0, 1.0]
            "#,
        )
        .unwrap();
        let out = run_command(&cfg, Command::Separation).unwrap();
        let rec = out.records[1].to_string();
        assert!(rec.contains("class=timelike"), "{rec}");
    }

    #[test]
    fn missing_param_is_error() {
        let cfg = parse_config(
            r#"
            [spacetime]
            catalog = "minkowski2"
            "#,
        )
        .unwrap();
        assert!(matches!(
            run_command(&cfg, Command::Separation),
            Err(CliError::MissingParam("y0"))
        ));
    }
}
