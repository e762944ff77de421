//! Geodesic initial- and boundary-value solvers, the interpolation map,
//! and the time separation function.
//!
//! The boundary problem (the logarithm map) is solved by single shooting:
//! Newton iteration on `v -> exp_x(v) - y`, with the exact Jacobian of
//! the shot obtained from a matrix Jacobi field propagated jointly with
//! the geodesic (no finite differences of the flow). The time separation
//! is the local one of the unique-geodesic regime: the norm of the
//! logarithm when it is future-directed causal, and `-infinity`
//! otherwise, carried as an explicit tagged variant.

use crate::flow::{self, FlowError, FlowOptions, FlowSpec};
use crate::geometry::{
    CausalClass, GeometryError, TangentPoint, TimeOrientation, WeightedSpacetime,
};
use crate::regions::RegionSpec;
use crate::sampling;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

/// Position tolerance for the shooting solver.
pub const SHOOTING_TOL: f64 = 1e-10;
const SHOOTING_MAX_ITER: usize = 50;
/// Default quasi-random interior pair count for the extremal statistic.
pub const DEFAULT_THETA_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Error)]
pub enum GeodesicError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("shooting did not converge after {iterations} iterations (residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("multiple distinct connecting geodesics found (|v1 - v2| = {separation})")]
    AmbiguousGeodesic { separation: f64 },
    #[error("singular shot Jacobian (conjugate or near-conjugate endpoints)")]
    SingularShot,
    #[error("region has no points to sample")]
    EmptyRegion,
}

/// A discretized affinely parametrized geodesic on `[0, t_end]`.
#[derive(Debug, Clone)]
pub struct GeodesicSolution {
    pub times: Vec<f64>,
    pub positions: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
    /// Local interpolation order between samples (cubic Hermite).
    pub interpolation_order: usize,
    /// Affine parametrization flag; always true for solver output.
    pub affine: bool,
}

impl GeodesicSolution {
    fn from_samples(samples: flow::FlowSamples) -> Self {
        GeodesicSolution {
            times: samples.times,
            positions: samples.positions,
            velocities: samples.velocities,
            interpolation_order: 3,
            affine: true,
        }
    }

    pub fn end_position(&self) -> &DVector<f64> {
        self.positions.last().expect("nonempty")
    }

    /// Cubic Hermite interpolation between stored samples.
    pub fn position_at(&self, t: f64) -> DVector<f64> {
        let k = match self.times.iter().position(|tk| *tk >= t) {
            Some(0) => return self.positions[0].clone(),
            Some(k) => k,
            None => return self.end_position().clone(),
        };
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let h = t1 - t0;
        if h == 0.0 {
            return self.positions[k].clone();
        }
        let s = (t - t0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * &self.positions[k - 1]
            + h10 * h * &self.velocities[k - 1]
            + h01 * &self.positions[k]
            + h11 * h * &self.velocities[k]
    }
}

/// Time separation value: positive real for timelike-related pairs,
/// an explicit minus-infinity marker otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeparationValue {
    /// Future-directed timelike: the proper time, strictly positive.
    Timelike(f64),
    /// Future-directed lightlike: separation zero.
    Lightlike,
    /// Spacelike or past-directed: no causal relation, `-infinity`.
    NotCausal,
}

impl SeparationValue {
    /// Nonnegative part: `max(value, 0)`.
    pub fn ell_plus(&self) -> f64 {
        match self {
            SeparationValue::Timelike(v) => *v,
            _ => 0.0,
        }
    }

    /// Raw value with `-infinity` for non-causal pairs.
    pub fn value(&self) -> f64 {
        match self {
            SeparationValue::Timelike(v) => *v,
            SeparationValue::Lightlike => 0.0,
            SeparationValue::NotCausal => f64::NEG_INFINITY,
        }
    }

    pub fn is_timelike(&self) -> bool {
        matches!(self, SeparationValue::Timelike(_))
    }
}

/// Endpoint of the geodesic from `(x, v)` at parameter `t`.
pub fn exp_map(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    v: &DVector<f64>,
    t: f64,
    opts: &FlowOptions,
) -> Result<DVector<f64>, GeodesicError> {
    if t == 0.0 {
        return Ok(x.clone());
    }
    let out = flow::integrate(st, x, v, &FlowSpec::default(), t, &[], opts)?;
    Ok(out.end_position().clone())
}

/// Geodesic from `(x, v)` sampled on a uniform grid of `samples + 1`
/// points over `[0, t_end]`.
pub fn geodesic(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    v: &DVector<f64>,
    t_end: f64,
    samples: usize,
    opts: &FlowOptions,
) -> Result<GeodesicSolution, GeodesicError> {
    let grid: Vec<f64> = (0..=samples.max(1))
        .map(|i| t_end * i as f64 / samples.max(1) as f64)
        .collect();
    let out = flow::integrate(st, x, v, &FlowSpec::default(), t_end, &grid, opts)?;
    Ok(GeodesicSolution::from_samples(out))
}

/// Result of the boundary solve: the connecting velocity and the shot
/// Jacobian `d exp_x(v) / dv` at the solution (chart coordinates).
#[derive(Debug, Clone)]
pub struct LogResult {
    pub tangent: TangentPoint,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
}

fn shoot_once(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    v: &DVector<f64>,
    frame0: &DMatrix<f64>,
    frame0_inv: &DMatrix<f64>,
    opts: &FlowOptions,
) -> Result<(DVector<f64>, DMatrix<f64>), GeodesicError> {
    let n = st.dim();
    let spec = FlowSpec {
        frame0: Some(frame0.clone()),
        jacobi: vec![(DMatrix::zeros(n, n), frame0_inv.clone())],
    };
    let out = flow::integrate(st, x, v, &spec, 1.0, &[1.0], opts)?;
    let end = out.end_position().clone();
    let frame1 = out.frames.last().expect("frame recorded");
    let (m1, _) = &out.matrices[0][out.times.len() - 1];
    // columns: coordinate derivative of the endpoint w.r.t. v
    let jac = frame1 * m1;
    Ok((end, jac))
}

fn newton_solve(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    y: &DVector<f64>,
    v_init: &DVector<f64>,
    opts: &FlowOptions,
) -> Result<LogResult, GeodesicError> {
    let scale = 1.0 + y.amax().max(x.amax());
    let tol = SHOOTING_TOL * scale;
    let frame0 = st.orthonormal_frame(x.as_slice(), None)?;
    let g0 = st.metric_at(x.as_slice())?;
    let frame0_inv = flow::frame_inverse(&frame0, &g0);
    let mut v = v_init.clone();
    let mut last_residual = f64::INFINITY;
    for iter in 0..SHOOTING_MAX_ITER {
        let (end, jac) = shoot_once(st, x, &v, &frame0, &frame0_inv, opts)?;
        let r = &end - y;
        let residual = r.amax();
        if residual <= tol {
            return Ok(LogResult {
                tangent: TangentPoint::new(x.clone(), v),
                jacobian: jac,
                iterations: iter + 1,
            });
        }
        let lu = jac.clone().lu();
        let delta = lu.solve(&r).ok_or(GeodesicError::SingularShot)?;
        // damp wild steps far from the solution
        let step = if residual > 10.0 * last_residual.min(1.0) && iter > 0 {
            0.5 * delta
        } else {
            delta
        };
        v -= step;
        last_residual = residual;
    }
    Err(GeodesicError::NoConvergence {
        iterations: SHOOTING_MAX_ITER,
        residual: last_residual,
    })
}

/// Logarithm map: the velocity `v` with `exp_x(v) = y`, solved by Newton
/// shooting initialized at the coordinate difference.
pub fn log_map(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    y: &DVector<f64>,
    opts: &FlowOptions,
) -> Result<LogResult, GeodesicError> {
    let v0 = y - x;
    newton_solve(st, x, y, &v0, opts)
}

/// Logarithm map with a uniqueness probe: re-solves from perturbed
/// starting velocities and reports `AmbiguousGeodesic` when a distinct
/// solution is found.
pub fn log_map_verified(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    y: &DVector<f64>,
    opts: &FlowOptions,
) -> Result<LogResult, GeodesicError> {
    let base = log_map(st, x, y, opts)?;
    let scale = 1.0 + base.tangent.v.amax();
    for factor in [0.7, 1.3] {
        let mut v0 = (y - x) * factor;
        v0[0] += 0.05 * scale;
        if let Ok(alt) = newton_solve(st, x, y, &v0, opts) {
            let sep = (&alt.tangent.v - &base.tangent.v).amax();
            if sep > 1e-6 * scale {
                return Err(GeodesicError::AmbiguousGeodesic { separation: sep });
            }
        }
    }
    Ok(base)
}

/// Interpolation map: the point at parameter `t` of the unique geodesic
/// from `x` to `y`.
pub fn interpolate_f(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    y: &DVector<f64>,
    t: f64,
    opts: &FlowOptions,
) -> Result<DVector<f64>, GeodesicError> {
    let log = log_map(st, x, y, opts)?;
    if t == 0.0 {
        return Ok(x.clone());
    }
    if t == 1.0 {
        return Ok(y.clone());
    }
    exp_map(st, x, &log.tangent.v, t, opts)
}

/// Time separation of the ordered pair `(x, y)` in the unique-geodesic
/// regime, together with the connecting velocity.
pub fn time_separation(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    y: &DVector<f64>,
    opts: &FlowOptions,
) -> Result<SeparationValue, GeodesicError> {
    let log = log_map(st, x, y, opts)?;
    separation_of_velocity(st, &log.tangent)
}

/// Classifies a connecting velocity into a separation value.
pub fn separation_of_velocity(
    st: &WeightedSpacetime,
    tangent: &TangentPoint,
) -> Result<SeparationValue, GeodesicError> {
    let (class, orientation) = st.causal_type(tangent)?;
    Ok(match (class, orientation) {
        (CausalClass::Timelike, TimeOrientation::Future) => {
            let q = st.inner(tangent.x.as_slice(), &tangent.v, &tangent.v)?;
            SeparationValue::Timelike(q.sqrt())
        }
        (CausalClass::Lightlike, TimeOrientation::Future) => SeparationValue::Lightlike,
        _ => SeparationValue::NotCausal,
    })
}

/// Extremal statistic of `max(separation, 0)` over sampled pairs of two
/// regions: the infimum when `k_lower_bound >= 0`, the supremum when it
/// is negative. Sampling is all corner pairs plus `interior_pairs`
/// quasi-random interior pairs.
#[derive(Debug, Clone)]
pub struct ThetaStatistic {
    pub value: f64,
    pub pair_count: usize,
    /// Extremal value over corner pairs alone (sampling-resolution probe).
    pub corner_value: f64,
    /// Smallest `max(separation, 0)` seen over all sampled pairs.
    pub min_ell_plus: f64,
    /// Number of sampled pairs that were not future-directed timelike.
    pub non_timelike_pairs: usize,
}

pub fn theta_statistic(
    st: &WeightedSpacetime,
    region_a: &RegionSpec,
    region_b: &RegionSpec,
    k_lower_bound: f64,
    interior_pairs: usize,
    opts: &FlowOptions,
) -> Result<ThetaStatistic, GeodesicError> {
    let corners_a = region_a.corner_points(st, opts)?;
    let corners_b = region_b.corner_points(st, opts)?;
    if corners_a.is_empty() || corners_b.is_empty() {
        return Err(GeodesicError::EmptyRegion);
    }
    let mut pairs: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    for a in &corners_a {
        for b in &corners_b {
            pairs.push((a.clone(), b.clone()));
        }
    }
    let corner_pairs = pairs.len();
    for i in 0..interior_pairs {
        let a = region_a.interior_point(st, 2 * i as u64, opts)?;
        let b = region_b.interior_point(st, 2 * i as u64 + 1, opts)?;
        pairs.push((a, b));
    }

    let values: Vec<(f64, bool)> = pairs
        .par_iter()
        .map(|(a, b)| {
            time_separation(st, a, b, opts)
                .map(|s| (s.ell_plus(), s.is_timelike()))
                .unwrap_or((0.0, false))
        })
        .collect();

    let take_inf = k_lower_bound >= 0.0;
    let corner_value = fold_extremum(values.iter().take(corner_pairs).map(|(v, _)| *v), take_inf);
    let value = fold_extremum(values.iter().map(|(v, _)| *v), take_inf);
    let min_ell_plus = values.iter().map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
    let non_timelike = values.iter().filter(|(_, t)| !t).count();
    Ok(ThetaStatistic {
        value,
        pair_count: pairs.len(),
        corner_value,
        min_ell_plus,
        non_timelike_pairs: non_timelike,
    })
}

fn fold_extremum(values: impl Iterator<Item = f64>, take_inf: bool) -> f64 {
    if take_inf {
        values.fold(f64::INFINITY, f64::min)
    } else {
        values.fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Quasi-random unit-cube point helper shared by region samplers.
pub(crate) fn unit_sample(index: u64, dim: usize) -> Vec<f64> {
    sampling::halton(index, dim)
}
