//! The timelike Brunn-Minkowski pipeline.
//!
//! From a point `(x0, v0)` where the Bakry-Emery-Ricci quadratic form
//! dips below a target bound, this module constructs the transport
//! potential and its gradient flow, checks the volume-distortion
//! differential inequality, integrates it into the volume inequality for
//! small cube families, compares optimal against geodesic interpolation,
//! evaluates TBM(K, N) verdicts with certified margins, and runs the
//! counterexample search over a geometric scale grid. A discrete
//! q-Lorentz-Wasserstein solver provides dualizability evidence for
//! atom measures.
//!
//! Verdict policy: a `Violated` verdict is only issued when the inner
//! interpolant estimate plus its refinement gap still falls below the
//! right side minus the endpoint refinement gaps, the extremal-statistic
//! resolution effect, and a fixed tolerance. Sampling can support but
//! never certify `Holds`; that direction is reported with the same
//! margin arithmetic.

use crate::distortion::{self, ExtReal};
use crate::flow::FlowOptions;
use crate::geodesics::{self, GeodesicError, SeparationValue, ThetaStatistic};
use crate::geometry::{CausalClass, GeometryError, TangentPoint, WeightedSpacetime};
use crate::jacobi::{self, DistortionCurve, JacobiError, VectorField};
use crate::regions::{self, PointMap, RegionError, RegionSpec, VolumeEstimate};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

/// Fixed absolute tolerance on the `1/N`-power scale for verdicts.
pub const VERDICT_TOLERANCE: f64 = 1e-9;
/// Transport-field invariant tolerances.
pub const FIELD_VALUE_TOL: f64 = 1e-8;
pub const FIELD_DERIV_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Error)]
pub enum TbmError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Geodesic(#[from] Box<GeodesicError>),
    #[error(transparent)]
    Jacobi(#[from] Box<JacobiError>),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Distortion(#[from] distortion::DistortionError),
    #[error("transport field invariant failed: |V(x0) - v0| = {value_dev}, |DV(x0) - alpha I| = {deriv_dev}")]
    InvariantFailure { value_dev: f64, deriv_dev: f64 },
    #[error("generator vector is not future-directed timelike")]
    NotTimelike,
    #[error("coupling supports at most {max} atoms per side, got {got}")]
    TooManyAtoms { got: usize, max: usize },
    #[error("coupling requires equal atom counts, got {mu} and {nu}")]
    UnequalAtomCounts { mu: usize, nu: usize },
}

impl From<GeodesicError> for TbmError {
    fn from(e: GeodesicError) -> Self {
        TbmError::Geodesic(Box::new(e))
    }
}

impl From<JacobiError> for TbmError {
    fn from(e: JacobiError) -> Self {
        TbmError::Jacobi(Box::new(e))
    }
}

// ---------------------------------------------------------------------
// Transport potential and flow

/// Gradient field of the transport potential
/// `phi(y) = <v0, log(y)>_0 + (alpha/2) <log(y), log(y)>_0`
/// in normal coordinates about `x0`, where `alpha = -Dpsi(v0)/(N - n)`
/// (zero for trivial weight). By construction `V(x0) = v0` and the
/// covariant derivative at `x0` is `alpha * Id`.
#[derive(Debug, Clone)]
pub struct TransportField {
    pub x0: DVector<f64>,
    pub v0: DVector<f64>,
    pub alpha: f64,
    g0: DMatrix<f64>,
}

impl TransportField {
    /// Measured invariant deviations `(|V(x0)-v0|, |DV_fd(x0)-alpha I|)`.
    pub fn invariant_deviations(
        &self,
        st: &WeightedSpacetime,
        opts: &FlowOptions,
    ) -> Result<(f64, f64), TbmError> {
        let v_at = self.value(st, &self.x0, opts)?;
        let value_dev = (&v_at - &self.v0).amax();
        let jac = self.coordinate_jacobian(st, &self.x0, opts)?;
        let gamma = st.christoffels(self.x0.as_slice(), opts.fd_step)?;
        let n = self.x0.len();
        let mut cov = jac;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    cov[(i, j)] += gamma[i][(j, k)] * self.v0[k];
                }
            }
        }
        let deriv_dev = (&cov - self.alpha * DMatrix::<f64>::identity(n, n)).amax();
        Ok((value_dev, deriv_dev))
    }
}

impl VectorField for TransportField {
    fn value(
        &self,
        st: &WeightedSpacetime,
        x: &DVector<f64>,
        opts: &FlowOptions,
    ) -> Result<DVector<f64>, JacobiError> {
        let log = geodesics::log_map(st, &self.x0, x, opts).map_err(Box::new)?;
        let l = &log.tangent.v;
        // d(log)/dy is the inverse of the endpoint Jacobian of exp, so
        // the chain rule needs a transposed solve
        let jac_t_lu = log.jacobian.transpose().lu();
        let covector = &self.g0 * (&self.v0 + self.alpha * l);
        let dphi = jac_t_lu
            .solve(&covector)
            .ok_or(JacobiError::ConjugatePoints)?;
        let g = st.metric_at(x.as_slice())?;
        let ginv = g
            .try_inverse()
            .ok_or_else(|| GeometryError::SingularMetric {
                point: x.as_slice().to_vec(),
            })?;
        Ok(ginv * dphi)
    }

    fn covariant_derivative(
        &self,
        st: &WeightedSpacetime,
        x: &DVector<f64>,
        opts: &FlowOptions,
    ) -> Result<DMatrix<f64>, JacobiError> {
        // analytic at the anchor; finite differences elsewhere
        if (x - &self.x0).amax() < 1e-13 {
            let n = x.len();
            return Ok(self.alpha * DMatrix::identity(n, n));
        }
        let n = x.len();
        let jac = self.coordinate_jacobian(st, x, opts)?;
        let v = self.value(st, x, opts)?;
        let gamma = st.christoffels(x.as_slice(), opts.fd_step)?;
        let mut cov = jac;
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += gamma[i][(j, k)] * v[k];
                }
                cov[(i, j)] += s;
            }
        }
        Ok(cov)
    }
}

/// Builds the transport field at a unit timelike `(x0, v0)` and verifies
/// its defining conditions numerically.
pub fn build_transport_field(
    st: &WeightedSpacetime,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    opts: &FlowOptions,
) -> Result<TransportField, TbmError> {
    let tp = TangentPoint::new(x0.clone(), v0.clone());
    let (class, orientation) = st.causal_type(&tp)?;
    if class != CausalClass::Timelike || orientation != crate::geometry::TimeOrientation::Future {
        return Err(TbmError::NotTimelike);
    }
    let alpha = if st.psi_is_zero() {
        0.0
    } else {
        let grad = st.psi_gradient(x0.as_slice(), opts.fd_step)?;
        -grad.dot(v0) / (st.n_param() - st.dim() as f64)
    };
    let g0 = st.metric_at(x0.as_slice())?;
    let field = TransportField {
        x0: x0.clone(),
        v0: v0.clone(),
        alpha,
        g0,
    };
    let (value_dev, deriv_dev) = field.invariant_deviations(st, opts)?;
    if value_dev > FIELD_VALUE_TOL || deriv_dev > FIELD_DERIV_TOL {
        return Err(TbmError::InvariantFailure {
            value_dev,
            deriv_dev,
        });
    }
    Ok(field)
}

/// Transport map `x -> exp_x(lambda V(x))` as a region generator.
pub struct TransportMap {
    pub field: Arc<TransportField>,
    pub lambda: f64,
}

impl PointMap for TransportMap {
    fn apply(
        &self,
        st: &WeightedSpacetime,
        x: &DVector<f64>,
        opts: &FlowOptions,
    ) -> Result<DVector<f64>, RegionError> {
        let v = self
            .field
            .value(st, x, opts)
            .map_err(|e| RegionError::Eigen(e.to_string()))?;
        geodesics::exp_map(st, x, &v, self.lambda, opts).map_err(RegionError::from)
    }

    fn describe(&self) -> String {
        format!("transport(lambda={})", self.lambda)
    }
}

// ---------------------------------------------------------------------
// Differential inequality of the volume distortion

/// Report of the distortion differential-inequality check.
#[derive(Debug, Clone)]
pub struct DistortionOdeReport {
    pub lambda: f64,
    pub k_bound: f64,
    pub epsilon: f64,
    /// Worst margin of `D'' + ((K - eps)/N) lambda^2 D >= 0` over the grid.
    pub residual_margin: f64,
    pub holds: bool,
    /// Sup over the grid of the measured error term.
    pub sup_error_term: f64,
    /// Error term evaluated at `t = 0` (an algebraic zero).
    pub error_term_at_zero: f64,
    /// Max residual of the exact second-derivative identity against the
    /// curvature + error-term decomposition.
    pub identity_residual: f64,
    pub curve: DistortionCurve,
    pub error_term: Vec<f64>,
}

/// Error term of the distortion identity from Riccati data:
/// with trivial weight `trace(L)^2/N - trace(L^2)`, otherwise
/// `(trace(L) - Dpsi(w))^2/N - trace(L^2) - Dpsi(w)^2/(N - n)`
/// where `w` is the curve velocity.
fn error_term_at(
    st: &WeightedSpacetime,
    l: &DMatrix<f64>,
    position: &DVector<f64>,
    velocity: &DVector<f64>,
    opts: &FlowOptions,
) -> Result<f64, TbmError> {
    let n_param = st.n_param();
    let tr = l.trace();
    let tr_sq = (l * l).trace();
    if st.psi_is_zero() {
        return Ok(tr * tr / n_param - tr_sq);
    }
    let n = st.dim() as f64;
    let grad = st.psi_gradient(position.as_slice(), opts.fd_step)?;
    let dpsi_w = grad.dot(velocity);
    Ok((tr - dpsi_w) * (tr - dpsi_w) / n_param - tr_sq - dpsi_w * dpsi_w / (n_param - n))
}

pub fn check_distortion_ode(
    st: &WeightedSpacetime,
    field: &TransportField,
    lambda: f64,
    k_bound: f64,
    epsilon: f64,
    t_samples: usize,
    opts: &FlowOptions,
) -> Result<DistortionOdeReport, TbmError> {
    let curve = jacobi::volume_distortion(st, &field.x0, field, lambda, t_samples, opts)?;
    let n_param = st.n_param();
    let m = curve.t.len();
    let dt = curve.t[1] - curve.t[0];
    let coef = (k_bound - epsilon) / n_param * lambda * lambda;

    let mut residual_margin = f64::INFINITY;
    for i in 1..m - 1 {
        let second = (curve.d[i + 1] - 2.0 * curve.d[i] + curve.d[i - 1]) / (dt * dt);
        residual_margin = residual_margin.min(second + coef * curve.d[i]);
    }
    // second-difference truncation allowance
    let band = (1e-9 + dt * dt * lambda * lambda) * curve.d.iter().fold(1.0f64, |a, b| a.max(*b));
    let holds = residual_margin >= -band;

    let mut error_term = Vec::with_capacity(m);
    for i in 0..m {
        error_term.push(error_term_at(
            st,
            &curve.l[i],
            &curve.positions[i],
            &curve.velocities[i],
            opts,
        )?);
    }
    let sup_error_term = error_term.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let error_term_at_zero = error_term[0];

    // identity check: D''/D against -(lambda^2/N) Ric^{N,m}(w, w) + (lambda^2/N) E
    let h_curv = opts.curvature_step;
    let mut identity_residual = 0.0f64;
    for i in 1..m - 1 {
        let second = (curve.d[i + 1] - 2.0 * curve.d[i] + curve.d[i - 1]) / (dt * dt);
        let lhs = second / curve.d[i];
        let be =
            st.bakry_emery_ricci(curve.positions[i].as_slice(), &curve.velocities[i], h_curv)?;
        let rhs = lambda * lambda / n_param * (error_term[i] - be);
        identity_residual = identity_residual.max((lhs - rhs).abs());
    }

    Ok(DistortionOdeReport {
        lambda,
        k_bound,
        epsilon,
        residual_margin,
        holds,
        sup_error_term,
        error_term_at_zero,
        identity_residual,
        curve,
        error_term,
    })
}

// ---------------------------------------------------------------------
// Integrated inequality on shrinking cubes

#[derive(Debug, Clone)]
pub struct IntegratedInequalityReport {
    pub lambda: f64,
    pub delta: f64,
    pub t: f64,
    pub theta: f64,
    /// `m^{1/N}` of the cube, its transported image at `lambda`, and the
    /// intermediate image at `lambda t`.
    pub root_volume_a: f64,
    pub root_volume_b: f64,
    pub root_volume_mid: f64,
    pub tau_1mt: ExtReal,
    pub tau_t: ExtReal,
    /// `m^{1/N}(mid) - tau-combination`; negative values witness the
    /// strict inequality the scale analysis predicts.
    pub residual: f64,
    pub volumes: [VolumeEstimate; 3],
}

#[allow(clippy::too_many_arguments)]
pub fn check_integrated_inequality(
    st: &WeightedSpacetime,
    field: &Arc<TransportField>,
    lambda: f64,
    delta: f64,
    k_bound: f64,
    t: f64,
    theta_samples: usize,
    voxel_side: f64,
    opts: &FlowOptions,
) -> Result<IntegratedInequalityReport, TbmError> {
    let region_a = regions::eigen_cube(st, &field.x0, &field.v0, delta, opts)?;
    let map_full = Arc::new(TransportMap {
        field: field.clone(),
        lambda,
    });
    let map_mid = Arc::new(TransportMap {
        field: field.clone(),
        lambda: lambda * t,
    });
    let region_b = regions::map_region(&region_a, map_full);
    let region_mid = regions::map_region(&region_a, map_mid);

    let theta = geodesics::theta_statistic(st, &region_a, &region_b, k_bound, theta_samples, opts)?;
    let n_param = st.n_param();
    let va = regions::measure(st, &region_a, voxel_side, opts)?;
    let vb = regions::measure(st, &region_b, voxel_side, opts)?;
    let vm = regions::measure(st, &region_mid, voxel_side, opts)?;
    let root = |v: &VolumeEstimate| v.value.powf(1.0 / n_param);
    let (ra, rb, rm) = (root(&va), root(&vb), root(&vm));
    let tau_1mt = distortion::tau(k_bound, n_param, 1.0 - t, theta.value)?;
    let tau_t = distortion::tau(k_bound, n_param, t, theta.value)?;
    let residual = match (tau_1mt, tau_t) {
        (ExtReal::Finite(c1), ExtReal::Finite(c2)) => rm - (c1 * ra + c2 * rb),
        _ => f64::NEG_INFINITY,
    };
    Ok(IntegratedInequalityReport {
        lambda,
        delta,
        t,
        theta: theta.value,
        root_volume_a: ra,
        root_volume_b: rb,
        root_volume_mid: rm,
        tau_1mt,
        tau_t,
        residual,
        volumes: [va, vb, vm],
    })
}

// ---------------------------------------------------------------------
// Optimal vs geodesic interpolation

#[derive(Debug, Clone)]
pub struct OptimalGeodesicReport {
    pub lambda: f64,
    pub delta: f64,
    pub t: f64,
    /// Largest chart distance from a sampled interpolant point to the
    /// transported image region.
    pub max_distance: f64,
    /// `max_distance / (delta (delta + lambda^3))`, the per-run constant.
    pub containment_ratio: f64,
    pub points_checked: usize,
    pub offenders: usize,
    /// Root-volume gap measured on a shared voxel grid (noisy for thin
    /// shells).
    pub gap_voxel: f64,
    /// Root-volume gap of the distance-ball envelope: perimeter estimate
    /// times the measured containment radius.
    pub gap_envelope: f64,
    pub root_volume_mid: f64,
    pub root_volume_interpolant: f64,
}

/// Projects `p` onto the transported cube image and returns the chart
/// distance. `z` solves `T(z) = p` by quasi-Newton; `z` is then clamped
/// into the cube in its spanning basis and mapped forward.
#[allow(clippy::too_many_arguments)]
fn distance_to_image(
    st: &WeightedSpacetime,
    field: &TransportField,
    map: &TransportMap,
    basis: &DMatrix<f64>,
    basis_lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    delta: f64,
    jac_hint_lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    p: &DVector<f64>,
    opts: &FlowOptions,
) -> Result<f64, TbmError> {
    // quasi-Newton solve for the preimage
    let mut z = field.x0.clone();
    let scale = 1.0 + p.amax();
    let mut converged = false;
    for _ in 0..80 {
        let fz = map.apply(st, &z, opts)?;
        let r = &fz - p;
        if r.amax() < 1e-11 * scale {
            converged = true;
            break;
        }
        let step = jac_hint_lu
            .solve(&r)
            .ok_or(TbmError::Region(RegionError::MapInversion))?;
        z -= step;
    }
    if !converged {
        return Err(TbmError::Region(RegionError::MapInversion));
    }
    // clamp the preimage into the cube in its spanning basis
    let log = geodesics::log_map(st, &field.x0, &z, opts)?;
    let mut a = basis_lu
        .solve(&log.tangent.v)
        .ok_or(TbmError::Region(RegionError::MapInversion))?;
    let half = 0.5 * delta;
    let mut clamped = false;
    for ai in a.iter_mut() {
        if ai.abs() > half {
            *ai = ai.signum() * half;
            clamped = true;
        }
    }
    if !clamped {
        return Ok(0.0);
    }
    let v_cube = basis * a;
    let z_proj = geodesics::exp_map(st, &field.x0, &v_cube, 1.0, opts)?;
    let image = map.apply(st, &z_proj, opts)?;
    Ok((&image - p).norm())
}

#[allow(clippy::too_many_arguments)]
pub fn compare_optimal_geodesic(
    st: &WeightedSpacetime,
    field: &Arc<TransportField>,
    lambda: f64,
    delta: f64,
    t: f64,
    pair_samples: usize,
    voxel_side: f64,
    opts: &FlowOptions,
) -> Result<OptimalGeodesicReport, TbmError> {
    let region_a = regions::eigen_cube(st, &field.x0, &field.v0, delta, opts)?;
    let basis = match &region_a.kind {
        regions::RegionKind::ExpCube { basis, .. } => basis.clone(),
        _ => unreachable!("eigen_cube returns a cube"),
    };
    let map_full = Arc::new(TransportMap {
        field: field.clone(),
        lambda,
    });
    let map_mid = TransportMap {
        field: field.clone(),
        lambda: lambda * t,
    };
    let region_b = regions::map_region(&region_a, map_full);
    let region_mid = regions::map_region(
        &region_a,
        Arc::new(TransportMap {
            field: field.clone(),
            lambda: lambda * t,
        }),
    );

    // diagonal pairs tie the interpolant to the optimal image
    let diag_count = (pair_samples / 4).max(64);
    let diag_pairs: Result<Vec<_>, TbmError> = (0..diag_count)
        .into_par_iter()
        .map(|i| {
            let u = crate::sampling::halton(3_000_000 + i as u64, st.dim());
            let x = region_a.point_from_unit(st, &u, opts)?;
            let y = map_mid
                .field
                .value(st, &x, opts)
                .map_err(TbmError::from)
                .and_then(|v| {
                    geodesics::exp_map(st, &x, &v, lambda, opts).map_err(TbmError::from)
                })?;
            Ok((x, y))
        })
        .collect();
    let params = regions::InterpolantParams {
        t,
        pair_samples,
        voxel_side,
        extra_pairs: diag_pairs?,
    };
    let interp = regions::interpolant_region(st, &region_a, &region_b, &params, opts)?;

    // containment distances for every sampled interpolant point
    let meta = match &interp.kind {
        regions::RegionKind::Voxels(v) => v.meta.clone().expect("interpolant meta"),
        _ => unreachable!(),
    };
    let basis_lu = basis.clone().lu();
    let jac_hint = map_mid.jacobian_hint(st, &field.x0, opts)?;
    let jac_hint_lu = jac_hint.lu();
    let distances: Result<Vec<f64>, TbmError> = meta
        .points
        .par_iter()
        .map(|p| {
            distance_to_image(
                st,
                field,
                &map_mid,
                &basis,
                &basis_lu,
                delta,
                &jac_hint_lu,
                p,
                opts,
            )
        })
        .collect();
    let distances = distances?;
    let max_distance = distances.iter().fold(0.0f64, |a, b| a.max(*b));
    let denom = delta * (delta + lambda * lambda * lambda);
    let containment_ratio = if denom > 0.0 {
        max_distance / denom
    } else {
        0.0
    };

    // volumes: shared grid between the interpolant and the image
    let n_param = st.n_param();
    let vm = regions::measure(st, &region_mid, voxel_side, opts)?;
    let vi = regions::measure(st, &interp, voxel_side, opts)?;
    let rm = vm.value.powf(1.0 / n_param);
    let ri = vi.value.powf(1.0 / n_param);
    let gap_voxel = ri - rm;

    // envelope gap: perimeter estimated from a voxel-resolvable fattening
    let probe = 4.0 * voxel_side;
    let fat = regions::fatten(st, &region_mid, probe, voxel_side, opts)?;
    let vfat = regions::measure(st, &fat, voxel_side, opts)?;
    let perimeter = ((vfat.value - vm.value) / probe).max(0.0);
    let fat_vol = vm.value + perimeter * max_distance;
    let gap_envelope = fat_vol.powf(1.0 / n_param) - rm;

    Ok(OptimalGeodesicReport {
        lambda,
        delta,
        t,
        max_distance,
        containment_ratio,
        points_checked: distances.len(),
        offenders: 0,
        gap_voxel,
        gap_envelope,
        root_volume_mid: rm,
        root_volume_interpolant: ri,
    })
}

/// Re-verifies containment for a fitted constant: counts sampled points
/// whose distance exceeds `C (delta + lambda^3) delta`.
pub fn containment_offenders(report: &OptimalGeodesicReport, fitted_c: f64) -> usize {
    let bound = fitted_c * (report.delta + report.lambda.powi(3)) * report.delta;
    if report.max_distance <= bound {
        0
    } else {
        1
    }
}

// ---------------------------------------------------------------------
// TBM verdicts

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Sampled dualizability evidence: every corner and quasi-random pair
/// must be future-directed timelike. This is evidence, not a proof; the
/// flag records that it was only sampled.
#[derive(Debug, Clone)]
pub struct DualizabilityEvidence {
    pub sampled_pairs: usize,
    pub min_ell_plus: f64,
    pub all_timelike: bool,
    /// Always true: finitely many pairs were checked.
    pub sampled_only: bool,
    pub q: f64,
}

#[derive(Debug, Clone)]
pub struct TbmCheckResult {
    pub t: f64,
    pub k_bound: f64,
    pub n_param: f64,
    pub theta: ThetaStatistic,
    pub tau_1mt: ExtReal,
    pub tau_t: ExtReal,
    /// `m^{1/N}` of the interpolant (inner estimate).
    pub lhs: f64,
    /// Certified allowance above the inner estimate (refinement gap on
    /// the root scale).
    pub lhs_gap: f64,
    /// tau-combination of the endpoint root volumes.
    pub rhs: f64,
    /// Allowance below the right side: endpoint refinement gaps plus the
    /// extremal-statistic resolution propagated through `tau`.
    pub rhs_gap: f64,
    pub verdict: Verdict,
    pub dualizability: DualizabilityEvidence,
    pub volume_a: VolumeEstimate,
    pub volume_b: VolumeEstimate,
    pub volume_interpolant: VolumeEstimate,
    pub tolerance: f64,
}

/// Tuning for a TBM check.
#[derive(Debug, Clone)]
pub struct TbmParams {
    pub pair_samples: usize,
    pub theta_samples: usize,
    pub voxel_side: f64,
    pub tolerance: f64,
    pub q: f64,
}

impl Default for TbmParams {
    fn default() -> Self {
        TbmParams {
            pair_samples: 1 << 18,
            theta_samples: geodesics::DEFAULT_THETA_SAMPLES,
            voxel_side: 0.0, // caller sets; 0 means derive from region
            tolerance: VERDICT_TOLERANCE,
            q: 0.5,
        }
    }
}

/// Evaluates the TBM(K, N) inequality between two regions at each `t`.
///
/// `diagonal_map` optionally supplies the optimal-transport generator of
/// `b` from `a`; its graph pairs are added to the interpolant sampling
/// so the optimal image is always covered.
pub fn check_tbm(
    st: &WeightedSpacetime,
    region_a: &RegionSpec,
    region_b: &RegionSpec,
    k_bound: f64,
    t_list: &[f64],
    params: &TbmParams,
    diagonal_map: Option<Arc<dyn PointMap>>,
    opts: &FlowOptions,
) -> Result<Vec<TbmCheckResult>, TbmError> {
    let n_param = st.n_param();
    let theta =
        geodesics::theta_statistic(st, region_a, region_b, k_bound, params.theta_samples, opts)?;
    let dualizability = DualizabilityEvidence {
        sampled_pairs: theta.pair_count,
        min_ell_plus: theta.min_ell_plus,
        all_timelike: theta.non_timelike_pairs == 0 && theta.min_ell_plus > 0.0,
        sampled_only: true,
        q: params.q,
    };

    let voxel_side = params.voxel_side;
    let va = regions::measure(st, region_a, voxel_side, opts)?;
    let vb = regions::measure(st, region_b, voxel_side, opts)?;
    let root = |v: f64| v.powf(1.0 / n_param);

    // extremal-statistic resolution probe: corner-only vs full sampling
    let theta_res = (theta.value - theta.corner_value).abs() + 1e-9;

    let mut results = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let diag_pairs = match &diagonal_map {
            Some(map) => {
                let count = (params.pair_samples / 4).max(64);
                let pairs: Result<Vec<_>, TbmError> = (0..count)
                    .into_par_iter()
                    .map(|i| {
                        let u = crate::sampling::halton(3_000_000 + i as u64, st.dim());
                        let x = region_a.point_from_unit(st, &u, opts)?;
                        let y = map.apply(st, &x, opts).map_err(TbmError::Region)?;
                        Ok((x, y))
                    })
                    .collect();
                pairs?
            }
            None => Vec::new(),
        };
        let interp_params = regions::InterpolantParams {
            t,
            pair_samples: params.pair_samples,
            voxel_side,
            extra_pairs: diag_pairs,
        };
        // an interpolant with no timelike pairs at all is empty and has
        // measure zero; the verdict is inconclusive through the failed
        // dualizability evidence
        let vi = match regions::interpolant_region(st, region_a, region_b, &interp_params, opts) {
            Ok(interp) => regions::measure(st, &interp, voxel_side, opts)?,
            Err(RegionError::EmptyRegion) => VolumeEstimate {
                value: 0.0,
                voxel_side,
                voxel_count: 0,
                history: vec![],
                monotone: true,
            },
            Err(e) => return Err(e.into()),
        };

        let tau_1mt = distortion::tau(k_bound, n_param, 1.0 - t, theta.value)?;
        let tau_t = distortion::tau(k_bound, n_param, t, theta.value)?;

        let lhs = root(vi.value);
        let lhs_gap = root(vi.value + vi.refinement_gap()) - lhs;

        let (rhs, rhs_gap, verdict) = match (tau_1mt, tau_t) {
            (ExtReal::Finite(c1), ExtReal::Finite(c2)) => {
                let rhs = c1 * root(va.value) + c2 * root(vb.value);
                let endpoint_gap = c1
                    * (root(va.value) - root((va.value - va.refinement_gap()).max(0.0)))
                    + c2 * (root(vb.value) - root((vb.value - vb.refinement_gap()).max(0.0)));
                let dtau1 =
                    distortion::tau_theta_sensitivity(k_bound, n_param, 1.0 - t, theta.value);
                let dtau2 = distortion::tau_theta_sensitivity(k_bound, n_param, t, theta.value);
                let theta_term = (dtau1 * root(va.value) + dtau2 * root(vb.value)) * theta_res;
                let rhs_gap = endpoint_gap + theta_term;
                let verdict = if !dualizability.all_timelike {
                    Verdict::Inconclusive
                } else if lhs + lhs_gap + params.tolerance < rhs - rhs_gap {
                    Verdict::Violated
                } else if lhs > rhs + rhs_gap + params.tolerance {
                    Verdict::Holds
                } else {
                    Verdict::Inconclusive
                };
                (rhs, rhs_gap, verdict)
            }
            _ => {
                // infinite coefficient: the right side dominates any
                // finite left side
                let verdict = if dualizability.all_timelike {
                    Verdict::Violated
                } else {
                    Verdict::Inconclusive
                };
                (f64::INFINITY, 0.0, verdict)
            }
        };

        results.push(TbmCheckResult {
            t,
            k_bound,
            n_param,
            theta: theta.clone(),
            tau_1mt,
            tau_t,
            lhs,
            lhs_gap,
            rhs,
            rhs_gap,
            verdict,
            dualizability: dualizability.clone(),
            volume_a: va.clone(),
            volume_b: vb.clone(),
            volume_interpolant: vi,
            tolerance: params.tolerance,
        });
    }
    Ok(results)
}

// ---------------------------------------------------------------------
// Counterexample search

#[derive(Debug, Clone)]
pub struct SearchParams {
    /// Box for the base-point scan (defaults to a small box at the chart
    /// center).
    pub x_box: Option<Vec<(f64, f64)>>,
    pub scan_samples: usize,
    /// Spatial aperture of the velocity scan around the time axis; with
    /// aperture zero only the normalized frame axis is scanned.
    pub v_aperture: f64,
    pub v_samples: usize,
    pub lambda_max: f64,
    pub lambda_steps: usize,
    pub t: f64,
    pub tbm: TbmParams,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            x_box: None,
            scan_samples: 256,
            v_aperture: 0.0,
            v_samples: 8,
            lambda_max: 0.2,
            lambda_steps: 5,
            t: 0.5,
            tbm: TbmParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub x0: DVector<f64>,
    pub v0: DVector<f64>,
    pub be_ricci: f64,
}

#[derive(Debug, Clone)]
pub struct CounterexampleReport {
    /// Smallest Bakry-Emery-Ricci value seen in the scan.
    pub scan_minimum: f64,
    pub candidate: Option<Candidate>,
    /// One result per lambda tried (empty when no candidate existed).
    pub attempts: Vec<TbmCheckResult>,
    pub lambdas: Vec<f64>,
    pub outcome: SearchOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchOutcome {
    /// A certified violation was produced.
    Found,
    /// No candidate point: the curvature scan stayed above the threshold.
    NoCandidate,
    /// Candidate existed but no scale certified a violation.
    Exhausted,
}

/// Scans for a pointwise Bakry-Emery-Ricci failure below
/// `K - 2 epsilon_floor` and drives the TBM pipeline on the worst
/// candidate over the geometric scale grid `lambda_max * 2^{-j}`,
/// `delta = lambda^3`, until a violation is certified.
pub fn find_counterexample(
    st: &WeightedSpacetime,
    k_bound: f64,
    epsilon_floor: f64,
    search: &SearchParams,
    opts: &FlowOptions,
) -> Result<CounterexampleReport, TbmError> {
    let n = st.dim();
    let x_box: Vec<(f64, f64)> = search.x_box.clone().unwrap_or_else(|| {
        st.chart()
            .iter()
            .map(|(a, b)| {
                let c = 0.5 * (a + b);
                let half = 0.05 * (b - a);
                (c - half, c + half)
            })
            .collect()
    });

    // velocity candidates per point: frame axis plus optional boosts
    let v_candidates = |x: &[f64]| -> Result<Vec<DVector<f64>>, TbmError> {
        let g = st.metric_at(x)?;
        let mut out = Vec::new();
        let normalize = |raw: DVector<f64>| -> Option<DVector<f64>> {
            let q = (raw.transpose() * &g * &raw)[(0, 0)];
            (q > 0.0).then(|| raw / q.sqrt())
        };
        let mut axis = DVector::zeros(n);
        axis[0] = 1.0;
        if let Some(v) = normalize(axis.clone()) {
            out.push(v);
        }
        if search.v_aperture > 0.0 {
            for s in 0..search.v_samples {
                let u = crate::sampling::halton(s as u64, n - 1);
                let mut raw = axis.clone();
                for i in 1..n {
                    raw[i] = (u[i - 1] - 0.5) * 2.0 * search.v_aperture;
                }
                if let Some(v) = normalize(raw) {
                    out.push(v);
                }
            }
        }
        Ok(out)
    };

    let points: Vec<Vec<f64>> = (0..search.scan_samples)
        .map(|i| crate::sampling::halton_in_box(i as u64, &x_box))
        .collect();
    let scanned: Result<Vec<(Vec<f64>, DVector<f64>, f64)>, TbmError> = points
        .par_iter()
        .map(|x| {
            let mut best: Option<(DVector<f64>, f64)> = None;
            for v in v_candidates(x)? {
                let value = st.bakry_emery_ricci(x, &v, opts.curvature_step)?;
                if best.as_ref().map(|(_, b)| value < *b).unwrap_or(true) {
                    best = Some((v, value));
                }
            }
            let (v, value) = best.expect("at least the frame axis candidate");
            Ok((x.clone(), v, value))
        })
        .collect();
    let scanned = scanned?;
    let (x_min, v_min, scan_minimum) = scanned
        .into_iter()
        .min_by(|a, b| a.2.partial_cmp(&b.2).unwrap())
        .expect("scan nonempty");

    if scan_minimum > k_bound - 2.0 * epsilon_floor {
        return Ok(CounterexampleReport {
            scan_minimum,
            candidate: None,
            attempts: Vec::new(),
            lambdas: Vec::new(),
            outcome: SearchOutcome::NoCandidate,
        });
    }

    let x0 = DVector::from_row_slice(&x_min);
    let field = Arc::new(build_transport_field(st, &x0, &v_min, opts)?);
    let candidate = Candidate {
        x0: x0.clone(),
        v0: v_min.clone(),
        be_ricci: scan_minimum,
    };

    let mut attempts = Vec::new();
    let mut lambdas = Vec::new();
    for j in 0..search.lambda_steps {
        let lambda = search.lambda_max * 0.5f64.powi(j as i32);
        let delta = lambda * lambda * lambda;
        lambdas.push(lambda);
        let region_a = regions::eigen_cube(st, &x0, &v_min, delta, opts)?;
        let map = Arc::new(TransportMap {
            field: field.clone(),
            lambda,
        });
        let region_b = regions::map_region(&region_a, map.clone());
        let mut params = search.tbm.clone();
        if params.voxel_side == 0.0 {
            params.voxel_side = delta / 64.0;
        }
        let results = check_tbm(
            st,
            &region_a,
            &region_b,
            k_bound,
            &[search.t],
            &params,
            Some(map as Arc<dyn PointMap>),
            opts,
        )?;
        let result = results.into_iter().next().expect("one t");
        let verdict = result.verdict;
        attempts.push(result);
        if verdict == Verdict::Violated {
            return Ok(CounterexampleReport {
                scan_minimum,
                candidate: Some(candidate),
                attempts,
                lambdas,
                outcome: SearchOutcome::Found,
            });
        }
    }
    Ok(CounterexampleReport {
        scan_minimum,
        candidate: Some(candidate),
        attempts,
        lambdas,
        outcome: SearchOutcome::Exhausted,
    })
}

// ---------------------------------------------------------------------
// Discrete q-Lorentz-Wasserstein coupling

pub const MAX_ATOMS: usize = 10;
const EXHAUSTIVE_ATOMS: usize = 8;

#[derive(Debug, Clone)]
pub struct CouplingProblem {
    pub mu_atoms: Vec<DVector<f64>>,
    pub nu_atoms: Vec<DVector<f64>>,
    pub q: f64,
    /// Pairwise separations `sep[i][j]` between atom `i` and atom `j`.
    pub separations: Vec<Vec<SeparationValue>>,
    /// Optimal assignment as a permutation of the second family, when a
    /// coupling avoiding non-timelike pairs exists.
    pub assignment: Option<Vec<usize>>,
    /// Optimal transport value; `None` encodes minus infinity (every
    /// coupling hits a non-timelike pair).
    pub value: Option<f64>,
}

/// Exact discrete coupling optimum for uniform equal-count atom
/// families: maximizes the mean of `separation^q` over permutations,
/// treating non-timelike pairs as forbidden.
pub fn lw_distance_discrete(
    st: &WeightedSpacetime,
    mu_atoms: &[DVector<f64>],
    nu_atoms: &[DVector<f64>],
    q: f64,
    opts: &FlowOptions,
) -> Result<CouplingProblem, TbmError> {
    let m = mu_atoms.len();
    if m != nu_atoms.len() {
        return Err(TbmError::UnequalAtomCounts {
            mu: m,
            nu: nu_atoms.len(),
        });
    }
    if m == 0 || m > MAX_ATOMS {
        return Err(TbmError::TooManyAtoms {
            got: m,
            max: MAX_ATOMS,
        });
    }
    let separations: Result<Vec<Vec<SeparationValue>>, TbmError> = mu_atoms
        .par_iter()
        .map(|x| {
            nu_atoms
                .iter()
                .map(|y| geodesics::time_separation(st, x, y, opts).map_err(TbmError::from))
                .collect()
        })
        .collect();
    let separations = separations?;
    // weights: separation^q for strictly timelike pairs, forbidden otherwise
    let weights: Vec<Vec<Option<f64>>> = separations
        .iter()
        .map(|row| {
            row.iter()
                .map(|s| match s {
                    SeparationValue::Timelike(v) => Some(v.powf(q)),
                    _ => None,
                })
                .collect()
        })
        .collect();

    let best = if m <= EXHAUSTIVE_ATOMS {
        best_permutation_exhaustive(&weights)
    } else {
        best_assignment_dp(&weights)
    };

    let (assignment, value) = match best {
        Some((perm, total)) => (Some(perm), Some((total / m as f64).powf(1.0 / q))),
        None => (None, None),
    };
    Ok(CouplingProblem {
        mu_atoms: mu_atoms.to_vec(),
        nu_atoms: nu_atoms.to_vec(),
        q,
        separations,
        assignment,
        value,
    })
}

fn best_permutation_exhaustive(weights: &[Vec<Option<f64>>]) -> Option<(Vec<usize>, f64)> {
    let m = weights.len();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    permute(&mut perm, 0, &mut |p| {
        let mut total = 0.0;
        for (i, &j) in p.iter().enumerate() {
            match weights[i][j] {
                Some(w) => total += w,
                None => return,
            }
        }
        if best.as_ref().map(|(_, b)| total > *b).unwrap_or(true) {
            best = Some((p.to_vec(), total));
        }
    });
    best
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Exact assignment over subsets: `dp[mask]` is the best total assigning
/// the first `popcount(mask)` rows to the column set `mask`.
fn best_assignment_dp(weights: &[Vec<Option<f64>>]) -> Option<(Vec<usize>, f64)> {
    let m = weights.len();
    let full = 1usize << m;
    let mut dp = vec![f64::NEG_INFINITY; full];
    let mut parent = vec![usize::MAX; full];
    dp[0] = 0.0;
    for mask in 0..full {
        if dp[mask] == f64::NEG_INFINITY {
            continue;
        }
        let row = mask.count_ones() as usize;
        if row == m {
            continue;
        }
        for col in 0..m {
            if mask & (1 << col) != 0 {
                continue;
            }
            if let Some(w) = weights[row][col] {
                let next = mask | (1 << col);
                if dp[mask] + w > dp[next] {
                    dp[next] = dp[mask] + w;
                    parent[next] = col;
                }
            }
        }
    }
    if dp[full - 1] == f64::NEG_INFINITY {
        return None;
    }
    let mut mask = full - 1;
    let mut perm = vec![0usize; m];
    for row in (0..m).rev() {
        let col = parent[mask];
        perm[row] = col;
        mask &= !(1 << col);
    }
    Some((perm, dp[full - 1]))
}
