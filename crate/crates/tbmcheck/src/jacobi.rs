//! Matrix Jacobi fields, Riccati states, derivatives of the geodesic
//! maps, and the pointwise volume distortion of a transport flow.
//!
//! Everything here works in a parallel-transported g-orthonormal frame
//! along the base geodesic, where the Jacobi system is a plain matrix
//! ODE `M'' + R(t) M = 0` with `R` the frame tidal operator of the
//! velocity. With this sign convention `trace(R_v) = Ric(v, v)` and the
//! expanding warped catalog metric (tidal eigenvalue `-1`) produces
//! `sinh`/`cosh` growth.

use crate::flow::{self, FlowError, FlowOptions, FlowSpec};
use crate::geodesics::{self, GeodesicError};
use crate::geometry::{CausalClass, GeometryError, TangentPoint, WeightedSpacetime};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

const EIGEN_SYMMETRY_TOL: f64 = 1e-5;
const SINGULAR_DET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error)]
pub enum JacobiError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Geodesic(#[from] Box<GeodesicError>),
    #[error("generator vector is not timelike")]
    NotTimelike,
    #[error("tidal operator is not symmetric within tolerance (asymmetry {asymmetry})")]
    EigenFailure { asymmetry: f64 },
    #[error("Jacobi matrix singular at t={t} (conjugate-point indicator)")]
    SingularM { t: f64 },
    #[error("boundary Jacobi solve is singular (conjugate endpoints)")]
    ConjugatePoints,
}

impl From<GeodesicError> for JacobiError {
    fn from(e: GeodesicError) -> Self {
        JacobiError::Geodesic(Box::new(e))
    }
}

/// Tidal operator `w -> Riem(w, v)v` of a timelike generator, in a
/// g-orthonormal frame whose first leg is `v` itself.
#[derive(Debug, Clone)]
pub struct TidalOperator {
    pub point: DVector<f64>,
    pub generator: DVector<f64>,
    /// Frame columns (coordinates); first column parallel to `v`.
    pub frame: DMatrix<f64>,
    /// Frame components of the operator.
    pub matrix: DMatrix<f64>,
    /// Eigenvalues; the first is the exact zero along the generator.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors in chart coordinates, g-orthonormal where the
    /// eigenvalues are simple. The first is the normalized generator.
    pub eigenvectors: Vec<DVector<f64>>,
}

/// Assembles and diagonalizes the tidal operator of `v` at `x`.
pub fn tidal_operator(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    v: &DVector<f64>,
    opts: &FlowOptions,
) -> Result<TidalOperator, JacobiError> {
    let tp = TangentPoint::new(x.clone(), v.clone());
    let (class, _) = st.causal_type(&tp)?;
    if class != CausalClass::Timelike {
        return Err(JacobiError::NotTimelike);
    }
    let n = st.dim();
    let frame = st.orthonormal_frame(x.as_slice(), Some(v))?;
    let r = flow::tidal_frame(
        st,
        x.as_slice(),
        v,
        &frame,
        opts.fd_step,
        opts.curvature_step,
    )?;
    // the generator row/column must vanish; the spatial block must be
    // symmetric (the operator is g-symmetric and e0 is the generator)
    let scale = 1.0 + r.amax();
    let mut asym = 0.0f64;
    for i in 0..n {
        asym = asym.max(r[(i, 0)].abs()).max(r[(0, i)].abs());
    }
    for i in 1..n {
        for j in i + 1..n {
            asym = asym.max((r[(i, j)] - r[(j, i)]).abs());
        }
    }
    if asym > EIGEN_SYMMETRY_TOL * scale {
        return Err(JacobiError::EigenFailure { asymmetry: asym });
    }
    // diagonalize the symmetric spatial block
    let spatial = DMatrix::from_fn(n - 1, n - 1, |i, j| {
        0.5 * (r[(i + 1, j + 1)] + r[(j + 1, i + 1)])
    });
    let eig = spatial.symmetric_eigen();
    let mut eigenvalues = vec![0.0];
    let mut eigenvectors = vec![frame.column(0).clone_owned()];
    // deterministic order: ascending spatial eigenvalues
    let mut order: Vec<usize> = (0..n - 1).collect();
    order.sort_by(|a, b| {
        eig.eigenvalues[*a]
            .partial_cmp(&eig.eigenvalues[*b])
            .unwrap()
    });
    for k in order {
        eigenvalues.push(eig.eigenvalues[k]);
        let mut vec_coord = DVector::zeros(n);
        for i in 0..n - 1 {
            vec_coord += eig.eigenvectors[(i, k)] * frame.column(i + 1);
        }
        eigenvectors.push(vec_coord);
    }
    Ok(TidalOperator {
        point: x.clone(),
        generator: v.clone(),
        frame,
        matrix: r,
        eigenvalues,
        eigenvectors,
    })
}

/// Matrix Jacobi state along a geodesic: frame samples of `M`, `M'`,
/// the frame tidal operator, and optionally the Riccati matrix
/// `L = M' M^{-1}`.
#[derive(Debug, Clone)]
pub struct JacobiState {
    pub times: Vec<f64>,
    pub positions: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
    pub frames: Vec<DMatrix<f64>>,
    pub m: Vec<DMatrix<f64>>,
    pub mdot: Vec<DMatrix<f64>>,
    pub tidal: Vec<DMatrix<f64>>,
    pub riccati: Option<Vec<DMatrix<f64>>>,
}

impl JacobiState {
    pub fn det_m(&self) -> Vec<f64> {
        self.m.iter().map(|m| m.determinant()).collect()
    }
}

/// Integrates `M'' + R M = 0` along the geodesic from `(x, v)` with the
/// given frame initial data, sampling a uniform grid over `[0, t_end]`.
pub fn propagate_jacobi_ivp(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    v: &DVector<f64>,
    m0: DMatrix<f64>,
    mdot0: DMatrix<f64>,
    t_end: f64,
    samples: usize,
    opts: &FlowOptions,
) -> Result<JacobiState, JacobiError> {
    let frame0 = st.orthonormal_frame(x.as_slice(), Some(v))?;
    propagate_jacobi_in_frame(st, x, v, frame0, m0, mdot0, t_end, samples, opts)
}

#[allow(clippy::too_many_arguments)]
pub fn propagate_jacobi_in_frame(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    v: &DVector<f64>,
    frame0: DMatrix<f64>,
    m0: DMatrix<f64>,
    mdot0: DMatrix<f64>,
    t_end: f64,
    samples: usize,
    opts: &FlowOptions,
) -> Result<JacobiState, JacobiError> {
    let grid: Vec<f64> = (0..=samples.max(1))
        .map(|i| t_end * i as f64 / samples.max(1) as f64)
        .collect();
    let spec = FlowSpec {
        frame0: Some(frame0),
        jacobi: vec![(m0, mdot0)],
    };
    let out = flow::integrate(st, x, v, &spec, t_end, &grid, opts)?;
    let (m, mdot): (Vec<_>, Vec<_>) = out.matrices[0].iter().cloned().unzip();
    Ok(JacobiState {
        times: out.times,
        positions: out.positions,
        velocities: out.velocities,
        frames: out.frames,
        m,
        mdot,
        tidal: out.tidal,
        riccati: None,
    })
}

/// Fills the Riccati matrix `L(t) = M'(t) M(t)^{-1}`, reporting the
/// first sample where `M` is numerically singular.
pub fn riccati_state(state: &JacobiState) -> Result<JacobiState, JacobiError> {
    let mut riccati = Vec::with_capacity(state.times.len());
    for (idx, t) in state.times.iter().enumerate() {
        let m = &state.m[idx];
        let det = m.determinant();
        let scale = m.amax().max(1.0);
        let n = m.nrows() as f64;
        if det.abs() < SINGULAR_DET_TOL * scale.powf(n) {
            return Err(JacobiError::SingularM { t: *t });
        }
        let inv = m
            .clone()
            .try_inverse()
            .ok_or(JacobiError::SingularM { t: *t })?;
        riccati.push(&state.mdot[idx] * inv);
    }
    let mut out = state.clone();
    out.riccati = Some(riccati);
    Ok(out)
}

/// Boundary-value Jacobi solution map for the geodesic from `x` to `y`:
/// `J(t) = G1(t) u + G2(t) w` in frame components, where `u = J(0)` and
/// `w = J(1)`.
#[derive(Debug, Clone)]
pub struct BoundaryJacobi {
    pub times: Vec<f64>,
    pub g1: Vec<DMatrix<f64>>,
    pub g2: Vec<DMatrix<f64>>,
    /// Connecting velocity from the boundary solve.
    pub log_velocity: DVector<f64>,
    pub frame0: DMatrix<f64>,
}

impl BoundaryJacobi {
    pub fn apply(&self, idx: usize, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.g1[idx] * u + &self.g2[idx] * w
    }
}

/// Solves the boundary Jacobi problem from two initial-value
/// propagations and a linear solve at the far endpoint.
pub fn boundary_jacobi(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    y: &DVector<f64>,
    samples: usize,
    opts: &FlowOptions,
) -> Result<BoundaryJacobi, JacobiError> {
    let n = st.dim();
    let log = geodesics::log_map(st, x, y, opts)?;
    let v = log.tangent.v.clone();
    let frame0 = st.orthonormal_frame(x.as_slice(), Some(&v))?;
    let grid: Vec<f64> = (0..=samples.max(1))
        .map(|i| i as f64 / samples.max(1) as f64)
        .collect();
    let spec = FlowSpec {
        frame0: Some(frame0.clone()),
        jacobi: vec![
            (DMatrix::identity(n, n), DMatrix::zeros(n, n)),
            (DMatrix::zeros(n, n), DMatrix::identity(n, n)),
        ],
    };
    let out = flow::integrate(st, x, &v, &spec, 1.0, &grid, opts)?;
    let last = out.times.len() - 1;
    let (ma_end, _) = &out.matrices[0][last];
    let (mb_end, _) = &out.matrices[1][last];
    let det = mb_end.determinant();
    let scale = mb_end.amax().max(1.0);
    if det.abs() < SINGULAR_DET_TOL * scale.powf(n as f64) {
        return Err(JacobiError::ConjugatePoints);
    }
    let mb_end_inv = mb_end
        .clone()
        .try_inverse()
        .ok_or(JacobiError::ConjugatePoints)?;
    let correction = &mb_end_inv * ma_end;
    let mut g1 = Vec::with_capacity(out.times.len());
    let mut g2 = Vec::with_capacity(out.times.len());
    for idx in 0..out.times.len() {
        let (ma, _) = &out.matrices[0][idx];
        let (mb, _) = &out.matrices[1][idx];
        g2.push(mb * &mb_end_inv);
        g1.push(ma - mb * &correction);
    }
    Ok(BoundaryJacobi {
        times: out.times,
        g1,
        g2,
        log_velocity: v,
        frame0,
    })
}

/// Comparison of the boundary derivative against its second-order model
/// in the generator scale.
#[derive(Debug, Clone)]
pub struct DfTaylorCheck {
    pub t: f64,
    pub lambda: f64,
    pub numeric_g1: DMatrix<f64>,
    pub numeric_g2: DMatrix<f64>,
    pub model_g1: DMatrix<f64>,
    pub model_g2: DMatrix<f64>,
    /// Frobenius norm of the combined model error.
    pub error: f64,
}

/// Checks the interpolation-map derivative at endpoints `(x0, exp(lambda
/// v0))` against the model
/// `(1-t)u + tw + lambda^2 t(1-t)/6 * R_{v0}((2-t)u + (1+t)w)`,
/// everything expressed in the parallel frame along the connecting
/// geodesic. The remainder is cubic in `lambda`.
pub fn df_taylor_check(
    st: &WeightedSpacetime,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    lambda: f64,
    t: f64,
    opts: &FlowOptions,
) -> Result<DfTaylorCheck, JacobiError> {
    let n = st.dim();
    let x_lambda = geodesics::exp_map(st, x0, &(lambda * v0), 1.0, opts)?;
    let grid_points = 16usize;
    let bj = boundary_jacobi(st, x0, &x_lambda, grid_points, opts)?;
    // locate the sample at parameter t
    let idx = bj
        .times
        .iter()
        .position(|tk| (tk - t).abs() < 1e-12)
        .unwrap_or_else(|| {
            bj.times
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| (*a - t).abs().partial_cmp(&(*b - t).abs()).unwrap())
                .map(|(i, _)| i)
                .unwrap()
        });
    let t_used = bj.times[idx];
    let r_frame = flow::tidal_frame(
        st,
        x0.as_slice(),
        v0,
        &bj.frame0,
        opts.fd_step,
        opts.curvature_step,
    )?;
    let id = DMatrix::identity(n, n);
    let coef = lambda * lambda * t_used * (1.0 - t_used) / 6.0;
    let model_g1 = (1.0 - t_used) * &id + coef * (2.0 - t_used) * &r_frame;
    let model_g2 = t_used * &id + coef * (1.0 + t_used) * &r_frame;
    let e1 = (&bj.g1[idx] - &model_g1).norm();
    let e2 = (&bj.g2[idx] - &model_g2).norm();
    Ok(DfTaylorCheck {
        t: t_used,
        lambda,
        numeric_g1: bj.g1[idx].clone(),
        numeric_g2: bj.g2[idx].clone(),
        model_g1,
        model_g2,
        error: e1.hypot(e2),
    })
}

/// A `C^1` vector field given by callbacks.
pub trait VectorField: Sync {
    fn value(
        &self,
        st: &WeightedSpacetime,
        x: &DVector<f64>,
        opts: &FlowOptions,
    ) -> Result<DVector<f64>, JacobiError>;

    /// Coordinate Jacobian `dV^i/dx^j`; the default central-differences
    /// the value callback.
    fn coordinate_jacobian(
        &self,
        st: &WeightedSpacetime,
        x: &DVector<f64>,
        opts: &FlowOptions,
    ) -> Result<DMatrix<f64>, JacobiError> {
        let n = x.len();
        let h = opts.fd_step * (1.0 + x.amax());
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let vp = self.value(st, &xp, opts)?;
            let vm = self.value(st, &xm, opts)?;
            jac.set_column(j, &((vp - vm) / (2.0 * h)));
        }
        Ok(jac)
    }

    /// Covariant derivative `D_j V^i = d_j V^i + Gamma^i_{jk} V^k`.
    fn covariant_derivative(
        &self,
        st: &WeightedSpacetime,
        x: &DVector<f64>,
        opts: &FlowOptions,
    ) -> Result<DMatrix<f64>, JacobiError> {
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

/// Field defined by closures (used by tests and simple flows).
pub struct ClosureField<F> {
    pub value_fn: F,
    /// Analytic covariant derivative at points where it is known.
    pub deriv_fn: Option<Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Sync>>,
}

impl<F> VectorField for ClosureField<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    fn value(
        &self,
        _st: &WeightedSpacetime,
        x: &DVector<f64>,
        _opts: &FlowOptions,
    ) -> Result<DVector<f64>, JacobiError> {
        Ok((self.value_fn)(x))
    }

    fn covariant_derivative(
        &self,
        st: &WeightedSpacetime,
        x: &DVector<f64>,
        opts: &FlowOptions,
    ) -> Result<DMatrix<f64>, JacobiError> {
        if let Some(d) = &self.deriv_fn {
            return Ok(d(x));
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

/// Exact and model derivative of the transport map `x -> exp_x(s V(x))`
/// at parameter `s = lambda`, in the parallel frame along the flow line.
#[derive(Debug, Clone)]
pub struct TransportDerivative {
    pub exact: DMatrix<f64>,
    pub model: DMatrix<f64>,
    pub error: f64,
}

pub fn transport_derivative(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    field: &dyn VectorField,
    lambda: f64,
    opts: &FlowOptions,
) -> Result<TransportDerivative, JacobiError> {
    let n = st.dim();
    let v = field.value(st, x, opts)?;
    let dv_cov = field.covariant_derivative(st, x, opts)?;
    let frame0 = st.orthonormal_frame(x.as_slice(), Some(&v))?;
    let g0 = st.metric_at(x.as_slice())?;
    let frame0_inv = flow::frame_inverse(&frame0, &g0);
    let dv_frame = &frame0_inv * &dv_cov * &frame0;
    let state = propagate_jacobi_in_frame(
        st,
        x,
        &v,
        frame0.clone(),
        DMatrix::identity(n, n),
        dv_frame.clone(),
        lambda,
        1,
        opts,
    )?;
    let exact = state.m.last().unwrap().clone();
    let r_frame = flow::tidal_frame(
        st,
        x.as_slice(),
        &v,
        &frame0,
        opts.fd_step,
        opts.curvature_step,
    )?;
    let model = DMatrix::identity(n, n) + lambda * &dv_frame - 0.5 * lambda * lambda * &r_frame;
    let error = (&exact - &model).norm();
    Ok(TransportDerivative {
        exact,
        model,
        error,
    })
}

/// Normalized volume distortion of the transport flow from `x`:
/// samples of
/// `t -> [ exp(psi(x) - psi(gamma(lambda t))) * det M(lambda t) ]^{1/N}`
/// on a grid of `[0, 1]`, along with the Riccati data used by the
/// differential-inequality checks.
#[derive(Debug, Clone)]
pub struct DistortionCurve {
    pub lambda: f64,
    pub t: Vec<f64>,
    /// Distortion samples, normalized to 1 at `t = 0`.
    pub d: Vec<f64>,
    pub det_m: Vec<f64>,
    /// Riccati matrices `L(lambda t)` in the parallel frame.
    pub l: Vec<DMatrix<f64>>,
    pub positions: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
    /// Frame tidal operators along the flow line.
    pub tidal: Vec<DMatrix<f64>>,
}

pub fn volume_distortion(
    st: &WeightedSpacetime,
    x: &DVector<f64>,
    field: &dyn VectorField,
    lambda: f64,
    t_samples: usize,
    opts: &FlowOptions,
) -> Result<DistortionCurve, JacobiError> {
    let n = st.dim();
    let v = field.value(st, x, opts)?;
    let dv_cov = field.covariant_derivative(st, x, opts)?;
    let frame0 = st.orthonormal_frame(x.as_slice(), Some(&v))?;
    let g0 = st.metric_at(x.as_slice())?;
    let dv_frame = flow::frame_inverse(&frame0, &g0) * &dv_cov * &frame0;
    let state = propagate_jacobi_in_frame(
        st,
        x,
        &v,
        frame0,
        DMatrix::identity(n, n),
        dv_frame,
        lambda,
        t_samples,
        opts,
    )?;
    let state = riccati_state(&state)?;
    let psi0 = st.psi_at(x.as_slice())?;
    let n_param = st.n_param();
    let mut t_grid = Vec::with_capacity(state.times.len());
    let mut d = Vec::with_capacity(state.times.len());
    let mut det_m = Vec::with_capacity(state.times.len());
    for (idx, s) in state.times.iter().enumerate() {
        let det = state.m[idx].determinant();
        if det <= 0.0 {
            return Err(JacobiError::SingularM { t: *s });
        }
        let psi = st.psi_at(state.positions[idx].as_slice())?;
        let j = (psi0 - psi).exp() * det;
        t_grid.push(if lambda == 0.0 { *s } else { *s / lambda });
        d.push(j.powf(1.0 / n_param));
        det_m.push(det);
    }
    Ok(DistortionCurve {
        lambda,
        t: t_grid,
        d,
        det_m,
        l: state.riccati.expect("riccati filled"),
        positions: state.positions,
        velocities: state.velocities,
        tidal: state.tidal,
    })
}
