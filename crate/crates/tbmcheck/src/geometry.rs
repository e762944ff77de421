//! The ambient weighted spacetime and its curvature tensors.
//!
//! A [`WeightedSpacetime`] holds an `n x n` symmetric array of metric
//! component expressions with signature `(+,-,...,-)`, a weight expression
//! `psi`, and a synthetic dimension parameter `N`. The reference measure
//! has density `exp(-psi) * |det g|^(1/2)` against chart Lebesgue measure.
//! All curvature is obtained by central finite differencing of the metric
//! components; no symbolic differentiation is performed.
//!
//! Index conventions used throughout, fixed so that the matrix Jacobi
//! equation in a parallel orthonormal frame reads `M'' + R_v M = 0`:
//!
//! * `riem[l][i][j][k]` is the curvature component with output slot `l`,
//!   antisymmetric derivative pair `(i, j)` and input slot `k`,
//!   assembled as `d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma^l_im
//!   Gamma^m_jk - Gamma^l_jm Gamma^m_ik`;
//! * the tidal operator of a vector `v` is `(R_v)^l_i = riem[l][i][j][k]
//!   v^j v^k`, which annihilates `v` itself;
//! * `Ric_{jk} = riem[i][i][j][k]` (contraction on the first lower slot),
//!   so that `trace(R_v) = Ric(v, v)` and the expanding warped-product
//!   catalog metric has `Ric(dt, dt) = -1`.

use crate::exprparse::{self, DomainError, Expr};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default finite-difference step for first derivatives of the metric.
pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Default step for curvature (second derivatives of the metric); larger
/// than [`DEFAULT_FD_STEP`] to keep the roundoff term of the nested
/// differences below the truncation term.
pub const DEFAULT_CURVATURE_STEP: f64 = 1e-4;

const SYMMETRY_TOL: f64 = 1e-8;
const LIGHTLIKE_BAND: f64 = 1e-12;

#[derive(Debug, Clone, Error)]
pub enum GeometryError {
    #[error("expression evaluation failed at {point:?}: {source}")]
    Domain {
        point: Vec<f64>,
        #[source]
        source: DomainError,
    },
    #[error("metric at {point:?} has wrong signature: {positive} positive, {negative} negative, {zero} null eigenvalues (want 1 positive, n-1 negative)")]
    Signature {
        point: Vec<f64>,
        positive: usize,
        negative: usize,
        zero: usize,
    },
    #[error("metric is numerically singular at {point:?}")]
    SingularMetric { point: Vec<f64> },
    #[error("point {point:?} is outside the chart domain (margin {margin})")]
    OutOfChart { point: Vec<f64>, margin: f64 },
    #[error("dimension parameter N={n_param} invalid: psi is not identically zero, so N must exceed n={n}")]
    InvalidDimensionParam { n_param: f64, n: usize },
    #[error("metric expression array must be {n}x{n} and symmetric")]
    BadMetricShape { n: usize },
    #[error("metric/weight expression uses coordinate x{index}, but n={n}")]
    CoordinateOutOfRange { index: usize, n: usize },
    #[error("expression parse error: {0}")]
    Parse(#[from] exprparse::ParseError),
}

/// Causal class of a tangent vector: sign of `g(v, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CausalClass {
    Timelike,
    Lightlike,
    Spacelike,
}

/// Time orientation relative to the configured future frame field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeOrientation {
    Future,
    Past,
    None,
}

/// A point of the tangent bundle in chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentPoint {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

impl TangentPoint {
    pub fn new(x: DVector<f64>, v: DVector<f64>) -> Self {
        assert_eq!(x.len(), v.len());
        TangentPoint { x, v }
    }
}

/// Weighted spacetime `(M, g, m)` on a single chart.
///
/// Immutable after construction; all operations are pure.
#[derive(Debug, Clone)]
pub struct WeightedSpacetime {
    n: usize,
    metric: Vec<Vec<Expr>>,
    psi: Expr,
    psi_is_zero: bool,
    n_param: f64,
    chart: Vec<(f64, f64)>,
    /// Set when every metric component is a literal constant; the
    /// central differences of a constant vanish identically, so the
    /// derivative paths can skip the evaluations without changing any
    /// result bit.
    constant_metric: Option<DMatrix<f64>>,
}

impl WeightedSpacetime {
    /// Builds and validates a spacetime from component expressions.
    ///
    /// `metric[i][j]` must be an `n x n` structurally symmetric array
    /// (entries for `(i,j)` and `(j,i)` may be distinct trees but must
    /// agree numerically; symmetry is enforced by averaging). Signature
    /// and weight/dimension invariants are checked on a sample of chart
    /// points.
    pub fn new(
        n: usize,
        metric: Vec<Vec<Expr>>,
        psi: Expr,
        n_param: f64,
        chart: Vec<(f64, f64)>,
    ) -> Result<Self, GeometryError> {
        if n < 2 || metric.len() != n || metric.iter().any(|row| row.len() != n) {
            return Err(GeometryError::BadMetricShape { n });
        }
        if chart.len() != n {
            return Err(GeometryError::BadMetricShape { n });
        }
        for row in &metric {
            for e in row {
                if let Some(idx) = e.max_coord() {
                    if idx >= n {
                        return Err(GeometryError::CoordinateOutOfRange { index: idx, n });
                    }
                }
            }
        }
        if let Some(idx) = psi.max_coord() {
            if idx >= n {
                return Err(GeometryError::CoordinateOutOfRange { index: idx, n });
            }
        }
        let psi_is_zero = matches!(psi, Expr::Const(c) if c == 0.0);
        let all_const = metric
            .iter()
            .all(|row| row.iter().all(|e| matches!(e, Expr::Const(_))));
        let constant_metric = all_const.then(|| {
            DMatrix::from_fn(n, n, |i, j| {
                let a = match metric[i][j] {
                    Expr::Const(c) => c,
                    _ => unreachable!(),
                };
                let b = match metric[j][i] {
                    Expr::Const(c) => c,
                    _ => unreachable!(),
                };
                0.5 * (a + b)
            })
        });
        let st = WeightedSpacetime {
            n,
            metric,
            psi,
            psi_is_zero,
            n_param,
            chart,
            constant_metric,
        };
        st.validate()?;
        Ok(st)
    }

    fn validate(&self) -> Result<(), GeometryError> {
        if !self.psi_is_zero && self.n_param <= self.n as f64 {
            return Err(GeometryError::InvalidDimensionParam {
                n_param: self.n_param,
                n: self.n,
            });
        }
        // metric symmetry + signature on a coarse sample of the chart
        for x in self.sample_points() {
            let g = self.metric_at(x.as_slice())?;
            self.check_signature(x.as_slice(), &g)?;
            // future frame field dx0 must be timelike with g(e0,e0) > 0
            if g[(0, 0)] <= 0.0 {
                return Err(GeometryError::Signature {
                    point: x.clone(),
                    positive: 0,
                    negative: 0,
                    zero: 0,
                });
            }
        }
        Ok(())
    }

    fn sample_points(&self) -> Vec<Vec<f64>> {
        // chart center, midpoints toward each face, and a shrunk corner pair
        let mut pts = Vec::new();
        let center: Vec<f64> = self.chart.iter().map(|(a, b)| 0.5 * (a + b)).collect();
        pts.push(center.clone());
        for i in 0..self.n {
            for s in [-0.25, 0.25] {
                let mut p = center.clone();
                p[i] += s * (self.chart[i].1 - self.chart[i].0);
                pts.push(p);
            }
        }
        let mut lo = center.clone();
        let mut hi = center.clone();
        for i in 0..self.n {
            let half = 0.45 * (self.chart[i].1 - self.chart[i].0);
            lo[i] -= half;
            hi[i] += half;
        }
        pts.push(lo);
        pts.push(hi);
        pts
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Synthetic dimension parameter `N`.
    pub fn n_param(&self) -> f64 {
        self.n_param
    }

    pub fn psi_is_zero(&self) -> bool {
        self.psi_is_zero
    }

    pub fn chart(&self) -> &[(f64, f64)] {
        &self.chart
    }

    /// True when `x` lies inside the chart with the given margin.
    pub fn in_chart(&self, x: &[f64], margin: f64) -> bool {
        x.iter()
            .zip(&self.chart)
            .all(|(xi, (a, b))| *xi >= a + margin && *xi <= b - margin)
    }

    pub fn check_in_chart(&self, x: &[f64], margin: f64) -> Result<(), GeometryError> {
        if self.in_chart(x, margin) {
            Ok(())
        } else {
            Err(GeometryError::OutOfChart {
                point: x.to_vec(),
                margin,
            })
        }
    }

    fn eval(&self, e: &Expr, x: &[f64]) -> Result<f64, GeometryError> {
        e.eval(x).map_err(|source| GeometryError::Domain {
            point: x.to_vec(),
            source,
        })
    }

    /// True when every metric component is a literal constant.
    pub fn has_constant_metric(&self) -> bool {
        self.constant_metric.is_some()
    }

    /// Metric matrix `g(x)`, symmetrized.
    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        if let Some(g) = &self.constant_metric {
            return Ok(g.clone());
        }
        let n = self.n;
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let a = self.eval(&self.metric[i][j], x)?;
                let b = self.eval(&self.metric[j][i], x)?;
                let v = 0.5 * (a + b);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    fn check_signature(&self, x: &[f64], g: &DMatrix<f64>) -> Result<(), GeometryError> {
        let eig = g.clone().symmetric_eigen();
        let scale = eig.eigenvalues.amax().max(1.0);
        let (mut pos, mut neg, mut zero) = (0, 0, 0);
        for ev in eig.eigenvalues.iter() {
            if *ev > 1e-12 * scale {
                pos += 1;
            } else if *ev < -1e-12 * scale {
                neg += 1;
            } else {
                zero += 1;
            }
        }
        if pos != 1 || neg != self.n - 1 || zero != 0 {
            return Err(GeometryError::Signature {
                point: x.to_vec(),
                positive: pos,
                negative: neg,
                zero,
            });
        }
        Ok(())
    }

    /// Metric matrix with the signature verified at this point.
    pub fn metric_checked(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        let g = self.metric_at(x)?;
        self.check_signature(x, &g)?;
        Ok(g)
    }

    /// Lorentzian inner product `g(v, w)` at `x`.
    pub fn inner(
        &self,
        x: &[f64],
        v: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<f64, GeometryError> {
        let g = self.metric_at(x)?;
        Ok((v.transpose() * &g * w)[(0, 0)])
    }

    /// Causal classification of a tangent vector and its time orientation.
    ///
    /// `|g(v,v)|` within a small band of zero classifies as lightlike.
    /// Orientation compares against the frame field `d/dx0`.
    pub fn causal_type(
        &self,
        tp: &TangentPoint,
    ) -> Result<(CausalClass, TimeOrientation), GeometryError> {
        let g = self.metric_at(tp.x.as_slice())?;
        let q = (tp.v.transpose() * &g * &tp.v)[(0, 0)];
        let class = if q.abs() <= LIGHTLIKE_BAND {
            CausalClass::Lightlike
        } else if q > 0.0 {
            CausalClass::Timelike
        } else {
            CausalClass::Spacelike
        };
        let orientation = if class == CausalClass::Spacelike {
            TimeOrientation::None
        } else {
            // g(v, e0) with e0 the coordinate frame vector
            let mut gv0 = 0.0;
            for j in 0..self.n {
                gv0 += g[(0, j)] * tp.v[j];
            }
            if gv0 > LIGHTLIKE_BAND {
                TimeOrientation::Future
            } else if gv0 < -LIGHTLIKE_BAND {
                TimeOrientation::Past
            } else {
                TimeOrientation::None
            }
        };
        Ok((class, orientation))
    }

    fn inverse_metric(&self, x: &[f64], g: &DMatrix<f64>) -> Result<DMatrix<f64>, GeometryError> {
        g.clone()
            .try_inverse()
            .ok_or_else(|| GeometryError::SingularMetric { point: x.to_vec() })
    }

    /// Christoffel symbols by central differences of the metric.
    ///
    /// Returned as `gamma[k]` = matrix over `(i, j)`, symmetric in `(i, j)`.
    pub fn christoffels(&self, x: &[f64], h: f64) -> Result<Vec<DMatrix<f64>>, GeometryError> {
        self.check_in_chart(x, 2.0 * h)?;
        let n = self.n;
        if self.constant_metric.is_some() {
            // differences of constants vanish exactly
            return Ok(vec![DMatrix::zeros(n, n); n]);
        }
        let g = self.metric_at(x)?;
        let ginv = self.inverse_metric(x, &g)?;
        // dg[m] = d_m g
        let mut dg = Vec::with_capacity(n);
        let mut xp = x.to_vec();
        for m in 0..n {
            let x0 = x[m];
            xp[m] = x0 + h;
            let gp = self.metric_at(&xp)?;
            xp[m] = x0 - h;
            let gm = self.metric_at(&xp)?;
            xp[m] = x0;
            dg.push((gp - gm) / (2.0 * h));
        }
        let mut gamma = vec![DMatrix::zeros(n, n); n];
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                    }
                    let v = 0.5 * s;
                    gamma[k][(i, j)] = v;
                    gamma[k][(j, i)] = v;
                }
            }
        }
        Ok(gamma)
    }

    /// Full curvature components `riem[l][i][j][k]` (see module docs) and
    /// the Christoffels used, by nested central differences with step `h`.
    pub fn riemann(&self, x: &[f64], h: f64) -> Result<Riemann, GeometryError> {
        self.check_in_chart(x, 3.0 * h)?;
        let n = self.n;
        let gamma = self.christoffels(x, h)?;
        // dgamma[m][k] = d_m Gamma^k
        let mut dgamma = Vec::with_capacity(n);
        let mut xp = x.to_vec();
        for m in 0..n {
            let x0 = x[m];
            xp[m] = x0 + h;
            let gp = self.christoffels(&xp, h)?;
            xp[m] = x0 - h;
            let gm = self.christoffels(&xp, h)?;
            xp[m] = x0;
            let d: Vec<DMatrix<f64>> = gp
                .into_iter()
                .zip(gm)
                .map(|(p, m_)| (p - m_) / (2.0 * h))
                .collect();
            dgamma.push(d);
        }
        let mut riem = vec![vec![vec![vec![0.0; n]; n]; n]; n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut v = dgamma[i][l][(j, k)] - dgamma[j][l][(i, k)];
                        for m in 0..n {
                            v += gamma[l][(i, m)] * gamma[m][(j, k)]
                                - gamma[l][(j, m)] * gamma[m][(i, k)];
                        }
                        riem[l][i][j][k] = v;
                    }
                }
            }
        }
        Ok(Riemann {
            components: riem,
            christoffels: gamma,
            n,
        })
    }

    /// Ricci matrix `Ric_{jk} = riem[i][i][j][k]`, symmetrized after a
    /// symmetry check.
    pub fn ricci(&self, x: &[f64], h: f64) -> Result<DMatrix<f64>, GeometryError> {
        let riem = self.riemann(x, h)?;
        let ric = riem.ricci();
        let scale = ric.amax();
        let tol = SYMMETRY_TOL * (1.0 + scale);
        for j in 0..self.n {
            for k in j + 1..self.n {
                if (ric[(j, k)] - ric[(k, j)]).abs() > tol.max(1e-5) {
                    // asymmetry here means the finite differencing failed
                    return Err(GeometryError::SingularMetric { point: x.to_vec() });
                }
            }
        }
        Ok(0.5 * (&ric + ric.transpose()))
    }

    /// Gradient of the weight by central differences, as a covector.
    pub fn psi_gradient(&self, x: &[f64], h: f64) -> Result<DVector<f64>, GeometryError> {
        let n = self.n;
        let mut d = DVector::zeros(n);
        if self.psi_is_zero {
            return Ok(d);
        }
        let mut xp = x.to_vec();
        for m in 0..n {
            let x0 = x[m];
            xp[m] = x0 + h;
            let p = self.eval(&self.psi, &xp)?;
            xp[m] = x0 - h;
            let q = self.eval(&self.psi, &xp)?;
            xp[m] = x0;
            d[m] = (p - q) / (2.0 * h);
        }
        Ok(d)
    }

    /// Covariant Hessian of the weight: `d_i d_j psi - Gamma^k_ij d_k psi`.
    pub fn psi_hessian(&self, x: &[f64], h: f64) -> Result<DMatrix<f64>, GeometryError> {
        let n = self.n;
        let mut hess = DMatrix::zeros(n, n);
        if self.psi_is_zero {
            return Ok(hess);
        }
        let grad = self.psi_gradient(x, h)?;
        let gamma = self.christoffels(x, h)?;
        let f0 = self.eval(&self.psi, x)?;
        let mut xp = x.to_vec();
        for i in 0..n {
            for j in i..n {
                let second = if i == j {
                    let xi = x[i];
                    xp[i] = xi + h;
                    let p = self.eval(&self.psi, &xp)?;
                    xp[i] = xi - h;
                    let q = self.eval(&self.psi, &xp)?;
                    xp[i] = xi;
                    (p - 2.0 * f0 + q) / (h * h)
                } else {
                    let (xi, xj) = (x[i], x[j]);
                    xp[i] = xi + h;
                    xp[j] = xj + h;
                    let pp = self.eval(&self.psi, &xp)?;
                    xp[j] = xj - h;
                    let pm = self.eval(&self.psi, &xp)?;
                    xp[i] = xi - h;
                    let mm = self.eval(&self.psi, &xp)?;
                    xp[j] = xj + h;
                    let mp = self.eval(&self.psi, &xp)?;
                    xp[i] = xi;
                    xp[j] = xj;
                    (pp - pm - mp + mm) / (4.0 * h * h)
                };
                let mut v = second;
                for k in 0..n {
                    v -= gamma[k][(i, j)] * grad[k];
                }
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        Ok(hess)
    }

    /// Bakry-Emery-Ricci quadratic form
    /// `Ric(v,v) + Hess psi(v,v) - (Dpsi(v))^2 / (N - n)`.
    ///
    /// When `psi` is identically zero the correction terms vanish for any
    /// `N` (including `N = n`).
    pub fn bakry_emery_ricci(
        &self,
        x: &[f64],
        v: &DVector<f64>,
        h: f64,
    ) -> Result<f64, GeometryError> {
        let ric = self.ricci(x, h)?;
        let mut value = (v.transpose() * &ric * v)[(0, 0)];
        if !self.psi_is_zero {
            if self.n_param <= self.n as f64 {
                return Err(GeometryError::InvalidDimensionParam {
                    n_param: self.n_param,
                    n: self.n,
                });
            }
            let hess = self.psi_hessian(x, h)?;
            let grad = self.psi_gradient(x, h)?;
            let dv = grad.dot(v);
            value += (v.transpose() * &hess * v)[(0, 0)];
            value -= dv * dv / (self.n_param - self.n as f64);
        }
        Ok(value)
    }

    /// Bakry-Emery-Ricci matrix (the full bilinear form).
    pub fn bakry_emery_ricci_matrix(
        &self,
        x: &[f64],
        h: f64,
    ) -> Result<DMatrix<f64>, GeometryError> {
        let mut m = self.ricci(x, h)?;
        if !self.psi_is_zero {
            if self.n_param <= self.n as f64 {
                return Err(GeometryError::InvalidDimensionParam {
                    n_param: self.n_param,
                    n: self.n,
                });
            }
            let hess = self.psi_hessian(x, h)?;
            let grad = self.psi_gradient(x, h)?;
            m += hess;
            m -= &grad * grad.transpose() / (self.n_param - self.n as f64);
        }
        Ok(m)
    }

    /// Weight of the reference measure against chart Lebesgue measure:
    /// `exp(-psi(x)) |det g(x)|^(1/2)`.
    pub fn measure_density(&self, x: &[f64]) -> Result<f64, GeometryError> {
        let g = self.metric_at(x)?;
        let det = g.determinant();
        if det.abs() < 1e-300 {
            return Err(GeometryError::SingularMetric { point: x.to_vec() });
        }
        let psi = if self.psi_is_zero {
            0.0
        } else {
            self.eval(&self.psi, x)?
        };
        Ok((-psi).exp() * det.abs().sqrt())
    }

    /// Weight value `psi(x)`.
    pub fn psi_at(&self, x: &[f64]) -> Result<f64, GeometryError> {
        if self.psi_is_zero {
            return Ok(0.0);
        }
        self.eval(&self.psi, x)
    }

    /// Full per-point curvature summary.
    pub fn curvature_report(&self, x: &[f64], h: f64) -> Result<CurvatureReport, GeometryError> {
        let riem = self.riemann(x, h)?;
        let ric_raw = riem.ricci();
        let ric = 0.5 * (&ric_raw + ric_raw.transpose());
        let be = self.bakry_emery_ricci_matrix(x, h)?;
        Ok(CurvatureReport {
            point: DVector::from_row_slice(x),
            christoffels: riem.christoffels.clone(),
            riemann: riem,
            ricci: ric,
            bakry_emery_ricci: be,
            fd_step: h,
        })
    }

    /// Builds a g-orthonormal frame at `x`, first leg proportional to the
    /// timelike `v` (or to the coordinate time axis when `v` is `None`).
    ///
    /// Columns of the returned matrix are the frame vectors; the frame
    /// metric is `diag(+1, -1, ..., -1)`.
    pub fn orthonormal_frame(
        &self,
        x: &[f64],
        v: Option<&DVector<f64>>,
    ) -> Result<DMatrix<f64>, GeometryError> {
        let n = self.n;
        let g = self.metric_at(x)?;
        let ip = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * &g * b)[(0, 0)];
        let mut frame: Vec<DVector<f64>> = Vec::with_capacity(n);
        let e0_raw = match v {
            Some(v) => v.clone(),
            None => DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 }),
        };
        let q = ip(&e0_raw, &e0_raw);
        if q <= 0.0 {
            return Err(GeometryError::Signature {
                point: x.to_vec(),
                positive: 0,
                negative: 0,
                zero: 0,
            });
        }
        frame.push(e0_raw / q.sqrt());
        // complete with chart basis vectors, Gram-Schmidt against g
        let mut basis_idx = 0usize;
        while frame.len() < n {
            if basis_idx >= n {
                return Err(GeometryError::SingularMetric { point: x.to_vec() });
            }
            let mut u = DVector::from_fn(n, |i, _| if i == basis_idx { 1.0 } else { 0.0 });
            basis_idx += 1;
            for (idx, e) in frame.iter().enumerate() {
                let sign = if idx == 0 { 1.0 } else { -1.0 };
                let c = sign * ip(&u, e);
                u -= c * e;
            }
            let norm2 = ip(&u, &u);
            if norm2 >= -1e-14 {
                continue; // degenerate direction, try the next basis vector
            }
            frame.push(u / (-norm2).sqrt());
        }
        let mut m = DMatrix::zeros(n, n);
        for (c, e) in frame.iter().enumerate() {
            m.set_column(c, e);
        }
        Ok(m)
    }
}

/// Full Riemann components at a point with the Christoffels they came from.
#[derive(Debug, Clone)]
pub struct Riemann {
    /// `components[l][i][j][k]`; see module docs for slot meaning.
    pub components: Vec<Vec<Vec<Vec<f64>>>>,
    pub christoffels: Vec<DMatrix<f64>>,
    n: usize,
}

impl Riemann {
    /// `Ric_{jk} = components[i][i][j][k]`.
    pub fn ricci(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |j, k| {
            (0..n).map(|i| self.components[i][i][j][k]).sum()
        })
    }

    /// Tidal endomorphism of `v` in chart coordinates:
    /// `(R_v)^l_i = components[l][i][j][k] v^j v^k`.
    pub fn tidal_matrix(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |l, i| {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += self.components[l][i][j][k] * v[j] * v[k];
                }
            }
            s
        })
    }

    /// Fully lowered components `R_{lijk} = g_{lm} components[m][i][j][k]`.
    pub fn lowered(&self, g: &DMatrix<f64>) -> Vec<Vec<Vec<Vec<f64>>>> {
        let n = self.n;
        let mut low = vec![vec![vec![vec![0.0; n]; n]; n]; n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut s = 0.0;
                        for m in 0..n {
                            s += g[(l, m)] * self.components[m][i][j][k];
                        }
                        low[l][i][j][k] = s;
                    }
                }
            }
        }
        low
    }
}

/// Per-point curvature summary.
#[derive(Debug, Clone)]
pub struct CurvatureReport {
    pub point: DVector<f64>,
    pub christoffels: Vec<DMatrix<f64>>,
    pub riemann: Riemann,
    pub ricci: DMatrix<f64>,
    pub bakry_emery_ricci: DMatrix<f64>,
    pub fd_step: f64,
}
