//! Joint integration of geodesics, parallel frames, and matrix Jacobi
//! fields.
//!
//! All higher layers (exponential/logarithm maps, Jacobi propagation,
//! transport derivatives) reduce to one ODE system over the state
//! `[x, v, E, (M, M')...]`:
//!
//! * `x' = v`, `v'^k = -Gamma^k_ij v^i v^j` (affine geodesic),
//! * `E' = -Gamma(v, E)` columnwise (parallel transport of a frame),
//! * `M'' = -R M` where `R` is the tidal operator of `v` expressed in the
//!   frame `E`.
//!
//! The frame is g-orthonormal with the first leg timelike, so frame
//! inversion is the cheap adjoint `eta E^T g`.

use crate::geometry::{GeometryError, WeightedSpacetime};
use crate::ode::{self, OdeError, OdeOptions};
use nalgebra::{DMatrix, DVector};
use std::cell::RefCell;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum FlowError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("trajectory left the chart near t={t}")]
    LeftChart { t: f64 },
    #[error("integration step failure at t={t}")]
    StepFailure { t: f64 },
    #[error("integration exceeded the step budget at t={t}")]
    MaxSteps { t: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    pub ode: OdeOptions,
    /// Finite-difference step for Christoffel symbols.
    pub fd_step: f64,
    /// Finite-difference step for Christoffel derivatives (curvature).
    pub curvature_step: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            ode: OdeOptions::default(),
            fd_step: crate::geometry::DEFAULT_FD_STEP,
            curvature_step: crate::geometry::DEFAULT_CURVATURE_STEP,
        }
    }
}

/// What to carry along the geodesic.
#[derive(Debug, Clone, Default)]
pub struct FlowSpec {
    /// Initial frame (columns g-orthonormal). Required for Jacobi blocks.
    pub frame0: Option<DMatrix<f64>>,
    /// Jacobi matrix pairs `(M(0), M'(0))` in frame components.
    pub jacobi: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

/// Sampled output of a flow integration.
#[derive(Debug, Clone)]
pub struct FlowSamples {
    pub times: Vec<f64>,
    pub positions: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
    pub frames: Vec<DMatrix<f64>>,
    /// `matrices[pair][sample] = (M, M')`.
    pub matrices: Vec<Vec<(DMatrix<f64>, DMatrix<f64>)>>,
    /// Frame tidal operator at each sample (filled when Jacobi blocks ran).
    pub tidal: Vec<DMatrix<f64>>,
}

impl FlowSamples {
    pub fn end_position(&self) -> &DVector<f64> {
        self.positions.last().expect("samples nonempty")
    }

    pub fn end_velocity(&self) -> &DVector<f64> {
        self.velocities.last().expect("samples nonempty")
    }
}

/// `eta E^T g`: inverse of a g-orthonormal frame matrix.
pub fn frame_inverse(frame: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = frame.nrows();
    let mut inv = frame.transpose() * g;
    for r in 1..n {
        for c in 0..n {
            inv[(r, c)] = -inv[(r, c)];
        }
    }
    inv
}

struct Layout {
    n: usize,
    with_frame: bool,
    pairs: usize,
}

impl Layout {
    fn dim(&self) -> usize {
        let n2 = self.n * self.n;
        2 * self.n + if self.with_frame { n2 } else { 0 } + 2 * self.pairs * n2
    }

    fn frame_off(&self) -> usize {
        2 * self.n
    }

    fn pair_off(&self, pair: usize) -> usize {
        2 * self.n + self.n * self.n + 2 * pair * self.n * self.n
    }
}

fn read_mat(y: &DVector<f64>, off: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, &y.as_slice()[off..off + n * n])
}

fn write_mat(y: &mut DVector<f64>, off: usize, m: &DMatrix<f64>) {
    y.as_mut_slice()[off..off + m.len()].copy_from_slice(m.as_slice());
}

/// Tidal matrix of `v` in chart coordinates, assembled from Christoffels
/// and their central-difference derivatives:
/// `(R_v)^l_i = R^l_{ijk} v^j v^k`.
fn tidal_coord(
    st: &WeightedSpacetime,
    x: &[f64],
    v: &DVector<f64>,
    gamma: &[DMatrix<f64>],
    h_fd: f64,
    h_curv: f64,
) -> Result<DMatrix<f64>, GeometryError> {
    let n = st.dim();
    if st.has_constant_metric() {
        return Ok(DMatrix::zeros(n, n));
    }
    // dgamma[m][l] = d_m Gamma^l
    let mut dgamma: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(n);
    let mut xp = x.to_vec();
    for m in 0..n {
        let x0 = x[m];
        xp[m] = x0 + h_curv;
        let gp = st.christoffels(&xp, h_fd)?;
        xp[m] = x0 - h_curv;
        let gm = st.christoffels(&xp, h_fd)?;
        xp[m] = x0;
        dgamma.push(
            gp.into_iter()
                .zip(gm)
                .map(|(p, q)| (p - q) / (2.0 * h_curv))
                .collect(),
        );
    }
    let mut r = DMatrix::zeros(n, n);
    for l in 0..n {
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    let vjk = v[j] * v[k];
                    if vjk == 0.0 {
                        continue;
                    }
                    let mut term = dgamma[i][l][(j, k)] - dgamma[j][l][(i, k)];
                    for m in 0..n {
                        term += gamma[l][(i, m)] * gamma[m][(j, k)]
                            - gamma[l][(j, m)] * gamma[m][(i, k)];
                    }
                    s += term * vjk;
                }
            }
            r[(l, i)] = s;
        }
    }
    Ok(r)
}

/// Frame components of the tidal operator of `v`.
pub fn tidal_frame(
    st: &WeightedSpacetime,
    x: &[f64],
    v: &DVector<f64>,
    frame: &DMatrix<f64>,
    h_fd: f64,
    h_curv: f64,
) -> Result<DMatrix<f64>, GeometryError> {
    let gamma = st.christoffels(x, h_fd)?;
    let r = tidal_coord(st, x, v, &gamma, h_fd, h_curv)?;
    let g = st.metric_at(x)?;
    Ok(frame_inverse(frame, &g) * r * frame)
}

/// Integrates the joint system from `(x0, v0)` over `[0, t_end]`,
/// sampling at `sample_times` (must be sorted, within the interval,
/// and include any endpoints the caller wants recorded).
pub fn integrate(
    st: &WeightedSpacetime,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    spec: &FlowSpec,
    t_end: f64,
    sample_times: &[f64],
    opts: &FlowOptions,
) -> Result<FlowSamples, FlowError> {
    let n = st.dim();
    assert_eq!(x0.len(), n);
    assert_eq!(v0.len(), n);
    let with_frame = spec.frame0.is_some() || !spec.jacobi.is_empty();
    let layout = Layout {
        n,
        with_frame,
        pairs: spec.jacobi.len(),
    };
    if !spec.jacobi.is_empty() {
        assert!(spec.frame0.is_some(), "jacobi blocks require a frame");
    }

    let margin = 2.0 * opts.fd_step
        + if layout.pairs > 0 {
            3.0 * opts.curvature_step
        } else {
            0.0
        };
    st.check_in_chart(x0.as_slice(), margin)?;

    let mut y0 = DVector::zeros(layout.dim());
    y0.rows_mut(0, n).copy_from(x0);
    y0.rows_mut(n, n).copy_from(v0);
    if let Some(frame0) = &spec.frame0 {
        write_mat(&mut y0, layout.frame_off(), frame0);
    }
    for (p, (m0, md0)) in spec.jacobi.iter().enumerate() {
        write_mat(&mut y0, layout.pair_off(p), m0);
        let off = layout.pair_off(p) + n * n;
        write_mat(&mut y0, off, md0);
    }

    let last_err: RefCell<Option<FlowError>> = RefCell::new(None);
    let rhs = |_t: f64, y: &DVector<f64>, dy: &mut DVector<f64>| -> Result<(), ()> {
        let x = y.rows(0, n).clone_owned();
        let v = y.rows(n, n).clone_owned();
        if !st.in_chart(x.as_slice(), margin) {
            *last_err.borrow_mut() = Some(FlowError::LeftChart { t: _t });
            return Err(());
        }
        let gamma = match st.christoffels(x.as_slice(), opts.fd_step) {
            Ok(g) => g,
            Err(e) => {
                *last_err.borrow_mut() = Some(FlowError::Geometry(e));
                return Err(());
            }
        };
        // geodesic block
        for k in 0..n {
            dy[k] = v[k];
            let mut a = 0.0;
            for i in 0..n {
                for j in 0..n {
                    a += gamma[k][(i, j)] * v[i] * v[j];
                }
            }
            dy[n + k] = -a;
        }
        if with_frame {
            let off = layout.frame_off();
            let e = read_mat(y, off, n);
            let mut de = DMatrix::zeros(n, n);
            for c in 0..n {
                for k in 0..n {
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            s += gamma[k][(i, j)] * v[i] * e[(j, c)];
                        }
                    }
                    de[(k, c)] = -s;
                }
            }
            write_mat(dy, off, &de);

            if layout.pairs > 0 {
                let r_coord = match tidal_coord(
                    st,
                    x.as_slice(),
                    &v,
                    &gamma,
                    opts.fd_step,
                    opts.curvature_step,
                ) {
                    Ok(r) => r,
                    Err(err) => {
                        *last_err.borrow_mut() = Some(FlowError::Geometry(err));
                        return Err(());
                    }
                };
                let g = match st.metric_at(x.as_slice()) {
                    Ok(g) => g,
                    Err(err) => {
                        *last_err.borrow_mut() = Some(FlowError::Geometry(err));
                        return Err(());
                    }
                };
                let r_frame = frame_inverse(&e, &g) * r_coord * &e;
                for p in 0..layout.pairs {
                    let off_m = layout.pair_off(p);
                    let off_md = off_m + n * n;
                    let m = read_mat(y, off_m, n);
                    let md = read_mat(y, off_md, n);
                    write_mat(dy, off_m, &md);
                    let mdd = -&r_frame * m;
                    write_mat(dy, off_md, &mdd);
                }
            }
        }
        Ok(())
    };

    let mut samples = FlowSamples {
        times: Vec::with_capacity(sample_times.len()),
        positions: Vec::new(),
        velocities: Vec::new(),
        frames: Vec::new(),
        matrices: vec![Vec::new(); layout.pairs],
        tidal: Vec::new(),
    };
    let record = |t: f64, y: &DVector<f64>, out: &mut FlowSamples| {
        out.times.push(t);
        out.positions.push(y.rows(0, n).clone_owned());
        out.velocities.push(y.rows(n, n).clone_owned());
        if with_frame {
            out.frames.push(read_mat(y, layout.frame_off(), n));
        }
        for p in 0..layout.pairs {
            let off_m = layout.pair_off(p);
            out.matrices[p].push((read_mat(y, off_m, n), read_mat(y, off_m + n * n, n)));
        }
    };

    let result = ode::integrate(&rhs, 0.0, t_end, &y0, sample_times, &opts.ode, |t, y| {
        record(t, y, &mut samples)
    });
    let y_end = match result {
        Ok(y) => y,
        Err(OdeError::Rhs(())) | Err(OdeError::StepSizeUnderflow { .. }) => {
            let stored = last_err.borrow_mut().take();
            return Err(stored.unwrap_or(FlowError::StepFailure { t: t_end }));
        }
        Err(OdeError::MaxSteps { t, .. }) => return Err(FlowError::MaxSteps { t }),
    };

    if samples.times.is_empty() {
        record(t_end, &y_end, &mut samples);
    }

    // tidal samples for residual checks
    if layout.pairs > 0 {
        for idx in 0..samples.times.len() {
            let x = &samples.positions[idx];
            let v = &samples.velocities[idx];
            let e = &samples.frames[idx];
            let r = tidal_frame(st, x.as_slice(), v, e, opts.fd_step, opts.curvature_step)?;
            samples.tidal.push(r);
        }
    }

    Ok(samples)
}
