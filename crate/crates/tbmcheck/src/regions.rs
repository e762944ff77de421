//! Regions of the chart and their weighted volumes.
//!
//! Three region kinds:
//!
//! * exponential images of tangent cubes (side `delta`, spanned by a
//!   basis at an anchor point) — membership is exact via the logarithm
//!   map, so volume estimates classify voxel centers analytically;
//! * images of a region under a point map (transports, translations) —
//!   membership inverts the map with a quasi-Newton iteration;
//! * voxel sets — rasterized hit sets, used for geodesic interpolants
//!   (inner estimates) and fattened regions.
//!
//! Volumes are sums of `density(center) * cell_volume` over occupied
//! cells of a grid snapped to the region's bounding box (per-axis pitch
//! `span/m` with `m = round(span/voxel_side)`), with a refinement
//! history at two coarser grids. Rasterized interpolant volumes are
//! inner estimates: refinement only ever adds voxels, and the history
//! quantifies the bias for the certificates built on top.

use crate::flow::FlowOptions;
use crate::geodesics::{self, GeodesicError};
use crate::geometry::{GeometryError, WeightedSpacetime};
use crate::sampling;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum RegionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Geodesic(#[from] Box<GeodesicError>),
    #[error("region is empty (zero extent or no occupied voxels)")]
    EmptyRegion,
    #[error("map inversion did not converge")]
    MapInversion,
    #[error("voxel grids are incompatible")]
    GridMismatch,
    #[error("{count} sampled pairs were not future-directed timelike")]
    NonTimelikePair { count: usize },
    #[error("eigenbasis construction failed: {0}")]
    Eigen(String),
}

impl From<GeodesicError> for RegionError {
    fn from(e: GeodesicError) -> Self {
        RegionError::Geodesic(Box::new(e))
    }
}

/// A differentiable point map of the chart (transport maps, translations).
pub trait PointMap: Send + Sync {
    fn apply(
        &self,
        st: &WeightedSpacetime,
        x: &DVector<f64>,
        opts: &FlowOptions,
    ) -> Result<DVector<f64>, RegionError>;

    /// Jacobian at a representative point, used as the fixed quasi-Newton
    /// matrix when inverting the map. The default differences `apply`.
    fn jacobian_hint(
        &self,
        st: &WeightedSpacetime,
        x: &DVector<f64>,
        opts: &FlowOptions,
    ) -> Result<DMatrix<f64>, RegionError> {
        let n = x.len();
        let h = 1e-6 * (1.0 + x.amax());
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fp = self.apply(st, &xp, opts)?;
            let fm = self.apply(st, &xm, opts)?;
            jac.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        Ok(jac)
    }

    fn describe(&self) -> String;
}

/// Coordinate translation, an isometry of the flat catalog metrics.
pub struct Translation(pub DVector<f64>);

impl PointMap for Translation {
    fn apply(
        &self,
        _st: &WeightedSpacetime,
        x: &DVector<f64>,
        _opts: &FlowOptions,
    ) -> Result<DVector<f64>, RegionError> {
        Ok(x + &self.0)
    }

    fn jacobian_hint(
        &self,
        _st: &WeightedSpacetime,
        x: &DVector<f64>,
        _opts: &FlowOptions,
    ) -> Result<DMatrix<f64>, RegionError> {
        Ok(DMatrix::identity(x.len(), x.len()))
    }

    fn describe(&self) -> String {
        format!("translate({:?})", self.0.as_slice())
    }
}

/// Linear map `x -> anchor + A (x - anchor)`.
pub struct LinearMap {
    pub anchor: DVector<f64>,
    pub matrix: DMatrix<f64>,
}

impl PointMap for LinearMap {
    fn apply(
        &self,
        _st: &WeightedSpacetime,
        x: &DVector<f64>,
        _opts: &FlowOptions,
    ) -> Result<DVector<f64>, RegionError> {
        Ok(&self.anchor + &self.matrix * (x - &self.anchor))
    }

    fn jacobian_hint(
        &self,
        _st: &WeightedSpacetime,
        _x: &DVector<f64>,
        _opts: &FlowOptions,
    ) -> Result<DMatrix<f64>, RegionError> {
        Ok(self.matrix.clone())
    }

    fn describe(&self) -> String {
        "linear".to_string()
    }
}

/// Region description.
#[derive(Clone)]
#[allow(clippy::large_enum_variant)]
pub enum RegionKind {
    /// `exp_{x0}` image of the cube spanned by `basis` columns, side `delta`.
    ExpCube {
        x0: DVector<f64>,
        basis: DMatrix<f64>,
        delta: f64,
    },
    /// Image of a base region under a point map.
    Image {
        base: Box<RegionSpec>,
        map: Arc<dyn PointMap>,
    },
    /// Rasterized voxel set (with coarser companions when available).
    Voxels(VoxelLevels),
}

#[derive(Clone)]
pub struct RegionSpec {
    pub kind: RegionKind,
}

impl std::fmt::Debug for RegionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            RegionKind::ExpCube { x0, delta, .. } => {
                write!(f, "ExpCube(x0={:?}, delta={delta})", x0.as_slice())
            }
            RegionKind::Image { base, map } => {
                write!(f, "Image({:?}, {})", base, map.describe())
            }
            RegionKind::Voxels(v) => write!(
                f,
                "Voxels({} occupied of {:?})",
                v.fine.occupied, v.fine.grid.dims
            ),
        }
    }
}

impl RegionSpec {
    /// Coordinate-aligned box: exponential cube with the standard basis.
    /// On flat catalog metrics this is literally the coordinate box.
    pub fn coordinate_box(center: &DVector<f64>, side: f64) -> Self {
        let n = center.len();
        RegionSpec {
            kind: RegionKind::ExpCube {
                x0: center.clone(),
                basis: DMatrix::identity(n, n),
                delta: side,
            },
        }
    }

    pub fn exp_cube(x0: DVector<f64>, basis: DMatrix<f64>, delta: f64) -> Self {
        RegionSpec {
            kind: RegionKind::ExpCube { x0, basis, delta },
        }
    }

    pub fn image(base: RegionSpec, map: Arc<dyn PointMap>) -> Self {
        RegionSpec {
            kind: RegionKind::Image {
                base: Box::new(base),
                map,
            },
        }
    }

    /// Corner points of the region (exp images of the tangent-cube
    /// corners, mapped through any image maps).
    pub fn corner_points(
        &self,
        st: &WeightedSpacetime,
        opts: &FlowOptions,
    ) -> Result<Vec<DVector<f64>>, GeodesicError> {
        match &self.kind {
            RegionKind::ExpCube { x0, basis, delta } => {
                if *delta == 0.0 {
                    return Ok(vec![x0.clone()]);
                }
                let n = x0.len();
                let mut out = Vec::with_capacity(1 << n);
                for signs in sampling::corner_signs(n) {
                    let v = cube_vector(basis, *delta, &signs);
                    out.push(geodesics::exp_map(st, x0, &v, 1.0, opts)?);
                }
                Ok(out)
            }
            RegionKind::Image { base, map } => {
                let corners = base.corner_points(st, opts)?;
                corners
                    .into_iter()
                    .map(|c| {
                        map.apply(st, &c, opts)
                            .map_err(|_| GeodesicError::NoConvergence {
                                iterations: 0,
                                residual: f64::NAN,
                            })
                    })
                    .collect()
            }
            RegionKind::Voxels(v) => {
                let centers = v.fine.occupied_centers();
                if centers.is_empty() {
                    return Ok(Vec::new());
                }
                let n = centers[0].len();
                let mut lo = centers[0].clone();
                let mut hi = centers[0].clone();
                for c in &centers {
                    for i in 0..n {
                        lo[i] = lo[i].min(c[i]);
                        hi[i] = hi[i].max(c[i]);
                    }
                }
                let mut out = Vec::new();
                for signs in sampling::corner_signs(n) {
                    let target =
                        DVector::from_fn(n, |i, _| if signs[i] > 0.0 { hi[i] } else { lo[i] });
                    // nearest occupied center to each bounding corner
                    let best = centers
                        .iter()
                        .min_by(|a, b| {
                            let da = (*a - &target).norm_squared();
                            let db = (*b - &target).norm_squared();
                            da.partial_cmp(&db).unwrap()
                        })
                        .unwrap();
                    out.push(best.clone());
                }
                Ok(out)
            }
        }
    }

    /// Deterministic quasi-random interior point, indexed.
    pub fn interior_point(
        &self,
        st: &WeightedSpacetime,
        index: u64,
        opts: &FlowOptions,
    ) -> Result<DVector<f64>, GeodesicError> {
        let dim = self.ambient_dim();
        let u = geodesics::unit_sample(index, dim);
        self.point_from_unit(st, &u, opts)
    }

    pub fn ambient_dim(&self) -> usize {
        match &self.kind {
            RegionKind::ExpCube { x0, .. } => x0.len(),
            RegionKind::Image { base, .. } => base.ambient_dim(),
            RegionKind::Voxels(v) => v.fine.grid.dims.len(),
        }
    }

    /// Maps unit-cube coordinates to a region point (quasi-random pair
    /// sampling feeds independent unit coordinates per region).
    pub fn point_from_unit(
        &self,
        st: &WeightedSpacetime,
        u: &[f64],
        opts: &FlowOptions,
    ) -> Result<DVector<f64>, GeodesicError> {
        match &self.kind {
            RegionKind::ExpCube { x0, basis, delta } => {
                let n = x0.len();
                let mut v = DVector::zeros(n);
                for i in 0..n {
                    v += (u[i] - 0.5) * *delta * basis.column(i);
                }
                geodesics::exp_map(st, x0, &v, 1.0, opts)
            }
            RegionKind::Image { base, map } => {
                let p = base.point_from_unit(st, u, opts)?;
                map.apply(st, &p, opts)
                    .map_err(|_| GeodesicError::NoConvergence {
                        iterations: 0,
                        residual: f64::NAN,
                    })
            }
            RegionKind::Voxels(v) => {
                let centers = v.fine.occupied_centers();
                if centers.is_empty() {
                    return Err(GeodesicError::EmptyRegion);
                }
                let pick = ((u[0] * centers.len() as f64) as usize).min(centers.len() - 1);
                Ok(centers[pick].clone())
            }
        }
    }

    /// Exact membership test for analytic regions. Voxel regions answer
    /// by cell occupancy.
    pub fn contains(
        &self,
        st: &WeightedSpacetime,
        p: &DVector<f64>,
        opts: &FlowOptions,
    ) -> Result<bool, RegionError> {
        match &self.kind {
            RegionKind::ExpCube { x0, basis, delta } => {
                if *delta == 0.0 {
                    return Ok((p - x0).amax() < 1e-14);
                }
                let log = match geodesics::log_map(st, x0, p, opts) {
                    Ok(l) => l,
                    Err(_) => return Ok(false),
                };
                let lu = basis.clone().lu();
                let a = lu.solve(&log.tangent.v).ok_or(RegionError::MapInversion)?;
                let half = 0.5 * *delta * (1.0 + 1e-12) + 1e-15;
                Ok(a.iter().all(|ai| ai.abs() <= half))
            }
            RegionKind::Image { base, map } => {
                let anchor = base.anchor_point();
                let jac = map.jacobian_hint(st, &anchor, opts)?;
                let lu = jac.lu();
                // quasi-Newton inversion with the fixed anchor Jacobian
                let f_anchor = map.apply(st, &anchor, opts)?;
                let step = lu
                    .solve(&(&f_anchor - p))
                    .ok_or(RegionError::MapInversion)?;
                let mut z = &anchor - step;
                let scale = 1.0 + p.amax();
                for _ in 0..60 {
                    let fz = map.apply(st, &z, opts)?;
                    let r = &fz - p;
                    if r.amax() < 1e-11 * scale {
                        return base.contains(st, &z, opts);
                    }
                    let step = lu.solve(&r).ok_or(RegionError::MapInversion)?;
                    z -= step;
                }
                Err(RegionError::MapInversion)
            }
            RegionKind::Voxels(v) => Ok(v.fine.contains_point(p)),
        }
    }

    fn anchor_point(&self) -> DVector<f64> {
        match &self.kind {
            RegionKind::ExpCube { x0, .. } => x0.clone(),
            RegionKind::Image { base, .. } => base.anchor_point(),
            RegionKind::Voxels(v) => v.fine.grid.center(),
        }
    }

    /// Boundary sample points (corners plus edge subdivisions) used to
    /// size grids.
    fn hull_samples(
        &self,
        st: &WeightedSpacetime,
        opts: &FlowOptions,
    ) -> Result<Vec<DVector<f64>>, RegionError> {
        match &self.kind {
            RegionKind::ExpCube { x0, basis, delta } => {
                if *delta == 0.0 {
                    return Err(RegionError::EmptyRegion);
                }
                let n = x0.len();
                let corners = sampling::corner_signs(n);
                let mut tangent_pts: Vec<DVector<f64>> = Vec::new();
                for signs in &corners {
                    tangent_pts.push(cube_vector(basis, *delta, signs));
                }
                // edge subdivisions between corners differing in one axis
                for (a_idx, sa) in corners.iter().enumerate() {
                    for sb in corners.iter().skip(a_idx + 1) {
                        let diff: usize = sa.iter().zip(sb).filter(|(x, y)| x != y).count();
                        if diff == 1 {
                            let va = cube_vector(basis, *delta, sa);
                            let vb = cube_vector(basis, *delta, sb);
                            for w in [0.25, 0.5, 0.75] {
                                tangent_pts.push((1.0 - w) * &va + w * &vb);
                            }
                        }
                    }
                }
                tangent_pts
                    .iter()
                    .map(|v| geodesics::exp_map(st, x0, v, 1.0, opts).map_err(RegionError::from))
                    .collect()
            }
            RegionKind::Image { base, map } => {
                let pts = base.hull_samples(st, opts)?;
                pts.into_iter().map(|p| map.apply(st, &p, opts)).collect()
            }
            RegionKind::Voxels(v) => Ok(v.fine.occupied_centers()),
        }
    }
}

fn cube_vector(basis: &DMatrix<f64>, delta: f64, signs: &[f64]) -> DVector<f64> {
    let n = signs.len();
    let mut v = DVector::zeros(n);
    for i in 0..n {
        v += signs[i] * 0.5 * delta * basis.column(i);
    }
    v
}

// ---------------------------------------------------------------------
// Voxel grids

/// Rectangular grid of cells covering a box.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin: DVector<f64>,
    pub pitch: Vec<f64>,
    pub dims: Vec<usize>,
}

impl VoxelGrid {
    /// Grid over `[lo, hi]` with per-axis pitch snapped to the span:
    /// `m_i = max(1, round(span_i / voxel_side))`.
    pub fn fit(lo: &DVector<f64>, hi: &DVector<f64>, voxel_side: f64) -> Self {
        let n = lo.len();
        let mut pitch = Vec::with_capacity(n);
        let mut dims = Vec::with_capacity(n);
        for i in 0..n {
            let span = (hi[i] - lo[i]).max(0.0);
            let m = ((span / voxel_side).round() as usize).max(1);
            dims.push(m);
            pitch.push(if span > 0.0 {
                span / m as f64
            } else {
                voxel_side
            });
        }
        VoxelGrid {
            origin: lo.clone(),
            pitch,
            dims,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.pitch.iter().product()
    }

    /// Geometric-mean pitch, the effective "voxel side" of a snapped grid.
    pub fn mean_pitch(&self) -> f64 {
        self.pitch
            .iter()
            .product::<f64>()
            .powf(1.0 / self.pitch.len() as f64)
    }

    pub fn linear_of_cell(&self, idx: &[usize]) -> usize {
        let mut lin = 0;
        for (i, &k) in idx.iter().enumerate() {
            lin = lin * self.dims[i] + k;
        }
        lin
    }

    pub fn cell_of_linear(&self, mut lin: usize) -> Vec<usize> {
        let n = self.dims.len();
        let mut idx = vec![0; n];
        for i in (0..n).rev() {
            idx[i] = lin % self.dims[i];
            lin /= self.dims[i];
        }
        idx
    }

    pub fn center_of_linear(&self, lin: usize) -> DVector<f64> {
        let idx = self.cell_of_linear(lin);
        DVector::from_fn(self.dims.len(), |i, _| {
            self.origin[i] + (idx[i] as f64 + 0.5) * self.pitch[i]
        })
    }

    pub fn cell_of_point(&self, p: &DVector<f64>) -> Option<usize> {
        let n = self.dims.len();
        let mut idx = vec![0usize; n];
        for i in 0..n {
            let u = (p[i] - self.origin[i]) / self.pitch[i];
            if u < 0.0 {
                return None;
            }
            let k = u as usize;
            if k >= self.dims[i] {
                // points exactly on the upper face belong to the last cell
                if u <= self.dims[i] as f64 * (1.0 + 1e-12) {
                    idx[i] = self.dims[i] - 1;
                    continue;
                }
                return None;
            }
            idx[i] = k;
        }
        Some(self.linear_of_cell(&idx))
    }

    fn center(&self) -> DVector<f64> {
        DVector::from_fn(self.dims.len(), |i, _| {
            self.origin[i] + 0.5 * self.pitch[i] * self.dims[i] as f64
        })
    }
}

/// Occupancy bitmap over a grid.
#[derive(Debug, Clone)]
pub struct VoxelSet {
    pub grid: VoxelGrid,
    bits: Vec<u64>,
    pub occupied: usize,
}

impl VoxelSet {
    pub fn empty(grid: VoxelGrid) -> Self {
        let words = grid.cell_count().div_ceil(64);
        VoxelSet {
            grid,
            bits: vec![0; words],
            occupied: 0,
        }
    }

    pub fn insert_linear(&mut self, lin: usize) {
        let (w, b) = (lin / 64, lin % 64);
        if self.bits[w] & (1 << b) == 0 {
            self.bits[w] |= 1 << b;
            self.occupied += 1;
        }
    }

    pub fn contains_linear(&self, lin: usize) -> bool {
        let (w, b) = (lin / 64, lin % 64);
        self.bits[w] & (1 << b) != 0
    }

    pub fn insert_point(&mut self, p: &DVector<f64>) -> bool {
        match self.grid.cell_of_point(p) {
            Some(lin) => {
                self.insert_linear(lin);
                true
            }
            None => false,
        }
    }

    pub fn contains_point(&self, p: &DVector<f64>) -> bool {
        self.grid
            .cell_of_point(p)
            .map(|lin| self.contains_linear(lin))
            .unwrap_or(false)
    }

    pub fn is_subset_of(&self, other: &VoxelSet) -> Result<bool, RegionError> {
        if self.grid != other.grid {
            return Err(RegionError::GridMismatch);
        }
        Ok(self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0))
    }

    pub fn iter_occupied(&self) -> impl Iterator<Item = usize> + '_ {
        let total = self.grid.cell_count();
        (0..total).filter(move |lin| self.contains_linear(*lin))
    }

    pub fn occupied_centers(&self) -> Vec<DVector<f64>> {
        self.iter_occupied()
            .map(|lin| self.grid.center_of_linear(lin))
            .collect()
    }

    /// Dilation by a Euclidean chart ball of the given radius (the
    /// background metric is the chart Euclidean metric). The grid is
    /// extended so the dilated set fits.
    pub fn dilate(&self, radius: f64) -> VoxelSet {
        if radius <= 0.0 {
            return self.clone();
        }
        let n = self.grid.dims.len();
        let ext: Vec<usize> = self
            .grid
            .pitch
            .iter()
            .map(|p| (radius / p).ceil() as usize + 1)
            .collect();
        let new_grid = VoxelGrid {
            origin: DVector::from_fn(n, |i, _| {
                self.grid.origin[i] - ext[i] as f64 * self.grid.pitch[i]
            }),
            pitch: self.grid.pitch.clone(),
            dims: (0..n).map(|i| self.grid.dims[i] + 2 * ext[i]).collect(),
        };
        // stencil of offsets whose center distance is within the radius
        let mut stencil: Vec<Vec<i64>> = Vec::new();
        let ranges: Vec<i64> = ext.iter().map(|e| *e as i64).collect();
        let mut offset: Vec<i64> = ranges.iter().map(|r| -r).collect();
        'outer: loop {
            let d2: f64 = offset
                .iter()
                .enumerate()
                .map(|(i, o)| (*o as f64 * self.grid.pitch[i]).powi(2))
                .sum();
            if d2.sqrt() <= radius + 1e-15 {
                stencil.push(offset.clone());
            }
            let mut axis = n;
            loop {
                if axis == 0 {
                    break 'outer;
                }
                axis -= 1;
                offset[axis] += 1;
                if offset[axis] <= ranges[axis] {
                    break;
                }
                offset[axis] = -ranges[axis];
            }
        }
        let mut out = VoxelSet::empty(new_grid);
        for lin in self.iter_occupied() {
            let idx = self.grid.cell_of_linear(lin);
            for off in &stencil {
                let mut nidx = Vec::with_capacity(n);
                let mut ok = true;
                for i in 0..n {
                    let k = idx[i] as i64 + off[i] + ext[i] as i64;
                    if k < 0 || k as usize >= out.grid.dims[i] {
                        ok = false;
                        break;
                    }
                    nidx.push(k as usize);
                }
                if ok {
                    let lin2 = out.grid.linear_of_cell(&nidx);
                    out.insert_linear(lin2);
                }
            }
        }
        out
    }
}

/// Voxelizations at three resolutions (fine, 2x coarser, 4x coarser).
#[derive(Debug, Clone)]
pub struct VoxelLevels {
    pub fine: VoxelSet,
    pub mid: Option<VoxelSet>,
    pub coarse: Option<VoxelSet>,
    /// Metadata for interpolant regions.
    pub meta: Option<InterpolantMeta>,
}

/// How an interpolant voxel set was produced.
#[derive(Debug, Clone)]
pub struct InterpolantMeta {
    pub t: f64,
    pub pairs_requested: usize,
    pub pairs_used: usize,
    pub non_timelike_pairs: usize,
    /// All rasterized interpolation points (for containment checks).
    pub points: Vec<DVector<f64>>,
}

// ---------------------------------------------------------------------
// Volume estimation

/// Weighted volume estimate with its refinement history.
#[derive(Debug, Clone)]
pub struct VolumeEstimate {
    pub value: f64,
    /// Effective voxel side of the finest grid.
    pub voxel_side: f64,
    pub voxel_count: usize,
    /// `(voxel_side, value)` from coarsest to finest, ending at `value`.
    pub history: Vec<(f64, f64)>,
    /// Refinement gaps nonincreasing from coarse to fine.
    pub monotone: bool,
}

impl VolumeEstimate {
    /// Gap between the finest and the next-coarser estimate.
    pub fn refinement_gap(&self) -> f64 {
        if self.history.len() < 2 {
            return 0.0;
        }
        let m = self.history.len();
        (self.history[m - 1].1 - self.history[m - 2].1).abs()
    }

    /// Richardson-style extrapolation from the last two levels, with the
    /// apparent order estimated from all three when available.
    pub fn extrapolated(&self) -> f64 {
        let m = self.history.len();
        if m < 2 {
            return self.value;
        }
        let vf = self.history[m - 1].1;
        let vm = self.history[m - 2].1;
        if m < 3 {
            return vf + (vf - vm);
        }
        let vc = self.history[m - 3].1;
        let g1 = (vm - vc).abs();
        let g2 = (vf - vm).abs();
        if g2 < 1e-300 {
            return vf;
        }
        let p = (g1 / g2).log2().clamp(0.5, 4.0);
        vf + (vf - vm) / ((2f64).powf(p) - 1.0)
    }
}

fn default_levels(voxel_side: f64) -> [f64; 3] {
    [4.0 * voxel_side, 2.0 * voxel_side, voxel_side]
}

/// Weighted volume of a region: sum of `density(center) * cell_volume`
/// over occupied cells, at `voxel_side` with a 2x/4x-coarser history.
pub fn measure(
    st: &WeightedSpacetime,
    region: &RegionSpec,
    voxel_side: f64,
    opts: &FlowOptions,
) -> Result<VolumeEstimate, RegionError> {
    match &region.kind {
        RegionKind::Voxels(levels) => {
            if levels.fine.occupied == 0 {
                return Err(RegionError::EmptyRegion);
            }
            let mut history = Vec::new();
            if let Some(coarse) = &levels.coarse {
                history.push((coarse.grid.mean_pitch(), weighted_sum(st, coarse)?));
            }
            if let Some(mid) = &levels.mid {
                history.push((mid.grid.mean_pitch(), weighted_sum(st, mid)?));
            }
            let value = weighted_sum(st, &levels.fine)?;
            history.push((levels.fine.grid.mean_pitch(), value));
            Ok(finish_estimate(value, &levels.fine, history))
        }
        _ => {
            let (lo, hi) = region_bbox(st, region, opts)?;
            let mut history = Vec::new();
            let mut final_set: Option<VoxelSet> = None;
            for side in default_levels(voxel_side) {
                let grid = VoxelGrid::fit(&lo, &hi, side);
                let set = voxelize_analytic(st, region, grid, opts)?;
                let value = weighted_sum(st, &set)?;
                history.push((set.grid.mean_pitch(), value));
                final_set = Some(set);
            }
            let set = final_set.expect("levels nonempty");
            if set.occupied == 0 {
                return Err(RegionError::EmptyRegion);
            }
            let value = history.last().unwrap().1;
            Ok(finish_estimate(value, &set, history))
        }
    }
}

fn finish_estimate(value: f64, set: &VoxelSet, history: Vec<(f64, f64)>) -> VolumeEstimate {
    let monotone = if history.len() >= 3 {
        (history[1].1 - history[0].1).abs() + 1e-12 >= (history[2].1 - history[1].1).abs()
    } else {
        true
    };
    VolumeEstimate {
        value,
        voxel_side: set.grid.mean_pitch(),
        voxel_count: set.occupied,
        history,
        monotone,
    }
}

fn region_bbox(
    st: &WeightedSpacetime,
    region: &RegionSpec,
    opts: &FlowOptions,
) -> Result<(DVector<f64>, DVector<f64>), RegionError> {
    let samples = region.hull_samples(st, opts)?;
    if samples.is_empty() {
        return Err(RegionError::EmptyRegion);
    }
    let n = samples[0].len();
    let mut lo = samples[0].clone();
    let mut hi = samples[0].clone();
    for s in &samples {
        for i in 0..n {
            lo[i] = lo[i].min(s[i]);
            hi[i] = hi[i].max(s[i]);
        }
    }
    // tiny symmetric pad against roundoff on the faces
    for i in 0..n {
        let pad = 1e-12 * (1.0 + hi[i].abs().max(lo[i].abs()));
        lo[i] -= pad;
        hi[i] += pad;
    }
    Ok((lo, hi))
}

/// Classifies every cell center of `grid` through exact membership.
pub fn voxelize_analytic(
    st: &WeightedSpacetime,
    region: &RegionSpec,
    grid: VoxelGrid,
    opts: &FlowOptions,
) -> Result<VoxelSet, RegionError> {
    let total = grid.cell_count();
    let flags: Result<Vec<bool>, RegionError> = (0..total)
        .into_par_iter()
        .map(|lin| {
            let c = grid.center_of_linear(lin);
            region.contains(st, &c, opts)
        })
        .collect();
    let flags = flags?;
    let mut set = VoxelSet::empty(grid);
    for (lin, inside) in flags.iter().enumerate() {
        if *inside {
            set.insert_linear(lin);
        }
    }
    Ok(set)
}

fn weighted_sum(st: &WeightedSpacetime, set: &VoxelSet) -> Result<f64, RegionError> {
    let cell_vol = set.grid.cell_volume();
    let occupied: Vec<usize> = set.iter_occupied().collect();
    let densities: Result<Vec<f64>, RegionError> = occupied
        .par_iter()
        .map(|lin| {
            let c = set.grid.center_of_linear(*lin);
            st.measure_density(c.as_slice()).map_err(RegionError::from)
        })
        .collect();
    // deterministic summation in cell order
    Ok(densities?.iter().sum::<f64>() * cell_vol)
}

/// Weighted volume of an explicit voxel set (shared-grid comparisons).
pub fn voxel_set_measure(st: &WeightedSpacetime, set: &VoxelSet) -> Result<f64, RegionError> {
    weighted_sum(st, set)
}

/// Rasterizes explicit points into a grid.
pub fn rasterize_points(grid: VoxelGrid, points: &[DVector<f64>]) -> VoxelSet {
    let mut set = VoxelSet::empty(grid);
    for p in points {
        set.insert_point(p);
    }
    set
}

/// Parameters for geodesic-interpolant construction.
#[derive(Debug, Clone)]
pub struct InterpolantParams {
    pub t: f64,
    /// Quasi-random pair budget (split between bulk and corner blocks).
    pub pair_samples: usize,
    pub voxel_side: f64,
    /// Extra explicit pairs, e.g. the transport diagonal `(x, T(x))`.
    pub extra_pairs: Vec<(DVector<f64>, DVector<f64>)>,
}

/// Builds the geodesic interpolant region between `a` and `b` at
/// parameter `t`: rasterizes interpolation points of sampled pairs whose
/// connecting geodesic is future-directed timelike. Pairs that are not
/// timelike are counted and skipped.
pub fn interpolant_region(
    st: &WeightedSpacetime,
    a: &RegionSpec,
    b: &RegionSpec,
    params: &InterpolantParams,
    opts: &FlowOptions,
) -> Result<RegionSpec, RegionError> {
    let n = a.ambient_dim();
    let t = params.t;
    let corners_a = a.corner_points(st, opts)?;
    let corners_b = b.corner_points(st, opts)?;

    // sampling plan: 60% bulk pairs, the rest split across corner blocks
    let bulk = (params.pair_samples * 6) / 10;
    let corner_blocks = corners_a.len() + corners_b.len();
    let per_block = (params.pair_samples - bulk)
        .checked_div(corner_blocks)
        .unwrap_or(0);

    #[derive(Clone)]
    enum PairSpec {
        Bulk(u64),
        CornerB(usize, u64),
        CornerA(usize, u64),
        CornerCorner(usize, usize),
        Explicit(usize),
    }

    let mut plan: Vec<PairSpec> = Vec::with_capacity(params.pair_samples);
    // exact corner pairs pin the extremes of the interpolant
    for ci in 0..corners_a.len() {
        for cj in 0..corners_b.len() {
            plan.push(PairSpec::CornerCorner(ci, cj));
        }
    }
    for i in 0..bulk {
        plan.push(PairSpec::Bulk(i as u64));
    }
    for (ci, _) in corners_b.iter().enumerate() {
        for i in 0..per_block {
            plan.push(PairSpec::CornerB(ci, i as u64));
        }
    }
    for (ci, _) in corners_a.iter().enumerate() {
        for i in 0..per_block {
            plan.push(PairSpec::CornerA(ci, i as u64));
        }
    }
    for i in 0..params.extra_pairs.len() {
        plan.push(PairSpec::Explicit(i));
    }

    let results: Vec<Result<Option<DVector<f64>>, RegionError>> = plan
        .par_iter()
        .map(|spec| {
            let (x, y) = match spec {
                PairSpec::Bulk(i) => {
                    let u = sampling::halton(*i, 2 * n);
                    let x = a.point_from_unit(st, &u[..n], opts)?;
                    let y = b.point_from_unit(st, &u[n..], opts)?;
                    (x, y)
                }
                PairSpec::CornerB(ci, i) => {
                    // offset streams keep corner-block samples distinct
                    let u = sampling::halton(1_000_000 + *i, n);
                    let x = a.point_from_unit(st, &u, opts)?;
                    (x, corners_b[*ci].clone())
                }
                PairSpec::CornerA(ci, i) => {
                    let u = sampling::halton(2_000_000 + *i, n);
                    let y = b.point_from_unit(st, &u, opts)?;
                    (corners_a[*ci].clone(), y)
                }
                PairSpec::CornerCorner(ci, cj) => (corners_a[*ci].clone(), corners_b[*cj].clone()),
                PairSpec::Explicit(i) => params.extra_pairs[*i].clone(),
            };
            let log = geodesics::log_map(st, &x, &y, opts).map_err(RegionError::from)?;
            let sep =
                geodesics::separation_of_velocity(st, &log.tangent).map_err(RegionError::from)?;
            if !sep.is_timelike() {
                return Ok(None);
            }
            let p =
                geodesics::exp_map(st, &x, &log.tangent.v, t, opts).map_err(RegionError::from)?;
            Ok(Some(p))
        })
        .collect();

    let mut points = Vec::with_capacity(plan.len());
    let mut non_timelike = 0usize;
    for r in results {
        match r? {
            Some(p) => points.push(p),
            None => non_timelike += 1,
        }
    }
    if points.is_empty() {
        return Err(RegionError::EmptyRegion);
    }

    // grids snapped to the sampled bounding box
    let mut lo = points[0].clone();
    let mut hi = points[0].clone();
    for p in &points {
        for i in 0..n {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let fine = rasterize_points(VoxelGrid::fit(&lo, &hi, params.voxel_side), &points);
    let mid = rasterize_points(VoxelGrid::fit(&lo, &hi, 2.0 * params.voxel_side), &points);
    let coarse = rasterize_points(VoxelGrid::fit(&lo, &hi, 4.0 * params.voxel_side), &points);

    Ok(RegionSpec {
        kind: RegionKind::Voxels(VoxelLevels {
            fine,
            mid: Some(mid),
            coarse: Some(coarse),
            meta: Some(InterpolantMeta {
                t,
                pairs_requested: plan.len(),
                pairs_used: points.len(),
                non_timelike_pairs: non_timelike,
                points,
            }),
        }),
    })
}

/// Cube of side `delta` at `x0` in the eigenbasis of the tidal operator
/// of `v0`, pushed through the exponential map.
pub fn eigen_cube(
    st: &WeightedSpacetime,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    delta: f64,
    opts: &FlowOptions,
) -> Result<RegionSpec, RegionError> {
    let op = crate::jacobi::tidal_operator(st, x0, v0, opts)
        .map_err(|e| RegionError::Eigen(e.to_string()))?;
    let n = st.dim();
    let mut basis = DMatrix::zeros(n, n);
    for (i, vec) in op.eigenvectors.iter().enumerate() {
        basis.set_column(i, vec);
    }
    Ok(RegionSpec::exp_cube(x0.clone(), basis, delta))
}

/// Image of a region under a point map, generator recorded.
pub fn map_region(region: &RegionSpec, map: Arc<dyn PointMap>) -> RegionSpec {
    RegionSpec::image(region.clone(), map)
}

/// Fattens a region by a Euclidean chart ball: voxelizes analytic
/// regions at `voxel_side`, then dilates the bitmap.
pub fn fatten(
    st: &WeightedSpacetime,
    region: &RegionSpec,
    radius: f64,
    voxel_side: f64,
    opts: &FlowOptions,
) -> Result<RegionSpec, RegionError> {
    let base = match &region.kind {
        RegionKind::Voxels(levels) => levels.fine.clone(),
        _ => {
            let (lo, hi) = region_bbox(st, region, opts)?;
            let grid = VoxelGrid::fit(&lo, &hi, voxel_side);
            voxelize_analytic(st, region, grid, opts)?
        }
    };
    let dilated = base.dilate(radius);
    Ok(RegionSpec {
        kind: RegionKind::Voxels(VoxelLevels {
            fine: dilated,
            mid: None,
            coarse: None,
            meta: None,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn opts() -> FlowOptions {
        FlowOptions::default()
    }

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn flat_cube_volume() {
        let st = catalog::minkowski(2);
        let delta = 0.4;
        let region = RegionSpec::coordinate_box(&dv(&[0.0, 0.0]), delta);
        let est = measure(&st, &region, delta / 64.0, &opts()).unwrap();
        let want = delta * delta;
        assert!(
            (est.value - want).abs() < 1e-3 * want,
            "got {} want {want}",
            est.value
        );
    }

    #[test]
    fn zero_extent_region_is_empty() {
        let st = catalog::minkowski(2);
        let region = RegionSpec::coordinate_box(&dv(&[0.0, 0.0]), 0.0);
        assert!(matches!(
            measure(&st, &region, 0.01, &opts()),
            Err(RegionError::EmptyRegion)
        ));
    }

    #[test]
    fn weighted_unit_cube_volume() {
        // integral of exp(-x0) over [0,1]^2 = 1 - 1/e
        let st = catalog::weighted_minkowski(2, 1.0, 3.0);
        let region = RegionSpec::coordinate_box(&dv(&[0.5, 0.5]), 1.0);
        let est = measure(&st, &region, 1.0 / 64.0, &opts()).unwrap();
        let want = 1.0 - (-1.0f64).exp();
        assert!(
            (est.value - want).abs() < 1e-3 * want,
            "got {} want {want}",
            est.value
        );
        // Richardson-extrapolated value is tighter
        assert!((est.extrapolated() - want).abs() < 2e-5 * want);
    }

    #[test]
    fn eigencube_corners_match_exp_of_corner_vectors() {
        let st = catalog::warped2();
        let x0 = dv(&[0.0, 0.0]);
        let basis = st.orthonormal_frame(x0.as_slice(), None).unwrap();
        let delta = 0.2;
        let region = RegionSpec::exp_cube(x0.clone(), basis.clone(), delta);
        let corners = region.corner_points(&st, &opts()).unwrap();
        assert_eq!(corners.len(), 4);
        for (signs, corner) in sampling::corner_signs(2).iter().zip(&corners) {
            let v = cube_vector(&basis, delta, signs);
            let direct = geodesics::exp_map(&st, &x0, &v, 1.0, &opts()).unwrap();
            assert!((corner - direct).amax() < 1e-8);
        }
    }

    #[test]
    fn translated_image_preserves_volume() {
        let st = catalog::minkowski(2);
        let delta = 0.3;
        let region = RegionSpec::coordinate_box(&dv(&[0.0, 0.0]), delta);
        let shifted = map_region(&region, Arc::new(Translation(dv(&[1.0, 0.2]))));
        let v0 = measure(&st, &region, delta / 32.0, &opts()).unwrap();
        let v1 = measure(&st, &shifted, delta / 32.0, &opts()).unwrap();
        assert!((v0.value - v1.value).abs() < 1e-9);
    }

    #[test]
    fn linear_image_scales_volume() {
        let st = catalog::minkowski(2);
        let delta = 0.3;
        let alpha = -0.5;
        let lam = 0.2;
        let region = RegionSpec::coordinate_box(&dv(&[0.0, 0.0]), delta);
        let scale = 1.0 + alpha * lam;
        let map = LinearMap {
            anchor: dv(&[0.0, 0.0]),
            matrix: scale * DMatrix::identity(2, 2),
        };
        let image = map_region(&region, Arc::new(map));
        let v0 = measure(&st, &region, delta / 48.0, &opts()).unwrap();
        let v1 = measure(&st, &image, delta / 48.0, &opts()).unwrap();
        let want = v0.value * scale * scale;
        assert!(
            (v1.value - want).abs() < 2e-3 * want,
            "got {} want {want}",
            v1.value
        );
    }

    #[test]
    fn interpolant_of_translated_cubes() {
        // B = A + z timelike: interpolant at t is A + t z, same volume
        let st = catalog::minkowski(2);
        let delta = 0.4;
        let a = RegionSpec::coordinate_box(&dv(&[0.0, 0.0]), delta);
        let b = RegionSpec::coordinate_box(&dv(&[1.0, 0.0]), delta);
        let params = InterpolantParams {
            t: 0.5,
            pair_samples: 1 << 15,
            voxel_side: delta / 32.0,
            extra_pairs: vec![],
        };
        let g = interpolant_region(&st, &a, &b, &params, &opts()).unwrap();
        let est = measure(&st, &g, delta / 32.0, &opts()).unwrap();
        let want = delta * delta;
        assert!(
            (est.value - want).abs() < 0.03 * want,
            "got {} want {want}",
            est.value
        );
        if let RegionKind::Voxels(levels) = &g.kind {
            let meta = levels.meta.as_ref().unwrap();
            assert_eq!(meta.non_timelike_pairs, 0);
        } else {
            panic!("expected voxel region");
        }
    }

    #[test]
    fn interpolant_endpoints() {
        let st = catalog::minkowski(2);
        let delta = 0.2;
        let a = RegionSpec::coordinate_box(&dv(&[0.0, 0.0]), delta);
        let b = RegionSpec::coordinate_box(&dv(&[0.8, 0.1]), delta);
        for (t, reference) in [(0.0, &a), (1.0, &b)] {
            let params = InterpolantParams {
                t,
                pair_samples: 4096,
                voxel_side: delta / 16.0,
                extra_pairs: vec![],
            };
            let g = interpolant_region(&st, &a, &b, &params, &opts()).unwrap();
            let est = measure(&st, &g, delta / 16.0, &opts()).unwrap();
            let vref = measure(&st, reference, delta / 16.0, &opts()).unwrap();
            // within one voxel layer of the endpoint region
            assert!(
                (est.value - vref.value).abs() <= 2.0 * vref.value / 16.0,
                "t={t}: {} vs {}",
                est.value,
                vref.value
            );
        }
    }

    #[test]
    fn monotone_under_inclusion_on_shared_grid() {
        let st = catalog::minkowski(2);
        let grid = VoxelGrid::fit(&dv(&[0.0, 0.0]), &dv(&[1.0, 1.0]), 1.0 / 32.0);
        let inner = RegionSpec::coordinate_box(&dv(&[0.5, 0.5]), 0.4);
        let outer = RegionSpec::coordinate_box(&dv(&[0.5, 0.5]), 0.8);
        let vi = voxelize_analytic(&st, &inner, grid.clone(), &opts()).unwrap();
        let vo = voxelize_analytic(&st, &outer, grid, &opts()).unwrap();
        assert!(vi.is_subset_of(&vo).unwrap());
        let mi = weighted_sum(&st, &vi).unwrap();
        let mo = weighted_sum(&st, &vo).unwrap();
        assert!(mi <= mo);
    }

    #[test]
    fn fatten_cube_steiner() {
        let st = catalog::minkowski(2);
        let delta = 0.4;
        let region = RegionSpec::coordinate_box(&dv(&[0.0, 0.0]), delta);
        let h = delta / 64.0;
        let r = 4.0 * h;
        let fat = fatten(&st, &region, r, h, &opts()).unwrap();
        let est = measure(&st, &fat, h, &opts()).unwrap();
        // Euclidean Steiner for a square: (d + 2r)^2 up to corner rounding;
        // voxel tolerance dominates at this resolution
        let want = (delta + 2.0 * r) * (delta + 2.0 * r);
        assert!(
            (est.value - want).abs() < 8.0 * h * (delta + 2.0 * r),
            "got {} want {want}",
            est.value
        );
        // radius 0 is the identity
        let same = fatten(&st, &region, 0.0, h, &opts()).unwrap();
        let est0 = measure(&st, &same, h, &opts()).unwrap();
        let plain = measure(&st, &region, h, &opts()).unwrap();
        assert!((est0.value - plain.value).abs() < 1e-12);
    }

    #[test]
    fn fatten_slope_tracks_perimeter() {
        // (vol(fattened) - vol) / r approaches the perimeter as r halves
        let st = catalog::minkowski(2);
        let delta = 0.4;
        let region = RegionSpec::coordinate_box(&dv(&[0.0, 0.0]), delta);
        let h = delta / 128.0;
        let base = measure(&st, &region, h, &opts()).unwrap().value;
        let mut slopes = Vec::new();
        for r in [16.0 * h, 8.0 * h] {
            let fat = fatten(&st, &region, r, h, &opts()).unwrap();
            let v = measure(&st, &fat, h, &opts()).unwrap().value;
            slopes.push((v - base) / r);
        }
        let perimeter = 4.0 * delta;
        for s in &slopes {
            assert!(
                (s - perimeter).abs() < 0.25 * perimeter,
                "slope {s} vs perimeter {perimeter}"
            );
        }
    }

    #[test]
    fn refinement_history_shrinks_for_analytic_regions() {
        let st = catalog::weighted_minkowski(2, 1.0, 3.0);
        let region = RegionSpec::coordinate_box(&dv(&[0.3, 0.2]), 0.5);
        let est = measure(&st, &region, 0.5 / 64.0, &opts()).unwrap();
        assert_eq!(est.history.len(), 3);
        let g1 = (est.history[1].1 - est.history[0].1).abs();
        let g2 = (est.history[2].1 - est.history[1].1).abs();
        assert!(g2 <= g1 + 1e-9, "gaps {g1} then {g2}");
    }

    #[test]
    fn interpolant_measure_monotone_in_samples() {
        let st = catalog::minkowski(2);
        let delta = 0.3;
        let a = RegionSpec::coordinate_box(&dv(&[0.0, 0.0]), delta);
        let b = RegionSpec::coordinate_box(&dv(&[1.0, 0.0]), delta);
        // shared grid across sample counts
        let lo = dv(&[0.33, -0.17]);
        let hi = dv(&[0.69, 0.19]);
        let grid = VoxelGrid::fit(&lo, &hi, delta / 16.0);
        let mut last = 0.0;
        for samples in [1024usize, 4096, 16384] {
            let params = InterpolantParams {
                t: 0.5,
                pair_samples: samples,
                voxel_side: delta / 16.0,
                extra_pairs: vec![],
            };
            let g = interpolant_region(&st, &a, &b, &params, &opts()).unwrap();
            if let RegionKind::Voxels(levels) = &g.kind {
                let meta = levels.meta.as_ref().unwrap();
                let set = rasterize_points(grid.clone(), &meta.points);
                let v = weighted_sum(&st, &set).unwrap();
                assert!(v + 1e-12 >= last, "inner estimate decreased: {v} < {last}");
                last = v;
            }
        }
    }
}
