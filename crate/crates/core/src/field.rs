//! Maps `S^2 -> S^2` sampled on two overlapping stereographic chart grids.
//!
//! Each chart carries an `N x N` grid over `[-L, L]^2`, node `(i, j)` sitting at
//! `z = (-L + i h) + i(-L + j h)` with `h = 2L/(N - 1)`, stored row-major with `i`
//! fastest. Three nested zones per chart drive everything else:
//!
//! * owned, `|z| <= 1` (North) or `|w| < 1` (South): the chart that integrates a node;
//! * evolved, `|z| <= rho_e` with `rho_e = (1 + L)/2`: nodes the flow updates in place;
//! * synced, everything outside the evolved disk: overwritten by cubic
//!   interpolation from the partner chart.
//!
//! Integrals do not use ownership directly: each chart weights its nodes by a smooth
//! partition of unity in `log|z|` supported in the evolved disk, so a smooth integrand
//! is summed with no jagged cut at `|z| = 1`.
//!
//! Synced nodes only ever read evolved partner nodes, so synchronization is a
//! projection and applying it twice is bit-identical to applying it once.

use crate::analytic::MapSource;
use crate::error::{HmError, Result};
use crate::geometry::{chart_transition, sphere_to_stereo, stereo_to_vec, ChartId, SpherePoint};
use crate::vec3::Vec3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const DEFAULT_HALF_WIDTH: f64 = 1.2;

/// Accuracy of the centered difference stencils used by every kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StencilOrder {
    /// 3-point first derivatives, 5-point Laplacian.
    Second,
    /// 5-point first derivatives, 9-point cross Laplacian.
    #[default]
    Fourth,
}

impl StencilOrder {
    /// Nodes needed on each side of a stencil center.
    pub fn reach(self) -> usize {
        match self {
            StencilOrder::Second => 1,
            StencilOrder::Fourth => 2,
        }
    }

    /// Spectral radius of the 2D Laplacian stencil times `h^2`.
    pub fn laplacian_radius(self) -> f64 {
        match self {
            StencilOrder::Second => 8.0,
            StencilOrder::Fourth => 64.0 / 6.0,
        }
    }

    pub fn from_int(k: u32) -> Option<StencilOrder> {
        match k {
            2 => Some(StencilOrder::Second),
            4 => Some(StencilOrder::Fourth),
            _ => None,
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            StencilOrder::Second => 2,
            StencilOrder::Fourth => 4,
        }
    }
}
pub const MIN_POINTS: usize = 65;

/// One cubic read from the partner chart.
#[derive(Debug, Clone, Copy)]
/// Tensor cubic interpolant: rows `base + b n`, columns `+a`, weight `wx[a] wy[b]`.
struct SyncEntry {
    target: usize,
    base: usize,
    wx: [f64; 4],
    wy: [f64; 4],
}

/// Static geometry shared by every field with the same `(N, L)`.
#[derive(Debug)]
pub struct GridLayout {
    n: usize,
    order: StencilOrder,
    half_width: f64,
    h: f64,
    evolve_radius: f64,
    /// `sigma(z)^2` per node, identical for both charts.
    sigma_sq: Vec<f64>,
    owned_north: Vec<bool>,
    owned_south: Vec<bool>,
    /// Partition-of-unity quadrature weight, the same function of `|z|` in both charts.
    quad_weight: Vec<f64>,
    evolved: Vec<bool>,
    evolved_rows: Vec<std::ops::Range<usize>>,
    /// Plans for refilling the North (index 0) and South (index 1) synced nodes.
    sync: [Vec<SyncEntry>; 2],
}

impl GridLayout {
    pub fn new(n: usize, half_width: f64) -> Result<Arc<GridLayout>> {
        Self::with_order(n, half_width, StencilOrder::default())
    }

    pub fn with_order(n: usize, half_width: f64, order: StencilOrder) -> Result<Arc<GridLayout>> {
        if n < MIN_POINTS || n.is_multiple_of(2) {
            return Err(HmError::InvalidGrid(format!(
                "N = {n} must be odd and at least {MIN_POINTS}"
            )));
        }
        if !(half_width > 1.0 && half_width <= 2.0) {
            return Err(HmError::InvalidGrid(format!(
                "chart half-width L = {half_width} must lie in (1, 2]"
            )));
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        let evolve_radius = 0.5 * (1.0 + half_width);
        if evolve_radius + order.reach() as f64 * h >= half_width {
            return Err(HmError::InvalidGrid(format!(
                "overlap band too narrow: N = {n}, L = {half_width}"
            )));
        }
        let mut sigma_sq = Vec::with_capacity(n * n);
        let mut owned_north = Vec::with_capacity(n * n);
        let mut owned_south = Vec::with_capacity(n * n);
        let mut quad_weight = Vec::with_capacity(n * n);
        let blend = evolve_radius.ln();
        let mut evolved = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let z = node_coord(n, half_width, h, i, j);
                let r2 = z.norm_sqr();
                let s = 2.0 / (1.0 + r2);
                sigma_sq.push(s * s);
                owned_north.push(r2 <= 1.0);
                owned_south.push(r2 < 1.0);
                quad_weight.push(partition_weight(0.5 * r2.ln(), blend));
                evolved.push(r2 <= evolve_radius * evolve_radius);
            }
        }
        let mut layout = GridLayout {
            n,
            order,
            half_width,
            h,
            evolve_radius,
            sigma_sq,
            owned_north,
            owned_south,
            quad_weight,
            evolved_rows: Vec::new(),
            evolved,
            sync: [Vec::new(), Vec::new()],
        };
        layout.evolved_rows = (0..n)
            .map(|j| {
                let row = &layout.evolved[j * n..(j + 1) * n];
                match row.iter().position(|&e| e) {
                    Some(a) => a..n - row.iter().rev().position(|&e| e).expect("nonempty"),
                    None => 0..0,
                }
            })
            .collect();
        for chart in [ChartId::North, ChartId::South] {
            let plan = layout.build_sync_plan(chart)?;
            layout.sync[chart_slot(chart)] = plan;
        }
        Ok(Arc::new(layout))
    }

    fn build_sync_plan(&self, chart: ChartId) -> Result<Vec<SyncEntry>> {
        let n = self.n;
        let mut plan = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let idx = j * n + i;
                if self.evolved[idx] {
                    continue;
                }
                let z = self.coord(i, j);
                let w = chart_transition(z, chart)?;
                let (sources, _) = self.cubic_stencil(w);
                if sources.iter().any(|&s| !self.evolved[s]) {
                    return Err(HmError::InvalidGrid(format!(
                        "overlap band too narrow for N = {n}: synced node reads a synced node"
                    )));
                }
                let ((i0, wx), (j0, wy)) = self.cubic_axes(w);
                plan.push(SyncEntry {
                    target: idx,
                    base: j0 * n + i0,
                    wx,
                    wy,
                });
            }
        }
        Ok(plan)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[inline]
    pub fn order(&self) -> StencilOrder {
        self.order
    }

    /// Largest diffusivity `1/sigma^2` over evolved nodes.
    pub fn max_diffusivity(&self) -> f64 {
        let r2 = self.evolve_radius * self.evolve_radius;
        (0.5 * (1.0 + r2)).powi(2)
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn evolve_radius(&self) -> f64 {
        self.evolve_radius
    }

    #[inline]
    pub fn coord(&self, i: usize, j: usize) -> Complex64 {
        node_coord(self.n, self.half_width, self.h, i, j)
    }

    #[inline]
    pub fn sigma_sq(&self, idx: usize) -> f64 {
        self.sigma_sq[idx]
    }

    #[inline]
    pub fn owned(&self, chart: ChartId, idx: usize) -> bool {
        match chart {
            ChartId::North => self.owned_north[idx],
            ChartId::South => self.owned_south[idx],
        }
    }

    /// Weight of a node in chart integrals. `w(z) + w(1/z) = 1`, and `w` vanishes
    /// outside the evolved disk.
    #[inline]
    pub fn quad_weight(&self, idx: usize) -> f64 {
        self.quad_weight[idx]
    }

    #[inline]
    pub fn evolved(&self, idx: usize) -> bool {
        self.evolved[idx]
    }

    /// Column range of the evolved nodes in row `j` (the evolved set is a disk).
    #[inline]
    pub fn evolved_row(&self, j: usize) -> std::ops::Range<usize> {
        self.evolved_rows[j].clone()
    }

    /// Nodes far enough from the grid edge for the centered stencils.
    #[inline]
    pub fn interior(&self, i: usize, j: usize) -> bool {
        let k = self.order.reach();
        i >= k && j >= k && i + k < self.n && j + k < self.n
    }

    /// Domain point of a node.
    #[inline]
    pub fn domain_point(&self, chart: ChartId, i: usize, j: usize) -> Vec3 {
        stereo_to_vec(self.coord(i, j), chart)
    }

    /// Corner indices and bilinear weights of the cell containing chart coordinate `s`.
    /// Coordinates outside the grid are clamped to the boundary cells.
    pub fn bilinear_stencil(&self, s: Complex64) -> ([usize; 4], [f64; 4]) {
        let n = self.n;
        let fx = ((s.re + self.half_width) / self.h).clamp(0.0, (n - 1) as f64);
        let fy = ((s.im + self.half_width) / self.h).clamp(0.0, (n - 1) as f64);
        let i0 = (fx.floor() as usize).min(n - 2);
        let j0 = (fy.floor() as usize).min(n - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let base = j0 * n + i0;
        (
            [base, base + 1, base + n, base + n + 1],
            [
                (1.0 - tx) * (1.0 - ty),
                tx * (1.0 - ty),
                (1.0 - tx) * ty,
                tx * ty,
            ],
        )
    }

    /// Tensor-product cubic Lagrange stencil (4 x 4 nodes) around chart coordinate `s`.
    /// Fourth-order accurate, so synced values do not pollute second differences.
    pub fn cubic_stencil(&self, s: Complex64) -> ([usize; 16], [f64; 16]) {
        let n = self.n;
        let ((i0, wx), (j0, wy)) = self.cubic_axes(s);
        let mut src = [0usize; 16];
        let mut w = [0.0; 16];
        for b in 0..4 {
            for a in 0..4 {
                src[4 * b + a] = (j0 + b) * n + i0 + a;
                w[4 * b + a] = wx[a] * wy[b];
            }
        }
        (src, w)
    }

    /// First index and Lagrange weights of the cubic stencil along each axis.
    fn cubic_axes(&self, s: Complex64) -> ((usize, [f64; 4]), (usize, [f64; 4])) {
        let n = self.n;
        let axis = |x: f64| -> (usize, [f64; 4]) {
            let f = (x + self.half_width) / self.h;
            let i0 = (f.floor().max(1.0) as usize).min(n - 3);
            let t = f - i0 as f64;
            (
                i0 - 1,
                [
                    -t * (t - 1.0) * (t - 2.0) / 6.0,
                    (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
                    -(t + 1.0) * t * (t - 2.0) / 2.0,
                    (t + 1.0) * t * (t - 1.0) / 6.0,
                ],
            )
        };
        (axis(s.re), axis(s.im))
    }

    /// Chart owning a sphere point and its coordinate there (`|z| <= 1` goes North).
    pub fn owning_chart(p: SpherePoint) -> (ChartId, Complex64) {
        if let Ok(z) = sphere_to_stereo(p, ChartId::North) {
            if z.norm_sqr() <= 1.0 {
                return (ChartId::North, z);
            }
        }
        let w = sphere_to_stereo(p, ChartId::South).expect("points with |z| > 1 are South-regular");
        (ChartId::South, w)
    }
}

/// `1 - smoothstep5((x + a)/(2a))` in `x = log|z|`; odd symmetry of the smoothstep
/// gives `w(x) + w(-x) = 1`.
fn partition_weight(x: f64, a: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 1.0;
    }
    1.0 - crate::analytic::smoothstep5((x + a) / (2.0 * a))
}

#[inline]
fn node_coord(n: usize, l: f64, h: f64, i: usize, j: usize) -> Complex64 {
    debug_assert!(i < n && j < n);
    Complex64::new(-l + i as f64 * h, -l + j as f64 * h)
}

#[inline]
pub(crate) fn chart_slot(chart: ChartId) -> usize {
    match chart {
        ChartId::North => 0,
        ChartId::South => 1,
    }
}

/// Values of the map on one chart grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartGrid {
    pub chart: ChartId,
    pub values: Vec<Vec3>,
}

/// A map of the sphere on the two-chart grid.
#[derive(Debug, Clone)]
pub struct MapField {
    layout: Arc<GridLayout>,
    pub north: ChartGrid,
    pub south: ChartGrid,
}

impl PartialEq for MapField {
    fn eq(&self, other: &Self) -> bool {
        self.n() == other.n()
            && self.half_width() == other.half_width()
            && self.layout.order() == other.layout.order()
            && self.north == other.north
            && self.south == other.south
    }
}

impl MapField {
    /// Assembles a field from raw chart values (North first), renormalizing every node.
    pub fn from_values(
        n: usize,
        half_width: f64,
        north: Vec<Vec3>,
        south: Vec<Vec3>,
    ) -> Result<MapField> {
        let layout = GridLayout::new(n, half_width)?;
        if north.len() != n * n || south.len() != n * n {
            return Err(HmError::InvalidGrid(format!(
                "expected {} values per chart",
                n * n
            )));
        }
        let check = |vals: Vec<Vec3>, chart: ChartId| -> Result<Vec<Vec3>> {
            vals.into_iter()
                .enumerate()
                .map(|(idx, v)| {
                    let u = v.normalized();
                    if !u.is_finite() || u.norm_sq() == 0.0 {
                        Err(HmError::NonFinite {
                            chart,
                            i: idx % n,
                            j: idx / n,
                        })
                    } else {
                        Ok(u)
                    }
                })
                .collect()
        };
        Ok(MapField {
            north: ChartGrid {
                chart: ChartId::North,
                values: check(north, ChartId::North)?,
            },
            south: ChartGrid {
                chart: ChartId::South,
                values: check(south, ChartId::South)?,
            },
            layout,
        })
    }

    /// Builds a field from stored values without renormalizing (bit-exact reload).
    pub(crate) fn from_raw(layout: Arc<GridLayout>, north: Vec<Vec3>, south: Vec<Vec3>) -> MapField {
        MapField {
            layout,
            north: ChartGrid {
                chart: ChartId::North,
                values: north,
            },
            south: ChartGrid {
                chart: ChartId::South,
                values: south,
            },
        }
    }

    #[inline]
    pub fn layout(&self) -> &Arc<GridLayout> {
        &self.layout
    }

    /// Same values on a layout with a different stencil order.
    pub fn with_stencil(mut self, order: StencilOrder) -> Result<MapField> {
        if order != self.layout.order {
            self.layout = GridLayout::with_order(self.n(), self.half_width(), order)?;
        }
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.layout.n
    }

    #[inline]
    pub fn half_width(&self) -> f64 {
        self.layout.half_width
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.layout.h
    }

    pub fn chart(&self, chart: ChartId) -> &ChartGrid {
        match chart {
            ChartId::North => &self.north,
            ChartId::South => &self.south,
        }
    }

    pub fn chart_mut(&mut self, chart: ChartId) -> &mut ChartGrid {
        match chart {
            ChartId::North => &mut self.north,
            ChartId::South => &mut self.south,
        }
    }

    #[inline]
    pub fn value(&self, chart: ChartId, i: usize, j: usize) -> Vec3 {
        self.chart(chart).values[j * self.n() + i]
    }

    /// Largest `| |u| - 1 |` over all nodes.
    pub fn max_norm_deviation(&self) -> f64 {
        self.north
            .values
            .iter()
            .chain(&self.south.values)
            .map(|v| (v.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Bilinear sample of one chart at coordinate `s`, not renormalized.
    pub fn sample_chart(&self, chart: ChartId, s: Complex64) -> Vec3 {
        let (src, w) = self.layout.bilinear_stencil(s);
        let vals = &self.chart(chart).values;
        vals[src[0]] * w[0] + vals[src[1]] * w[1] + vals[src[2]] * w[2] + vals[src[3]] * w[3]
    }

    /// Overwrites every synced node with the renormalized cubic interpolant of the
    /// partner chart's evolved nodes.
    pub fn sync_overlap(&mut self) {
        let layout = Arc::clone(&self.layout);
        for chart in [ChartId::North, ChartId::South] {
            let plan = &layout.sync[chart_slot(chart)];
            let (target, source) = match chart {
                ChartId::North => (&mut self.north.values, &self.south.values),
                ChartId::South => (&mut self.south.values, &self.north.values),
            };
            let n = layout.n;
            for e in plan {
                let mut v = Vec3::ZERO;
                for (b, &wy) in e.wy.iter().enumerate() {
                    let row = &source[e.base + b * n..e.base + b * n + 4];
                    let r = row[0] * e.wx[0] + row[1] * e.wx[1] + row[2] * e.wx[2] + row[3] * e.wx[3];
                    v += r * wy;
                }
                target[e.target] = v.normalized();
            }
        }
    }

    /// Value-returning form of [`MapField::sync_overlap`].
    pub fn synced(mut self) -> MapField {
        self.sync_overlap();
        self
    }

    /// Largest gap between a node with `1/L <= |z| <= L` and the partner chart's
    /// interpolant at the same sphere point.
    pub fn overlap_defect(&self) -> f64 {
        let n = self.n();
        let l = self.half_width();
        let mut worst: f64 = 0.0;
        for chart in [ChartId::North, ChartId::South] {
            for j in 0..n {
                for i in 0..n {
                    let z = self.layout.coord(i, j);
                    let r = z.norm();
                    if r < 1.0 / l || r > l {
                        continue;
                    }
                    let w = z.inv();
                    let other = self.sample_chart(chart.other(), w).normalized();
                    worst = worst.max((self.value(chart, i, j) - other).norm());
                }
            }
        }
        worst
    }
}

/// Fills both charts by exact evaluation of `source`.
pub fn sample_field<S: MapSource + ?Sized>(source: &S, n: usize, half_width: f64) -> Result<MapField> {
    sample_field_with(source, n, half_width, StencilOrder::default())
}

pub fn sample_field_with<S: MapSource + ?Sized>(
    source: &S,
    n: usize,
    half_width: f64,
    order: StencilOrder,
) -> Result<MapField> {
    let layout = GridLayout::with_order(n, half_width, order)?;
    let fill = |chart: ChartId| -> Result<Vec<Vec3>> {
        let rows: Vec<Result<Vec<Vec3>>> = (0..n)
            .into_par_iter()
            .map(|j| {
                (0..n)
                    .map(|i| {
                        let v = source.value(chart, layout.coord(i, j))?.normalized();
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(HmError::NonFinite { chart, i, j })
                        }
                    })
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(n * n);
        for r in rows {
            out.extend(r?);
        }
        Ok(out)
    };
    let north = fill(ChartId::North)?;
    let south = fill(ChartId::South)?;
    Ok(MapField::from_raw(layout, north, south))
}

/// Bilinear interpolation in the owning chart, renormalized.
pub fn interpolate(field: &MapField, p: SpherePoint) -> SpherePoint {
    let (chart, s) = GridLayout::owning_chart(p);
    SpherePoint::from_vec(field.sample_chart(chart, s).normalized())
}

/// `N -> 2N - 1` on the same chart square: old nodes are injected at even indices,
/// new nodes are bilinear midpoints, all renormalized.
pub fn refine(field: &MapField) -> Result<MapField> {
    let n = field.n();
    let m = 2 * n - 1;
    let layout = GridLayout::with_order(m, field.half_width(), field.layout.order())?;
    let refine_chart = |vals: &[Vec3]| -> Vec<Vec3> {
        let at = |i: usize, j: usize| vals[j * n + i];
        let mut out = Vec::with_capacity(m * m);
        for jj in 0..m {
            for ii in 0..m {
                let (i, j) = (ii / 2, jj / 2);
                let v = match (ii % 2, jj % 2) {
                    (0, 0) => at(i, j),
                    (1, 0) => ((at(i, j) + at(i + 1, j)) * 0.5).normalized(),
                    (0, 1) => ((at(i, j) + at(i, j + 1)) * 0.5).normalized(),
                    _ => ((at(i, j) + at(i + 1, j) + at(i, j + 1) + at(i + 1, j + 1)) * 0.25)
                        .normalized(),
                };
                out.push(v);
            }
        }
        out
    };
    Ok(MapField::from_raw(
        layout,
        refine_chart(&field.north.values),
        refine_chart(&field.south.values),
    ))
}
