//! Energy densities, region energies, degree, tension and the repulsion norm.
//!
//! All kernels work chart-wise with centered differences of the layout's order. Integrals weight
//! nodes by `sigma^2 h^2` times the chart partition of unity and sum in a fixed order
//! (rows in parallel, each row sequentially, then rows in index order), so results do
//! not depend on the worker count.

use crate::error::{HmError, Result};
use crate::field::{chart_slot, GridLayout, MapField, StencilOrder};
use crate::geometry::{ChartId, Region, SpherePoint};
use crate::vec3::Vec3;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

const CHARTS: [ChartId; 2] = [ChartId::North, ChartId::South];

/// Which energy density to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Density {
    /// `e = e_d + e_dbar`
    Total,
    /// holomorphic part `e_d`
    Holo,
    /// antiholomorphic part `e_dbar`
    Anti,
}

/// Per-chart `e`, `e_d`, `e_dbar`. Nodes too close to the grid edge for a centered
/// stencil hold 0.
#[derive(Debug, Clone)]
pub struct DensityField {
    layout: Arc<GridLayout>,
    e: [Vec<f64>; 2],
    e_d: [Vec<f64>; 2],
    e_dbar: [Vec<f64>; 2],
}

impl DensityField {
    pub fn layout(&self) -> &Arc<GridLayout> {
        &self.layout
    }

    pub fn values(&self, which: Density, chart: ChartId) -> &[f64] {
        let k = chart_slot(chart);
        match which {
            Density::Total => &self.e[k],
            Density::Holo => &self.e_d[k],
            Density::Anti => &self.e_dbar[k],
        }
    }

    /// Largest value of `e` over owned nodes.
    pub fn max_owned(&self) -> f64 {
        let mut m: f64 = 0.0;
        for chart in CHARTS {
            for (idx, v) in self.values(Density::Total, chart).iter().enumerate() {
                if self.layout.owned(chart, idx) {
                    m = m.max(*v);
                }
            }
        }
        m
    }

    /// Bilinear sample of a density at a sphere point, in the owning chart.
    pub fn sample(&self, which: Density, p: SpherePoint) -> Result<f64> {
        let (chart, s) = GridLayout::owning_chart(p);
        let (src, w) = self.layout.bilinear_stencil(s);
        let n = self.layout.n();
        let l = self.layout.half_width();
        if s.re.abs() > l || s.im.abs() > l || src.iter().any(|&k| !self.layout.interior(k % n, k / n)) {
            return Err(HmError::CircleOutOfRange(s.norm()));
        }
        let v = self.values(which, chart);
        Ok(v[src[0]] * w[0] + v[src[1]] * w[1] + v[src[2]] * w[2] + v[src[3]] * w[3])
    }
}

/// Centered difference stencils on a row-major `n x n` chart with spacing `h`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    n: usize,
    order: StencilOrder,
    c1: f64,
    c2: f64,
}

impl Stencil {
    pub(crate) fn new(layout: &GridLayout) -> Stencil {
        let h = layout.spacing();
        let order = layout.order();
        let (c1, c2) = match order {
            StencilOrder::Second => (0.5 / h, 1.0 / (h * h)),
            StencilOrder::Fourth => (1.0 / (12.0 * h), 1.0 / (12.0 * h * h)),
        };
        Stencil { n: layout.n(), order, c1, c2 }
    }

    #[inline(always)]
    fn d1(&self, v: &[Vec3], idx: usize, d: usize) -> Vec3 {
        match self.order {
            StencilOrder::Second => (v[idx + d] - v[idx - d]) * self.c1,
            StencilOrder::Fourth => {
                ((v[idx + d] - v[idx - d]) * 8.0 - v[idx + 2 * d] + v[idx - 2 * d]) * self.c1
            }
        }
    }

    #[inline(always)]
    fn d2(&self, v: &[Vec3], idx: usize, d: usize) -> Vec3 {
        let u = v[idx];
        match self.order {
            StencilOrder::Second => (v[idx + d] + v[idx - d] - u * 2.0) * self.c2,
            StencilOrder::Fourth => {
                ((v[idx + d] + v[idx - d]) * 16.0 - v[idx + 2 * d] - v[idx - 2 * d] - u * 30.0)
                    * self.c2
            }
        }
    }

    /// Centered first derivatives at an interior node.
    #[inline(always)]
    pub(crate) fn gradient(&self, v: &[Vec3], idx: usize) -> (Vec3, Vec3) {
        (self.d1(v, idx, 1), self.d1(v, idx, self.n))
    }

    /// Raw tension `(Lap u + |grad u|^2 u) / sigma^2` at an interior node.
    #[inline(always)]
    pub(crate) fn tension(&self, v: &[Vec3], idx: usize, sigma_sq: f64) -> Vec3 {
        let u = v[idx];
        let (ux, uy) = self.gradient(v, idx);
        let lap = self.d2(v, idx, 1) + self.d2(v, idx, self.n);
        (lap + u * (ux.norm_sq() + uy.norm_sq())) * (1.0 / sigma_sq)
    }
}

/// `(e_d, e_dbar)` from the chart derivatives.
#[inline]
fn split_density(u: Vec3, ux: Vec3, uy: Vec3, sigma_sq: f64) -> (f64, f64) {
    let j = u.cross(uy);
    let scale = 0.25 / sigma_sq;
    ((ux - j).norm_sq() * scale, (ux + j).norm_sq() * scale)
}

pub fn energy_density(field: &MapField) -> DensityField {
    let layout = Arc::clone(field.layout());
    let n = layout.n();
    let st = Stencil::new(&layout);
    let mut e: [Vec<f64>; 2] = [vec![0.0; n * n], vec![0.0; n * n]];
    let mut e_d: [Vec<f64>; 2] = [vec![0.0; n * n], vec![0.0; n * n]];
    let mut e_dbar: [Vec<f64>; 2] = [vec![0.0; n * n], vec![0.0; n * n]];
    for chart in CHARTS {
        let k = chart_slot(chart);
        let vals = &field.chart(chart).values;
        e[k].par_chunks_mut(n)
            .zip(e_d[k].par_chunks_mut(n))
            .zip(e_dbar[k].par_chunks_mut(n))
            .enumerate()
            .for_each(|(j, ((er, dr), br))| {
                for i in 0..n {
                    if !layout.interior(i, j) {
                        continue;
                    }
                    let idx = j * n + i;
                    let (ux, uy) = st.gradient(vals, idx);
                    let (a, b) = split_density(vals[idx], ux, uy, layout.sigma_sq(idx));
                    dr[i] = a;
                    br[i] = b;
                    er[i] = a + b;
                }
            });
    }
    DensityField {
        layout,
        e,
        e_d,
        e_dbar,
    }
}

/// Deterministic quadrature `sum w f(chart, i, j, idx)` over both charts with the
/// partition-of-unity weights `w`.
pub(crate) fn quadrature_sum<F>(layout: &GridLayout, f: F) -> f64
where
    F: Fn(ChartId, usize, usize, usize) -> f64 + Sync,
{
    let n = layout.n();
    let mut total = 0.0;
    for chart in CHARTS {
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut acc = 0.0;
                for i in 0..n {
                    let idx = j * n + i;
                    let w = layout.quad_weight(idx);
                    if w > 0.0 {
                        acc += w * f(chart, i, j, idx);
                    }
                }
                acc
            })
            .collect();
        for r in rows {
            total += r;
        }
    }
    total
}

/// `sum density * w(p) * sigma^2 h^2` over the sphere, `p` the node's domain point.
pub fn weighted_energy<W>(dens: &DensityField, which: Density, weight: W) -> f64
where
    W: Fn(SpherePoint) -> f64 + Sync,
{
    let layout = &dens.layout;
    let h2 = layout.spacing() * layout.spacing();
    quadrature_sum(layout, |chart, i, j, idx| {
        let v = dens.values(which, chart)[idx];
        if v == 0.0 {
            return 0.0;
        }
        let w = weight(SpherePoint::from_vec(layout.domain_point(chart, i, j)));
        v * w * layout.sigma_sq(idx) * h2
    })
}

pub fn region_energy(dens: &DensityField, region: &Region, which: Density) -> f64 {
    if let Region::WholeSphere = region {
        return weighted_energy(dens, which, |_| 1.0);
    }
    weighted_energy(dens, which, |p| if region.contains(p) { 1.0 } else { 0.0 })
}

/// `(1/4pi) sum u . (u_x x u_y) h^2` over the sphere.
pub fn degree_from_pullback(field: &MapField) -> f64 {
    let layout = field.layout();
    let h = layout.spacing();
    let st = Stencil::new(layout);
    let s = quadrature_sum(layout, |chart, _, _, idx| {
        let vals = &field.chart(chart).values;
        let (ux, uy) = st.gradient(vals, idx);
        vals[idx].dot(ux.cross(uy))
    });
    s * h * h / (4.0 * PI)
}

/// `(E_d - E_dbar) / 4pi` over the whole sphere.
pub fn degree_from_energies(dens: &DensityField) -> f64 {
    let ed = region_energy(dens, &Region::WholeSphere, Density::Holo);
    let eb = region_energy(dens, &Region::WholeSphere, Density::Anti);
    (ed - eb) / (4.0 * PI)
}

/// Nearest integer, ties toward zero.
pub fn round_degree(x: f64) -> i64 {
    let r = x.round();
    if (x - x.trunc()).abs() == 0.5 {
        x.trunc() as i64
    } else {
        r as i64
    }
}

/// Energies of one region. `kappa = E_d - E_dbar` integrates the pulled-back area form,
/// so `kappa = 4pi deg` and `E = kappa + 2 E_dbar`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub region: Region,
    pub energy: f64,
    pub energy_d: f64,
    pub energy_dbar: f64,
    pub kappa: f64,
    pub degree_energy: f64,
    /// Whole-sphere degree, whatever the region.
    pub degree_pullback: f64,
}

pub const REPORT_CSV_HEADER: &str = "region,E,E_d,E_dbar,kappa,degree_energy,degree_pullback";

impl EnergyReport {
    pub fn compute(field: &MapField, region: &Region) -> EnergyReport {
        let dens = energy_density(field);
        Self::from_density(field, &dens, region)
    }

    pub fn from_density(field: &MapField, dens: &DensityField, region: &Region) -> EnergyReport {
        let energy_d = region_energy(dens, region, Density::Holo);
        let energy_dbar = region_energy(dens, region, Density::Anti);
        let kappa = energy_d - energy_dbar;
        EnergyReport {
            region: region.clone(),
            energy: energy_d + energy_dbar,
            energy_d,
            energy_dbar,
            kappa,
            degree_energy: kappa / (4.0 * PI),
            degree_pullback: degree_from_pullback(field),
        }
    }

    /// Flat `key = value` block.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "region = {}", self.region.label());
        let _ = writeln!(s, "E = {:.12e}", self.energy);
        let _ = writeln!(s, "E_d = {:.12e}", self.energy_d);
        let _ = writeln!(s, "E_dbar = {:.12e}", self.energy_dbar);
        let _ = writeln!(s, "kappa = {:.12e}", self.kappa);
        let _ = writeln!(s, "degree_energy = {:.12e}", self.degree_energy);
        let _ = writeln!(s, "degree_pullback = {:.12e}", self.degree_pullback);
        if self.region == Region::WholeSphere {
            let _ = writeln!(s, "degree = {}", round_degree(self.degree_pullback));
        }
        s
    }

    /// One row matching [`REPORT_CSV_HEADER`].
    pub fn to_csv_row(&self) -> String {
        format!(
            "\"{}\",{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            self.region.label(),
            self.energy,
            self.energy_d,
            self.energy_dbar,
            self.kappa,
            self.degree_energy,
            self.degree_pullback
        )
    }
}

/// Tension on both charts. Only interior nodes (see [`GridLayout::interior`]) are valid.
#[derive(Debug, Clone)]
pub struct TensionField {
    layout: Arc<GridLayout>,
    raw: [Vec<Vec3>; 2],
    projected: [Vec<Vec3>; 2],
}

impl TensionField {
    pub fn layout(&self) -> &Arc<GridLayout> {
        &self.layout
    }

    pub fn raw(&self, chart: ChartId) -> &[Vec3] {
        &self.raw[chart_slot(chart)]
    }

    /// Tension with its normal component removed.
    pub fn projected(&self, chart: ChartId) -> &[Vec3] {
        &self.projected[chart_slot(chart)]
    }

    pub fn valid(&self, i: usize, j: usize) -> bool {
        self.layout.interior(i, j)
    }

    /// Largest `|T|` over valid owned nodes.
    pub fn max_norm(&self) -> f64 {
        let n = self.layout.n();
        let mut m: f64 = 0.0;
        for chart in CHARTS {
            for (idx, v) in self.projected(chart).iter().enumerate() {
                if self.layout.owned(chart, idx) && self.valid(idx % n, idx / n) {
                    m = m.max(v.norm());
                }
            }
        }
        m
    }
}

pub fn compute_tension(field: &MapField) -> TensionField {
    let layout = Arc::clone(field.layout());
    let n = layout.n();
    let st = Stencil::new(&layout);
    let mut raw = [vec![Vec3::ZERO; n * n], vec![Vec3::ZERO; n * n]];
    let mut projected = [vec![Vec3::ZERO; n * n], vec![Vec3::ZERO; n * n]];
    for chart in CHARTS {
        let k = chart_slot(chart);
        let vals = &field.chart(chart).values;
        raw[k]
            .par_chunks_mut(n)
            .zip(projected[k].par_chunks_mut(n))
            .enumerate()
            .for_each(|(j, (rr, pr))| {
                for i in 0..n {
                    if !layout.interior(i, j) {
                        continue;
                    }
                    let idx = j * n + i;
                    let t = st.tension(vals, idx, layout.sigma_sq(idx));
                    rr[i] = t;
                    pr[i] = t.tangent_part(vals[idx]);
                }
            });
    }
    TensionField {
        layout,
        raw,
        projected,
    }
}

/// `sqrt(sum |T|^2 sigma^2 h^2)` over the sphere: the `L^2(S^2)` norm.
pub fn tension_l2(t: &TensionField) -> f64 {
    let layout = &t.layout;
    let h2 = layout.spacing() * layout.spacing();
    quadrature_sum(layout, |chart, i, j, idx| {
        if !t.valid(i, j) {
            return 0.0;
        }
        t.projected(chart)[idx].norm_sq() * layout.sigma_sq(idx) * h2
    })
    .sqrt()
}

/// `L^2(S^2)` inner product of the tension with a tangent field given per chart.
pub fn tension_inner(t: &TensionField, north: &[Vec3], south: &[Vec3]) -> f64 {
    let layout = &t.layout;
    let h2 = layout.spacing() * layout.spacing();
    quadrature_sum(layout, |chart, i, j, idx| {
        if !t.valid(i, j) {
            return 0.0;
        }
        let v = match chart {
            ChartId::North => north[idx],
            ChartId::South => south[idx],
        };
        t.projected(chart)[idx].dot(v) * layout.sigma_sq(idx) * h2
    })
}

/// `|| sqrt(e_d e_dbar) ||_{L^q(S^2)}` for `q` in `[1, 2)`.
pub fn repulsion_norm(dens: &DensityField, q: f64) -> Result<f64> {
    if !(1.0..2.0).contains(&q) {
        return Err(HmError::InvalidExponent(q));
    }
    let layout = &dens.layout;
    let h2 = layout.spacing() * layout.spacing();
    let s = quadrature_sum(layout, |chart, _, _, idx| {
        let p = dens.values(Density::Holo, chart)[idx] * dens.values(Density::Anti, chart)[idx];
        if p <= 0.0 {
            return 0.0;
        }
        p.powf(0.5 * q) * layout.sigma_sq(idx) * h2
    });
    Ok(s.powf(1.0 / q))
}

/// Orthonormal frame `(e1, e2)` of the tangent plane at `c`, with `e2 = c x e1`.
/// At the north pole this is `(x, y)`, so the circle parameter matches `arg z`.
pub fn tangent_frame(c: SpherePoint) -> (Vec3, Vec3) {
    let cv = c.vec();
    let mut e1 = Vec3::new(1.0, 0.0, 0.0).tangent_part(cv);
    if e1.norm() < 1e-6 {
        e1 = Vec3::new(0.0, 1.0, 0.0).tangent_part(cv);
    }
    let e1 = e1.normalized();
    (e1, cv.cross(e1))
}

/// Point at stereographic distance `r` from `c` in direction `theta` of [`tangent_frame`].
pub fn circle_point(c: SpherePoint, frame: (Vec3, Vec3), r: f64, theta: f64) -> SpherePoint {
    let g = 2.0 * r.atan();
    let dir = frame.0 * theta.cos() + frame.1 * theta.sin();
    SpherePoint::from_vec((c.vec() * g.cos() + dir * g.sin()).normalized())
}

/// Number of samples used on a circle of stereographic radius `r`.
pub fn circle_samples(r: f64, h: f64) -> usize {
    let k = (2.0 * PI * r / h).ceil() as usize;
    (8 * k).max(64)
}

/// Mean of a density over the circle of stereographic radius `r` around `center`.
pub fn circle_average(dens: &DensityField, center: SpherePoint, r: f64, which: Density) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(HmError::InvalidParams(format!("circle radius {r} must be > 0")));
    }
    let m = circle_samples(r, dens.layout.spacing());
    let frame = tangent_frame(center);
    let mut acc = 0.0;
    for k in 0..m {
        let theta = 2.0 * PI * k as f64 / m as f64;
        acc += dens.sample(which, circle_point(center, frame, r, theta))?;
    }
    Ok(acc / m as f64)
}
