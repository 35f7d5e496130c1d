//! Explicit harmonic map flow `du/dt = T(u)` with trace bookkeeping.

use crate::analytic::{smoothstep5_slope, smoothstep5};
use crate::diagnostics::dist_to_4pi_lattice;
use crate::energetics::{
    compute_tension, energy_density, region_energy, tension_l2, weighted_energy,
    Density, Stencil,
};
use crate::error::{HmError, Result};
use crate::field::MapField;
use crate::geometry::{ChartId, Region, SpherePoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Largest admissible CFL number.
pub const MAX_CFL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub cfl: f64,
    pub t_max: f64,
    /// Stop once `||T||_{L^2}` falls to this value.
    pub tension_stop: f64,
    /// Snapshot interval in time units; 0 keeps only the initial and final fields.
    pub snapshot_every: f64,
    /// Steps between trace rows.
    pub record_every: usize,
    /// Abort once `max e > epsilon0 * energy_blowup_guard / h^2`.
    pub energy_blowup_guard: f64,
    pub epsilon0: f64,
    /// Time label of the initial field (for resumed runs).
    pub t_start: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            cfl: 0.2,
            t_max: 1.0,
            tension_stop: 1e-4,
            snapshot_every: 0.0,
            record_every: 50,
            energy_blowup_guard: 1.0,
            epsilon0: 0.3,
            t_start: 0.0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HmError::InvalidConfig(m));
        if !(self.cfl > 0.0 && self.cfl <= MAX_CFL) {
            return bad(format!("cfl = {} must lie in (0, {MAX_CFL}]", self.cfl));
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return bad(format!("t_max = {} must be finite and >= 0", self.t_max));
        }
        for (name, v) in [
            ("tension_stop", self.tension_stop),
            ("energy_blowup_guard", self.energy_blowup_guard),
            ("epsilon0", self.epsilon0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} = {v} must be > 0"));
            }
        }
        if !(self.snapshot_every.is_finite() && self.snapshot_every >= 0.0) {
            return bad(format!("snapshot_every = {} must be >= 0", self.snapshot_every));
        }
        if self.record_every == 0 {
            return bad("record_every must be >= 1".into());
        }
        if !self.t_start.is_finite() {
            return bad("t_start must be finite".into());
        }
        Ok(())
    }

    /// `cfl * h^2 * sigma_min^2` with `sigma_min = 2/(1 + 2L^2)`.
    pub fn time_step(&self, field: &MapField) -> f64 {
        self.cfl * stability_unit(field)
    }
}

/// `h^2 sigma_min^2`, the time step at CFL number one.
pub fn stability_unit(field: &MapField) -> f64 {
    let h = field.spacing();
    let l = field.half_width();
    let s = 2.0 / (1.0 + 2.0 * l * l);
    h * h * s * s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub energy: f64,
    pub energy_d: f64,
    pub energy_dbar: f64,
    pub delta: f64,
    pub dist4pi: f64,
    pub max_density: f64,
    pub dt: f64,
}

pub const TRACE_CSV_HEADER: &str = "t,E,E_d,E_dbar,delta,dist4pi,max_density,dt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowStatus {
    TmaxReached,
    TensionStop,
    BlowupDetected,
}

impl FlowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowStatus::TmaxReached => "tmax_reached",
            FlowStatus::TensionStop => "tension_stop",
            FlowStatus::BlowupDetected => "blowup_detected",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub step: u64,
    pub field: MapField,
}

#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<Snapshot>,
    pub status: FlowStatus,
    pub steps: u64,
    pub dt: f64,
}

impl FlowTrace {
    pub fn final_field(&self) -> &MapField {
        &self.snapshots.last().expect("runs always archive a final snapshot").field
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(TRACE_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.t, r.energy, r.energy_d, r.energy_dbar, r.delta, r.dist4pi, r.max_density, r.dt
            );
        }
        s
    }

    /// Snapshot recorded at time `t` (to rounding).
    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.t - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    fn span(&self) -> (f64, f64) {
        (self.rows[0].t, self.rows[self.rows.len() - 1].t)
    }
}

/// Largest admissible Euler step: the CFL cap `0.5 h^2 sigma_min^2`, further limited by
/// the explicit stability bound `2 / (max diffusivity * spectral radius)` of the stencil.
pub fn max_step(field: &MapField) -> f64 {
    let layout = field.layout();
    let h = layout.spacing();
    let stable = 2.0 * h * h / (layout.max_diffusivity() * layout.order().laplacian_radius());
    (MAX_CFL * stability_unit(field)).min(stable)
}

/// Forward Euler `u <- normalize(u + dt P_u T(u))` on the evolved nodes, then sync.
pub fn step(field: &MapField, dt: f64) -> Result<MapField> {
    let mut out = field.clone();
    step_into(field, &mut out, dt)?;
    Ok(out)
}

fn step_into(src: &MapField, dst: &mut MapField, dt: f64) -> Result<()> {
    let max = max_step(src);
    if !(dt >= 0.0 && dt <= max) {
        return Err(HmError::StepTooLarge { dt, max });
    }
    let layout = std::sync::Arc::clone(src.layout());
    let n = layout.n();
    let st = Stencil::new(&layout);
    for chart in [ChartId::North, ChartId::South] {
        let vals = &src.chart(chart).values;
        let bad: Option<(usize, usize)> = dst
            .chart_mut(chart)
            .values
            .par_chunks_mut(n)
            .enumerate()
            .map(|(j, row)| {
                let mut bad = None;
                row.copy_from_slice(&vals[j * n..(j + 1) * n]);
                let span = layout.evolved_row(j);
                for (i, slot) in row[span.clone()].iter_mut().enumerate() {
                    let i = i + span.start;
                    let idx = j * n + i;
                    let u = vals[idx];
                    let t = st.tension(vals, idx, layout.sigma_sq(idx))
                        .tangent_part(u);
                    let v = (u + t * dt).normalized();
                    if !v.is_finite() && bad.is_none() {
                        bad = Some((i, j));
                    }
                    *slot = v;
                }
                bad
            })
            .reduce(|| None, |a, b| a.or(b));
        if let Some((i, j)) = bad {
            return Err(HmError::NonFinite { chart, i, j });
        }
    }
    dst.sync_overlap();
    Ok(())
}

fn trace_row(field: &MapField, t: f64, dt: f64) -> TraceRow {
    let dens = energy_density(field);
    let energy_d = region_energy(&dens, &Region::WholeSphere, Density::Holo);
    let energy_dbar = region_energy(&dens, &Region::WholeSphere, Density::Anti);
    let energy = energy_d + energy_dbar;
    TraceRow {
        t,
        energy,
        energy_d,
        energy_dbar,
        delta: tension_l2(&compute_tension(field)),
        dist4pi: dist_to_4pi_lattice(energy).1,
        max_density: dens.max_owned(),
        dt,
    }
}

/// Integrates from `initial` until `t_max`, the tension threshold, or the blow-up guard.
/// The last step is shortened to land on `t_max` exactly.
pub fn run(initial: &MapField, cfg: &FlowConfig) -> Result<FlowTrace> {
    cfg.validate()?;
    let dt = cfg.time_step(initial);
    let h = initial.spacing();
    let guard = cfg.epsilon0 * cfg.energy_blowup_guard / (h * h);
    let t_end = cfg.t_start + cfg.t_max;

    let mut cur = initial.clone();
    let mut next = initial.clone();
    let first = trace_row(&cur, cfg.t_start, 0.0);
    let mut rows = vec![first];
    let mut snapshots = vec![Snapshot {
        t: cfg.t_start,
        step: 0,
        field: cur.clone(),
    }];
    let mut next_snap = cfg.t_start + cfg.snapshot_every;

    let mut status = if first.max_density > guard {
        Some(FlowStatus::BlowupDetected)
    } else if first.delta <= cfg.tension_stop {
        Some(FlowStatus::TensionStop)
    } else if cfg.t_max == 0.0 {
        Some(FlowStatus::TmaxReached)
    } else {
        None
    };

    let mut steps: u64 = 0;
    let mut t = cfg.t_start;
    while status.is_none() {
        let remaining = t_end - t;
        let last = remaining <= dt * (1.0 + 1e-12);
        let this_dt = if last { remaining } else { dt };
        step_into(&cur, &mut next, this_dt)?;
        std::mem::swap(&mut cur, &mut next);
        steps += 1;
        t = if last { t_end } else { cfg.t_start + steps as f64 * dt };

        let snap_due = cfg.snapshot_every > 0.0 && t >= next_snap * (1.0 - 1e-12);
        if last || snap_due || steps.is_multiple_of(cfg.record_every as u64) {
            let row = trace_row(&cur, t, this_dt);
            rows.push(row);
            if row.max_density > guard {
                status = Some(FlowStatus::BlowupDetected);
            } else if row.delta <= cfg.tension_stop {
                status = Some(FlowStatus::TensionStop);
            } else if last {
                status = Some(FlowStatus::TmaxReached);
            }
        }
        if snap_due && status.is_none() {
            snapshots.push(Snapshot {
                t,
                step: steps,
                field: cur.clone(),
            });
            while next_snap <= t * (1.0 + 1e-12) {
                next_snap += cfg.snapshot_every;
            }
        }
    }
    if snapshots.last().map(|s| s.step) != Some(steps) {
        snapshots.push(Snapshot {
            t,
            step: steps,
            field: cur,
        });
    }
    Ok(FlowTrace {
        rows,
        snapshots,
        status: status.expect("loop exits with a status"),
        steps,
        dt,
    })
}

/// Piecewise-linear value of a trace column at `t`.
fn interp(rows: &[TraceRow], t: f64, col: impl Fn(&TraceRow) -> f64) -> f64 {
    let k = rows.partition_point(|r| r.t < t);
    if k == 0 {
        return col(&rows[0]);
    }
    if k >= rows.len() {
        return col(&rows[rows.len() - 1]);
    }
    let (a, b) = (&rows[k - 1], &rows[k]);
    let s = (t - a.t) / (b.t - a.t);
    col(a) + s * (col(b) - col(a))
}

/// Trapezoidal `int_{t1}^{t2} g dt` over trace rows, `g` linear between rows.
fn integrate(rows: &[TraceRow], t1: f64, t2: f64, col: impl Fn(&TraceRow) -> f64 + Copy) -> f64 {
    let mut pts: Vec<(f64, f64)> = vec![(t1, interp(rows, t1, col))];
    for r in rows.iter().filter(|r| r.t > t1 && r.t < t2) {
        pts.push((r.t, col(r)));
    }
    pts.push((t2, interp(rows, t2, col)));
    pts.windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

fn check_window(trace: &FlowTrace, t1: f64, t2: f64) -> Result<()> {
    let (a, b) = trace.span();
    if !(t1 <= t2) || t1 < a || t2 > b {
        return Err(HmError::RangeError(format!(
            "window [{t1}, {t2}] is not inside the trace span [{a}, {b}]"
        )));
    }
    Ok(())
}

/// `|Delta(t2) - Delta(t1) + int delta^2 dt|`.
pub fn energy_identity_residual(trace: &FlowTrace, t1: f64, t2: f64) -> Result<f64> {
    check_window(trace, t1, t2)?;
    if t1 == t2 {
        return Ok(0.0);
    }
    let rows = &trace.rows;
    let de = interp(rows, t2, |r| r.energy) - interp(rows, t1, |r| r.energy);
    let dissipation = integrate(rows, t1, t2, |r| r.delta * r.delta);
    Ok((de + dissipation).abs())
}

/// Radial cutoff `phi` for a region and the sup of its sphere gradient.
#[derive(Debug, Clone)]
pub struct Cutoff {
    region: Region,
    margin: f64,
}

impl Cutoff {
    pub fn new(region: Region, margin: f64) -> Result<Cutoff> {
        region.validate()?;
        if !(margin.is_finite() && margin > 0.0) {
            return Err(HmError::RangeError(format!("cutoff margin {margin} must be > 0")));
        }
        let too_thin = match &region {
            Region::WholeSphere | Region::DiskComplement { .. } => false,
            Region::Disk { radius, .. } => margin >= *radius,
            Region::Annulus {
                inner_radius,
                outer_radius,
                ..
            } => 2.0 * margin >= outer_radius - inner_radius,
        };
        if too_thin {
            return Err(HmError::RangeError(format!(
                "region {} cannot hold a cutoff margin of {margin}",
                region.label()
            )));
        }
        Ok(Cutoff { region, margin })
    }

    /// Rises from 0 at distance `edge` to 1 at `edge + margin` (or falls, with `inward`).
    fn ramp(&self, r: f64, edge: f64, inward: bool) -> f64 {
        let s = if inward {
            (edge - r) / self.margin
        } else {
            (r - edge) / self.margin
        };
        smoothstep5(s)
    }

    pub fn value(&self, p: SpherePoint) -> f64 {
        match &self.region {
            Region::WholeSphere => 1.0,
            Region::Disk { center, radius } => self.ramp(center.stereo_radius_to(p), *radius, true),
            Region::Annulus {
                center,
                inner_radius,
                outer_radius,
            } => {
                let r = center.stereo_radius_to(p);
                self.ramp(r, *inner_radius, false) * self.ramp(r, *outer_radius, true)
            }
            Region::DiskComplement { disks } => disks
                .iter()
                .map(|(c, rad)| self.ramp(c.stereo_radius_to(p), *rad, false))
                .product(),
        }
    }

    /// Upper bound on `|grad phi|` in the round metric: `phi'(r) (1 + r^2)/2`.
    pub fn gradient_sup(&self) -> f64 {
        let slope = smoothstep5_slope(0.5) / self.margin;
        let metric = |r: f64| 0.5 * (1.0 + r * r);
        match &self.region {
            Region::WholeSphere => 0.0,
            Region::Disk { radius, .. } => slope * metric(*radius),
            Region::Annulus { outer_radius, .. } => slope * metric(*outer_radius),
            Region::DiskComplement { disks } => disks
                .iter()
                .map(|(_, r)| slope * metric(r + self.margin))
                .fold(0.0, f64::max),
        }
    }
}

/// Drift of the cut-off antiholomorphic energy between two snapshots, and the
/// right-hand side `sup|grad phi| sqrt(k) int delta dt` it is compared against.
pub fn local_energy_drift(
    trace: &FlowTrace,
    region: &Region,
    margin: f64,
    t1: f64,
    t2: f64,
) -> Result<(f64, f64)> {
    check_window(trace, t1, t2)?;
    let h = trace.snapshots[0].field.spacing();
    if margin < 4.0 * h {
        return Err(HmError::RangeError(format!(
            "cutoff margin {margin} is below 4h = {}",
            4.0 * h
        )));
    }
    let cutoff = Cutoff::new(region.clone(), margin)?;
    let find = |t: f64| {
        trace
            .snapshot_at(t)
            .ok_or_else(|| HmError::RangeError(format!("no snapshot at t = {t}")))
    };
    let (s1, s2) = (find(t1)?, find(t2)?);
    let local = |f: &MapField| {
        let d = energy_density(f);
        weighted_energy(&d, Density::Anti, |p| cutoff.value(p))
    };
    let drift = if t1 == t2 {
        0.0
    } else {
        (local(&s2.field) - local(&s1.field)).abs()
    };
    let e1 = interp(&trace.rows, t1, |r| r.energy);
    let k = (e1 / (4.0 * PI)).ceil().max(1.0);
    let bound = cutoff.gradient_sup() * k.sqrt() * integrate(&trace.rows, t1, t2, |r| r.delta);
    Ok((drift, bound))
}
