//! C ABI over `hmflow`.
//!
//! Handles are opaque and owned by the caller once returned; free them with the matching
//! `*_free`. Every fallible call returns an [`HmStatus`] and, on failure, leaves a message
//! readable through [`hm_last_error`] on the calling thread.

use hmflow::analytic::{Orientation, RationalMapSpec};
use hmflow::energetics::{degree_from_pullback, energy_density, region_energy, compute_tension, tension_l2, Density};
use hmflow::field::{sample_field_with, MapField, StencilOrder};
use hmflow::flow::{run, FlowConfig, FlowStatus, FlowTrace};
use hmflow::geometry::{ChartId, Region};
use hmflow::io::{snapshot, spec_file};
use hmflow::HmError;
use num_complex::Complex64;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Result codes of every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    Numerical = 4,
    Io = 5,
    Format = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// A sampled two-chart map field.
pub struct HmField {
    inner: MapField,
}

/// The result of a flow run.
pub struct HmTrace {
    inner: FlowTrace,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HmEnergy {
    pub energy: f64,
    pub energy_d: f64,
    pub energy_dbar: f64,
    pub kappa: f64,
    pub degree_pullback: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmFlowParams {
    pub cfl: f64,
    pub t_max: f64,
    pub tension_stop: f64,
    pub snapshot_every: f64,
    pub record_every: u64,
    pub energy_blowup_guard: f64,
    pub epsilon0: f64,
    pub t_start: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HmTraceRow {
    pub t: f64,
    pub energy: f64,
    pub energy_d: f64,
    pub energy_dbar: f64,
    pub delta: f64,
    pub dist4pi: f64,
    pub max_density: f64,
    pub dt: f64,
}

/// Flow termination, as reported by [`hm_trace_status`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmFlowStatus {
    TmaxReached = 0,
    TensionStop = 1,
    BlowupDetected = 2,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &HmError) -> HmStatus {
    match e {
        HmError::StepTooLarge { .. } | HmError::NonFinite { .. } => HmStatus::Numerical,
        HmError::Io(_) => HmStatus::Io,
        HmError::Format(_) => HmStatus::Format,
        _ => HmStatus::Validation,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard<F>(f: F) -> HmStatus
where
    F: FnOnce() -> Result<(), (HmStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HmStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {msg}"));
            HmStatus::Panic
        }
    }
}

fn hm(e: HmError) -> (HmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (HmStatus, String) {
    (HmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (HmStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (HmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, v: T) {
    *out = Box::into_raw(Box::new(v));
}

fn order_of(stencil: u32) -> Result<StencilOrder, (HmStatus, String)> {
    StencilOrder::from_int(stencil)
        .ok_or_else(|| (HmStatus::InvalidArgument, format!("stencil order {stencil} is not 2 or 4")))
}

/// Message of the last failed call on this thread; empty when none. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn hm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Samples a map described by spec-file text (TOML) on an `n x n` grid per chart.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_field_from_spec(
    spec: *const c_char,
    n: u32,
    half_width: f64,
    stencil: u32,
    out: *mut *mut HmField,
) -> HmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(spec, "spec")?;
        let map = spec_file::parse_spec(text).map_err(hm)?;
        let f = sample_field_with(&map, n as usize, half_width, order_of(stencil)?)
            .map_err(hm)?
            .synced();
        put(out, HmField { inner: f });
        Ok(())
    })
}

/// Samples `p/q` (or `p(conj z)/q(conj z)` when `antiholomorphic` is nonzero). Coefficients
/// are interleaved `re, im` pairs in ascending degree: `num` holds `2 * num_terms` doubles.
///
/// # Safety
/// `num` and `den` must point to `2 * num_terms` and `2 * den_terms` doubles.
#[no_mangle]
pub unsafe extern "C" fn hm_field_from_rational(
    num: *const f64,
    num_terms: usize,
    den: *const f64,
    den_terms: usize,
    antiholomorphic: i32,
    n: u32,
    half_width: f64,
    stencil: u32,
    out: *mut *mut HmField,
) -> HmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if num.is_null() || den.is_null() {
            return Err(null("coefficients"));
        }
        let read = |p: *const f64, k: usize| -> Vec<Complex64> {
            let s = std::slice::from_raw_parts(p, 2 * k);
            s.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
        };
        let orientation = if antiholomorphic != 0 {
            Orientation::Antiholomorphic
        } else {
            Orientation::Holomorphic
        };
        let spec = RationalMapSpec::new(read(num, num_terms), read(den, den_terms), orientation).map_err(hm)?;
        let f = sample_field_with(&spec, n as usize, half_width, order_of(stencil)?)
            .map_err(hm)?
            .synced();
        put(out, HmField { inner: f });
        Ok(())
    })
}

/// Reads an SPHM snapshot.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_field_load(path: *const c_char, stencil: u32, out: *mut *mut HmField) -> HmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = str_arg(path, "path")?;
        let f = snapshot::load(Path::new(p), order_of(stencil)?).map_err(hm)?;
        put(out, HmField { inner: f });
        Ok(())
    })
}

/// Writes an SPHM snapshot.
///
/// # Safety
/// `field` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hm_field_save(field: *const HmField, path: *const c_char) -> HmStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        let p = str_arg(path, "path")?;
        snapshot::save(Path::new(p), &f.inner).map_err(hm)
    })
}

/// # Safety
/// `field` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hm_field_free(field: *mut HmField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Nodes per chart side.
///
/// # Safety
/// `field` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn hm_field_n(field: *const HmField) -> u32 {
    field.as_ref().map_or(0, |f| f.inner.n() as u32)
}

/// Copies one chart (0 North, 1 South) as `n * n * 3` doubles, row-major with `i` fastest.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hm_field_values(field: *const HmField, chart: u32, buf: *mut f64, len: usize) -> HmStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let chart = match chart {
            0 => ChartId::North,
            1 => ChartId::South,
            c => return Err((HmStatus::InvalidArgument, format!("chart {c} is not 0 or 1"))),
        };
        let vals = &f.inner.chart(chart).values;
        if len < vals.len() * 3 {
            return Err((HmStatus::BufferTooSmall, format!("need {} doubles, got {len}", vals.len() * 3)));
        }
        let dst = std::slice::from_raw_parts_mut(buf, vals.len() * 3);
        for (d, v) in dst.chunks_exact_mut(3).zip(vals) {
            d.copy_from_slice(&v.to_array());
        }
        Ok(())
    })
}

/// Whole-sphere energies and the pullback degree.
///
/// # Safety
/// `field` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_field_energy(field: *const HmField, out: *mut HmEnergy) -> HmStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let dens = energy_density(&f.inner);
        let e_d = region_energy(&dens, &Region::WholeSphere, Density::Holo);
        let e_dbar = region_energy(&dens, &Region::WholeSphere, Density::Anti);
        *out = HmEnergy {
            energy: e_d + e_dbar,
            energy_d: e_d,
            energy_dbar: e_dbar,
            kappa: e_d - e_dbar,
            degree_pullback: degree_from_pullback(&f.inner),
        };
        Ok(())
    })
}

/// `||T||_{L^2}` of the field.
///
/// # Safety
/// `field` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_field_tension_l2(field: *const HmField, out: *mut f64) -> HmStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = tension_l2(&compute_tension(&f.inner));
        Ok(())
    })
}

/// Fills `out` with the library defaults.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_flow_params_default(out: *mut HmFlowParams) -> HmStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = FlowConfig::default();
        *out = HmFlowParams {
            cfl: d.cfl,
            t_max: d.t_max,
            tension_stop: d.tension_stop,
            snapshot_every: d.snapshot_every,
            record_every: d.record_every as u64,
            energy_blowup_guard: d.energy_blowup_guard,
            epsilon0: d.epsilon0,
            t_start: d.t_start,
        };
        Ok(())
    })
}

/// Runs the flow from `field`. The input field is left untouched.
///
/// # Safety
/// All pointers must be valid; `field` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn hm_flow_run(
    field: *const HmField,
    params: *const HmFlowParams,
    out: *mut *mut HmTrace,
) -> HmStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = FlowConfig {
            cfl: p.cfl,
            t_max: p.t_max,
            tension_stop: p.tension_stop,
            snapshot_every: p.snapshot_every,
            record_every: p.record_every as usize,
            energy_blowup_guard: p.energy_blowup_guard,
            epsilon0: p.epsilon0,
            t_start: p.t_start,
        };
        let trace = run(&f.inner, &cfg).map_err(hm)?;
        put(out, HmTrace { inner: trace });
        Ok(())
    })
}

/// # Safety
/// `trace` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hm_trace_free(trace: *mut HmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of trace rows.
///
/// # Safety
/// `trace` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn hm_trace_len(trace: *const HmTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.rows.len())
}

/// # Safety
/// `trace` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_trace_row(trace: *const HmTrace, index: usize, out: *mut HmTraceRow) -> HmStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = t.inner.rows.get(index).ok_or_else(|| {
            (HmStatus::InvalidArgument, format!("row {index} of {}", t.inner.rows.len()))
        })?;
        *out = HmTraceRow {
            t: r.t,
            energy: r.energy,
            energy_d: r.energy_d,
            energy_dbar: r.energy_dbar,
            delta: r.delta,
            dist4pi: r.dist4pi,
            max_density: r.max_density,
            dt: r.dt,
        };
        Ok(())
    })
}

/// # Safety
/// `trace` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_trace_status(trace: *const HmTrace, out: *mut HmFlowStatus) -> HmStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = match t.inner.status {
            FlowStatus::TmaxReached => HmFlowStatus::TmaxReached,
            FlowStatus::TensionStop => HmFlowStatus::TensionStop,
            FlowStatus::BlowupDetected => HmFlowStatus::BlowupDetected,
        };
        Ok(())
    })
}

/// Copy of the last field of the run as a new handle.
///
/// # Safety
/// `trace` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_trace_final_field(trace: *const HmTrace, out: *mut *mut HmField) -> HmStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, HmField { inner: t.inner.final_field().clone() });
        Ok(())
    })
}

/// Trace as CSV text. Writes at most `len` bytes including the NUL and stores the full
/// length (without NUL) in `needed`; returns `BufferTooSmall` when it does not fit.
///
/// # Safety
/// `buf` must hold `len` bytes (it may be null when `len` is 0); `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn hm_trace_csv(
    trace: *const HmTrace,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> HmStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        let csv = t.inner.to_csv();
        if let Some(n) = needed.as_mut() {
            *n = csv.len();
        }
        if len < csv.len() + 1 || buf.is_null() {
            return Err((HmStatus::BufferTooSmall, format!("need {} bytes", csv.len() + 1)));
        }
        std::ptr::copy_nonoverlapping(csv.as_ptr(), buf as *mut u8, csv.len());
        *buf.add(csv.len()) = 0;
        Ok(())
    })
}
