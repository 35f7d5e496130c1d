use hmflow_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    unsafe { CStr::from_ptr(hm_last_error()) }.to_string_lossy().into_owned()
}

fn identity(n: u32) -> *mut HmField {
    let num = [0.0, 0.0, 1.0, 0.0];
    let den = [1.0, 0.0];
    let mut f = ptr::null_mut();
    let s = unsafe { hm_field_from_rational(num.as_ptr(), 2, den.as_ptr(), 1, 0, n, 1.2, 4, &mut f) };
    assert_eq!(s, HmStatus::Ok, "{}", last_error());
    f
}

#[test]
fn identity_energy_through_the_abi() {
    let f = identity(129);
    let mut e = HmEnergy::default();
    assert_eq!(unsafe { hm_field_energy(f, &mut e) }, HmStatus::Ok);
    assert!((e.energy - 4.0 * std::f64::consts::PI).abs() < 1e-3);
    assert!((e.degree_pullback - 1.0).abs() < 1e-3);
    assert_eq!(unsafe { hm_field_n(f) }, 129);
    unsafe { hm_field_free(f) };
}

#[test]
fn spec_text_and_errors() {
    let spec = CString::new("kind = \"rational\"\nnumerator = [0, 0, 1]\n").unwrap();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { hm_field_from_spec(spec.as_ptr(), 65, 1.2, 4, &mut f) }, HmStatus::Ok);
    let mut e = HmEnergy::default();
    unsafe { hm_field_energy(f, &mut e) };
    assert!((e.degree_pullback - 2.0).abs() < 1e-2);
    unsafe { hm_field_free(f) };

    let bad = CString::new("kind = \"rational\"\nnumerater = [0, 1]\n").unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { hm_field_from_spec(bad.as_ptr(), 65, 1.2, 4, &mut g) }, HmStatus::Validation);
    assert!(last_error().contains("numerater"));
    assert!(g.is_null());

    assert_eq!(unsafe { hm_field_from_spec(spec.as_ptr(), 64, 1.2, 4, &mut g) }, HmStatus::Validation);
    assert_eq!(unsafe { hm_field_from_spec(spec.as_ptr(), 65, 1.2, 3, &mut g) }, HmStatus::InvalidArgument);
    assert_eq!(unsafe { hm_field_from_spec(ptr::null(), 65, 1.2, 4, &mut g) }, HmStatus::NullPointer);
    assert_eq!(unsafe { hm_field_energy(ptr::null(), &mut e) }, HmStatus::NullPointer);
    unsafe { hm_field_free(ptr::null_mut()) };
}

#[test]
fn snapshot_round_trip_and_values() {
    let f = identity(65);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("a.sphm").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { hm_field_save(f, path.as_ptr()) }, HmStatus::Ok);
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { hm_field_load(path.as_ptr(), 4, &mut g) }, HmStatus::Ok);
    let mut a = vec![0.0; 65 * 65 * 3];
    let mut b = vec![0.0; 65 * 65 * 3];
    for chart in 0..2 {
        assert_eq!(unsafe { hm_field_values(f, chart, a.as_mut_ptr(), a.len()) }, HmStatus::Ok);
        assert_eq!(unsafe { hm_field_values(g, chart, b.as_mut_ptr(), b.len()) }, HmStatus::Ok);
        assert_eq!(a, b);
    }
    assert_eq!(unsafe { hm_field_values(f, 0, a.as_mut_ptr(), 10) }, HmStatus::BufferTooSmall);
    assert_eq!(unsafe { hm_field_values(f, 2, a.as_mut_ptr(), a.len()) }, HmStatus::InvalidArgument);
    let missing = CString::new(dir.path().join("none.sphm").to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { hm_field_load(missing.as_ptr(), 4, &mut h) }, HmStatus::Io);
    unsafe {
        hm_field_free(f);
        hm_field_free(g);
    }
}

#[test]
fn short_flow_run() {
    let spec = CString::new(
        "kind = \"perturbed\"\namplitude = 0.1\nseed = 2\n[base]\nkind = \"rational\"\nnumerator = [0, 1]\n",
    )
    .unwrap();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { hm_field_from_spec(spec.as_ptr(), 65, 1.2, 4, &mut f) }, HmStatus::Ok);
    let mut p = HmFlowParams {
        cfl: 0.0,
        t_max: 0.0,
        tension_stop: 0.0,
        snapshot_every: 0.0,
        record_every: 0,
        energy_blowup_guard: 0.0,
        epsilon0: 0.0,
        t_start: 0.0,
    };
    assert_eq!(unsafe { hm_flow_params_default(&mut p) }, HmStatus::Ok);
    p.t_max = 0.01;
    p.record_every = 10;
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { hm_flow_run(f, &p, &mut t) }, HmStatus::Ok, "{}", last_error());
    let rows = unsafe { hm_trace_len(t) };
    assert!(rows >= 2);
    let mut first = HmTraceRow::default();
    let mut last = HmTraceRow::default();
    unsafe {
        hm_trace_row(t, 0, &mut first);
        hm_trace_row(t, rows - 1, &mut last);
    }
    assert!(last.energy < first.energy);
    assert_eq!(last.t, 0.01);
    let mut st = HmFlowStatus::BlowupDetected;
    unsafe { hm_trace_status(t, &mut st) };
    assert_eq!(st, HmFlowStatus::TmaxReached);
    let mut row = HmTraceRow::default();
    assert_eq!(unsafe { hm_trace_row(t, rows, &mut row) }, HmStatus::InvalidArgument);

    let mut needed = 0usize;
    assert_eq!(unsafe { hm_trace_csv(t, ptr::null_mut(), 0, &mut needed) }, HmStatus::BufferTooSmall);
    let mut buf = vec![0 as std::ffi::c_char; needed + 1];
    assert_eq!(unsafe { hm_trace_csv(t, buf.as_mut_ptr(), buf.len(), &mut needed) }, HmStatus::Ok);
    let csv = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    assert!(csv.starts_with("t,E,E_d,E_dbar,delta,dist4pi,max_density,dt\n"));
    assert_eq!(csv.lines().count(), rows + 1);

    let mut g = ptr::null_mut();
    assert_eq!(unsafe { hm_trace_final_field(t, &mut g) }, HmStatus::Ok);
    let mut e = HmEnergy::default();
    unsafe { hm_field_energy(g, &mut e) };
    assert_eq!(e.energy, last.energy);

    p.cfl = 5.0;
    let mut t2 = ptr::null_mut();
    assert_eq!(unsafe { hm_flow_run(f, &p, &mut t2) }, HmStatus::Validation);
    unsafe {
        hm_trace_free(t);
        hm_field_free(f);
        hm_field_free(g);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(hm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
