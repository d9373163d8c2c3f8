use std::ffi::{c_char, CStr, CString};
use std::ptr;

use dpimap_ffi::*;

fn last_error() -> String {
    let len = dpimap_last_error_length();
    let mut buf = vec![0 as c_char; len.max(1)];
    assert_eq!(unsafe { dpimap_last_error_message(buf.as_mut_ptr(), buf.len()) }, DpimapStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(dpimap_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn cosine_similarity_and_errors() {
    let (a, b) = ([1.0, 0.0, 0.0], [1.0, 1.0, 0.0]);
    let mut out = 0.0;
    let st = unsafe { dpimap_cosine_similarity(a.as_ptr(), b.as_ptr(), 3, &mut out) };
    assert_eq!(st, DpimapStatus::Ok);
    assert!((out - 0.5f64.sqrt()).abs() < 1e-12);

    let st = unsafe { dpimap_cosine_similarity(a.as_ptr(), b.as_ptr(), 1, &mut out) };
    assert_eq!(st, DpimapStatus::InvalidInput);
    assert!(last_error().contains("dimension"));

    let st = unsafe { dpimap_cosine_similarity(ptr::null(), b.as_ptr(), 3, &mut out) };
    assert_eq!(st, DpimapStatus::NullPointer);
    assert!(last_error().contains("a is null"));
}

#[test]
fn error_buffer_too_small() {
    let mut out = 0.0;
    let a = [1.0, 2.0];
    unsafe { dpimap_cosine_similarity(a.as_ptr(), a.as_ptr(), 0, &mut out) };
    let mut tiny = [0 as c_char; 2];
    assert_eq!(unsafe { dpimap_last_error_message(tiny.as_mut_ptr(), 2) }, DpimapStatus::BufferTooSmall);
    assert_eq!(unsafe { dpimap_last_error_message(ptr::null_mut(), 8) }, DpimapStatus::NullPointer);
}

#[test]
fn matching_rectangular_costs() {
    // 3 visual x 2 auditory: rows 0 and 2 are the cheap ones
    let costs = [1.0, 9.0, 8.0, 7.0, 9.0, 2.0];
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { dpimap_cost_matrix_new(costs.as_ptr(), 3, 2, &mut m) }, DpimapStatus::Ok);
    let mut assign = [99i64; 3];
    let mut total = 0.0;
    let st = unsafe { dpimap_match(m, 1.0, 0.02, assign.as_mut_ptr(), &mut total) };
    assert_eq!(st, DpimapStatus::Ok);
    assert_eq!(assign, [0, -1, 1]);
    assert_eq!(total, 3.0);
    let st = unsafe { dpimap_match(m, -1.0, 0.02, assign.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(st, DpimapStatus::InvalidInput);
    assert!(last_error().contains("alpha"));
    unsafe { dpimap_cost_matrix_free(m) };
    unsafe { dpimap_cost_matrix_free(ptr::null_mut()) };
}

#[test]
fn matching_from_similarities() {
    let sims = [0.9, 0.1, 0.2, 0.8];
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { dpimap_cost_matrix_from_similarities(sims.as_ptr(), 2, 2, &mut m) }, DpimapStatus::Ok);
    let mut assign = [0i64; 2];
    let mut total = 0.0;
    assert_eq!(unsafe { dpimap_match(m, 1.0, 0.02, assign.as_mut_ptr(), &mut total) }, DpimapStatus::Ok);
    assert_eq!(assign, [0, 1]);
    assert!((total - (1.0 / 0.9 + 1.0 / 0.8)).abs() < 1e-12);
    unsafe { dpimap_cost_matrix_free(m) };

    let bad = [0.5, -1.0];
    let st = unsafe { dpimap_cost_matrix_new(bad.as_ptr(), 1, 2, &mut m) };
    assert_eq!(st, DpimapStatus::InvalidInput);
}

#[test]
fn noiseless_conversion_and_tracking() {
    let polar = DpimapPolar {
        r: 10.0,
        theta: 0.0,
        phi: 0.0,
        sigma_r: 0.0,
        sigma_theta: 0.0,
        sigma_phi: 0.0,
    };
    let mut z = DpimapConverted {
        position: [0.0; 3],
        covariance: [0.0; 9],
        bias: [0.0; 3],
    };
    assert_eq!(unsafe { dpimap_unbiased_convert(&polar, &mut z) }, DpimapStatus::Ok);
    assert!((z.position[0] - 10.0).abs() < 1e-12 && z.position[1].abs() < 1e-12);

    let noisy = DpimapPolar {
        sigma_r: 0.5,
        sigma_theta: 0.02,
        sigma_phi: 0.02,
        ..polar
    };
    assert_eq!(unsafe { dpimap_unbiased_convert(&noisy, &mut z) }, DpimapStatus::Ok);
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { dpimap_track_new(&z, 4.0, 0.1, 0.5, &mut t) }, DpimapStatus::Ok);
    let (mut x, mut p) = ([0.0; 6], [0.0; 36]);
    assert_eq!(unsafe { dpimap_track_state(t, x.as_mut_ptr(), p.as_mut_ptr()) }, DpimapStatus::Ok);
    assert_eq!(p[3 * 6 + 3], 4.0);
    let before = p[0];
    assert_eq!(unsafe { dpimap_track_predict(t) }, DpimapStatus::Ok);
    assert_eq!(unsafe { dpimap_track_update(t, &z) }, DpimapStatus::Ok);
    assert_eq!(unsafe { dpimap_track_state(t, x.as_mut_ptr(), ptr::null_mut()) }, DpimapStatus::Ok);
    assert_eq!(unsafe { dpimap_track_state(t, x.as_mut_ptr(), p.as_mut_ptr()) }, DpimapStatus::Ok);
    assert!(p[0] < before);
    assert!((x[0] - z.position[0] + z.bias[0]).abs() < 0.5);

    let singular = DpimapConverted {
        position: [1.0; 3],
        covariance: [0.0; 9],
        bias: [0.0; 3],
    };
    let mut exact = ptr::null_mut();
    assert_eq!(unsafe { dpimap_track_new(&singular, 0.0, 0.1, 0.0, &mut exact) }, DpimapStatus::Ok);
    assert_eq!(unsafe { dpimap_track_update(exact, &singular) }, DpimapStatus::Numerical);
    assert_eq!(unsafe { dpimap_track_new(&z, 1.0, -0.1, 0.5, &mut exact as *mut _) }, DpimapStatus::InvalidInput);
    unsafe {
        dpimap_track_free(t);
        dpimap_track_free(exact);
    }
}

#[test]
fn simulate_from_toml() {
    let cfg = CString::new("num_uavs = 10\nduration = 3.0\nwarmup = 1.0\nseed = 3\n").unwrap();
    let mut m = std::mem::MaybeUninit::<DpimapMetrics>::zeroed();
    assert_eq!(unsafe { dpimap_simulate(cfg.as_ptr(), m.as_mut_ptr()) }, DpimapStatus::Ok);
    let m = unsafe { m.assume_init() };
    assert_eq!(m.seed, 3);
    assert!(m.events > 0);
    assert!(m.mapping_accuracy.is_nan() || (0.0..=1.0).contains(&m.mapping_accuracy));

    let mut out = std::mem::MaybeUninit::<DpimapMetrics>::zeroed();
    for (text, needle) in [("v_max = 3.0\n", "num_uavs"), ("num_uavs = 4\nec_rate = -2.0\n", "ec_rate")] {
        let cfg = CString::new(text).unwrap();
        assert_eq!(unsafe { dpimap_simulate(cfg.as_ptr(), out.as_mut_ptr()) }, DpimapStatus::Config);
        assert!(last_error().contains(needle), "{}", last_error());
    }
}
