use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use collapse_lab_ffi::*;

fn last_error() -> String {
    let p = cl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn circle(n: usize) -> *mut ClSpace {
    let spec = CString::new(format!(r#"{{"kind": "circle", "n": {n}, "radius": 1.0}}"#)).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { cl_space_generate(spec.as_ptr(), &mut s) },
        ClStatus::Ok
    );
    s
}

#[test]
fn table_round_trip_and_distances() {
    let table = [0.0, 1.0, 2.0, 1.0, 0.0, 1.5, 2.0, 1.5, 0.0];
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(cl_space_from_table(3, table.as_ptr(), &mut s), ClStatus::Ok);
        assert_eq!(cl_space_len(s), 3);
        let mut d = 0.0;
        assert_eq!(cl_space_distance(s, 1, 2, &mut d), ClStatus::Ok);
        assert_eq!(d, 1.5);
        assert_eq!(
            cl_space_distance(s, 1, 3, &mut d),
            ClStatus::InvalidArgument
        );
        assert!(last_error().contains("out of range"));
        assert_eq!(cl_space_diameter(s, &mut d), ClStatus::Ok);
        assert_eq!(d, 2.0);
        assert_eq!(cl_space_resolution(s, &mut d), ClStatus::Ok);
        assert_eq!(d, 1.5);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("t.dmat").to_str().unwrap()).unwrap();
        assert_eq!(
            cl_space_save(s, path.as_ptr(), ClFormat::Binary),
            ClStatus::Ok
        );
        let mut back = ptr::null_mut();
        assert_eq!(
            cl_space_load(path.as_ptr(), ClFormat::Binary, &mut back),
            ClStatus::Ok
        );
        assert_eq!(cl_space_distance(back, 0, 2, &mut d), ClStatus::Ok);
        assert_eq!(d, 2.0);
        cl_space_free(back);
        cl_space_free(s);
    }
}

#[test]
fn bad_inputs_report_codes() {
    let asym = [0.0, 1.0, 2.0, 0.0];
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(
            cl_space_from_table(2, asym.as_ptr(), &mut s),
            ClStatus::InvalidSpace
        );
        assert!(s.is_null());
        assert_eq!(
            cl_space_from_table(2, ptr::null(), &mut s),
            ClStatus::NullPointer
        );
        let mut d = 0.0;
        assert_eq!(
            cl_space_distance(ptr::null(), 0, 0, &mut d),
            ClStatus::NullPointer
        );
        assert_eq!(cl_space_len(ptr::null()), 0);
        let bad = CString::new(r#"{"kind": "circle", "n": 1, "radius": 1.0}"#).unwrap();
        assert_eq!(
            cl_space_generate(bad.as_ptr(), &mut s),
            ClStatus::InvalidArgument
        );
        let junk = CString::new("{").unwrap();
        assert_eq!(cl_space_generate(junk.as_ptr(), &mut s), ClStatus::Parse);
        let missing = CString::new("/nonexistent/x.dmat").unwrap();
        assert_eq!(
            cl_space_load(missing.as_ptr(), ClFormat::Text, &mut s),
            ClStatus::Io
        );
        cl_space_free(ptr::null_mut());
        cl_string_free(ptr::null_mut());
    }
}

#[test]
fn comparison_angles() {
    let mut a = 0.0;
    unsafe {
        assert_eq!(
            cl_comparison_angle(0.0, 1.0, 1.0, 2f64.sqrt(), &mut a),
            ClStatus::Ok
        );
        assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(
            cl_comparison_angle(0.0, 1.0, 1.0, 3.0, &mut a),
            ClStatus::Undefined
        );
        assert_eq!(
            cl_comparison_angle(1.0, 1.0, 1.0, 1.0, &mut a),
            ClStatus::Ok
        );
        // spherical law of cosines for the unit equilateral triangle
        let c = 1f64.cos();
        let expected = ((c - c * c) / (1.0 - c * c)).acos();
        assert!((a - expected).abs() < 1e-12);
    }
}

#[test]
fn nets_and_profiles() {
    let s = circle(40);
    unsafe {
        let mut len = 0;
        assert_eq!(
            cl_greedy_net(s, 10.0, 0, ptr::null_mut(), 0, &mut len),
            ClStatus::BufferTooSmall
        );
        assert_eq!(len, 1);
        let mut buf = [usize::MAX; 2];
        assert_eq!(
            cl_greedy_net(s, 0.5, 0, buf.as_mut_ptr(), 2, &mut len),
            ClStatus::BufferTooSmall
        );
        assert!(len > 2);
        let mut big = vec![0usize; len];
        assert_eq!(
            cl_greedy_net(s, 0.5, 0, big.as_mut_ptr(), len, &mut len),
            ClStatus::Ok
        );
        assert_eq!(big[0], 0);

        let grid = [0.2, 0.4, 0.8];
        let mut json = ptr::null_mut();
        assert_eq!(
            cl_packing_profile(s, 1.0, grid.as_ptr(), 3, &mut json),
            ClStatus::Ok
        );
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        cl_string_free(json);
        assert!(text.contains("\"counts\""));
        let unsorted = [0.4, 0.2];
        assert_eq!(
            cl_packing_profile(s, 1.0, unsorted.as_ptr(), 2, &mut json),
            ClStatus::InvalidArgument
        );
        cl_space_free(s);
    }
}

#[test]
fn experiment_report() {
    let cfg = CString::new(
        r#"
k = 1
correspondence = { kind = "identity" }
m = { kind = "circle", n = 300, radius = 1.0 }
x = { kind = "circle", n = 300, radius = 1.0 }
blend = { ell = 1.0, delta = 0.3 }
fibers = { count = 0 }
reports = { min_sep_meshes = 1.0 }
thresholds = { closeness = 0.09 }
"#,
    )
    .unwrap();
    let mut json = ptr::null_mut();
    let mut passed = -1;
    unsafe {
        assert_eq!(
            cl_run_experiment(cfg.as_ptr(), &mut json, &mut passed),
            ClStatus::Ok
        );
        let text = CStr::from_ptr(json).to_str().unwrap();
        assert!(text.contains("\"schema\": \"collapse-lab/1\""));
        cl_string_free(json);
        assert_eq!(passed, 1);
        let bad = CString::new("k = 0").unwrap();
        assert_eq!(
            cl_run_experiment(bad.as_ptr(), &mut json, &mut passed),
            ClStatus::Parse
        );
    }
    let v = unsafe { CStr::from_ptr(cl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = dir.join("collapse_lab.h");
    assert!(header.exists());
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "cl_space_generate",
        "cl_run_experiment",
        "cl_last_error",
        "ClSpace",
        "CL_STATUS_UNDEFINED",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"collapse_lab.h\"\nint probe(void) { ClSpace *s = 0; double d; return (int)cl_space_distance(s, 0, 0, &d); }\n",
    )
    .unwrap();
    let Ok(status) = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&dir)
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler; header syntax check skipped");
        return;
    };
    assert!(status.success());
}
