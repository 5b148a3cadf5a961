use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use deltaiss_ffi::*;

fn sample(name: &str) -> CString {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "models", name]
        .iter()
        .collect();
    CString::new(std::fs::read_to_string(p).unwrap()).unwrap()
}

fn last_error() -> String {
    let p = diss_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(name: &str) -> *mut DissModel {
    let mut model = ptr::null_mut();
    let json = sample(name);
    assert_eq!(
        unsafe { diss_model_from_json(json.as_ptr(), &mut model) },
        DissStatus::Ok
    );
    assert!(!model.is_null());
    model
}

#[test]
fn certify_round_trip() {
    let model = load("esn_counterexample.json");
    let (mut n, mut m, mut l) = (0, 0, 0);
    unsafe {
        assert_eq!(
            diss_model_dims(model, &mut n, &mut m, &mut l),
            DissStatus::Ok
        );
        assert_eq!((n, m, l), (3, 1, 1));

        let mut cert = ptr::null_mut();
        assert_eq!(diss_certify(model, -1.0, 0, &mut cert), DissStatus::Ok);
        assert!(diss_last_error().is_null());
        let gap = diss_certificate_gap(cert);
        assert!(gap < 0.0);
        assert_eq!(diss_certificate_dim(cert), n);

        let mut p = vec![0.0; n * n];
        assert_eq!(
            diss_certificate_p(cert, p.as_mut_ptr(), 2),
            DissStatus::BufferTooSmall
        );
        assert_eq!(
            diss_certificate_p(cert, p.as_mut_ptr(), p.len()),
            DissStatus::Ok
        );
        let (mut passed, mut gap2) = (0, 0.0);
        assert_eq!(
            diss_validate(model, p.as_ptr(), n, &mut passed, &mut gap2),
            DissStatus::Ok
        );
        assert_eq!(passed, 1);
        assert!((gap - gap2).abs() < 1e-12);

        let mut json: *mut c_char = ptr::null_mut();
        assert_eq!(diss_certificate_to_json(cert, &mut json), DissStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        assert!(text.contains("\"model_hash\""));
        diss_string_free(json);

        diss_certificate_free(cert);
        diss_model_free(model);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(
            diss_model_from_json(ptr::null(), &mut model),
            DissStatus::NullPointer
        );
        assert!(model.is_null());
        let bad = CString::new("{\"version\": 1}").unwrap();
        assert_eq!(
            diss_model_from_json(bad.as_ptr(), &mut model),
            DissStatus::Parse
        );
        assert!(!last_error().is_empty());

        let unstable = load("unstable_scalar.json");
        let mut cert = ptr::null_mut();
        assert_eq!(
            diss_certify(unstable, -1.0, 0, &mut cert),
            DissStatus::NotCertified
        );
        assert!(cert.is_null());
        assert!(last_error().contains("not established"));
        diss_model_free(unstable);

        let tanh = sample("integrator_example_tanh.json");
        let mut out = ptr::null_mut();
        assert_eq!(
            diss_synthesize(tanh.as_ptr(), -1.0, 0, &mut out),
            DissStatus::StructuralObstruction
        );
        assert!(out.is_null());

        assert_eq!(
            diss_certificate_p(ptr::null(), ptr::null_mut(), 0),
            DissStatus::NullPointer
        );
        assert!(diss_certificate_gap(ptr::null()).is_nan());
        diss_model_free(ptr::null_mut());
        diss_certificate_free(ptr::null_mut());
        diss_string_free(ptr::null_mut());
    }
}

#[test]
fn build_and_simulate_generic_model() {
    let names: Vec<CString> = ["identity", "tanh"]
        .iter()
        .map(|s| CString::new(*s).unwrap())
        .collect();
    let acts: Vec<*const c_char> = names.iter().map(|s| s.as_ptr()).collect();
    let a = [0.5, 0.1, 0.0, 0.4];
    let b = [1.0, 0.0];
    let c = [1.0, 1.0];
    let d = [0.0];
    unsafe {
        let mut model = ptr::null_mut();
        let st = diss_model_new(
            2,
            1,
            1,
            a.as_ptr(),
            b.as_ptr(),
            c.as_ptr(),
            d.as_ptr(),
            acts.as_ptr(),
            &mut model,
        );
        assert_eq!(st, DissStatus::Ok);
        let x0 = [1.0, -1.0];
        let u = [0.0, 1.0, 0.0];
        let mut y = [0.0; 3];
        assert_eq!(
            diss_simulate(model, x0.as_ptr(), u.as_ptr(), 3, y.as_mut_ptr()),
            DissStatus::Ok
        );
        // y(0) = x1 + x2, x(1) = (0.5 - 0.1, tanh(-0.4)).
        assert_eq!(y[0], 0.0);
        assert!((y[1] - (0.4 + (-0.4f64).tanh())).abs() < 1e-15);
        diss_model_free(model);

        let bogus = CString::new("softsign").unwrap();
        let acts = [bogus.as_ptr(), bogus.as_ptr()];
        let st = diss_model_new(
            2,
            1,
            1,
            a.as_ptr(),
            b.as_ptr(),
            c.as_ptr(),
            d.as_ptr(),
            acts.as_ptr(),
            &mut model,
        );
        assert_eq!(st, DissStatus::Parse);
        assert!(last_error().contains("softsign"), "{}", last_error());
        assert!(model.is_null());
    }
}

#[test]
fn synthesize_returns_gains_json() {
    let arch = sample("integrator_example.json");
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(
            diss_synthesize(arch.as_ptr(), -1.0, 0, &mut out),
            DissStatus::Ok
        );
        let text = CStr::from_ptr(out).to_str().unwrap().to_owned();
        diss_string_free(out);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["architecture"], "state-feedback-integrator");
        assert!(v["gains"]["K"].is_array());
    }
}

#[test]
fn errors_are_per_thread() {
    let bad = CString::new("not json").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { diss_model_from_json(bad.as_ptr(), &mut model) },
        DissStatus::Parse
    );
    std::thread::spawn(|| assert!(diss_last_error().is_null()))
        .join()
        .unwrap();
    assert!(!last_error().is_empty());
}

#[test]
fn header_declares_every_export() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let src = std::fs::read_to_string(format!("{dir}/src/lib.rs")).unwrap();
    let header = std::fs::read_to_string(format!("{dir}/include/deltaiss.h")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 14, "{exports:?}");
    for name in exports {
        let declared =
            header.contains(&format!(" {name}(")) || header.contains(&format!("*{name}("));
        assert!(declared, "{name} missing from header");
    }
    for variant in [
        "DISS_STATUS_OK",
        "DISS_STATUS_NOT_CERTIFIED",
        "DISS_STATUS_PANIC",
    ] {
        assert!(header.contains(variant), "{variant}");
    }
    let version = unsafe { CStr::from_ptr(diss_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

/// Compiles a C program against the committed header and links the static
/// library built alongside these tests.
#[test]
fn c_program_links_against_header() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libdeltaiss_ffi.a");
    if !lib.exists()
        || std::process::Command::new("cc")
            .arg("--version")
            .output()
            .is_err()
    {
        eprintln!("skipping: static library or C compiler not available");
        return;
    }
    let out_dir = tempfile_dir();
    let bin = out_dir.join("smoke");
    let status = std::process::Command::new("cc")
        .arg(format!("{dir}/tests/c/smoke.c"))
        .arg(format!("-I{dir}/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let model: PathBuf = [dir, "..", "..", "models", "esn_counterexample.json"]
        .iter()
        .collect();
    let run = std::process::Command::new(&bin)
        .arg(model)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert_eq!(
        run.status.code(),
        Some(0),
        "{stdout} {}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(stdout.starts_with("ok "), "{stdout}");
    let _ = std::fs::remove_dir_all(out_dir);
}

fn tempfile_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("deltaiss-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
