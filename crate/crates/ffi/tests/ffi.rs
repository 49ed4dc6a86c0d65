use std::ffi::{CStr, CString};
use std::ptr;

use thermofray_ffi::*;

const SHORT_PI: &str = "[controller]\nkind = \"pi\"\n[run]\nhorizon_s = 7200.0\n";

fn last_error() -> String {
    unsafe { CStr::from_ptr(tf_last_error_message()) }.to_string_lossy().into_owned()
}

fn scenario(text: &str) -> *mut TfScenario {
    let toml = CString::new(text).unwrap();
    let mut sc = ptr::null_mut();
    let st = unsafe { tf_scenario_from_toml(toml.as_ptr(), ptr::null(), &mut sc) };
    assert_eq!(st, TfStatus::Ok, "{}", last_error());
    assert!(!sc.is_null());
    sc
}

#[test]
fn version_is_a_semver_string() {
    let v = unsafe { CStr::from_ptr(tf_version()) }.to_str().unwrap();
    assert_eq!(v.split('.').count(), 3);
}

#[test]
fn run_report_and_log() {
    let sc = scenario(SHORT_PI);
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { tf_run(sc, &mut run) }, TfStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { tf_run_record_count(run) }, 120);

    let mut rep = TfReport::default();
    assert_eq!(unsafe { tf_run_report(run, ptr::null(), 15.0, &mut rep) }, TfStatus::Ok);
    assert_eq!(rep.intervals, 120);
    assert_eq!(rep.attacked, 0);
    assert_eq!(rep.lifespan_years, 15.0);
    assert_eq!(rep.horizon_s, 7200.0);
    assert!(rep.total_energy_kwh > 0.0);
    let sum: f64 = rep.energy_kwh.iter().sum();
    assert!((sum - rep.total_energy_kwh).abs() < 1e-9);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { tf_run_write_log_csv(run, cpath.as_ptr()) }, TfStatus::Ok);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 121);

    unsafe {
        tf_run_free(run);
        tf_scenario_free(sc);
    }
}

#[test]
fn attacked_report_against_baseline() {
    let base_sc = scenario(SHORT_PI);
    let atk_sc = scenario(
        "[controller]\nkind = \"pi\"\n[attack]\ntarget = \"sensor:south\"\nbias = -5.0\n[run]\nhorizon_s = 7200.0\n",
    );
    let (mut base, mut atk) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(tf_run(base_sc, &mut base), TfStatus::Ok);
        assert_eq!(tf_run(atk_sc, &mut atk), TfStatus::Ok);
        let mut rep = TfReport::default();
        assert_eq!(tf_run_report(atk, base, 15.0, &mut rep), TfStatus::Ok);
        assert_eq!(rep.attacked, 1);
        assert!(rep.lifespan_years.is_finite() && rep.lifespan_years != 15.0);
        tf_run_free(base);
        tf_run_free(atk);
        tf_scenario_free(base_sc);
        tf_scenario_free(atk_sc);
    }
}

#[test]
fn synthesized_attack_stays_in_bounds() {
    let sc = scenario(
        "[controller]\nkind = \"pi\"\n[attack]\ntarget = \"sensor:south\"\ngranularity_s = 3600.0\nstarts = 1\nmax_iter = 2\n[run]\nhorizon_s = 7200.0\n",
    );
    let mut atk = ptr::null_mut();
    assert_eq!(unsafe { tf_synthesize_attack(sc, &mut atk) }, TfStatus::Ok, "{}", last_error());
    let n = unsafe { tf_attack_len(atk) };
    assert_eq!(n, 120);
    let mut buf = vec![f64::NAN; n];
    assert_eq!(unsafe { tf_attack_values(atk, buf.as_mut_ptr(), n) }, TfStatus::Ok);
    assert!(buf.iter().all(|v| (-5.0..=5.0).contains(v)));
    let mut small = vec![0.0; n - 1];
    assert_eq!(
        unsafe { tf_attack_values(atk, small.as_mut_ptr(), n - 1) },
        TfStatus::InvalidArgument
    );
    unsafe {
        tf_attack_free(atk);
        tf_scenario_free(sc);
    }
}

#[test]
fn attack_without_block_is_a_config_error() {
    let sc = scenario(SHORT_PI);
    let mut atk = ptr::null_mut();
    assert_eq!(unsafe { tf_synthesize_attack(sc, &mut atk) }, TfStatus::Config);
    assert!(atk.is_null());
    assert!(last_error().contains("attack"));
    unsafe { tf_scenario_free(sc) };
}

#[test]
fn dynamics_vanish_at_uniform_equilibrium() {
    let sc = scenario(SHORT_PI);
    let x = [20.0; 14];
    // closed valves, outdoor at room temperature, no gains
    let u = [35.0, 20.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let d = [20.0, 0.0, 0.0];
    let mut dx = [f64::NAN; 14];
    let st = unsafe { tf_dynamics(sc, x.as_ptr(), u.as_ptr(), d.as_ptr(), dx.as_mut_ptr()) };
    assert_eq!(st, TfStatus::Ok, "{}", last_error());
    assert!(dx.iter().all(|v| v.abs() < 1e-12), "{dx:?}");

    let mut bad = x;
    bad[3] = f64::NAN;
    let st = unsafe { tf_dynamics(sc, bad.as_ptr(), u.as_ptr(), d.as_ptr(), dx.as_mut_ptr()) };
    assert_eq!(st, TfStatus::Simulation);
    assert!(!last_error().is_empty());
    unsafe { tf_scenario_free(sc) };
}

#[test]
fn errors_are_reported_not_panicked() {
    let mut sc = ptr::null_mut();
    let bad = CString::new("[run]\nhorizon_s = \"long\"\n").unwrap();
    assert_eq!(unsafe { tf_scenario_from_toml(bad.as_ptr(), ptr::null(), &mut sc) }, TfStatus::Config);
    assert!(sc.is_null());
    assert!(!last_error().is_empty());

    let missing = CString::new("/nonexistent/scenario.toml").unwrap();
    assert_eq!(unsafe { tf_scenario_from_file(missing.as_ptr(), &mut sc) }, TfStatus::Io);
    assert!(last_error().contains("/nonexistent/scenario.toml"));

    assert_eq!(unsafe { tf_scenario_from_toml(ptr::null(), ptr::null(), &mut sc) }, TfStatus::NullPointer);
    assert_eq!(unsafe { tf_run(ptr::null(), &mut ptr::null_mut()) }, TfStatus::NullPointer);
    let invalid = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { tf_scenario_from_toml(invalid.as_ptr().cast(), ptr::null(), &mut sc) },
        TfStatus::InvalidUtf8
    );
    assert_eq!(unsafe { tf_run_record_count(ptr::null()) }, 0);
    unsafe {
        tf_scenario_free(ptr::null_mut());
        tf_run_free(ptr::null_mut());
        tf_attack_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/thermofray.h");
    for f in [
        "tf_scenario_from_toml",
        "tf_scenario_from_file",
        "tf_scenario_free",
        "tf_run",
        "tf_run_free",
        "tf_run_record_count",
        "tf_run_report",
        "tf_run_write_log_csv",
        "tf_synthesize_attack",
        "tf_attack_len",
        "tf_attack_values",
        "tf_attack_free",
        "tf_dynamics",
        "tf_last_error_message",
        "tf_version",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("TF_STATUS_OK = 0"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"thermofray.h\"\n\
         int use(void) {\n\
           TfScenario *sc = 0; TfRun *run = 0; TfReport rep;\n\
           if (tf_scenario_from_toml(\"\", 0, &sc) != TF_STATUS_OK) return 1;\n\
           if (tf_run(sc, &run) != TF_STATUS_OK) return 2;\n\
           tf_run_report(run, 0, 15.0, &rep);\n\
           tf_run_free(run); tf_scenario_free(sc);\n\
           return rep.valve_ops[0] > 0 && tf_last_error_message() != 0;\n\
         }\n",
    )
    .unwrap();
    for lang in ["c", "c++"] {
        let out = std::process::Command::new("cc")
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I", include])
            .arg(&src)
            .output()
            .unwrap();
        assert!(out.status.success(), "{lang}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
