use std::ffi::{CStr, CString};
use std::ptr;

use emm_ffi::*;

fn dataset(n: usize) -> *mut EmmDataset {
    let p = 2;
    let mut x = vec![0.0; n * p];
    let mut z = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        x[i] = (i % 2) as f64;
        x[n + i] = ((i / 2) % 3) as f64;
        z[i] = ((i / 6) % 2) as f64;
        y[i] = 0.5 * x[n + i] + z[i] * (1.0 + x[i]) + 0.01 * (i % 7) as f64;
    }
    let mut out = ptr::null_mut();
    let st = unsafe { emm_dataset_from_columns(x.as_ptr(), n, p, z.as_ptr(), y.as_ptr(), &mut out) };
    assert_eq!(st, EmmStatus::Ok);
    out
}

fn last_error() -> String {
    let p = emm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(emm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn forest_round_trip() {
    let data = dataset(120);
    unsafe {
        assert_eq!((emm_dataset_n(data), emm_dataset_p(data)), (120, 2));
        let mut model = ptr::null_mut();
        assert_eq!(emm_grf_fit(data, 50, 7, &mut model), EmmStatus::Ok);
        let mut ite = vec![0.0; 120];
        assert_eq!(emm_grf_oob_ite(model, ite.as_mut_ptr(), ite.len()), EmmStatus::Ok);
        assert!(ite.iter().all(|v| v.is_finite()));

        let (mut est, mut var) = (0.0, 0.0);
        let x = [1.0, 2.0];
        assert_eq!(emm_grf_predict(model, x.as_ptr(), 2, &mut est, &mut var), EmmStatus::Ok);
        assert!(est.is_finite() && var >= 0.0);
        let (mut ate, mut se) = (0.0, 0.0);
        assert_eq!(emm_grf_ate(model, &mut ate, &mut se), EmmStatus::Ok);
        assert!(ate > 0.5 && ate < 2.5, "ate {ate}");

        let mut short = vec![0.0; 3];
        assert_eq!(
            emm_grf_oob_ite(model, short.as_mut_ptr(), short.len()),
            EmmStatus::LengthMismatch
        );
        assert!(last_error().contains("3"));
        let wrong = [1.0];
        assert_eq!(
            emm_grf_predict(model, wrong.as_ptr(), 1, &mut est, &mut var),
            EmmStatus::InvalidArgument
        );
        emm_grf_free(model);
        emm_dataset_free(data);
    }
}

#[test]
fn bayesian_estimators_fill_buffers() {
    let data = dataset(80);
    let opts = EmmMcmcOptions { burn_in: 20, draws: 20 };
    let mut ite = vec![f64::NAN; 80];
    let mut ps = vec![f64::NAN; 80];
    unsafe {
        assert_eq!(emm_bart_ite(data, &opts, 1, ite.as_mut_ptr(), 80), EmmStatus::Ok);
        assert!(ite.iter().all(|v| v.is_finite()));
        ite.fill(f64::NAN);
        assert_eq!(emm_bcf_ite(data, &opts, 1, ite.as_mut_ptr(), 80), EmmStatus::Ok);
        assert!(ite.iter().all(|v| v.is_finite()));
        assert_eq!(emm_propensity(data, ps.as_mut_ptr(), 80), EmmStatus::Ok);
        assert!(ps.iter().all(|p| *p > 0.0 && *p < 1.0));
        emm_dataset_free(data);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(
            emm_dataset_load_csv(ptr::null(), ptr::null(), ptr::null(), &mut out),
            EmmStatus::NullPointer
        );
        let missing = CString::new("/nonexistent/data.csv").unwrap();
        let y = CString::new("y").unwrap();
        let z = CString::new("z").unwrap();
        assert_eq!(
            emm_dataset_load_csv(missing.as_ptr(), y.as_ptr(), z.as_ptr(), &mut out),
            EmmStatus::Io
        );
        assert!(out.is_null());

        // Exposure must be binary.
        let x = [0.0, 1.0, 0.0];
        let bad_z = [0.0, 2.0, 1.0];
        let yv = [0.0, 1.0, 1.0];
        assert_eq!(
            emm_dataset_from_columns(x.as_ptr(), 3, 1, bad_z.as_ptr(), yv.as_ptr(), &mut out),
            EmmStatus::Data
        );
        assert!(last_error().contains("binary"));

        let mut model = ptr::null_mut();
        assert_eq!(emm_grf_fit(ptr::null(), 10, 0, &mut model), EmmStatus::NullPointer);
        assert_eq!(emm_dataset_n(ptr::null()), 0);
        emm_dataset_free(ptr::null_mut());
        emm_grf_free(ptr::null_mut());
    }
}

#[test]
fn csv_and_pipeline_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let mut text = String::from("y,z,a,b\n");
    for i in 0..60 {
        let a = i % 2;
        let b = (i / 2) % 3;
        let z = (i / 6) % 2;
        let y = usize::from((i * 7 + z * 3) % 5 < 2 + z);
        text.push_str(&format!("{y},{z},{a},{b}\n"));
    }
    std::fs::write(&csv, text).unwrap();
    let (path, y, z) = (
        CString::new(csv.to_str().unwrap()).unwrap(),
        CString::new("y").unwrap(),
        CString::new("z").unwrap(),
    );
    let mut data = ptr::null_mut();
    unsafe {
        assert_eq!(emm_dataset_load_csv(path.as_ptr(), y.as_ptr(), z.as_ptr(), &mut data), EmmStatus::Ok);
        assert_eq!(emm_dataset_p(data), 2);
        emm_dataset_free(data);
    }

    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "seed = 3\nsynthetic.n = 300\nsynthetic.p = 3\nmethods = grf, traditional\ngrf.num_trees = 40\noutput.dir = out\n",
    )
    .unwrap();
    let c = CString::new(cfg.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { emm_run_pipeline(c.as_ptr()) }, EmmStatus::Ok);
    assert!(dir.path().join("out").join("report.json").exists());

    std::fs::write(&cfg, "methods = gbm\n").unwrap();
    assert_eq!(unsafe { emm_run_pipeline(c.as_ptr()) }, EmmStatus::Config);
    assert!(last_error().contains("gbm"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/emm.h")).unwrap();
    for name in [
        "emm_version",
        "emm_last_error_message",
        "emm_dataset_from_columns",
        "emm_grf_fit",
        "emm_grf_free",
        "emm_bcf_ite",
        "emm_run_pipeline",
        "typedef struct EmmDataset EmmDataset",
        "EMM_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compiles a small C program against the header when a C compiler is present.
#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"emm.h\"\nint main(void) { EmmMcmcOptions o = {0, 0}; (void)o; return EMM_STATUS_OK; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}
