use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use momentfit_ffi::*;

fn legendre(order: usize) -> *mut MfFamily {
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { mf_family_legendre(order, -1.0, 1.0, &mut f) }, MfStatus::Ok);
    f
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mf_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn origin_sample_fit_evaluates_to_nine_eighths() {
    unsafe {
        let fam = legendre(2);
        let mut sample = ptr::null_mut();
        assert_eq!(mf_sample_new(1, [0.0].as_ptr(), 1, ptr::null(), &mut sample), MfStatus::Ok);
        let mut model = ptr::null_mut();
        assert_eq!(mf_fit(sample, fam, ptr::null(), &mut model), MfStatus::Ok);
        let (mut re, mut im) = (0.0, 1.0);
        assert_eq!(mf_model_eval(model, [0.0].as_ptr(), 1, &mut re, &mut im), MfStatus::Ok);
        assert!((re - 1.125).abs() < 1e-14);
        assert_eq!(im, 0.0);
        assert_eq!(mf_model_integrate(model, &mut re, ptr::null_mut()), MfStatus::Ok);
        assert!((re - 1.0).abs() < 1e-14);
        let mut n = 0;
        assert_eq!(mf_model_coefficient_count(model, &mut n), MfStatus::Ok);
        let mut a = vec![0.0; n];
        assert_eq!(mf_model_coefficients(model, a.as_mut_ptr(), ptr::null_mut(), n), MfStatus::Ok);
        assert!((a[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(mf_model_eval(model, [1.5].as_ptr(), 1, &mut re, ptr::null_mut()), MfStatus::OutOfDomain);
        assert!(last_error().contains("outside"), "{}", last_error());
        mf_model_free(model);
        mf_sample_free(sample);
        mf_family_free(fam);
    }
}

#[test]
fn lagrange_fit_meets_constraint() {
    unsafe {
        let mut fam = ptr::null_mut();
        assert_eq!(mf_family_hermite(4, &mut fam), MfStatus::Ok);
        let pts = [-0.7, 0.1, 0.4, 1.3, -1.9];
        let mut sample = ptr::null_mut();
        assert_eq!(mf_sample_new(1, pts.as_ptr(), pts.len(), ptr::null(), &mut sample), MfStatus::Ok);
        let opts = MfFitOptions { normalization: MfNormalization::Lagrange, normalization_constant: 1.0, ..mf_fit_options_default() };
        let mut model = ptr::null_mut();
        assert_eq!(mf_fit(sample, fam, &opts, &mut model), MfStatus::Ok);
        let mut total = 0.0;
        mf_model_integrate(model, &mut total, ptr::null_mut());
        assert!((total - 1.0).abs() < 1e-10);
        mf_model_free(model);
        mf_sample_free(sample);
        mf_family_free(fam);
    }
}

#[test]
fn xor_and_argument_classification() {
    unsafe {
        let l = legendre(1);
        let factors = [l as *const MfFamily, l as *const MfFamily];
        let mut fam = ptr::null_mut();
        assert_eq!(mf_family_tensor(factors.as_ptr(), 2, &mut fam), MfStatus::Ok);
        let pts = [1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0, 1.0];
        let w = [1.0, 1.0, -1.0, -1.0];
        let mut sample = ptr::null_mut();
        assert_eq!(mf_sample_new(2, pts.as_ptr(), 4, w.as_ptr(), &mut sample), MfStatus::Ok);
        let mut model = ptr::null_mut();
        assert_eq!(mf_fit(sample, fam, ptr::null(), &mut model), MfStatus::Ok);
        for (k, expect) in [1, 1, -1, -1].into_iter().enumerate() {
            let mut label = 0;
            assert_eq!(mf_model_classify_sign(model, pts[2 * k..].as_ptr(), 2, &mut label), MfStatus::Ok);
            assert_eq!(label, expect);
        }
        let mut label = 0;
        assert_eq!(mf_model_classify_argument(model, pts.as_ptr(), 2, 4, &mut label), MfStatus::WeightKind);

        let re = [1.0, -1.0, -1.0, 1.0];
        let im = [1.0, 1.0, -1.0, -1.0];
        let mut cs = ptr::null_mut();
        assert_eq!(mf_sample_new_complex(2, pts.as_ptr(), 4, re.as_ptr(), im.as_ptr(), &mut cs), MfStatus::Ok);
        let mut cm = ptr::null_mut();
        assert_eq!(mf_fit(cs, fam, ptr::null(), &mut cm), MfStatus::Ok);
        let mut is_complex = false;
        mf_model_is_complex(cm, &mut is_complex);
        assert!(is_complex);
        assert_eq!(mf_model_classify_argument(cm, [0.0, 0.0].as_ptr(), 2, 4, &mut label), MfStatus::Ok);
        assert_eq!(label, -1);
        for m in [model, cm] {
            mf_model_free(m);
        }
        mf_sample_free(sample);
        mf_sample_free(cs);
        mf_family_free(fam);
        mf_family_free(l);
    }
}

#[test]
fn errors_and_null_pointers() {
    unsafe {
        let mut f = ptr::null_mut();
        assert_eq!(mf_family_legendre(2, 1.0, -1.0, &mut f), MfStatus::InvalidInput);
        assert!(last_error().contains("degenerate"));
        assert!(f.is_null());
        assert_eq!(mf_family_legendre(2, -1.0, 1.0, ptr::null_mut()), MfStatus::NullPointer);
        let mut fam = ptr::null_mut();
        mf_family_hermite(2, &mut fam);
        let mut sample = ptr::null_mut();
        assert_eq!(mf_sample_new(1, [0.0].as_ptr(), 1, ptr::null(), &mut sample), MfStatus::Ok);
        let mut model = ptr::null_mut();
        let opts = MfFitOptions { kernel_eps: 0.1, ..mf_fit_options_default() };
        assert_eq!(mf_fit(sample, fam, &opts, &mut model), MfStatus::Ok);
        mf_model_free(model);
        mf_sample_free(sample);
        mf_family_free(fam);
        mf_family_free(ptr::null_mut());
    }
}

#[test]
fn model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    unsafe {
        let fam = legendre(3);
        let mut sample = ptr::null_mut();
        mf_sample_new(1, [0.2, -0.4, 0.9].as_ptr(), 3, ptr::null(), &mut sample);
        let mut model = ptr::null_mut();
        mf_fit(sample, fam, ptr::null(), &mut model);
        assert_eq!(mf_model_save(model, path.as_ptr()), MfStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(mf_model_load(path.as_ptr(), &mut back), MfStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(mf_model_to_json(back, &mut json), MfStatus::Ok);
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("\"legendre\""));
        mf_string_free(json);
        let (mut a, mut b) = (0.0, 0.0);
        mf_model_eval(model, [0.3].as_ptr(), 1, &mut a, ptr::null_mut());
        mf_model_eval(back, [0.3].as_ptr(), 1, &mut b, ptr::null_mut());
        assert_eq!(a, b);
        let missing = CString::new(dir.path().join("nope.json").to_str().unwrap()).unwrap();
        assert_eq!(mf_model_load(missing.as_ptr(), &mut back), MfStatus::Io);
        mf_model_free(model);
        mf_sample_free(sample);
        mf_family_free(fam);
    }
}

#[test]
fn prng_statistic() {
    let values = [0.5; 8];
    let mut r = MfPrngResult::default();
    assert_eq!(unsafe { mf_prng_test(values.as_ptr(), 8, 2, 4, &mut r) }, MfStatus::Ok);
    assert_eq!(r.statistic, 0.0);
    assert_eq!(unsafe { mf_prng_test(values.as_ptr(), 8, 2, 5, &mut r) }, MfStatus::InvalidInput);
}

fn include_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include")
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn header_compiles_as_c_and_cpp() {
    if !have_cc() {
        eprintln!("no C compiler found; header check skipped");
        return;
    }
    let header = include_dir().join("momentfit.h");
    for (lang, std) in [("c", "-std=c99"), ("c++", "-std=c++11")] {
        let out = Command::new("cc")
            .args(["-x", lang, std, "-Wall", "-Werror", "-fsyntax-only"])
            .arg(&header)
            .output()
            .unwrap();
        assert!(out.status.success(), "{lang}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn c_program_links_against_static_library() {
    if !have_cc() {
        eprintln!("no C compiler found; link check skipped");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libmomentfit_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; link check skipped", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "momentfit.h"
int main(void) {
    MfFamily *fam = NULL;
    MfSample *sample = NULL;
    MfModel *model = NULL;
    double x = 0.0, value = 0.0;
    if (mf_family_legendre(2, -1.0, 1.0, &fam) != MF_STATUS_OK) return 1;
    if (mf_sample_new(1, &x, 1, NULL, &sample) != MF_STATUS_OK) return 2;
    if (mf_fit(sample, fam, NULL, &model) != MF_STATUS_OK) return 3;
    if (mf_model_eval(model, &x, 1, &value, NULL) != MF_STATUS_OK) return 4;
    printf("%.6f\n", value);
    mf_model_free(model);
    mf_sample_free(sample);
    mf_family_free(fam);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("demo");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(include_dir())
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "1.125000");
}
