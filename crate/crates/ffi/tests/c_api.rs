use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use ecgalarm::ensemble::{fit_adaboost, BoostParams};
use ecgalarm::matrix::Matrix;
use ecgalarm::synthetic::SyntheticEcg;
use ecgalarm::Label;
use ecgalarm_ffi::*;

fn last_error() -> String {
    let p = ea_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn ecg() -> Vec<f64> {
    SyntheticEcg::at_bpm(75.0).with_duration(20.0).generate().0
}

#[test]
fn lengths() {
    assert_eq!(ea_hlf_len(), 31);
    assert_eq!(ea_llf_len(), 588);
    assert_eq!(ea_dwt_len(), 120);
}

#[test]
fn r_peaks_and_small_buffer() {
    let x = ecg();
    let mut out = vec![0usize; 64];
    let mut n = 0usize;
    let rc = unsafe { ea_detect_r_peaks(x.as_ptr(), x.len(), 250.0, out.as_mut_ptr(), out.len(), &mut n) };
    assert_eq!(rc, EA_OK);
    assert!((23..=26).contains(&n), "{n} peaks");
    assert!(ea_last_error().is_null());

    let mut tiny = [0usize; 2];
    let rc = unsafe { ea_detect_r_peaks(x.as_ptr(), x.len(), 250.0, tiny.as_mut_ptr(), 2, &mut n) };
    assert_eq!(rc, EA_ERR_BUFFER);
    assert!(n > 2);
    assert!(last_error().contains("need"));
}

#[test]
fn resampled_input_finds_same_beats() {
    let x = ecg();
    let up: Vec<f64> = x.iter().flat_map(|&v| [v, v]).collect();
    let (mut a, mut b) = (vec![0usize; 64], vec![0usize; 64]);
    let (mut na, mut nb) = (0, 0);
    unsafe {
        assert_eq!(ea_detect_r_peaks(x.as_ptr(), x.len(), 250.0, a.as_mut_ptr(), 64, &mut na), EA_OK);
        assert_eq!(ea_detect_r_peaks(up.as_ptr(), up.len(), 500.0, b.as_mut_ptr(), 64, &mut nb), EA_OK);
    }
    assert_eq!(na, nb);
    for (p, q) in a[..na].iter().zip(&b[..nb]) {
        assert!(p.abs_diff(*q) <= 3);
    }
}

#[test]
fn feature_vectors() {
    let x = ecg();
    let mut hlf = [0.0; 31];
    let mut hlf2 = [0.0; 31];
    let mut llf = vec![0.0; 588];
    let mut dwt = vec![0.0; 120];
    unsafe {
        assert_eq!(ea_hlf_features(x.as_ptr(), x.len(), 250.0, 3, EA_METRIC_CITYBLOCK, 7, hlf.as_mut_ptr(), 31), EA_OK);
        assert_eq!(ea_hlf_features(x.as_ptr(), x.len(), 250.0, 3, EA_METRIC_CITYBLOCK, 7, hlf2.as_mut_ptr(), 31), EA_OK);
        assert_eq!(ea_llf_features(x.as_ptr(), x.len(), 250.0, llf.as_mut_ptr(), 588), EA_OK);
        assert_eq!(ea_dwt_features(x.as_ptr(), x.len(), 250.0, dwt.as_mut_ptr(), 120), EA_OK);
    }
    assert_eq!(hlf, hlf2);
    assert!((hlf[0] - 75.0).abs() < 2.0, "heart rate {}", hlf[0]);
    // one-hot alarm block, index 3 in ASY EBR ETC VTA VFB order
    assert_eq!(&hlf[1..6], &[0.0, 0.0, 0.0, 1.0, 0.0]);
    assert!(llf.iter().chain(&dwt).all(|v| v.is_finite()));
    assert!(llf.iter().any(|&v| v != 0.0));
}

#[test]
fn argument_errors() {
    let x = ecg();
    let mut out = [0.0; 31];
    unsafe {
        assert_eq!(ea_hlf_features(ptr::null(), 10, 250.0, 0, 0, 0, out.as_mut_ptr(), 31), EA_ERR_NULL);
        assert_eq!(ea_hlf_features(x.as_ptr(), x.len(), 250.0, 5, 0, 0, out.as_mut_ptr(), 31), EA_ERR_INVALID);
        assert_eq!(ea_hlf_features(x.as_ptr(), x.len(), 250.0, 0, 2, 0, out.as_mut_ptr(), 31), EA_ERR_INVALID);
        assert_eq!(ea_hlf_features(x.as_ptr(), x.len(), 0.0, 0, 0, 0, out.as_mut_ptr(), 31), EA_ERR_INVALID);
        assert_eq!(ea_hlf_features(x.as_ptr(), 0, 250.0, 0, 0, 0, out.as_mut_ptr(), 31), EA_ERR_EMPTY);
        assert_eq!(ea_dwt_features(x.as_ptr(), 10, 250.0, out.as_mut_ptr(), 31), EA_ERR_BUFFER);
        let mut dwt = [0.0; 120];
        assert_eq!(ea_dwt_features(x.as_ptr(), 10, 250.0, dwt.as_mut_ptr(), 120), EA_ERR_EMPTY);
    }
    assert!(!last_error().is_empty());
}

#[test]
fn flat_signal_gives_hlf_vector() {
    let x = vec![0.0; 2500];
    let mut out = [f64::NAN; 31];
    let rc = unsafe { ea_hlf_features(x.as_ptr(), x.len(), 250.0, 0, EA_METRIC_SQEUCLIDEAN, 0, out.as_mut_ptr(), 31) };
    assert_eq!(rc, EA_OK);
    assert!(out.iter().all(|v| v.is_finite()));
}

#[test]
fn roc_auc() {
    let labels = [1, 1, 0, 0, 1];
    let scores = [0.9, 0.4, 0.5, 0.1, 0.8];
    let mut auc = 0.0;
    assert_eq!(unsafe { ea_roc_auc(labels.as_ptr(), scores.as_ptr(), 5, &mut auc) }, EA_OK);
    assert!((auc - 5.0 / 6.0).abs() < 1e-12);
    let one = [1, 1];
    assert_eq!(unsafe { ea_roc_auc(one.as_ptr(), scores.as_ptr(), 2, &mut auc) }, EA_ERR_CLASS);
    let bad = [1, 2];
    assert_eq!(unsafe { ea_roc_auc(bad.as_ptr(), scores.as_ptr(), 2, &mut auc) }, EA_ERR_INVALID);
}

#[test]
fn model_round_trip() {
    let rows: Vec<[f64; 2]> = (0..40).map(|i| [i as f64, ((i * 7) % 11) as f64]).collect();
    let y: Vec<Label> = (0..40).map(|i| if i >= 20 { Label::TrueAlarm } else { Label::FalseAlarm }).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let model = fit_adaboost(&x, &y, BoostParams::default(), "test-v1").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    model.save(&path).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { ea_model_load(c_path.as_ptr(), &mut handle) }, EA_OK);
    assert_eq!(unsafe { ea_model_n_features(handle) }, 2);
    for r in &rows {
        let mut s = 0.0;
        assert_eq!(unsafe { ea_model_score(handle, r.as_ptr(), 2, &mut s) }, EA_OK);
        assert_eq!(s.to_bits(), model.score(r).unwrap().to_bits());
    }
    let mut s = 0.0;
    assert_eq!(unsafe { ea_model_score(handle, rows[0].as_ptr(), 1, &mut s) }, EA_ERR_INVALID);
    unsafe { ea_model_free(handle) };
    unsafe { ea_model_free(ptr::null_mut()) };
    assert_eq!(unsafe { ea_model_n_features(ptr::null()) }, 0);

    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ea_model_load(missing.as_ptr(), &mut handle) }, EA_ERR_IO);
    assert!(handle.is_null());
    std::fs::write(&path, "garbage\n").unwrap();
    assert_eq!(unsafe { ea_model_load(c_path.as_ptr(), &mut handle) }, EA_ERR_PARSE);
}

#[test]
fn header_compiles_as_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = include.join("ecgalarm.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["ea_hlf_features", "ea_model_load", "ea_model_free", "ea_last_error", "typedef struct EaModel EaModel"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        "#include \"ecgalarm.h\"\nint main(void) { EaModel *m = 0; return ea_model_load(\"x\", &m) == EA_OK; }\n",
    )
    .unwrap();
    let status = match Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"]).arg(&include).arg(&src).status() {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler, skipping");
            return;
        }
    };
    assert!(status.success());
}
