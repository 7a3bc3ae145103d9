use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use disclstm::autodiff::Matrix;
use disclstm::graph::build_graph;
use disclstm::model::{ModelConfig, ModelParams};
use disclstm_ffi::*;

fn config() -> DisclstmModelConfig {
    DisclstmModelConfig {
        dim_u: 4,
        dim_g: 3,
        dim_h: 2,
        layers: 2,
        num_classes: 3,
    }
}

fn init(seed: u64) -> *mut DisclstmModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { disclstm_model_init(&config(), seed, &mut m) }, DisclstmStatus::Ok);
    assert!(!m.is_null());
    m
}

fn embeddings() -> Vec<f64> {
    (0..12).map(|i| 0.1 * i as f64 - 0.5).collect()
}

const EDGES: [usize; 4] = [0, 1, 1, 2];

fn reference_logits(seed: u64) -> Vec<f64> {
    let params = ModelParams::init(ModelConfig::from(config()), seed).unwrap();
    let u = Matrix::from_vec(3, 4, embeddings()).unwrap();
    let g = build_graph(3, &[(0, 1), (1, 2)]).unwrap();
    params.forward(&u, &g).unwrap().data().to_vec()
}

fn last_error() -> String {
    let p = disclstm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

#[test]
fn forward_matches_the_library() {
    let m = init(7);
    let u = embeddings();
    let mut logits = vec![0.0; 9];
    let s = unsafe { disclstm_model_forward(m, u.as_ptr(), 3, 4, EDGES.as_ptr(), 2, logits.as_mut_ptr()) };
    assert_eq!(s, DisclstmStatus::Ok);
    assert_eq!(logits, reference_logits(7));

    let mut labels = vec![usize::MAX; 3];
    let s = unsafe { disclstm_model_predict(m, u.as_ptr(), 3, 4, EDGES.as_ptr(), 2, labels.as_mut_ptr()) };
    assert_eq!(s, DisclstmStatus::Ok);
    for (r, &l) in labels.iter().enumerate() {
        assert_eq!(l, disclstm::model::argmax(&logits[3 * r..3 * r + 3]));
    }
    unsafe { disclstm_model_free(m) };
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
    let m = init(3);
    assert_eq!(unsafe { disclstm_model_save(m, path.as_ptr()) }, DisclstmStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { disclstm_model_load(path.as_ptr(), &mut loaded) }, DisclstmStatus::Ok);
    let mut cfg = DisclstmModelConfig::default();
    assert_eq!(unsafe { disclstm_model_config(loaded, &mut cfg) }, DisclstmStatus::Ok);
    assert_eq!(cfg, config());

    let u = embeddings();
    let (mut a, mut b) = (vec![0.0; 9], vec![0.0; 9]);
    unsafe {
        disclstm_model_forward(m, u.as_ptr(), 3, 4, EDGES.as_ptr(), 2, a.as_mut_ptr());
        disclstm_model_forward(loaded, u.as_ptr(), 3, 4, EDGES.as_ptr(), 2, b.as_mut_ptr());
        disclstm_model_free(m);
        disclstm_model_free(loaded);
    }
    assert_eq!(a, b);
}

#[test]
fn errors_map_to_status_codes() {
    let mut out = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.ckpt").unwrap();
    assert_eq!(unsafe { disclstm_model_load(missing.as_ptr(), &mut out) }, DisclstmStatus::Io);
    assert!(last_error().contains("/nonexistent/model.ckpt"));
    assert!(out.is_null());

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint\n").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { disclstm_model_load(junk.as_ptr(), &mut out) }, DisclstmStatus::Format);

    assert_eq!(unsafe { disclstm_model_load(ptr::null(), &mut out) }, DisclstmStatus::NullPointer);

    let mut bad = config();
    bad.num_classes = 0;
    assert_eq!(unsafe { disclstm_model_init(&bad, 0, &mut out) }, DisclstmStatus::InvalidArgument);

    let m = init(1);
    let u = embeddings();
    let mut logits = vec![0.0; 9];
    // Backward edge.
    let back = [2usize, 1];
    let s = unsafe { disclstm_model_forward(m, u.as_ptr(), 3, 4, back.as_ptr(), 1, logits.as_mut_ptr()) };
    assert_eq!(s, DisclstmStatus::InvalidArgument);
    // Embedding width disagrees with the model.
    let s = unsafe { disclstm_model_forward(m, u.as_ptr(), 4, 3, EDGES.as_ptr(), 2, logits.as_mut_ptr()) };
    assert_eq!(s, DisclstmStatus::Shape);
    let s = unsafe { disclstm_model_forward(ptr::null(), u.as_ptr(), 3, 4, EDGES.as_ptr(), 2, logits.as_mut_ptr()) };
    assert_eq!(s, DisclstmStatus::NullPointer);
    let s = unsafe { disclstm_model_forward(m, u.as_ptr(), 3, 4, EDGES.as_ptr(), 2, ptr::null_mut()) };
    assert_eq!(s, DisclstmStatus::NullPointer);
    unsafe { disclstm_model_free(m) };
    unsafe { disclstm_model_free(ptr::null_mut()) };
}

#[test]
fn metrics_and_graph_stats() {
    let preds = [0usize, 1, 1, 2];
    let golds = [0usize, 1, 2, 2];
    let mut f1 = 0.0;
    let s = unsafe { disclstm_weighted_f1(preds.as_ptr(), golds.as_ptr(), 4, 3, &mut f1) };
    assert_eq!(s, DisclstmStatus::Ok);
    assert_eq!(f1, disclstm::metrics::weighted_f1(&preds, &golds, 3).unwrap().weighted_f1);
    let out_of_range = [5usize, 0, 0, 0];
    let s = unsafe { disclstm_weighted_f1(out_of_range.as_ptr(), golds.as_ptr(), 4, 3, &mut f1) };
    assert_eq!(s, DisclstmStatus::InvalidArgument);

    let edges = [0usize, 1, 1, 2, 2, 3];
    let mut stats = DisclstmGraphStats::default();
    assert_eq!(unsafe { disclstm_graph_stats(4, edges.as_ptr(), 3, &mut stats) }, DisclstmStatus::Ok);
    assert_eq!((stats.n, stats.edges, stats.complete_edges, stats.density), (4, 3, 6, 0.5));
    assert_eq!(unsafe { disclstm_graph_stats(1, ptr::null(), 0, &mut stats) }, DisclstmStatus::Ok);
    assert_eq!(stats.density, 0.0);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/disclstm.h")).unwrap();
    assert!(header.contains("#ifndef DISCLSTM_H"));
    for name in [
        "disclstm_model_init",
        "disclstm_model_load",
        "disclstm_model_save",
        "disclstm_model_free",
        "disclstm_model_config",
        "disclstm_model_forward",
        "disclstm_model_predict",
        "disclstm_weighted_f1",
        "disclstm_graph_stats",
        "disclstm_last_error_message",
        "disclstm_version",
        "typedef struct DisclstmModel DisclstmModel",
        "DISCLSTM_STATUS_PANIC = 7",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Directory holding the built static library: the test binary lives in
/// `<profile>/deps/`.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_agrees() {
    let lib = profile_dir().join("libdisclstm_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let manifest = env!("CARGO_MANIFEST_DIR");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .arg(format!("{manifest}/tests/c/smoke.c"))
        .arg(format!("-I{manifest}/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status.code());
    let got: Vec<f64> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(got, reference_logits(7));
}
