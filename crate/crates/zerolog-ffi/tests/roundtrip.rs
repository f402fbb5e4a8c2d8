//! Drives the C interface the way a host program would: train-shaped
//! artifacts on disk, open, score, compare against the library answer.

use std::ffi::{CStr, CString};
use std::ptr;

use zerolog::data::{generate_synthetic_pair, parse_synthetic_pair, SyntheticSpec};
use zerolog::embed::{build_global_embeddings, EmbeddingConfig, EventEmbedding, WordVectorTable};
use zerolog::eval::embed_session;
use zerolog::net::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use zerolog::net::{NetworkConfig, NetworkParams};

use zerolog_ffi::{
    zl_detector_dimension, zl_detector_free, zl_detector_open, zl_detector_score, zl_last_error,
    ZlDetector, ZlStatus,
};

fn open(
    ckpt: &std::path::Path,
    emb: &std::path::Path,
) -> (ZlStatus, *mut ZlDetector) {
    let ckpt = CString::new(ckpt.to_str().unwrap()).unwrap();
    let emb = CString::new(emb.to_str().unwrap()).unwrap();
    let mut det: *mut ZlDetector = ptr::null_mut();
    let status = unsafe { zl_detector_open(ckpt.as_ptr(), emb.as_ptr(), &mut det) };
    (status, det)
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(zl_last_error()).to_str().unwrap().to_string() }
}

#[test]
fn scores_match_the_library_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        templates_per_system: 6,
        sessions_per_system: 12,
        session_length: (3, 5),
        ..SyntheticSpec::default()
    };
    let pair = parse_synthetic_pair(generate_synthetic_pair(&spec).unwrap()).unwrap();
    let emb_cfg = EmbeddingConfig { dimension: 10, ..EmbeddingConfig::default() };
    let table = WordVectorTable::empty(10);
    let embeddings = build_global_embeddings(
        &[("synth-src", &pair.source_store), ("synth-tgt", &pair.target_store)],
        &table,
        &emb_cfg,
        None,
    )
    .unwrap();
    let net_cfg = NetworkConfig {
        input_dim: 10,
        hidden_dim: 6,
        attention_dim: 4,
        head_hidden_dim: 4,
        init_seed: 42,
    };
    let ckpt = Checkpoint {
        params: NetworkParams::init(net_cfg),
        seed: 42,
        iteration: 0,
        hyperparams: serde_json::Value::Null,
    };
    let ckpt_path = dir.path().join("checkpoint.bin");
    let emb_path = dir.path().join("embeddings.tsv");
    save_checkpoint(&ckpt_path, &ckpt).unwrap();
    embeddings.save(&emb_path).unwrap();

    let (status, det) = open(&ckpt_path, &emb_path);
    assert_eq!(status, ZlStatus::Ok);
    assert!(!det.is_null());

    let mut dim = 0usize;
    assert_eq!(unsafe { zl_detector_dimension(det, &mut dim) }, ZlStatus::Ok);
    assert_eq!(dim, 10);

    // The reference answer must go through the same f32 round trip the
    // handle does, so reload rather than reuse the in-memory params.
    let reloaded = load_checkpoint(&ckpt_path).unwrap();
    let stored = EventEmbedding::load(&emb_path).unwrap();
    for session in pair.target.sessions.iter().take(8) {
        let mut got = f64::NAN;
        let system = CString::new("synth-tgt").unwrap();
        let status = unsafe {
            zl_detector_score(
                det,
                system.as_ptr(),
                session.event_ids.as_ptr(),
                session.event_ids.len(),
                &mut got,
            )
        };
        assert_eq!(status, ZlStatus::Ok);
        let (seq, _) = embed_session(&session.event_ids, "synth-tgt", &stored, &emb_cfg);
        let want = reloaded.params.classify_anomaly(&seq);
        assert_eq!(got.to_bits(), want.to_bits(), "session {}", session.key);
    }

    // Ids that were never embedded fall back to the hash policy, not errors.
    let mut fallback = f64::NAN;
    let system = CString::new("never-seen").unwrap();
    let ids = [9999u32, 12345];
    let status = unsafe {
        zl_detector_score(det, system.as_ptr(), ids.as_ptr(), ids.len(), &mut fallback)
    };
    assert_eq!(status, ZlStatus::Ok);
    assert!((0.0..=1.0).contains(&fallback));

    unsafe { zl_detector_free(det) };
    unsafe { zl_detector_free(ptr::null_mut()) };
}

#[test]
fn failure_paths_report_status_and_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bin");
    let emb_path = dir.path().join("embeddings.tsv");
    std::fs::write(&emb_path, "synth-src:0\t0.5 0.5\n").unwrap();

    let (status, det) = open(&missing, &emb_path);
    assert_eq!(status, ZlStatus::Input);
    assert!(det.is_null());
    assert!(last_error().contains("nope.bin"), "got {}", last_error());

    // Dimension mismatch between table and checkpoint.
    let net_cfg = NetworkConfig {
        input_dim: 10,
        hidden_dim: 6,
        attention_dim: 4,
        head_hidden_dim: 4,
        init_seed: 1,
    };
    let ckpt_path = dir.path().join("checkpoint.bin");
    let ckpt = Checkpoint {
        params: NetworkParams::init(net_cfg),
        seed: 1,
        iteration: 0,
        hyperparams: serde_json::Value::Null,
    };
    save_checkpoint(&ckpt_path, &ckpt).unwrap();
    let (status, det) = open(&ckpt_path, &emb_path);
    assert_eq!(status, ZlStatus::Input);
    assert!(det.is_null());
    assert!(last_error().contains("dimension"), "got {}", last_error());

    // Null and empty argument handling on the scoring path.
    let emb10 = dir.path().join("embeddings10.tsv");
    std::fs::write(&emb10, format!("synth-src:0\t{}\n", vec!["0.1"; 10].join(" "))).unwrap();
    let (status, det) = open(&ckpt_path, &emb10);
    assert_eq!(status, ZlStatus::Ok);
    let system = CString::new("synth-src").unwrap();
    let ids = [0u32];
    let mut p = 0.0;
    let status = unsafe { zl_detector_score(det, system.as_ptr(), ids.as_ptr(), 0, &mut p) };
    assert_eq!(status, ZlStatus::Input);
    assert!(last_error().contains("no events"), "got {}", last_error());
    let status =
        unsafe { zl_detector_score(det, ptr::null(), ids.as_ptr(), ids.len(), &mut p) };
    assert_eq!(status, ZlStatus::NullArgument);
    let status = unsafe {
        zl_detector_score(ptr::null(), system.as_ptr(), ids.as_ptr(), ids.len(), &mut p)
    };
    assert_eq!(status, ZlStatus::NullArgument);
    let bad_utf8 = CString::new([0x66u8, 0xff, 0x66].as_slice()).unwrap();
    let status =
        unsafe { zl_detector_score(det, bad_utf8.as_ptr(), ids.as_ptr(), ids.len(), &mut p) };
    assert_eq!(status, ZlStatus::InvalidUtf8);

    unsafe { zl_detector_free(det) };
}
