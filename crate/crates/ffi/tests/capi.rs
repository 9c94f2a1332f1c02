use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use orgate_ffi::*;

fn last_error() -> String {
    let p = orgate_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const CORPUS: &str = r#"{"num_speakers":5,"utterances_per_speaker":8,"feature_dim":4,
    "class_separation":6.0,"within_class_stddev":1.0,"seed":3}"#;

fn generate() -> *mut OrgateCorpus {
    let config = CString::new(CORPUS).unwrap();
    let mut corpus = ptr::null_mut();
    let status = unsafe { orgate_corpus_generate(config.as_ptr(), &mut corpus) };
    assert_eq!(status, OrgateStatus::Ok);
    corpus
}

#[test]
fn corpus_lifecycle() {
    let clean = generate();
    assert_eq!(unsafe { orgate_corpus_len(clean) }, 40);
    let mut noisy = ptr::null_mut();
    assert_eq!(unsafe { orgate_corpus_inject_noise(clean, 0.5, 9, &mut noisy) }, OrgateStatus::Ok);
    let flipped = unsafe { orgate_corpus_num_corrupted(noisy) };

    let mut truth = vec![0usize; 40];
    let mut observed = vec![0usize; 40];
    let status = unsafe { orgate_corpus_labels(noisy, truth.as_mut_ptr(), observed.as_mut_ptr(), 40) };
    assert_eq!(status, OrgateStatus::Ok);
    assert_eq!(truth.iter().zip(&observed).filter(|(a, b)| a != b).count(), flipped);
    let status = unsafe { orgate_corpus_labels(noisy, truth.as_mut_ptr(), observed.as_mut_ptr(), 39) };
    assert_eq!(status, OrgateStatus::Shape);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("c.txt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { orgate_corpus_save(noisy, path.as_ptr()) }, OrgateStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { orgate_corpus_load(path.as_ptr(), &mut loaded) }, OrgateStatus::Ok);
    assert_eq!(unsafe { orgate_corpus_num_corrupted(loaded) }, flipped);

    let mut again = ptr::null_mut();
    assert_eq!(unsafe { orgate_corpus_inject_noise(noisy, 0.1, 1, &mut again) }, OrgateStatus::State);
    assert!(again.is_null());
    assert!(last_error().contains("state"));

    unsafe {
        orgate_corpus_free(clean);
        orgate_corpus_free(noisy);
        orgate_corpus_free(loaded);
        orgate_corpus_free(ptr::null_mut());
    }
}

#[test]
fn bad_arguments_map_to_status_codes() {
    let mut corpus = ptr::null_mut();
    assert_eq!(unsafe { orgate_corpus_generate(ptr::null(), &mut corpus) }, OrgateStatus::NullPointer);
    let bad = CString::new("{\"num_speakers\": }").unwrap();
    assert_eq!(unsafe { orgate_corpus_generate(bad.as_ptr(), &mut corpus) }, OrgateStatus::Parse);
    let invalid = CString::new(CORPUS.replace("\"feature_dim\":4", "\"feature_dim\":0")).unwrap();
    assert_eq!(unsafe { orgate_corpus_generate(invalid.as_ptr(), &mut corpus) }, OrgateStatus::Config);
    let missing = CString::new("/nonexistent/orgate/corpus.txt").unwrap();
    assert_eq!(unsafe { orgate_corpus_load(missing.as_ptr(), &mut corpus) }, OrgateStatus::Io);
    assert!(corpus.is_null());
    assert_eq!(unsafe { orgate_corpus_len(ptr::null()) }, 0);
}

#[test]
fn topk_and_store() {
    let probs = [0.4, 0.4, 0.2];
    let mut labels = [9usize; 2];
    assert_eq!(unsafe { orgate_topk(probs.as_ptr(), 3, 2, labels.as_mut_ptr()) }, OrgateStatus::Ok);
    assert_eq!(labels, [0, 1]);
    assert_eq!(unsafe { orgate_topk(probs.as_ptr(), 3, 4, labels.as_mut_ptr()) }, OrgateStatus::Config);

    let observed = [2usize, 0];
    let mut store = ptr::null_mut();
    assert_eq!(unsafe { orgate_store_new(1, 3, observed.as_ptr(), 2, &mut store) }, OrgateStatus::Ok);
    let mut clean = -1;
    assert_eq!(unsafe { orgate_store_decide(store, 0, 2, 0, &mut clean) }, OrgateStatus::Ok);
    assert_eq!(clean, 0);
    assert_eq!(unsafe { orgate_store_decide(store, 0, 2, 1, &mut clean) }, OrgateStatus::State);

    let epochs = [[0.1, 0.2, 0.7], [0.6, 0.3, 0.1]];
    for (e, p) in epochs.iter().enumerate() {
        assert_eq!(unsafe { orgate_store_record(store, 0, p.as_ptr(), 3, e) }, OrgateStatus::Ok);
        assert_eq!(unsafe { orgate_store_record(store, 1, p.as_ptr(), 3, e) }, OrgateStatus::Ok);
    }
    assert_eq!(unsafe { orgate_store_decide(store, 0, 2, 1, &mut clean) }, OrgateStatus::Ok);
    assert_eq!(clean, 1);
    assert_eq!(unsafe { orgate_store_decide(store, 1, 0, 1, &mut clean) }, OrgateStatus::Ok);
    assert_eq!(clean, 0);
    assert_eq!(unsafe { orgate_store_decide(store, 1, 0, 2, &mut clean) }, OrgateStatus::Ok);
    assert_eq!(clean, 1);
    assert_eq!(unsafe { orgate_store_decide(store, 7, 0, 1, &mut clean) }, OrgateStatus::Lookup);
    unsafe { orgate_store_free(store) };
}

#[test]
fn eer() {
    let scores = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4];
    let targets = [1u8, 0, 1, 0, 1, 0];
    let (mut eer, mut threshold) = (f64::NAN, f64::NAN);
    let status = unsafe { orgate_compute_eer(scores.as_ptr(), targets.as_ptr(), 6, &mut eer, &mut threshold) };
    assert_eq!(status, OrgateStatus::Ok);
    assert!((eer - 1.0 / 3.0).abs() < 1e-12);
    assert!((threshold - 0.7).abs() < 1e-12);
    let status = unsafe { orgate_compute_eer(scores.as_ptr(), [1u8; 6].as_ptr(), 6, &mut eer, &mut threshold) };
    assert_eq!(status, OrgateStatus::Input);
}

#[test]
fn run_plan_returns_results_json() {
    let plan = r#"{
        "corpus": {"num_speakers":6,"utterances_per_speaker":10,"feature_dim":4,
                   "class_separation":8.0,"within_class_stddev":1.0,"seed":0},
        "test_speakers": 4, "test_utterances_per_speaker": 5,
        "num_target_trials": 20, "num_nontarget_trials": 20,
        "noise_rates": [0.0, 0.3], "modes": ["baseline", "orgate"], "repeats": 1,
        "eval_interval": 2, "snapshot_epochs": [1],
        "train": {"w": 1, "k": 1, "max_epochs": 3, "batch_size": 8,
                  "hidden_dims": [8], "embedding_dim": 4}
    }"#;
    let plan = CString::new(plan).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { orgate_run_plan_json(plan.as_ptr(), &mut out) }, OrgateStatus::Ok);
    let json = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { orgate_string_free(out) };
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(value["rows"].as_array().unwrap().len(), 4);

    let empty = CString::new(r#"{"modes": []}"#).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { orgate_run_plan_json(empty.as_ptr(), &mut out) }, OrgateStatus::Input);
    assert!(out.is_null());
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/orgate.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in [
        "orgate_last_error",
        "orgate_corpus_generate",
        "orgate_corpus_free",
        "orgate_topk",
        "orgate_store_decide",
        "orgate_compute_eer",
        "orgate_run_plan_json",
        "ORGATE_STATUS_OK = 0",
    ] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("use.c");
    std::fs::write(&source, "#include \"orgate.h\"\nint main(void) { return orgate_last_error() != 0; }\n").unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&source)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header does not compile as C99"),
        Err(_) => eprintln!("no C compiler found; skipped compile check"),
    }
}
