//! C ABI over `orgate-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! style functions and released with the matching `*_free`. Every fallible
//! function returns an [`OrgateStatus`]; on failure the message is available
//! from [`orgate_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use orgate_core::dataset::{self, CorpusConfig, NoisyCorpus};
use orgate_core::eval::{compute_eer, ScoredTrial};
use orgate_core::plan::{run_plan, ExperimentPlan};
use orgate_core::selector::{topk_labels, Decision, PredictionStore};
use orgate_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrgateStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    State = 4,
    Numeric = 5,
    Shape = 6,
    Lookup = 7,
    Input = 8,
    Parse = 9,
    Format = 10,
    Io = 11,
    Panic = 12,
}

/// Opaque training or test corpus.
pub struct OrgateCorpus(NoisyCorpus);

/// Opaque OR-Gate prediction store.
pub struct OrgateStore(PredictionStore);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn status_of(error: &Error) -> OrgateStatus {
    match error {
        Error::Config(_) => OrgateStatus::Config,
        Error::State(_) => OrgateStatus::State,
        Error::Numeric(_) => OrgateStatus::Numeric,
        Error::Shape { .. } => OrgateStatus::Shape,
        Error::Lookup(_) => OrgateStatus::Lookup,
        Error::Input(_) => OrgateStatus::Input,
        Error::Parse { .. } => OrgateStatus::Parse,
        Error::Format(_) => OrgateStatus::Format,
        Error::Io { .. } => OrgateStatus::Io,
        Error::Cell { source, .. } => status_of(source),
    }
}

struct Failure(OrgateStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(OrgateStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> OrgateStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => OrgateStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("panic inside orgate".into());
            OrgateStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(OrgateStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn json_error(e: serde_json::Error) -> Failure {
    Failure(OrgateStatus::Parse, format!("json: {e}"))
}

/// Message of the last failure on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn orgate_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Generates a clean corpus from a JSON corpus config.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orgate_corpus_generate(config_json: *const c_char, out: *mut *mut OrgateCorpus) -> OrgateStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let config: CorpusConfig = serde_json::from_str(str_arg(config_json, "config_json")?).map_err(json_error)?;
        let corpus = dataset::generate_corpus(&config)?;
        *out = Box::into_raw(Box::new(OrgateCorpus(corpus)));
        Ok(())
    })
}

/// Returns a new corpus with symmetric label noise at rate `eta`.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orgate_corpus_inject_noise(
    corpus: *const OrgateCorpus,
    eta: f64,
    seed: u64,
    out: *mut *mut OrgateCorpus,
) -> OrgateStatus {
    guard(|| {
        let corpus = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        let out = out_arg(out, "out")?;
        let noisy = dataset::inject_symmetric_noise(&corpus.0, eta, seed)?;
        *out = Box::into_raw(Box::new(OrgateCorpus(noisy)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orgate_corpus_load(path: *const c_char, out: *mut *mut OrgateCorpus) -> OrgateStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let corpus = dataset::load_corpus(&PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(OrgateCorpus(corpus)));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn orgate_corpus_save(corpus: *const OrgateCorpus, path: *const c_char) -> OrgateStatus {
    guard(|| {
        let corpus = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        dataset::save_corpus(&corpus.0, &PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn orgate_corpus_len(corpus: *const OrgateCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn orgate_corpus_num_corrupted(corpus: *const OrgateCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.num_corrupted())
}

/// Copies true and observed labels into caller buffers of length `len`, which must equal the corpus size.
///
/// # Safety
/// `corpus` must be a live handle; each buffer must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn orgate_corpus_labels(
    corpus: *const OrgateCorpus,
    true_labels: *mut usize,
    observed_labels: *mut usize,
    len: usize,
) -> OrgateStatus {
    guard(|| {
        let corpus = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        if len != corpus.0.len() {
            return Err(Error::Shape { expected: corpus.0.len(), actual: len }.into());
        }
        if true_labels.is_null() || observed_labels.is_null() {
            return Err(null("label buffer"));
        }
        let truth = std::slice::from_raw_parts_mut(true_labels, len);
        let observed = std::slice::from_raw_parts_mut(observed_labels, len);
        for (i, s) in corpus.0.samples.iter().enumerate() {
            truth[i] = s.true_label;
            observed[i] = s.observed_label;
        }
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn orgate_corpus_free(corpus: *mut OrgateCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Writes the `k` labels with the highest probability, in rank order, to `out_labels`.
///
/// # Safety
/// `probabilities` must hold `num_classes` values and `out_labels` room for `k`.
#[no_mangle]
pub unsafe extern "C" fn orgate_topk(
    probabilities: *const f64,
    num_classes: usize,
    k: usize,
    out_labels: *mut usize,
) -> OrgateStatus {
    guard(|| {
        let probs = slice_arg(probabilities, num_classes, "probabilities")?;
        let labels = topk_labels(probs, k)?;
        if out_labels.is_null() {
            return Err(null("out_labels"));
        }
        std::slice::from_raw_parts_mut(out_labels, labels.len()).copy_from_slice(&labels);
        Ok(())
    })
}

/// Creates a compressed OR-Gate store for `num_samples` samples with the given observed labels.
///
/// # Safety
/// `observed_labels` must hold `num_samples` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orgate_store_new(
    k: usize,
    num_classes: usize,
    observed_labels: *const usize,
    num_samples: usize,
    out: *mut *mut OrgateStore,
) -> OrgateStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let labels = slice_arg(observed_labels, num_samples, "observed_labels")?.to_vec();
        let store = PredictionStore::new(k, num_classes, labels, false)?;
        *out = Box::into_raw(Box::new(OrgateStore(store)));
        Ok(())
    })
}

/// Appends one epoch's prediction for a sample.
///
/// # Safety
/// `store` must be a live handle; `probabilities` must hold `num_classes` values.
#[no_mangle]
pub unsafe extern "C" fn orgate_store_record(
    store: *mut OrgateStore,
    sample_id: usize,
    probabilities: *const f64,
    num_classes: usize,
    epoch: usize,
) -> OrgateStatus {
    guard(|| {
        let store = store.as_mut().ok_or_else(|| null("store"))?;
        let probs = slice_arg(probabilities, num_classes, "probabilities")?;
        store.0.record_epoch(sample_id, probs, epoch)?;
        Ok(())
    })
}

/// Sets `*out_clean` to 1 when the sample's label appeared in its top-k set before `current_epoch`, else 0.
///
/// # Safety
/// `store` must be a live handle; `out_clean` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orgate_store_decide(
    store: *const OrgateStore,
    sample_id: usize,
    label: usize,
    current_epoch: usize,
    out_clean: *mut i32,
) -> OrgateStatus {
    guard(|| {
        let store = store.as_ref().ok_or_else(|| null("store"))?;
        let out = out_arg(out_clean, "out_clean")?;
        let decision = store.0.or_gate_decision(sample_id, label, current_epoch)?;
        *out = i32::from(decision == Decision::Clean);
        Ok(())
    })
}

/// # Safety
/// `store` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn orgate_store_free(store: *mut OrgateStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Equal error rate of `len` scored trials; `is_target` entries are 0 or nonzero.
///
/// # Safety
/// `scores` and `is_target` must hold `len` values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn orgate_compute_eer(
    scores: *const f64,
    is_target: *const u8,
    len: usize,
    out_eer: *mut f64,
    out_threshold: *mut f64,
) -> OrgateStatus {
    guard(|| {
        let scores = slice_arg(scores, len, "scores")?;
        let targets = slice_arg(is_target, len, "is_target")?;
        let eer_out = out_arg(out_eer, "out_eer")?;
        let threshold_out = out_arg(out_threshold, "out_threshold")?;
        let trials: Vec<ScoredTrial> = scores
            .iter()
            .zip(targets)
            .map(|(&score, &t)| ScoredTrial { score, is_target: t != 0 })
            .collect();
        let result = compute_eer(&trials)?;
        *eer_out = result.eer;
        *threshold_out = result.threshold;
        Ok(())
    })
}

/// Runs an experiment plan given as JSON (missing fields take defaults) and
/// returns the results table as a JSON string to be released with [`orgate_string_free`].
///
/// # Safety
/// `plan_json` must be a NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orgate_run_plan_json(plan_json: *const c_char, out_json: *mut *mut c_char) -> OrgateStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let plan: ExperimentPlan = serde_json::from_str(str_arg(plan_json, "plan_json")?).map_err(json_error)?;
        let table = run_plan(&plan)?;
        let text = CString::new(table.to_json()).expect("json has no NUL");
        *out = text.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn orgate_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
