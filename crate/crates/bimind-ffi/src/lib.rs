//! C interface to the classifier.
//!
//! The surface mirrors the command-line tool: stateless entry points for
//! corpus generation, memory-bank construction, training, and evaluation
//! (all file-path based, byte-identical outputs), plus an opaque read-only
//! handle over a persisted memory bank and the per-instance knowledge-gain
//! helper. Every fallible call returns a [`BimindStatus`]; when a call
//! fails, a human-readable message is kept per thread and can be copied out
//! with [`bimind_last_error`].
//!
//! The generated header lands in `include/bimind.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;
use std::slice;

use bimind::diagnostics::{text_table, vox};
use bimind::memory::{HashedBowProvider, MemoryBank};
use bimind::pipeline::{evaluate, train, Checkpoint, RunConfig, SynthSpec};
use bimind::text::load_jsonl;
use bimind::Error;

/// Outcome of a call. Anything other than `Ok` leaves an explanation
/// readable through `bimind_last_error` on the calling thread.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BimindStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An input was structurally invalid: malformed config or dataset,
    /// shape mismatch, label out of range, fingerprint mismatch, ...
    InvalidInput = 3,
    /// A file could not be read or written.
    Io = 4,
    /// Training produced a non-finite loss. The last finite checkpoint and
    /// bank are still written before this is reported.
    Diverged = 5,
    /// An internal invariant failed (a bug, not a usage error).
    Internal = 6,
}

/// Opaque handle to a loaded memory bank. Obtain with `bimind_bank_open`,
/// release with `bimind_bank_free`.
pub struct BimindBank {
    inner: MemoryBank,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure {
    status: BimindStatus,
    message: String,
}

impl Failure {
    fn new(status: BimindStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io(_) => BimindStatus::Io,
            Error::Diverged { .. } => BimindStatus::Diverged,
            _ => BimindStatus::InvalidInput,
        };
        Failure::new(status, e.to_string())
    }
}

fn set_error(message: &str) {
    let bytes: Vec<u8> = message
        .bytes()
        .map(|b| if b == 0 { b' ' } else { b })
        .collect();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(bytes).unwrap_or_default());
}

/// Run `body`, record any failure message, and keep panics from crossing
/// the language boundary.
fn wrap(body: impl FnOnce() -> Result<(), Failure>) -> BimindStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => BimindStatus::Ok,
        Ok(Err(failure)) => {
            set_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            set_error(&panic_message(payload.as_ref()));
            BimindStatus::Internal
        }
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    let detail = payload
        .downcast_ref::<&str>()
        .map(|s| (*s).to_owned())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".to_owned());
    format!("internal panic: {detail}")
}

/// # Safety
/// `p` must be null or point at a NUL-terminated string.
unsafe fn required_str<'a>(name: &str, p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(
            BimindStatus::NullArgument,
            format!("{name} must not be null"),
        ));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure::new(
            BimindStatus::InvalidUtf8,
            format!("{name} is not valid UTF-8"),
        )
    })
}

unsafe fn required_path<'a>(name: &str, p: *const c_char) -> Result<&'a Path, Failure> {
    Ok(Path::new(required_str(name, p)?))
}

fn required_ptr<T>(name: &str, p: *const T) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::new(
            BimindStatus::NullArgument,
            format!("{name} must not be null"),
        ));
    }
    Ok(())
}

/// Where a checkpoint's bank lives by default: the checkpoint path with
/// `.bank` appended, matching the command-line tool.
fn bank_path_for(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".bank");
    PathBuf::from(s)
}

fn io_failure(context: String, e: std::io::Error) -> Failure {
    Failure::new(BimindStatus::Io, format!("{context}: {e}"))
}

// ── metadata and errors ──────────────────────────────────────────────

/// Library version as a static NUL-terminated string. Never null; do not
/// free.
#[no_mangle]
pub extern "C" fn bimind_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the message left by the most recent failing call on this thread
/// into `buf`, NUL-terminated and truncated to `cap` bytes (including the
/// NUL). Returns the full message length in bytes excluding the NUL, so a
/// call with a null `buf` or zero `cap` sizes the buffer without copying.
///
/// # Safety
/// `buf` must be null or point at `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn bimind_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

// ── stateless pipeline entry points ──────────────────────────────────

/// Generate a synthetic corpus. `spec_path` names a `key = value` file
/// (kind, n, seed, window); the corpus is written to `out_path` as JSONL,
/// one instance per line.
///
/// # Safety
/// Both arguments must be null or NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn bimind_synth_gen(
    spec_path: *const c_char,
    out_path: *const c_char,
) -> BimindStatus {
    wrap(|| {
        let spec_path = required_path("spec_path", spec_path)?;
        let out_path = required_path("out_path", out_path)?;
        let spec = SynthSpec::from_file(spec_path)?;
        let corpus = spec.generate()?;
        let mut body = String::new();
        for instance in &corpus {
            body.push_str(&serde_json::to_string(instance).map_err(Error::from)?);
            body.push('\n');
        }
        fs::write(out_path, body).map_err(|e| io_failure(format!("writing {out_path:?}"), e))
    })
}

/// Build a semantic memory bank over a JSONL dataset (one JSON object per
/// line: id, text, label) and write it to `out_path`. `dim` is the
/// embedding width and `seed` the embedding hash seed; both become part of
/// the bank fingerprint.
///
/// # Safety
/// Both path arguments must be null or NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn bimind_memory_build(
    data_path: *const c_char,
    out_path: *const c_char,
    dim: usize,
    seed: u64,
) -> BimindStatus {
    wrap(|| {
        let data_path = required_path("data_path", data_path)?;
        let out_path = required_path("out_path", out_path)?;
        let instances = load_jsonl(data_path)?;
        let provider = HashedBowProvider::new(dim, seed);
        let bank = MemoryBank::build(&provider, &instances)?;
        bank.save(out_path)?;
        Ok(())
    })
}

/// Train a model. `config_path` names a `key = value` run configuration
/// (including any `disable_*` switches), `data_path` the JSONL dataset to
/// split and train on. The checkpoint is written to `ckpt_path` and its
/// memory bank next to it as `<ckpt>.bank`. If training diverges, the last
/// finite state is still written and `Diverged` is returned.
///
/// # Safety
/// All arguments must be null or NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn bimind_train(
    config_path: *const c_char,
    data_path: *const c_char,
    ckpt_path: *const c_char,
) -> BimindStatus {
    wrap(|| {
        let config_path = required_path("config_path", config_path)?;
        let data_path = required_path("data_path", data_path)?;
        let ckpt_path = required_path("ckpt_path", ckpt_path)?;
        let config = RunConfig::from_file(config_path)?;
        let instances = load_jsonl(data_path)?;
        let outcome = train(&config, &instances)?;
        outcome.checkpoint.save(ckpt_path)?;
        outcome.bank.save(&bank_path_for(ckpt_path))?;
        if let Some(epoch) = outcome.diverged_at {
            return Err(Error::Diverged { epoch }.into());
        }
        Ok(())
    })
}

/// Evaluate a checkpoint on a JSONL dataset and write `report.json`,
/// `report.txt`, and `traces.jsonl` into `report_dir` (created if needed),
/// matching the command-line tool byte for byte. `bank_path` may be null to
/// use the checkpoint's sibling `<ckpt>.bank`.
///
/// # Safety
/// All arguments must be null or NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn bimind_eval(
    ckpt_path: *const c_char,
    data_path: *const c_char,
    report_dir: *const c_char,
    bank_path: *const c_char,
) -> BimindStatus {
    wrap(|| {
        let ckpt_path = required_path("ckpt_path", ckpt_path)?;
        let data_path = required_path("data_path", data_path)?;
        let report_dir = required_path("report_dir", report_dir)?;
        let bank_path = if bank_path.is_null() {
            bank_path_for(ckpt_path)
        } else {
            required_path("bank_path", bank_path)?.to_path_buf()
        };

        let ckpt = Checkpoint::load(ckpt_path)?;
        let bank = MemoryBank::load(&bank_path)?;
        let instances = load_jsonl(data_path)?;
        let out = evaluate(&ckpt, &instances, &bank)?;

        fs::create_dir_all(report_dir)
            .map_err(|e| io_failure(format!("creating {report_dir:?}"), e))?;
        let report_json = serde_json::to_string_pretty(&out.report).map_err(Error::from)?;
        fs::write(report_dir.join("report.json"), report_json + "\n")
            .map_err(|e| io_failure(format!("writing into {report_dir:?}"), e))?;
        fs::write(report_dir.join("report.txt"), text_table(&out.report))
            .map_err(|e| io_failure(format!("writing into {report_dir:?}"), e))?;
        let mut traces = String::new();
        for trace in &out.traces {
            traces.push_str(&serde_json::to_string(trace).map_err(Error::from)?);
            traces.push('\n');
        }
        fs::write(report_dir.join("traces.jsonl"), traces)
            .map_err(|e| io_failure(format!("writing into {report_dir:?}"), e))?;
        Ok(())
    })
}

/// Knowledge gain of a single instance: the knowledge head's logit for the
/// true class minus the content head's, `ze[label] - z0[label]`. `z0` and
/// `ze` must each point at `len` logits; the gain is stored in `*out`.
///
/// # Safety
/// `z0` and `ze` must be null or point at `len` readable doubles, and
/// `out` at one writable double.
#[no_mangle]
pub unsafe extern "C" fn bimind_vox(
    z0: *const f64,
    ze: *const f64,
    len: usize,
    label: usize,
    out: *mut f64,
) -> BimindStatus {
    wrap(|| {
        required_ptr("z0", z0)?;
        required_ptr("ze", ze)?;
        required_ptr("out", out)?;
        let z0 = slice::from_raw_parts(z0, len);
        let ze = slice::from_raw_parts(ze, len);
        *out = vox(z0, ze, label)?;
        Ok(())
    })
}

// ── memory-bank handle ───────────────────────────────────────────────

/// Load a persisted memory bank. Returns null on failure (the message is
/// available through `bimind_last_error`); otherwise the handle stays valid
/// until `bimind_bank_free`.
///
/// # Safety
/// `path` must be null or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bimind_bank_open(path: *const c_char) -> *mut BimindBank {
    let opened = catch_unwind(AssertUnwindSafe(|| -> Result<*mut BimindBank, Failure> {
        let path = required_path("path", path)?;
        let inner = MemoryBank::load(path)?;
        Ok(Box::into_raw(Box::new(BimindBank { inner })))
    }));
    match opened {
        Ok(Ok(handle)) => handle,
        Ok(Err(failure)) => {
            set_error(&failure.message);
            ptr::null_mut()
        }
        Err(payload) => {
            set_error(&panic_message(payload.as_ref()));
            ptr::null_mut()
        }
    }
}

/// Number of rows in the bank; 0 for a null handle.
///
/// # Safety
/// `bank` must be null or a handle from `bimind_bank_open`.
#[no_mangle]
pub unsafe extern "C" fn bimind_bank_len(bank: *const BimindBank) -> usize {
    bank.as_ref().map_or(0, |b| b.inner.len())
}

/// Embedding width of the bank's rows; 0 for a null handle.
///
/// # Safety
/// `bank` must be null or a handle from `bimind_bank_open`.
#[no_mangle]
pub unsafe extern "C" fn bimind_bank_dim(bank: *const BimindBank) -> usize {
    bank.as_ref().map_or(0, |b| b.inner.dim())
}

/// Embedding hash seed the bank was built with; 0 for a null handle.
///
/// # Safety
/// `bank` must be null or a handle from `bimind_bank_open`.
#[no_mangle]
pub unsafe extern "C" fn bimind_bank_seed(bank: *const BimindBank) -> u64 {
    bank.as_ref().map_or(0, |b| b.inner.seed())
}

/// Copy the instance id of row `index` into `buf`, NUL-terminated and
/// truncated to `cap` bytes (including the NUL). Returns the full id length
/// in bytes excluding the NUL, or 0 if the handle is null or the index is
/// out of range.
///
/// # Safety
/// `bank` must be null or a handle from `bimind_bank_open`; `buf` must be
/// null or point at `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn bimind_bank_id(
    bank: *const BimindBank,
    index: usize,
    buf: *mut c_char,
    cap: usize,
) -> usize {
    let Some(bank) = bank.as_ref() else { return 0 };
    if index >= bank.inner.len() {
        return 0;
    }
    let bytes = bank.inner.id(index).as_bytes();
    if !buf.is_null() && cap > 0 {
        let n = bytes.len().min(cap - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
    }
    bytes.len()
}

/// Label of row `index`, or -1 if the handle is null or the index is out
/// of range.
///
/// # Safety
/// `bank` must be null or a handle from `bimind_bank_open`.
#[no_mangle]
pub unsafe extern "C" fn bimind_bank_label(bank: *const BimindBank, index: usize) -> i32 {
    let Some(bank) = bank.as_ref() else { return -1 };
    if index >= bank.inner.len() {
        return -1;
    }
    bank.inner.label(index) as i32
}

/// Exact top-k rows by cosine similarity against `query` (`query_len` must
/// equal the bank dimension). Ranks descend by similarity with ties broken
/// by ascending instance id; a row whose id equals `exclude_id` (nullable)
/// is skipped. Row indices and similarities are copied into the caller's
/// arrays, which must each hold at least `k` elements. `*out_written`
/// receives the number of rows produced; it is less than `k` only when the
/// bank has fewer rows after exclusion, and `*out_clamped` flags that case.
///
/// # Safety
/// `bank` must be null or a handle from `bimind_bank_open`; `query` must
/// point at `query_len` readable doubles; `out_indices` and
/// `out_similarities` at `k` writable elements each; `out_written` and
/// `out_clamped` at one writable element each; `exclude_id` must be null
/// or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bimind_bank_topk(
    bank: *const BimindBank,
    query: *const f64,
    query_len: usize,
    k: usize,
    exclude_id: *const c_char,
    out_indices: *mut usize,
    out_similarities: *mut f64,
    out_written: *mut usize,
    out_clamped: *mut bool,
) -> BimindStatus {
    wrap(|| {
        let Some(bank) = bank.as_ref() else {
            return Err(Failure::new(
                BimindStatus::NullArgument,
                "bank must not be null",
            ));
        };
        required_ptr("query", query)?;
        required_ptr("out_indices", out_indices)?;
        required_ptr("out_similarities", out_similarities)?;
        required_ptr("out_written", out_written)?;
        required_ptr("out_clamped", out_clamped)?;
        let exclude = if exclude_id.is_null() {
            None
        } else {
            Some(required_str("exclude_id", exclude_id)?)
        };
        let query = slice::from_raw_parts(query, query_len);
        let top = bank.inner.topk(query, k, exclude)?;
        ptr::copy_nonoverlapping(top.indices.as_ptr(), out_indices, top.indices.len());
        ptr::copy_nonoverlapping(
            top.similarities.as_ptr(),
            out_similarities,
            top.similarities.len(),
        );
        *out_written = top.indices.len();
        *out_clamped = top.clamped;
        Ok(())
    })
}

/// Release a handle from `bimind_bank_open`. Null is a no-op.
///
/// # Safety
/// `bank` must be null or a handle from `bimind_bank_open` that has not
/// already been freed.
#[no_mangle]
pub unsafe extern "C" fn bimind_bank_free(bank: *mut BimindBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}
