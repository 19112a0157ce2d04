//! C ABI for the gactgan engine.
//!
//! Conventions:
//! - Opaque handles (`GactganPosterior`) own Rust objects; free them with the
//!   matching `_free` function exactly once.
//! - Every fallible call returns a `GactganStatus`; on failure the
//!   thread-local message from `gactgan_last_error` describes the cause.
//! - All strings are NUL-terminated UTF-8 paths.
//!
//! The header `include/gactgan.h` is generated by cbindgen at build time.

use gactgan::data::infer_schema;
use gactgan::error::Error;
use gactgan::exp::{evaluate_dir, load_experiment_data, run_sweep, train_all, ExperimentConfig};
use gactgan::swag::{load_posterior, synthesize, PosteriorArtifact, SynthesisOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

/// Status codes returned across the ABI boundary. Mirrors the CLI exit
/// codes, with `Panic` reserved for internal invariant failures.
#[repr(i32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GactganStatus {
    Ok = 0,
    Usage = 1,
    Data = 2,
    Numeric = 3,
    Panic = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> GactganStatus {
    match err.exit_code() {
        1 => GactganStatus::Usage,
        2 => GactganStatus::Data,
        _ => GactganStatus::Numeric,
    }
}

fn run_ffi<F: FnOnce() -> Result<(), Error>>(f: F) -> GactganStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GactganStatus::Ok,
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal panic: {msg}"));
            GactganStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string.
unsafe fn path_arg(ptr: *const c_char, name: &str) -> Result<PathBuf, Error> {
    if ptr.is_null() {
        return Err(Error::Usage(format!("{name} is null")));
    }
    let s = unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| Error::Usage(format!("{name} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Copies the last error message for this thread into `buf` (truncated to
/// `len - 1` bytes, always NUL-terminated) and returns the full message
/// length in bytes. Passing a null buffer just returns the length.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes, or be null.
#[no_mangle]
pub unsafe extern "C" fn gactgan_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Opaque handle to a loaded posterior artifact.
pub struct GactganPosterior {
    inner: PosteriorArtifact,
}

/// Loads a posterior artifact from disk into an opaque handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn gactgan_posterior_load(
    path: *const c_char,
    out: *mut *mut GactganPosterior,
) -> GactganStatus {
    run_ffi(|| {
        if out.is_null() {
            return Err(Error::Usage("out handle pointer is null".into()));
        }
        let path = unsafe { path_arg(path, "path") }?;
        let artifact = load_posterior(&path)?;
        let handle = Box::new(GactganPosterior { inner: artifact });
        unsafe { *out = Box::into_raw(handle) };
        Ok(())
    })
}

/// Frees a posterior handle. Passing null is a no-op.
///
/// # Safety
/// `handle` must have come from `gactgan_posterior_load` and not be freed
/// twice.
#[no_mangle]
pub unsafe extern "C" fn gactgan_posterior_free(handle: *mut GactganPosterior) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Number of generator parameters in the posterior (0 for a null handle).
///
/// # Safety
/// `handle` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gactgan_posterior_param_count(handle: *const GactganPosterior) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { &*handle }.inner.posterior.dim()
}

/// Number of stored deviation columns (0 for a null handle).
///
/// # Safety
/// `handle` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gactgan_posterior_rank(handle: *const GactganPosterior) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { &*handle }.inner.posterior.k_eff()
}

/// Covariance scale stored in the artifact (NaN for a null handle).
///
/// # Safety
/// `handle` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gactgan_posterior_default_alpha(
    handle: *const GactganPosterior,
) -> f64 {
    if handle.is_null() {
        return f64::NAN;
    }
    unsafe { &*handle }.inner.posterior.alpha
}

/// Synthesizes `n` rows to a CSV file. `alpha < 0` selects the artifact's
/// stored scale; `rank < 0` uses every stored deviation column.
///
/// # Safety
/// `handle` must be a live handle; `out_csv` a valid NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn gactgan_synthesize_csv(
    handle: *const GactganPosterior,
    n: u64,
    batch: u64,
    s_samples: u64,
    alpha: f64,
    rank: i64,
    seed: u64,
    out_csv: *const c_char,
) -> GactganStatus {
    run_ffi(|| {
        if handle.is_null() {
            return Err(Error::Usage("posterior handle is null".into()));
        }
        let artifact = &unsafe { &*handle }.inner;
        let out_csv = unsafe { path_arg(out_csv, "out_csv") }?;
        let mut opts = SynthesisOptions::new(n as usize, batch as usize, s_samples as usize);
        if alpha >= 0.0 {
            opts.alpha = Some(alpha);
        }
        if rank >= 0 {
            opts.rank = Some(rank as usize);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (table, _report) = synthesize(artifact, &opts, &mut rng)?;
        table.write_csv(&out_csv)
    })
}

/// Infers a column schema from a CSV file and writes it as JSON.
///
/// # Safety
/// Both pointers must be valid NUL-terminated paths.
#[no_mangle]
pub unsafe extern "C" fn gactgan_infer_schema(
    csv: *const c_char,
    out_json: *const c_char,
) -> GactganStatus {
    run_ffi(|| {
        let csv = unsafe { path_arg(csv, "csv") }?;
        let out = unsafe { path_arg(out_json, "out_json") }?;
        let schema = infer_schema(&csv, &BTreeMap::new())?;
        gactgan::data::write_schema_json(&out, &schema)
    })
}

/// Trains every (loss, seed) model of an experiment config (idempotent).
///
/// # Safety
/// `config_json` must be a valid NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn gactgan_train(config_json: *const c_char) -> GactganStatus {
    run_ffi(|| {
        let path = unsafe { path_arg(config_json, "config_json") }?;
        let cfg = ExperimentConfig::load(&path)?;
        std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
        let data = load_experiment_data(&cfg)?;
        train_all(&cfg, &data).map(|_| ())
    })
}

/// Runs a full sweep; `out_dir` (nullable) overrides the config's output
/// directory.
///
/// # Safety
/// `config_json` must be valid; `out_dir` may be null.
#[no_mangle]
pub unsafe extern "C" fn gactgan_sweep(
    config_json: *const c_char,
    out_dir: *const c_char,
) -> GactganStatus {
    run_ffi(|| {
        let path = unsafe { path_arg(config_json, "config_json") }?;
        let mut cfg = ExperimentConfig::load(&path)?;
        if !out_dir.is_null() {
            cfg.output_dir = unsafe { path_arg(out_dir, "out_dir") }?;
        }
        std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
        run_sweep(&cfg).map(|_| ())
    })
}

/// Evaluates a directory of synthetic CSVs against an original table and
/// writes the metrics report.
///
/// # Safety
/// All pointers must be valid NUL-terminated paths.
#[no_mangle]
pub unsafe extern "C" fn gactgan_evaluate(
    original_csv: *const c_char,
    synthetic_dir: *const c_char,
    spec_json: *const c_char,
    phi: f64,
    out_json: *const c_char,
) -> GactganStatus {
    run_ffi(|| {
        let original = unsafe { path_arg(original_csv, "original_csv") }?;
        let synthetic = unsafe { path_arg(synthetic_dir, "synthetic_dir") }?;
        let spec_path = unsafe { path_arg(spec_json, "spec_json") }?;
        let out = unsafe { path_arg(out_json, "out_json") }?;
        let text =
            std::fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
        let spec: gactgan::eval::UtilitySpec = serde_json::from_str(&text)
            .map_err(|e| Error::format(&spec_path, e.to_string()))?;
        evaluate_dir(&original, &synthetic, &spec, phi, &out)
    })
}
