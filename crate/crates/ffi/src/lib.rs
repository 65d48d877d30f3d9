//! C ABI for `embstab`.
//!
//! Matrices are passed across the boundary as opaque handles created by the
//! `*_new` or `*_read` functions and released with the matching `*_free`.
//! Every fallible function returns an [`EmbstabStatus`]; on failure the
//! message is available from [`embstab_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use embstab::classify;
use embstab::embed::{self, EmbeddingMatrix};
use embstab::funcsim::{self, LabelVector, OutputMatrix};
use embstab::harness::{self, ReportFormat, SweepConfig};
use embstab::measure::Measure;
use embstab::repsim;
use embstab::Error;

/// Status codes. The nonzero values match the command-line exit codes,
/// with two extra codes for null pointers and caught panics.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbstabStatus {
    Ok = 0,
    InvalidArgument = 1,
    DataError = 2,
    NumericError = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Opaque embedding matrix (N rows, D columns).
pub struct EmbstabEmbedding(EmbeddingMatrix);

/// Opaque classifier output matrix (n rows, C columns).
pub struct EmbstabOutput(OutputMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

enum Failure {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EmbstabStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EmbstabStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            EmbstabStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            match e.exit_code() {
                1 => EmbstabStatus::InvalidArgument,
                3 => EmbstabStatus::NumericError,
                _ => EmbstabStatus::DataError,
            }
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            EmbstabStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn as_out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument(format!("{what} is not valid UTF-8")).into())
}

unsafe fn as_slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn parse_measure(name: &str) -> Result<Measure, Failure> {
    name.parse::<Measure>().map_err(Failure::Lib)
}

/// Message for the most recent failure on this thread, or null.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn embstab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn embstab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `num_nodes * dim` row-major values into a new embedding.
///
/// # Safety
/// `values` must point to `num_nodes * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn embstab_embedding_new(
    num_nodes: usize,
    dim: usize,
    values: *const f64,
    out: *mut *mut EmbstabEmbedding,
) -> EmbstabStatus {
    guard(|| {
        let out = as_out(out, "out")?;
        let len = num_nodes
            .checked_mul(dim)
            .ok_or_else(|| Error::InvalidArgument("embedding size overflows".into()))?;
        let z = EmbeddingMatrix::new(num_nodes, dim, as_slice(values, len, "values")?.to_vec())?;
        *out = Box::into_raw(Box::new(EmbstabEmbedding(z)));
        Ok(())
    })
}

/// Reads an EMB1 file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn embstab_embedding_read(path: *const c_char, out: *mut *mut EmbstabEmbedding) -> EmbstabStatus {
    guard(|| {
        let out = as_out(out, "out")?;
        let z = embed::read_embedding(as_str(path, "path")?)?;
        *out = Box::into_raw(Box::new(EmbstabEmbedding(z)));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from this library; `num_nodes` and `dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn embstab_embedding_shape(
    handle: *const EmbstabEmbedding,
    num_nodes: *mut usize,
    dim: *mut usize,
) -> EmbstabStatus {
    guard(|| {
        let (n, d) = as_ref(handle, "handle")?.0.shape();
        *as_out(num_nodes, "num_nodes")? = n;
        *as_out(dim, "dim")? = d;
        Ok(())
    })
}

/// # Safety
/// `handle` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn embstab_embedding_free(handle: *mut EmbstabEmbedding) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Copies `n * classes` row-major probabilities into a new output matrix.
///
/// # Safety
/// `values` must point to `n * classes` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn embstab_output_new(
    n: usize,
    classes: usize,
    values: *const f64,
    out: *mut *mut EmbstabOutput,
) -> EmbstabStatus {
    guard(|| {
        let out = as_out(out, "out")?;
        let len = n
            .checked_mul(classes)
            .ok_or_else(|| Error::InvalidArgument("output size overflows".into()))?;
        let o = OutputMatrix::new(n, classes, as_slice(values, len, "values")?.to_vec())?;
        *out = Box::into_raw(Box::new(EmbstabOutput(o)));
        Ok(())
    })
}

/// Reads an OUT1 file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn embstab_output_read(path: *const c_char, out: *mut *mut EmbstabOutput) -> EmbstabStatus {
    guard(|| {
        let out = as_out(out, "out")?;
        let o = funcsim::read_output(as_str(path, "path")?)?;
        *out = Box::into_raw(Box::new(EmbstabOutput(o)));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from this library; `n` and `classes` must be writable.
#[no_mangle]
pub unsafe extern "C" fn embstab_output_shape(
    handle: *const EmbstabOutput,
    n: *mut usize,
    classes: *mut usize,
) -> EmbstabStatus {
    guard(|| {
        let (rows, c) = as_ref(handle, "handle")?.0.shape();
        *as_out(n, "n")? = rows;
        *as_out(classes, "classes")? = c;
        Ok(())
    })
}

/// # Safety
/// `handle` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn embstab_output_free(handle: *mut EmbstabOutput) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Representational similarity between two embeddings.
/// `measure` is one of `aligned_cos`, `dist_corr`, `knn_jaccard`, `second_cos`;
/// `k` is used only by the neighborhood measures.
///
/// # Safety
/// Pointers must be valid as described above.
#[no_mangle]
pub unsafe extern "C" fn embstab_repsim(
    measure: *const c_char,
    a: *const EmbstabEmbedding,
    b: *const EmbstabEmbedding,
    k: usize,
    out: *mut f64,
) -> EmbstabStatus {
    guard(|| {
        let m = parse_measure(as_str(measure, "measure")?)?;
        let (a, b) = (&as_ref(a, "a")?.0, &as_ref(b, "b")?.0);
        let out = as_out(out, "out")?;
        *out = match m {
            Measure::AlignedCos => repsim::aligned_cosine_similarity(a, b)?,
            Measure::DistCorr => repsim::distance_correlation(a, b)?,
            Measure::KnnJaccard => repsim::knn_jaccard(a, b, k)?,
            Measure::SecondCos => repsim::second_order_cosine(a, b, k)?,
            other => return Err(Error::InvalidArgument(format!("{other} is not a representational measure")).into()),
        };
        Ok(())
    })
}

/// Pairwise functional similarity between two output matrices.
/// `measure` is one of `disagreement`, `norm_disagreement`, `jsd` (nats).
/// `labels` (length `num_labels`) is required for `norm_disagreement` and may be null otherwise.
///
/// # Safety
/// Pointers must be valid as described above.
#[no_mangle]
pub unsafe extern "C" fn embstab_funcsim(
    measure: *const c_char,
    a: *const EmbstabOutput,
    b: *const EmbstabOutput,
    labels: *const usize,
    num_labels: usize,
    out: *mut f64,
) -> EmbstabStatus {
    guard(|| {
        let m = parse_measure(as_str(measure, "measure")?)?;
        let (a, b) = (&as_ref(a, "a")?.0, &as_ref(b, "b")?.0);
        let out = as_out(out, "out")?;
        *out = match m {
            Measure::Disagreement => funcsim::disagreement(a, b)?,
            Measure::Jsd => funcsim::mean_jsd(a, b)?,
            Measure::NormDisagreement => {
                if labels.is_null() {
                    return Err(Failure::Null("labels"));
                }
                let y = LabelVector::new(as_slice(labels, num_labels, "labels")?.to_vec());
                funcsim::minmax_normalized_disagreement(a, b, &y)?
            }
            other => return Err(Error::InvalidArgument(format!("{other} is not a pairwise functional measure")).into()),
        };
        Ok(())
    })
}

/// Fraction of instances on which all `count` outputs predict the same class.
///
/// # Safety
/// `outputs` must point to `count` valid handles.
#[no_mangle]
pub unsafe extern "C" fn embstab_stable_core(
    outputs: *const *const EmbstabOutput,
    count: usize,
    out: *mut f64,
) -> EmbstabStatus {
    guard(|| {
        let handles = as_slice(outputs, count, "outputs")?;
        let mats = handles
            .iter()
            .map(|&h| as_ref(h, "outputs[i]").map(|h| &h.0))
            .collect::<Result<Vec<_>, _>>()?;
        *as_out(out, "out")? = funcsim::stable_core(&mats)?;
        Ok(())
    })
}

/// Accuracy of the argmax predictions in `output` against `labels`.
///
/// # Safety
/// `labels` must point to `num_labels` values.
#[no_mangle]
pub unsafe extern "C" fn embstab_accuracy(
    output: *const EmbstabOutput,
    labels: *const usize,
    num_labels: usize,
    out: *mut f64,
) -> EmbstabStatus {
    guard(|| {
        let o = &as_ref(output, "output")?.0;
        let y = LabelVector::new(as_slice(labels, num_labels, "labels")?.to_vec());
        *as_out(out, "out")? = classify::accuracy(o, &y)?;
        Ok(())
    })
}

/// Runs a sweep from a JSON config and returns the report as a newly
/// allocated string (CSV when `json` is 0, JSON otherwise).
/// Relative paths in the config resolve against the working directory.
/// Free the result with [`embstab_string_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn embstab_sweep(config_json: *const c_char, json: i32, out: *mut *mut c_char) -> EmbstabStatus {
    guard(|| {
        let out = as_out(out, "out")?;
        let config = SweepConfig::from_json_str(as_str(config_json, "config_json")?)?;
        let report = harness::run_sweep(&config)?;
        let format = if json != 0 { ReportFormat::Json } else { ReportFormat::Csv };
        let text = harness::render_report(&report, format)?;
        *out = CString::new(text)
            .map_err(|_| Error::InvalidData("report contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn embstab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
