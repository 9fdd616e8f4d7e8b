//! C ABI over the `stmmc` library.
//!
//! Every function returns an [`StmmcStatus`]; on failure the message is
//! available from [`stmmc_last_error`] on the same thread. Handles are opaque
//! and must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use stmmc::ingest::{load_dataset, Dataset};
use stmmc::pipeline::{run, RunOutput};
use stmmc::trainer::TrainConfig;
use stmmc::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StmmcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidData = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Loaded and spot-aligned input modalities.
pub struct StmmcDataset {
    inner: Dataset,
}

/// Labels and diagnostics of one pipeline run.
pub struct StmmcResult {
    inner: RunOutput,
}

/// Run options. Obtain defaults with [`stmmc_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StmmcOptions {
    pub epochs: usize,
    pub seed: u64,
    pub n_clusters: usize,
    pub k_neighbors: usize,
    pub b_smooth: usize,
    pub learning_rate: f64,
    pub use_image_modality: bool,
    pub use_contrastive: bool,
    pub use_smoothing: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> StmmcStatus {
    match err {
        Error::Io { .. } | Error::Image(_) => StmmcStatus::Io,
        Error::MalformedHeader { .. } | Error::Parse { .. } | Error::Config { .. } => StmmcStatus::Parse,
        Error::InvalidArgument(_) => StmmcStatus::InvalidArgument,
        Error::Diverged { .. } | Error::ComponentCollapse { .. } | Error::Numerical(_) => StmmcStatus::Numerical,
        _ => StmmcStatus::InvalidData,
    }
}

fn fail(status: StmmcStatus, msg: impl Into<String>) -> StmmcStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), StmmcStatus>) -> StmmcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StmmcStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(StmmcStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn lib_err(e: Error) -> StmmcStatus {
    fail(status_of(&e), e.to_string())
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, StmmcStatus> {
    if p.is_null() {
        return Err(fail(StmmcStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(StmmcStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn labels_arg(p: *const u32, n: usize, name: &str) -> Result<Vec<usize>, StmmcStatus> {
    if p.is_null() {
        return Err(fail(StmmcStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n).iter().map(|&l| l as usize).collect())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn stmmc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn stmmc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes the library defaults into `out`. `n_clusters` is left 0 and must be set.
///
/// # Safety
/// `out` must be null or point to writable memory for one `StmmcOptions`.
#[no_mangle]
pub unsafe extern "C" fn stmmc_options_default(out: *mut StmmcOptions) -> StmmcStatus {
    if out.is_null() {
        return fail(StmmcStatus::NullPointer, "out is null");
    }
    let d = TrainConfig::default();
    out.write(StmmcOptions {
        epochs: d.epochs,
        seed: d.seed,
        n_clusters: d.n_clusters,
        k_neighbors: d.k_neighbors,
        b_smooth: d.b_smooth,
        learning_rate: d.learning_rate,
        use_image_modality: d.toggles.use_image_modality,
        use_contrastive: d.toggles.use_contrastive,
        use_smoothing: d.toggles.use_smoothing,
    });
    StmmcStatus::Ok
}

/// Loads expression, coordinates and (optionally, may be null) feature CSVs.
///
/// # Safety
/// Path arguments must be null or valid nul-terminated strings; `out` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn stmmc_dataset_load(
    expression_path: *const c_char,
    coords_path: *const c_char,
    features_path: *const c_char,
    out: *mut *mut StmmcDataset,
) -> StmmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(StmmcStatus::NullPointer, "out is null"));
        }
        out.write(ptr::null_mut());
        let expr = path_arg(expression_path, "expression_path")?;
        let coords = path_arg(coords_path, "coords_path")?;
        let feats = if features_path.is_null() {
            None
        } else {
            Some(path_arg(features_path, "features_path")?)
        };
        let ds = load_dataset(&expr, &coords, feats.as_deref()).map_err(lib_err)?;
        out.write(Box::into_raw(Box::new(StmmcDataset { inner: ds })));
        Ok(())
    })
}

/// Number of spots in a dataset, or 0 for null.
///
/// # Safety
/// `ds` must be null or a live handle from [`stmmc_dataset_load`].
#[no_mangle]
pub unsafe extern "C" fn stmmc_dataset_n_spots(ds: *const StmmcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.expression.n_spots())
}

/// # Safety
/// `ds` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn stmmc_dataset_free(ds: *mut StmmcDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains, clusters and (if enabled) smooths.
///
/// # Safety
/// `ds` must be a live dataset handle, `opts` readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stmmc_run(
    ds: *const StmmcDataset,
    opts: *const StmmcOptions,
    out: *mut *mut StmmcResult,
) -> StmmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(StmmcStatus::NullPointer, "out is null"));
        }
        out.write(ptr::null_mut());
        let ds = ds.as_ref().ok_or_else(|| fail(StmmcStatus::NullPointer, "dataset is null"))?;
        let o = opts.as_ref().ok_or_else(|| fail(StmmcStatus::NullPointer, "options is null"))?;
        let mut cfg = TrainConfig {
            epochs: o.epochs,
            seed: o.seed,
            n_clusters: o.n_clusters,
            k_neighbors: o.k_neighbors,
            b_smooth: o.b_smooth,
            learning_rate: o.learning_rate,
            ..TrainConfig::default()
        };
        cfg.toggles.use_image_modality = o.use_image_modality;
        cfg.toggles.use_contrastive = o.use_contrastive;
        cfg.toggles.use_smoothing = o.use_smoothing;
        if cfg.toggles.use_image_modality && ds.inner.features.is_none() {
            return Err(fail(
                StmmcStatus::InvalidArgument,
                "image modality enabled but the dataset has no features",
            ));
        }
        let res = run(&ds.inner, &cfg).map_err(lib_err)?;
        out.write(Box::into_raw(Box::new(StmmcResult { inner: res })));
        Ok(())
    })
}

/// Number of labelled spots in a result, or 0 for null.
///
/// # Safety
/// `res` must be null or a live handle from [`stmmc_run`].
#[no_mangle]
pub unsafe extern "C" fn stmmc_result_n_spots(res: *const StmmcResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.labels.len())
}

/// Copies final labels (expression-file spot order) into `buf`.
/// Fails with `BUFFER_TOO_SMALL` if `len` is below the spot count.
///
/// # Safety
/// `res` must be a live handle and `buf` writable for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn stmmc_result_labels(res: *const StmmcResult, buf: *mut u32, len: usize) -> StmmcStatus {
    copy_labels(res, buf, len, false)
}

/// Like [`stmmc_result_labels`], for the mixture labels before smoothing.
///
/// # Safety
/// Same as [`stmmc_result_labels`].
#[no_mangle]
pub unsafe extern "C" fn stmmc_result_raw_labels(res: *const StmmcResult, buf: *mut u32, len: usize) -> StmmcStatus {
    copy_labels(res, buf, len, true)
}

unsafe fn copy_labels(res: *const StmmcResult, buf: *mut u32, len: usize, raw: bool) -> StmmcStatus {
    guard(|| {
        let r = res.as_ref().ok_or_else(|| fail(StmmcStatus::NullPointer, "result is null"))?;
        if buf.is_null() {
            return Err(fail(StmmcStatus::NullPointer, "buffer is null"));
        }
        let labels = if raw { &r.inner.raw_labels } else { &r.inner.labels };
        if len < labels.len() {
            return Err(fail(
                StmmcStatus::BufferTooSmall,
                format!("buffer holds {len}, need {}", labels.len()),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, labels.len());
        for (o, &l) in out.iter_mut().zip(labels.labels()) {
            *o = l as u32;
        }
        Ok(())
    })
}

/// # Safety
/// `res` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn stmmc_result_free(res: *mut StmmcResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Adjusted Rand index of two labelings of length `n`.
///
/// # Safety
/// `a` and `b` must be readable for `n` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stmmc_ari(a: *const u32, b: *const u32, n: usize, out: *mut f64) -> StmmcStatus {
    metric(a, b, n, out, stmmc::metrics::ari)
}

/// Normalized mutual information (arithmetic-mean normalization).
///
/// # Safety
/// Same as [`stmmc_ari`].
#[no_mangle]
pub unsafe extern "C" fn stmmc_nmi(a: *const u32, b: *const u32, n: usize, out: *mut f64) -> StmmcStatus {
    metric(a, b, n, out, stmmc::metrics::nmi)
}

unsafe fn metric(
    a: *const u32,
    b: *const u32,
    n: usize,
    out: *mut f64,
    f: fn(&[usize], &[usize]) -> stmmc::Result<f64>,
) -> StmmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(StmmcStatus::NullPointer, "out is null"));
        }
        let a = labels_arg(a, n, "a")?;
        let b = labels_arg(b, n, "b")?;
        out.write(f(&a, &b).map_err(lib_err)?);
        Ok(())
    })
}
