//! C ABI over the embedding, masking, PDW file and classifier APIs.
//!
//! Every fallible function returns a [`PsStatus`]; on failure the message is
//! available from [`ps_last_error`] until the next call on the same thread.
//! Objects are opaque handles created by `*_new`/`*_load`/`*_read` functions
//! and released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use pulsesort::masking::d_low;
use pulsesort::pdw::{read_pdw, write_pdw, PdwRecord, Variable, N_VARS};
use pulsesort::pipeline::Classifier;
use pulsesort::wvembs::{decode, encode_rows, f_periodic, EmbedConfig, PeriodicFn, VarEmbedding};
use pulsesort::Error;

/// Number of PDW variables per pulse (toa, rf, pw, pa, doa).
pub const PS_N_VARS: usize = 5;

const _: () = assert!(PS_N_VARS == N_VARS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Precondition = 4,
    NumericDomain = 5,
    DecodeFailure = 6,
    Shape = 7,
    Parse = 8,
    Io = 9,
    Missing = 10,
    Divergence = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsPeriodicFn {
    LinearPeriodic = 0,
    Sinusoidal = 1,
}

impl From<PsPeriodicFn> for PeriodicFn {
    fn from(f: PsPeriodicFn) -> Self {
        match f {
            PsPeriodicFn::LinearPeriodic => PeriodicFn::LinearPeriodic,
            PsPeriodicFn::Sinusoidal => PeriodicFn::Sinusoidal,
        }
    }
}

/// One pulse as seen from C.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsPulse {
    pub toa: f64,
    pub rf: f64,
    pub pw: f64,
    pub pa: f64,
    pub doa: f64,
    pub label: u16,
}

impl From<PdwRecord> for PsPulse {
    fn from(r: PdwRecord) -> Self {
        PsPulse {
            toa: r.toa,
            rf: r.rf,
            pw: r.pw,
            pa: r.pa,
            doa: r.doa,
            label: r.label,
        }
    }
}

impl From<PsPulse> for PdwRecord {
    fn from(p: PsPulse) -> Self {
        PdwRecord::from_values([p.toa, p.rf, p.pw, p.pa, p.doa], p.label)
    }
}

/// Opaque embedding configuration.
pub struct PsEmbedConfig(EmbedConfig);

/// Opaque PDW stream.
pub struct PsStream(Vec<PdwRecord>);

/// Opaque trained classifier.
pub struct PsClassifier(Classifier);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PsStatus {
    match e {
        Error::Config { .. } => PsStatus::Config,
        Error::Precondition(_) => PsStatus::Precondition,
        Error::NumericDomain(_) => PsStatus::NumericDomain,
        Error::DecodeFailure(_) => PsStatus::DecodeFailure,
        Error::Shape { .. } => PsStatus::Shape,
        Error::Parse { .. } | Error::Header { .. } => PsStatus::Parse,
        Error::Io { .. } => PsStatus::Io,
        Error::Missing { .. } => PsStatus::Missing,
        Error::Divergence { .. } => PsStatus::Divergence,
    }
}

enum Fail {
    Status(PsStatus, String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(PsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording the error message and mapping failures and panics to
/// a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PsStatus::Ok
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(&msg);
            s
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            PsStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Status(PsStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn variable(index: u32) -> Result<Variable, Fail> {
    Variable::ALL
        .get(index as usize)
        .copied()
        .ok_or_else(|| Fail::Status(PsStatus::InvalidArgument, format!("variable index {index} is not below {N_VARS}")))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn ps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The periodic function `f(x)`.
///
/// # Safety
/// `out` must be null or point to writable memory for one double.
#[no_mangle]
pub unsafe extern "C" fn ps_f_periodic(x: f64, variant: PsPeriodicFn, out: *mut f64) -> PsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = f_periodic(x, variant.into())?;
        Ok(())
    })
}

/// Cut-off dimension for spread `m`: `⌊δ·log_k m⌋` clamped to `[0, dim]`.
/// Masking replaces the 1-based dimensions `d ≥` this index; a result of
/// `dim` leaves the variable untouched.
///
/// # Safety
/// `out` must be null or point to writable memory for one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn ps_d_low(m: f64, dim: usize, delta: usize, k: u32, out: *mut usize) -> PsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let var = VarEmbedding::new(dim, delta, k);
        var.validate("d_low")?;
        *out = d_low(m, &var);
        Ok(())
    })
}

/// Default embedding configuration: `D = 16` for toa, `8` elsewhere,
/// `δ = 2`, `k = 10`, identity affine maps.
///
/// # Safety
/// `out` must be null or point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_embed_config_default(out: *mut *mut PsEmbedConfig) -> PsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(PsEmbedConfig(EmbedConfig::default())));
        Ok(())
    })
}

/// The same `D`, `δ` and `k` for every variable.
///
/// # Safety
/// `out` must be null or point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_embed_config_uniform(
    dim: usize,
    delta: usize,
    k: u32,
    variant: PsPeriodicFn,
    out: *mut *mut PsEmbedConfig,
) -> PsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let config = EmbedConfig::uniform(dim, delta, k, variant.into())?;
        *out = Box::into_raw(Box::new(PsEmbedConfig(config)));
        Ok(())
    })
}

/// Sets the affine map `x' = a·x + b` of one variable (0 toa … 4 doa).
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_embed_config_set_affine(config: *mut PsEmbedConfig, var: u32, a: f64, b: f64) -> PsStatus {
    guard(|| {
        let config = out_ptr(config, "config")?;
        let v = variable(var)?;
        if !(a.is_finite() && b.is_finite() && a > 0.0) {
            return Err(Fail::Status(PsStatus::InvalidArgument, format!("affine map a = {a}, b = {b} needs a finite positive scale")));
        }
        let slot = &mut config.0.vars[v.index()];
        slot.a = a;
        slot.b = b;
        Ok(())
    })
}

/// Features per variable in an encoded token (the largest `D`); 0 for null.
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_embed_config_token_dim(config: *const PsEmbedConfig) -> usize {
    config.as_ref().map_or(0, |c| c.0.token_dim())
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_embed_config_free(config: *mut PsEmbedConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Encodes `len` pulses given as `len × 5` raw values (toa, rf, pw, pa, doa
/// per row) into `len × 5 × token_dim` features written to `out`.
///
/// # Safety
/// `rows` must point to `5·len` doubles and `out` to `out_len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_encode(
    config: *const PsEmbedConfig,
    rows: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> PsStatus {
    guard(|| {
        let config = handle(config, "config")?;
        if len > 0 && rows.is_null() {
            return Err(null("rows"));
        }
        let need = len * N_VARS * config.0.token_dim();
        if out_len < need {
            return Err(Fail::Status(PsStatus::BufferTooSmall, format!("output holds {out_len} doubles, {need} needed")));
        }
        if need > 0 && out.is_null() {
            return Err(null("out"));
        }
        let flat = if len == 0 { &[][..] } else { std::slice::from_raw_parts(rows, len * N_VARS) };
        let rows: Vec<[f64; N_VARS]> = flat.chunks_exact(N_VARS).map(|c| c.try_into().expect("chunk of N_VARS")).collect();
        let e = encode_rows(&rows, &config.0)?;
        if need > 0 {
            std::slice::from_raw_parts_mut(out, need).copy_from_slice(&e.values);
        }
        Ok(())
    })
}

/// Recovers the five transformed values of one encoded token.
///
/// # Safety
/// `token` must point to `token_len` doubles and `out` to 5 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_decode(config: *const PsEmbedConfig, token: *const f64, token_len: usize, out: *mut f64) -> PsStatus {
    guard(|| {
        let config = handle(config, "config")?;
        if token.is_null() {
            return Err(null("token"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let values = decode(std::slice::from_raw_parts(token, token_len), &config.0)?;
        std::slice::from_raw_parts_mut(out, N_VARS).copy_from_slice(&values);
        Ok(())
    })
}

/// An empty stream.
#[no_mangle]
pub extern "C" fn ps_stream_new() -> *mut PsStream {
    Box::into_raw(Box::new(PsStream(Vec::new())))
}

/// Reads a PDW file (`.csv` or binary).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_stream_read(path: *const c_char, out: *mut *mut PsStream) -> PsStatus {
    guard(|| {
        let path = path_arg(path)?;
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(PsStream(read_pdw(&path)?)));
        Ok(())
    })
}

/// Writes a stream; the format follows the extension (`.csv` or binary).
///
/// # Safety
/// `stream` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ps_stream_write(stream: *const PsStream, path: *const c_char) -> PsStatus {
    guard(|| {
        let stream = handle(stream, "stream")?;
        let path = path_arg(path)?;
        write_pdw(&path, &stream.0)?;
        Ok(())
    })
}

/// # Safety
/// `stream` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_stream_len(stream: *const PsStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `stream` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_stream_get(stream: *const PsStream, index: usize, out: *mut PsPulse) -> PsStatus {
    guard(|| {
        let stream = handle(stream, "stream")?;
        let out = out_ptr(out, "out")?;
        let r = stream.0.get(index).ok_or_else(|| {
            Fail::Status(PsStatus::InvalidArgument, format!("index {index} out of range for {} pulses", stream.0.len()))
        })?;
        *out = (*r).into();
        Ok(())
    })
}

/// Appends one pulse.
///
/// # Safety
/// `stream` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_stream_push(stream: *mut PsStream, pulse: PsPulse) -> PsStatus {
    guard(|| {
        let stream = out_ptr(stream, "stream")?;
        stream.0.push(pulse.into());
        Ok(())
    })
}

/// # Safety
/// `stream` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_stream_free(stream: *mut PsStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Loads a checkpoint written by `pulsesort train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_classifier_load(path: *const c_char, out: *mut *mut PsClassifier) -> PsStatus {
    guard(|| {
        let path = path_arg(path)?;
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(PsClassifier(Classifier::load(&path)?)));
        Ok(())
    })
}

/// Number of classes; 0 for null.
///
/// # Safety
/// `clf` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_classifier_classes(clf: *const PsClassifier) -> usize {
    clf.as_ref().map_or(0, |c| c.0.classes())
}

/// Predicts the class of every pulse of `stream` into `labels`
/// (`capacity` ≥ stream length). Input labels are ignored.
///
/// # Safety
/// Handles must be live and `labels` must hold `capacity` writable values.
#[no_mangle]
pub unsafe extern "C" fn ps_classifier_predict(
    clf: *const PsClassifier,
    stream: *const PsStream,
    labels: *mut u16,
    capacity: usize,
) -> PsStatus {
    guard(|| {
        let clf = handle(clf, "classifier")?;
        let stream = handle(stream, "stream")?;
        let n = stream.0.len();
        if capacity < n {
            return Err(Fail::Status(PsStatus::BufferTooSmall, format!("label buffer holds {capacity}, {n} needed")));
        }
        if n == 0 {
            return Ok(());
        }
        if labels.is_null() {
            return Err(null("labels"));
        }
        let predicted = clf.0.predict_stream(&stream.0)?;
        std::slice::from_raw_parts_mut(labels, n).copy_from_slice(&predicted);
        Ok(())
    })
}

/// # Safety
/// `clf` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_classifier_free(clf: *mut PsClassifier) {
    if !clf.is_null() {
        drop(Box::from_raw(clf));
    }
}
