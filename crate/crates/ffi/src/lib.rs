//! C ABI over the salvet core: opaque model handles, status codes, and
//! thread-local error messages. Every function returns `SvStatus`;
//! `SV_STATUS_OK` means all out-parameters were written. On any other
//! status, `sv_last_error` yields a message valid until the next failing
//! call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use salvet::autodiff::Tensor;
use salvet::error::SalvetError;
use salvet::metrics;
use salvet::model::{build_model, predict, Model, ModelSpec};
use salvet::stats;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvStatus {
    Ok = 0,
    InvalidArgument = 1,
    Config = 2,
    Parse = 3,
    Numeric = 4,
    Io = 5,
    NullPointer = 6,
    Panic = 7,
}

/// Welch test outcome.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SvTestResult {
    pub statistic: f64,
    pub df: f64,
    pub p: f64,
}

/// Six-statistic angular-error summary.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SvErrorSummary {
    pub mean: f64,
    pub median: f64,
    pub trimean: f64,
    pub best25: f64,
    pub worst25: f64,
    pub worst5: f64,
    pub n: usize,
}

/// Opaque trained-model handle. Create with `sv_model_build` or
/// `sv_model_load`, release with `sv_model_free`.
pub struct SvModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &SalvetError) -> SvStatus {
    match err {
        SalvetError::InvalidArgument(_) => SvStatus::InvalidArgument,
        SalvetError::Config(_) => SvStatus::Config,
        SalvetError::Parse(_) => SvStatus::Parse,
        SalvetError::Numeric(_) => SvStatus::Numeric,
        SalvetError::Io { .. } => SvStatus::Io,
    }
}

fn fail(err: SalvetError) -> SvStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn guard(body: impl FnOnce() -> SvStatus) -> SvStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unidentified panic".into());
            set_error(&format!("internal panic: {msg}"));
            SvStatus::Panic
        }
    }
}

macro_rules! require {
    ($ptr:expr, $name:literal) => {
        if $ptr.is_null() {
            set_error(concat!($name, " must not be null"));
            return SvStatus::NullPointer;
        }
    };
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, SvStatus> {
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(s),
        Err(_) => {
            set_error("string argument is not valid UTF-8");
            Err(SvStatus::InvalidArgument)
        }
    }
}

/// Message for the most recent failure on this thread. Never null;
/// empty before the first failure. Invalidated by the next failing call.
#[no_mangle]
pub extern "C" fn sv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Build a model from a JSON spec (same schema as the TOML/JSON model
/// config: saliencyType, saliencyDims, optional contextual flags,
/// backbone, hiddenSize, kernelSize). Identical (spec, seed) pairs
/// produce bit-identical parameters.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sv_model_build(
    spec_json: *const c_char,
    seed: u64,
    out: *mut *mut SvModel,
) -> SvStatus {
    require!(spec_json, "spec_json");
    require!(out, "out");
    guard(|| {
        let json = match cstr(spec_json) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let spec: ModelSpec = match serde_json::from_str(json) {
            Ok(s) => s,
            Err(e) => return fail(SalvetError::Parse(format!("model spec: {e}"))),
        };
        match build_model(&spec, seed) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(SvModel { inner: model }));
                SvStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Load a checkpoint written by `sv_model_save` (or the Rust API).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sv_model_load(path: *const c_char, out: *mut *mut SvModel) -> SvStatus {
    require!(path, "path");
    require!(out, "out");
    guard(|| {
        let path = match cstr(path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match Model::load_checkpoint(Path::new(path)) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(SvModel { inner: model }));
                SvStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Save the model's checkpoint to `path`.
///
/// # Safety
/// `model` must come from this library and `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sv_model_save(model: *const SvModel, path: *const c_char) -> SvStatus {
    require!(model, "model");
    require!(path, "path");
    guard(|| {
        let path = match cstr(path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match (*model).inner.save_checkpoint(Path::new(path)) {
            Ok(()) => SvStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sv_model_free(model: *mut SvModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// FNV-1a checksum over the model's parameters, for quick equality checks.
///
/// # Safety
/// `model` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sv_model_checksum(model: *const SvModel, out: *mut u64) -> SvStatus {
    require!(model, "model");
    require!(out, "out");
    *out = (*model).inner.checksum();
    SvStatus::Ok
}

/// Spec code of the model (e.g. "C-S", "A-ST.ncs"), written NUL-terminated
/// into `buf`. Fails with SV_STATUS_INVALID_ARGUMENT if `cap` is too small.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sv_model_code(
    model: *const SvModel,
    buf: *mut c_char,
    cap: usize,
) -> SvStatus {
    require!(model, "model");
    require!(buf, "buf");
    guard(|| {
        let code = (*model).inner.spec().code();
        if cap < code.len() + 1 {
            set_error("buffer too small for the spec code");
            return SvStatus::InvalidArgument;
        }
        std::ptr::copy_nonoverlapping(code.as_ptr() as *const c_char, buf, code.len());
        *buf.add(code.len()) = 0;
        SvStatus::Ok
    })
}

/// Predict the final-frame illuminant for a sequence of `t` RGB frames,
/// laid out as one contiguous `t * 3 * h * w` array (frame, channel,
/// row, column), values in [0,1]. Writes a unit-norm RGB triple.
///
/// # Safety
/// `frames` must hold `t*3*h*w` doubles, `seq_id` must be NUL-terminated,
/// `out_rgb` must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn sv_model_predict(
    model: *const SvModel,
    frames: *const f64,
    t: usize,
    h: usize,
    w: usize,
    seq_id: *const c_char,
    out_rgb: *mut f64,
) -> SvStatus {
    require!(model, "model");
    require!(frames, "frames");
    require!(seq_id, "seq_id");
    require!(out_rgb, "out_rgb");
    guard(|| {
        if t == 0 || h == 0 || w == 0 {
            set_error("frame dimensions must be positive");
            return SvStatus::InvalidArgument;
        }
        let id = match cstr(seq_id) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let frame_len = 3 * h * w;
        let all = std::slice::from_raw_parts(frames, t * frame_len);
        let tensors: Vec<Tensor> = all
            .chunks_exact(frame_len)
            .map(|chunk| Tensor::new(&[3, h, w], chunk.to_vec()))
            .collect();
        match predict(&(*model).inner, &tensors, id, false) {
            Ok(pred) => {
                std::ptr::copy_nonoverlapping(pred.illuminant.as_ptr(), out_rgb, 3);
                SvStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Angular error in degrees between two RGB triples (scale-invariant).
///
/// # Safety
/// `a` and `b` must each hold 3 doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sv_angular_error(
    a: *const f64,
    b: *const f64,
    out: *mut f64,
) -> SvStatus {
    require!(a, "a");
    require!(b, "b");
    require!(out, "out");
    guard(|| {
        let av = [*a, *a.add(1), *a.add(2)];
        let bv = [*b, *b.add(1), *b.add(2)];
        match metrics::angular_error(&av, &bv) {
            Ok(deg) => {
                *out = deg;
                SvStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Summarize a set of angular errors into the six standard statistics.
///
/// # Safety
/// `errors` must hold `len` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sv_error_summary(
    errors: *const f64,
    len: usize,
    out: *mut SvErrorSummary,
) -> SvStatus {
    require!(errors, "errors");
    require!(out, "out");
    guard(|| {
        let xs = std::slice::from_raw_parts(errors, len);
        match metrics::summarize_errors(xs) {
            Ok(s) => {
                *out = SvErrorSummary {
                    mean: s.mean,
                    median: s.median,
                    trimean: s.trimean,
                    best25: s.best25,
                    worst25: s.worst25,
                    worst5: s.worst5,
                    n: s.n,
                };
                SvStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Jensen-Shannon divergence (natural log) between two nonnegative
/// weight vectors, normalized internally. Bounded by ln 2.
///
/// # Safety
/// `p` and `q` must each hold `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sv_jsd(
    p: *const f64,
    q: *const f64,
    len: usize,
    out: *mut f64,
) -> SvStatus {
    require!(p, "p");
    require!(q, "q");
    require!(out, "out");
    guard(|| {
        let pv = std::slice::from_raw_parts(p, len);
        let qv = std::slice::from_raw_parts(q, len);
        match metrics::jsd(pv, qv) {
            Ok(v) => {
                *out = v;
                SvStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Welch's unequal-variance t test between two samples.
///
/// # Safety
/// `a` must hold `na` doubles and `b` `nb` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sv_welch_t(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    out: *mut SvTestResult,
) -> SvStatus {
    require!(a, "a");
    require!(b, "b");
    require!(out, "out");
    guard(|| {
        let av = std::slice::from_raw_parts(a, na);
        let bv = std::slice::from_raw_parts(b, nb);
        match stats::welch_t(av, bv) {
            Ok(r) => {
                *out = SvTestResult {
                    statistic: r.statistic,
                    df: r.df,
                    p: r.p,
                };
                SvStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Benjamini-Hochberg step-up adjustment. Writes `len` adjusted p-values
/// and, when `out_significant` is non-null, `len` 0/1 flags for
/// significance at `alpha`.
///
/// # Safety
/// `ps` must hold `len` doubles; `out_adjusted` must hold `len` doubles;
/// `out_significant`, when non-null, must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sv_bh_adjust(
    ps: *const f64,
    len: usize,
    alpha: f64,
    out_adjusted: *mut f64,
    out_significant: *mut u8,
) -> SvStatus {
    require!(ps, "ps");
    require!(out_adjusted, "out_adjusted");
    guard(|| {
        let pv = std::slice::from_raw_parts(ps, len);
        match stats::benjamini_hochberg(pv, alpha) {
            Ok(rows) => {
                for (i, row) in rows.iter().enumerate() {
                    *out_adjusted.add(i) = row.adjusted_p;
                    if !out_significant.is_null() {
                        *out_significant.add(i) = row.significant as u8;
                    }
                }
                SvStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(spec: &str, seed: u64) -> *mut SvModel {
        let json = CString::new(spec).unwrap();
        let mut out: *mut SvModel = std::ptr::null_mut();
        let status = unsafe { sv_model_build(json.as_ptr(), seed, &mut out) };
        assert_eq!(status, SvStatus::Ok, "{}", last_error());
        assert!(!out.is_null());
        out
    }

    fn last_error() -> String {
        unsafe { CStr::from_ptr(sv_last_error()) }
            .to_str()
            .unwrap()
            .to_string()
    }

    const DESK_C_S: &str = r#"{
        "saliencyType": "C", "saliencyDims": "S",
        "backbone": "TINY", "hiddenSize": 4, "kernelSize": 3
    }"#;

    #[test]
    fn version_is_a_readable_string() {
        let v = unsafe { CStr::from_ptr(sv_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn build_predict_save_load_round_trip() {
        let model = build(DESK_C_S, 42);

        let (t, h, w) = (3usize, 16usize, 16usize);
        let frames: Vec<f64> = (0..t * 3 * h * w)
            .map(|i| (i % 97) as f64 / 96.0)
            .collect();
        let id = CString::new("seq0").unwrap();
        let mut rgb = [0.0f64; 3];
        let status = unsafe {
            sv_model_predict(model, frames.as_ptr(), t, h, w, id.as_ptr(), rgb.as_mut_ptr())
        };
        assert_eq!(status, SvStatus::Ok, "{}", last_error());
        let norm = (rgb[0] * rgb[0] + rgb[1] * rgb[1] + rgb[2] * rgb[2]).sqrt();
        assert!((norm - 1.0).abs() < 1e-9, "prediction must be unit norm");

        let dir = std::env::temp_dir().join("salvet-ffi-roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = CString::new(dir.join("m.ckpt").to_str().unwrap()).unwrap();
        assert_eq!(unsafe { sv_model_save(model, path.as_ptr()) }, SvStatus::Ok);

        let mut reloaded: *mut SvModel = std::ptr::null_mut();
        assert_eq!(
            unsafe { sv_model_load(path.as_ptr(), &mut reloaded) },
            SvStatus::Ok
        );
        let (mut c1, mut c2) = (0u64, 0u64);
        unsafe {
            sv_model_checksum(model, &mut c1);
            sv_model_checksum(reloaded, &mut c2);
        }
        assert_eq!(c1, c2);

        let mut rgb2 = [0.0f64; 3];
        unsafe {
            sv_model_predict(
                reloaded,
                frames.as_ptr(),
                t,
                h,
                w,
                id.as_ptr(),
                rgb2.as_mut_ptr(),
            );
        }
        assert_eq!(rgb, rgb2, "reloaded model must predict identically");

        let mut code = [0 as c_char; 16];
        assert_eq!(
            unsafe { sv_model_code(model, code.as_mut_ptr(), code.len()) },
            SvStatus::Ok
        );
        let code = unsafe { CStr::from_ptr(code.as_ptr()) }.to_str().unwrap();
        assert_eq!(code, "C-S");

        unsafe {
            sv_model_free(model);
            sv_model_free(reloaded);
            sv_model_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn same_seed_same_checksum() {
        let a = build(DESK_C_S, 7);
        let b = build(DESK_C_S, 7);
        let c = build(DESK_C_S, 8);
        let (mut ca, mut cb, mut cc) = (0u64, 0u64, 0u64);
        unsafe {
            sv_model_checksum(a, &mut ca);
            sv_model_checksum(b, &mut cb);
            sv_model_checksum(c, &mut cc);
            sv_model_free(a);
            sv_model_free(b);
            sv_model_free(c);
        }
        assert_eq!(ca, cb);
        assert_ne!(ca, cc);
    }

    #[test]
    fn statuses_name_the_failure() {
        let mut out: *mut SvModel = std::ptr::null_mut();
        assert_eq!(
            unsafe { sv_model_build(std::ptr::null(), 0, &mut out) },
            SvStatus::NullPointer
        );
        assert!(last_error().contains("spec_json"));

        let bad_json = CString::new("{not json").unwrap();
        assert_eq!(
            unsafe { sv_model_build(bad_json.as_ptr(), 0, &mut out) },
            SvStatus::Parse
        );

        let bad_spec = CString::new(
            r#"{"saliencyType": "CA", "saliencyDims": "S", "hiddenSize": 4, "kernelSize": 3}"#,
        )
        .unwrap();
        assert_eq!(
            unsafe { sv_model_build(bad_spec.as_ptr(), 0, &mut out) },
            SvStatus::Config
        );
        assert!(!last_error().is_empty());

        let missing = CString::new("/definitely/absent.ckpt").unwrap();
        assert_eq!(
            unsafe { sv_model_load(missing.as_ptr(), &mut out) },
            SvStatus::Io
        );

        let zero = [0.0f64; 3];
        let one = [1.0f64, 0.0, 0.0];
        let mut deg = 0.0;
        assert_eq!(
            unsafe { sv_angular_error(zero.as_ptr(), one.as_ptr(), &mut deg) },
            SvStatus::InvalidArgument
        );
    }

    #[test]
    fn metric_and_stat_wrappers_match_the_library() {
        let a = [1.0f64, 0.0, 0.0];
        let b = [1.0f64, 1.0, 0.0];
        let mut deg = 0.0;
        assert_eq!(
            unsafe { sv_angular_error(a.as_ptr(), b.as_ptr(), &mut deg) },
            SvStatus::Ok
        );
        assert!((deg - 45.0).abs() < 1e-9);

        let errors = [1.0f64, 2.0, 3.0];
        let mut summary = SvErrorSummary {
            mean: 0.0,
            median: 0.0,
            trimean: 0.0,
            best25: 0.0,
            worst25: 0.0,
            worst5: 0.0,
            n: 0,
        };
        assert_eq!(
            unsafe { sv_error_summary(errors.as_ptr(), errors.len(), &mut summary) },
            SvStatus::Ok
        );
        assert_eq!(summary.n, 3);
        assert!((summary.median - 2.0).abs() < 1e-12);
        assert!((summary.trimean - 2.0).abs() < 1e-12);

        let p = [1.0f64, 0.0];
        let q = [0.0f64, 1.0];
        let mut v = 0.0;
        assert_eq!(
            unsafe { sv_jsd(p.as_ptr(), q.as_ptr(), 2, &mut v) },
            SvStatus::Ok
        );
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);

        let xs = [2.1f64, 2.4, 2.2, 2.3];
        let ys = [3.1f64, 3.4, 3.2, 3.3];
        let mut r = SvTestResult {
            statistic: 0.0,
            df: 0.0,
            p: 0.0,
        };
        assert_eq!(
            unsafe { sv_welch_t(xs.as_ptr(), xs.len(), ys.as_ptr(), ys.len(), &mut r) },
            SvStatus::Ok
        );
        let oracle = stats::welch_t(&xs, &ys).unwrap();
        assert_eq!(r.statistic, oracle.statistic);
        assert_eq!(r.p, oracle.p);

        let ps = [0.01f64, 0.02, 0.03, 0.04];
        let mut adjusted = [0.0f64; 4];
        let mut flags = [0u8; 4];
        assert_eq!(
            unsafe {
                sv_bh_adjust(
                    ps.as_ptr(),
                    ps.len(),
                    0.05,
                    adjusted.as_mut_ptr(),
                    flags.as_mut_ptr(),
                )
            },
            SvStatus::Ok
        );
        assert_eq!(adjusted, [0.04; 4]);
        assert_eq!(flags, [1; 4]);
    }

    #[test]
    fn generated_header_declares_the_surface() {
        let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/salvet.h");
        let text = std::fs::read_to_string(&header).unwrap();
        for symbol in [
            "sv_version",
            "sv_last_error",
            "sv_model_build",
            "sv_model_load",
            "sv_model_save",
            "sv_model_free",
            "sv_model_checksum",
            "sv_model_code",
            "sv_model_predict",
            "sv_angular_error",
            "sv_error_summary",
            "sv_jsd",
            "sv_welch_t",
            "sv_bh_adjust",
            "SvStatus",
            "SvModel",
        ] {
            assert!(text.contains(symbol), "header missing {symbol}");
        }
    }
}
