//! C ABI over the `susceptibility` crate.
//!
//! Every function returns a [`SusStatus`]. On anything other than
//! `SUS_STATUS_OK` the message is available from [`sus_last_error`] on the
//! same thread until the next failing call. Handles are opaque and must be
//! released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use susceptibility::map::{build_map, MapSpec, UnimodalMap};
use susceptibility::run::{self, Command};
use susceptibility::scenario::{parse_overrides, Scenario};
use susceptibility::series::SigmaSeries;
use susceptibility::{Error, C64};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SusStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid input: malformed config, inadmissible map, bad argument.
    Invalid = 2,
    /// A numeric target could not be certified.
    Numeric = 3,
    Panic = 4,
    /// Output buffer too small; the required size is reported through `len`.
    BufferTooSmall = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SusComplex {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for SusComplex {
    fn from(z: C64) -> Self {
        SusComplex { re: z.re, im: z.im }
    }
}

/// A validated scenario parsed from TOML.
pub struct SusScenario {
    inner: Scenario,
}

/// A validated unimodal map.
pub struct SusMap {
    inner: UnimodalMap,
}

/// The inner series of a scenario's observable along its postcritical orbit.
pub struct SusSigma {
    inner: SigmaSeries,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: SusStatus, msg: impl Into<String>) -> SusStatus {
    set_error(msg);
    status
}

fn from_error(err: Error) -> SusStatus {
    let status = if err.is_numeric() { SusStatus::Numeric } else { SusStatus::Invalid };
    fail(status, format!("{}: {err}", err.kind()))
}

fn guard(f: impl FnOnce() -> SusStatus) -> SusStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SusStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, SusStatus> {
    if p.is_null() {
        return Err(fail(SusStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SusStatus::Invalid, format!("{what} is not valid UTF-8")))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! nonnull {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(SusStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Message of the last failure on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn sus_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sus_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse and validate a scenario. `overrides` may be null or a
/// comma-separated list of `key=value` tolerance overrides.
///
/// # Safety
/// `toml` and `overrides` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sus_scenario_from_toml(
    toml: *const c_char,
    overrides: *const c_char,
    out: *mut *mut SusScenario,
) -> SusStatus {
    guard(|| {
        nonnull!(out);
        let src = tri!(str_arg(toml, "toml"));
        let ov = if overrides.is_null() {
            Vec::new()
        } else {
            match parse_overrides(tri!(str_arg(overrides, "overrides"))) {
                Ok(v) => v,
                Err(e) => return from_error(e),
            }
        };
        match Scenario::from_toml_with(src, &ov) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(SusScenario { inner: s }));
                SusStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Replace the scenario seed.
///
/// # Safety
/// `scenario` must come from `sus_scenario_from_toml`.
#[no_mangle]
pub unsafe extern "C" fn sus_scenario_set_seed(scenario: *mut SusScenario, seed: u64) -> SusStatus {
    guard(|| {
        nonnull!(scenario);
        (*scenario).inner.seed = seed;
        SusStatus::Ok
    })
}

/// Write the hex scenario hash, NUL-terminated, into `buf`. `len` holds the
/// buffer size on entry and the required size (including NUL) on return.
///
/// # Safety
/// `buf` must hold `*len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sus_scenario_hash(
    scenario: *const SusScenario,
    buf: *mut c_char,
    len: *mut usize,
) -> SusStatus {
    guard(|| {
        nonnull!(scenario, len);
        let h = (*scenario).inner.hash();
        let need = h.len() + 1;
        let have = *len;
        *len = need;
        if buf.is_null() || have < need {
            return fail(SusStatus::BufferTooSmall, format!("hash needs {need} bytes"));
        }
        ptr::copy_nonoverlapping(h.as_ptr().cast::<c_char>(), buf, h.len());
        *buf.add(h.len()) = 0;
        SusStatus::Ok
    })
}

/// # Safety
/// `scenario` must be null or come from `sus_scenario_from_toml`, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sus_scenario_free(scenario: *mut SusScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Run a CLI command (`"acim"`, `"ww"`, ...) and write its artifacts into
/// `out_dir`. On a numeric failure only `failure.json` is written.
///
/// # Safety
/// `command` and `out_dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sus_run(
    scenario: *const SusScenario,
    command: *const c_char,
    out_dir: *const c_char,
) -> SusStatus {
    guard(|| {
        nonnull!(scenario);
        let name = tri!(str_arg(command, "command"));
        let dir = Path::new(tri!(str_arg(out_dir, "out_dir")));
        let Some(cmd) = Command::from_name(name) else {
            return fail(SusStatus::Invalid, format!("unknown command {name:?}"));
        };
        let s = &(*scenario).inner;
        match run::run(cmd, s) {
            Ok(arts) => match run::write_artifacts(dir, &arts) {
                Ok(()) => SusStatus::Ok,
                Err(e) => from_error(e),
            },
            Err(e) if e.is_numeric() => {
                let art = run::failure_artifact(cmd, s, &e);
                let status = from_error(e);
                if let Err(w) = run::write_artifacts(dir, &[art]) {
                    return from_error(w);
                }
                status
            }
            Err(e) => from_error(e),
        }
    })
}

fn put_map(out: *mut *mut SusMap, r: susceptibility::Result<UnimodalMap>) -> SusStatus {
    match r {
        Ok(m) => {
            unsafe { *out = Box::into_raw(Box::new(SusMap { inner: m })) };
            SusStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Symmetric tent map on [0, 1] with slopes `±slope`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sus_map_tent(slope: f64, out: *mut *mut SusMap) -> SusStatus {
    guard(|| {
        nonnull!(out);
        put_map(out, build_map(&MapSpec::tent(slope)))
    })
}

/// Map described by a scenario.
///
/// # Safety
/// `scenario` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sus_map_from_scenario(scenario: *const SusScenario, out: *mut *mut SusMap) -> SusStatus {
    guard(|| {
        nonnull!(scenario, out);
        put_map(out, (*scenario).inner.build_map())
    })
}

/// # Safety
/// `map` must be valid; `value` and `deriv` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn sus_map_eval(map: *const SusMap, x: f64, value: *mut f64, deriv: *mut f64) -> SusStatus {
    guard(|| {
        nonnull!(map);
        let m = &(*map).inner;
        if !(x >= m.a() && x <= m.b()) {
            return fail(SusStatus::Invalid, format!("x = {x} outside [{}, {}]", m.a(), m.b()));
        }
        if !value.is_null() {
            *value = m.eval(x);
        }
        if !deriv.is_null() {
            *deriv = m.deriv(x);
        }
        SusStatus::Ok
    })
}

/// Critical point, critical value `c1`, and `c2 = f(c1)`.
///
/// # Safety
/// `map` must be valid; `out` must hold three doubles.
#[no_mangle]
pub unsafe extern "C" fn sus_map_critical(map: *const SusMap, out: *mut f64) -> SusStatus {
    guard(|| {
        nonnull!(map, out);
        let m = &(*map).inner;
        *out = m.critical();
        *out.add(1) = m.c1();
        *out.add(2) = m.c2();
        SusStatus::Ok
    })
}

/// # Safety
/// `map` must be null or come from a `sus_map_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn sus_map_free(map: *mut SusMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Inner series of the scenario's observable along its postcritical orbit.
///
/// # Safety
/// `scenario` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sus_sigma_new(scenario: *const SusScenario, out: *mut *mut SusSigma) -> SusStatus {
    guard(|| {
        nonnull!(scenario, out);
        let s = &(*scenario).inner;
        let built = (|| {
            let map = s.build_map()?;
            let orbit = s.orbit(&map)?;
            Ok(SigmaSeries::new(&map, &orbit, &s.observable()?))
        })();
        match built {
            Ok(sig) => {
                *out = Box::into_raw(Box::new(SusSigma { inner: sig }));
                SusStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Evaluate at `z` for `|z| < 1` to absolute tolerance `tol`. `tail` may be null.
///
/// # Safety
/// `sigma` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sus_sigma_eval(
    sigma: *const SusSigma,
    z: SusComplex,
    tol: f64,
    out: *mut SusComplex,
    tail: *mut f64,
) -> SusStatus {
    guard(|| {
        nonnull!(sigma, out);
        if !(tol > 0.0) {
            return fail(SusStatus::Invalid, "tol must be positive");
        }
        match (*sigma).inner.eval(C64::new(z.re, z.im), tol) {
            Ok(v) => {
                *out = v.value.into();
                if !tail.is_null() {
                    *tail = v.tail;
                }
                SusStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `sigma` must be null or come from `sus_sigma_new`.
#[no_mangle]
pub unsafe extern "C" fn sus_sigma_free(sigma: *mut SusSigma) {
    if !sigma.is_null() {
        drop(Box::from_raw(sigma));
    }
}
