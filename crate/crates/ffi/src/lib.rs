//! C ABI over `mstat`.
//!
//! Every function returns an [`MstatStatus`]; results come back through out
//! pointers. On failure a message is kept per thread and can be read with
//! [`mstat_last_error`]. Feasible sets are opaque handles owned by the caller
//! and released with [`mstat_set_free`]; strings handed out by the library are
//! released with [`mstat_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mstat::cone::Polyhedron;
use mstat::feasible::FeasibleSet;
use mstat::graph_normal::{limiting_normal_member_oracle, GraphPoint, Membership, NormalPair};
use mstat::io::{parse_json, ProblemFile};
use mstat::stationarity::{
    verify_certificate, verify_certificate_penalized, Certificate, VerifyOptions,
};
use mstat::Error;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MstatStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    Infeasible = 3,
    NotGraphPoint = 4,
    InvalidInput = 5,
    Numeric = 6,
    Parse = 7,
    Io = 8,
    TooManyActive = 9,
    Panic = 10,
}

/// Outcome of a coderivative membership query.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MstatMembership {
    NotMember = 0,
    Member = 1,
    /// The point is not on the graph of the normal-cone map, so the
    /// coderivative is empty.
    EmptyCoderivative = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MstatMode {
    Convex = 0,
    Penalized = 1,
}

/// Opaque feasible set handle.
pub struct MstatSet {
    inner: FeasibleSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MstatStatus {
    match e {
        Error::Dimension(_) => MstatStatus::Dimension,
        Error::Infeasible { .. } => MstatStatus::Infeasible,
        Error::TooManyActive { .. } => MstatStatus::TooManyActive,
        Error::NotGraphPoint(_) | Error::NotInNormalCone => MstatStatus::NotGraphPoint,
        Error::Invalid(_) => MstatStatus::InvalidInput,
        Error::Numeric(_) => MstatStatus::Numeric,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => MstatStatus::Parse,
        Error::Io(_) => MstatStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, records any error or panic, and converts it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MstatStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MstatStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            MstatStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            MstatStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to `len` readable doubles.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::Lib(Error::Invalid(format!("{what} is not UTF-8: {e}"))))
}

unsafe fn set_ref<'a>(set: *const MstatSet) -> Result<&'a FeasibleSet, Failure> {
    set.as_ref().map(|s| &s.inner).ok_or(Failure::Null("set"))
}

fn boxed(inner: FeasibleSet, out: *mut *mut MstatSet) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(MstatSet { inner })) };
    Ok(())
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mstat_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mstat_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `{z : A z ≤ b}` with `A` given row-major as `m × d`.
///
/// # Safety
/// `a` must hold `m * d` doubles, `b` must hold `m`, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_set_polyhedron(
    a: *const f64,
    b: *const f64,
    m: usize,
    d: usize,
    out: *mut *mut MstatSet,
) -> MstatStatus {
    guard(|| {
        let a = slice(a, m * d, "a")?;
        let b = slice(b, m, "b")?;
        let rows = if d == 0 {
            vec![Vec::new(); m]
        } else {
            a.chunks(d).map(<[f64]>::to_vec).collect()
        };
        boxed(
            FeasibleSet::Polyhedron(Polyhedron::new(rows, b.to_vec())?),
            out,
        )
    })
}

/// The nonnegative orthant in dimension `d`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_set_orthant(d: usize, out: *mut *mut MstatSet) -> MstatStatus {
    guard(|| {
        if d == 0 {
            return Err(Error::Invalid("dimension must be positive".into()).into());
        }
        boxed(FeasibleSet::Orthant(d), out)
    })
}

/// `{z ≥ 0, Σ z ≤ 1}` in dimension `d`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_set_simplex(d: usize, out: *mut *mut MstatSet) -> MstatStatus {
    guard(|| {
        if d == 0 {
            return Err(Error::Invalid("dimension must be positive".into()).into());
        }
        boxed(FeasibleSet::Simplex(d), out)
    })
}

/// Releases a set handle. Null is ignored.
///
/// # Safety
/// `set` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mstat_set_free(set: *mut MstatSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Dimension of the ambient space, or 0 for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mstat_set_dim(set: *const MstatSet) -> usize {
    set.as_ref().map_or(0, |s| s.inner.dim())
}

fn membership_code(m: &Membership) -> MstatMembership {
    match m {
        Membership::Member { .. } => MstatMembership::Member,
        Membership::NotMember { .. } => MstatMembership::NotMember,
        Membership::EmptyCoderivative { .. } => MstatMembership::EmptyCoderivative,
    }
}

/// Shared body of the two membership entry points.
#[allow(clippy::too_many_arguments)]
unsafe fn member_query(
    set: *const MstatSet,
    z: *const f64,
    g: *const f64,
    zeta: *const f64,
    eta: *const f64,
    eps: f64,
    out: *mut MstatMembership,
    oracle: bool,
) -> MstatStatus {
    guard(|| {
        let set = set_ref(set)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let d = set.dim();
        let z = slice(z, d, "z")?;
        let g = slice(g, d, "g")?;
        let pair = NormalPair::new(
            slice(zeta, d, "zeta")?.to_vec(),
            slice(eta, d, "eta")?.to_vec(),
        )?;
        let m = if oracle {
            let gp = GraphPoint::new(z.to_vec(), g.to_vec())?;
            limiting_normal_member_oracle(&set.polyhedron(), &gp, &pair, eps)?
        } else {
            set.coderivative_member(z, g, &pair, eps)?
        };
        *out = membership_code(&m);
        Ok(())
    })
}

/// Whether `ζ ∈ D*N_Z(z, −g)(η)`, with `g` the lower-level gradient. All
/// vectors have the dimension of `set`.
///
/// # Safety
/// Vector pointers must hold `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_coderivative_member(
    set: *const MstatSet,
    z: *const f64,
    g: *const f64,
    zeta: *const f64,
    eta: *const f64,
    eps: f64,
    out: *mut MstatMembership,
) -> MstatStatus {
    member_query(set, z, g, zeta, eta, eps, out, false)
}

/// Same query answered by face-pair enumeration, for cross-checking.
///
/// # Safety
/// As for [`mstat_coderivative_member`].
#[no_mangle]
pub unsafe extern "C" fn mstat_coderivative_member_oracle(
    set: *const MstatSet,
    z: *const f64,
    g: *const f64,
    zeta: *const f64,
    eta: *const f64,
    eps: f64,
    out: *mut MstatMembership,
) -> MstatStatus {
    member_query(set, z, g, zeta, eta, eps, out, true)
}

/// Verifies a certificate given as JSON against a problem given as JSON.
/// On success `*out_pass` is 1 or 0 and `*out_report`, when `out_report` is
/// non-null, receives the report JSON to be released with
/// [`mstat_string_free`].
///
/// # Safety
/// String arguments must be NUL-terminated; `out_pass` must be writable and
/// `out_report` null or writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_verify_json(
    problem_json: *const c_char,
    certificate_json: *const c_char,
    mode: MstatMode,
    tol: f64,
    value_tol: f64,
    out_pass: *mut i32,
    out_report: *mut *mut c_char,
) -> MstatStatus {
    guard(|| {
        if out_pass.is_null() {
            return Err(Failure::Null("out_pass"));
        }
        let file: ProblemFile = parse_json(string(problem_json, "problem_json")?, "problem")?;
        file.validate()?;
        let problem = file.to_problem()?;
        let cert: Certificate =
            parse_json(string(certificate_json, "certificate_json")?, "certificate")?;
        let opts = VerifyOptions {
            tol,
            value_tol,
            ..VerifyOptions::default()
        };
        let report = match mode {
            MstatMode::Convex => verify_certificate(&problem, &cert, &opts)?,
            MstatMode::Penalized => verify_certificate_penalized(&problem, &cert, &opts)?,
        };
        if !out_report.is_null() {
            let text = serde_json::to_string(&report).map_err(Error::from)?;
            *out_report = CString::new(text)
                .map_err(|e| Error::Invalid(e.to_string()))?
                .into_raw();
        }
        *out_pass = report.pass as i32;
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mstat_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
