//! C interface to the martineq solver.
//!
//! Grid functions cross the boundary as `double` arrays with one entry per
//! state; `-INFINITY` and `INFINITY` stand for the two infinite marks and
//! NaN is rejected. Every fallible function returns an [`MqStatus`]; the
//! message for the last failure on the calling thread is available from
//! [`mq_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use martineq::envelope::{envelope_at, SampledFn};
use martineq::operator::{finite_horizon_value, iterate_to_fixed_point, verify_fixed_point, IterationOptions, IterationStatus};
use martineq::oracle::one_step_lp;
use martineq::presets::burkholder::{burkholder_closed_form, BurkholderParams};
use martineq::presets::doob::{build_doob_problem, doob_closed_form, DoobParams};
use martineq::problem::{parse_problem, validate_problem, GridFn, ValidatedProblem};
use martineq::tchakaloff::{reduce_martingale_tree, MartingaleTree};
use martineq::ExtReal;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Diverged = 3,
    MaxIterations = 4,
    BufferTooSmall = 5,
    CheckFailed = 6,
    Panic = 7,
}

/// Opaque validated problem.
pub struct MqProblem {
    inner: ValidatedProblem,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(MqStatus, String);

impl<E: std::fmt::Display> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(MqStatus::InvalidInput, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<MqStatus, Fail>) -> MqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            MqStatus::Panic
        }
    }
}

fn null() -> Fail {
    Fail(MqStatus::NullPointer, "null pointer argument".into())
}

unsafe fn c_str<'a>(s: *const c_char) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null());
    }
    Ok(CStr::from_ptr(s).to_str()?)
}

unsafe fn in_slice<'a>(p: *const f64, n: usize) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn out_slice<'a>(p: *mut f64, n: usize, needed: usize) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null());
    }
    if n < needed {
        return Err(Fail(MqStatus::BufferTooSmall, format!("buffer holds {n} values, {needed} needed")));
    }
    Ok(slice::from_raw_parts_mut(p, needed))
}

unsafe fn problem_ref<'a>(p: *const MqProblem) -> Result<&'a ValidatedProblem, Fail> {
    p.as_ref().map(|p| &p.inner).ok_or_else(null)
}

unsafe fn write<T>(p: *mut T, v: T) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null());
    }
    p.write(v);
    Ok(())
}

fn to_ext(values: &[f64]) -> Result<Vec<ExtReal>, Fail> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| ExtReal::new(v).ok_or_else(|| Fail(MqStatus::InvalidInput, format!("value {i} is NaN"))))
        .collect()
}

fn copy_out(out: &mut [f64], g: &GridFn) {
    for (o, v) in out.iter_mut().zip(g.iter()) {
        *o = v.to_f64();
    }
}

fn into_handle(inner: ValidatedProblem, out: *mut *mut MqProblem) -> Result<MqStatus, Fail> {
    if out.is_null() {
        return Err(null());
    }
    unsafe { out.write(Box::into_raw(Box::new(MqProblem { inner }))) };
    Ok(MqStatus::Ok)
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses and validates a problem given as JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mq_problem_from_json(json: *const c_char, out: *mut *mut MqProblem) -> MqStatus {
    guard(|| {
        let spec = parse_problem(c_str(json)?)?;
        into_handle(validate_problem(spec)?, out)
    })
}

/// Builds the reduced Doob problem. `c <= 0` selects the sharp constant and
/// `span <= 0` the default span.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mq_doob_problem_new(
    p: f64,
    c: f64,
    grid_points: usize,
    span: f64,
    out: *mut *mut MqProblem,
) -> MqStatus {
    guard(|| {
        let mut params = DoobParams::new(p, grid_points);
        if c > 0.0 {
            params.c = c;
        }
        if span > 0.0 {
            params.span = span;
        }
        into_handle(build_doob_problem(&params)?, out)
    })
}

/// # Safety
/// `problem` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mq_problem_free(problem: *mut MqProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of states; 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mq_problem_state_count(problem: *const MqProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.n_states())
}

/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mq_problem_initial_state(problem: *const MqProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.initial_state())
}

/// Copies the payoff into `out` (`len` entries available).
///
/// # Safety
/// `problem` must be a live handle and `out` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mq_problem_payoff(problem: *const MqProblem, out: *mut f64, len: usize) -> MqStatus {
    guard(|| {
        let p = problem_ref(problem)?;
        copy_out(out_slice(out, len, p.n_states())?, p.payoff());
        Ok(MqStatus::Ok)
    })
}

/// Iterates to the smallest fixed point above the payoff. `tol <= 0`,
/// `max_iter == 0` and `cap <= 0` select the defaults. The last iterate is
/// written to `out` whatever the status; `iterations` may be null.
///
/// # Safety
/// `problem` must be a live handle, `out` point to `len` doubles and
/// `iterations` be null or valid.
#[no_mangle]
pub unsafe extern "C" fn mq_solve(
    problem: *const MqProblem,
    tol: f64,
    max_iter: usize,
    cap: f64,
    out: *mut f64,
    len: usize,
    iterations: *mut usize,
) -> MqStatus {
    guard(|| {
        let p = problem_ref(problem)?;
        let out = out_slice(out, len, p.n_states())?;
        let mut opts = IterationOptions::for_payoff(p.payoff());
        if tol > 0.0 {
            opts.tol = tol;
        }
        if max_iter > 0 {
            opts.max_iter = max_iter;
        }
        if cap > 0.0 {
            opts.value_cap = cap;
        }
        let rep = iterate_to_fixed_point(p, p.payoff(), &opts)?;
        copy_out(out, &rep.result);
        if !iterations.is_null() {
            iterations.write(rep.iterations);
        }
        Ok(match rep.status {
            IterationStatus::Converged => MqStatus::Ok,
            IterationStatus::Diverged => MqStatus::Diverged,
            IterationStatus::MaxIterations => MqStatus::MaxIterations,
        })
    })
}

/// Writes `A^horizon f` for the problem's payoff.
///
/// # Safety
/// `problem` must be a live handle and `out` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mq_finite_horizon(problem: *const MqProblem, horizon: usize, out: *mut f64, len: usize) -> MqStatus {
    guard(|| {
        let p = problem_ref(problem)?;
        let out = out_slice(out, len, p.n_states())?;
        let tables = finite_horizon_value(p, p.payoff(), horizon)?;
        copy_out(out, &tables[horizon]);
        Ok(MqStatus::Ok)
    })
}

/// Checks `u >= f` and `Au <= u + tol`. Returns `Ok` when both hold and
/// `CheckFailed` otherwise; `worst_gap` receives `max (Au - u)` if non-null.
///
/// # Safety
/// `problem` must be a live handle, `u` point to `len` doubles and
/// `worst_gap` be null or valid.
#[no_mangle]
pub unsafe extern "C" fn mq_verify_fixed_point(
    problem: *const MqProblem,
    u: *const f64,
    len: usize,
    tol: f64,
    worst_gap: *mut f64,
) -> MqStatus {
    guard(|| {
        let p = problem_ref(problem)?;
        let u = GridFn::new(to_ext(in_slice(u, len)?)?);
        let rep = verify_fixed_point(p, &u, p.payoff(), tol)?;
        if !worst_gap.is_null() {
            worst_gap.write(rep.worst_gap);
        }
        Ok(if rep.certified() { MqStatus::Ok } else { MqStatus::CheckFailed })
    })
}

/// Upper concave envelope of the samples `(xs[i], vs[i])` at `query`, with
/// the superdifferential `[lo, hi]`; an undefined side is written as NaN.
///
/// # Safety
/// `xs` and `vs` must point to `n` doubles; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn mq_envelope_at(
    xs: *const f64,
    vs: *const f64,
    n: usize,
    query: f64,
    value: *mut f64,
    lo: *mut f64,
    hi: *mut f64,
) -> MqStatus {
    guard(|| {
        let f = SampledFn::from_parts(in_slice(xs, n)?, &to_ext(in_slice(vs, n)?)?)?;
        let r = envelope_at(&f, query);
        write(value, r.value.to_f64())?;
        write(lo, r.superdiff_lo.unwrap_or(f64::NAN))?;
        write(hi, r.superdiff_hi.unwrap_or(f64::NAN))?;
        Ok(MqStatus::Ok)
    })
}

/// Largest mean of `vs` under a probability on `xs` with the given
/// barycenter, by enumeration of supports.
///
/// # Safety
/// `xs` and `vs` must point to `n` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn mq_one_step_lp(xs: *const f64, vs: *const f64, n: usize, barycenter: f64, out: *mut f64) -> MqStatus {
    guard(|| {
        let samples: Vec<(f64, ExtReal)> = in_slice(xs, n)?.iter().copied().zip(to_ext(in_slice(vs, n)?)?).collect();
        write(out, one_step_lp(&samples, barycenter)?.to_f64())?;
        Ok(MqStatus::Ok)
    })
}

/// Closed-form Doob value at `(x, y)`; `c <= 0` selects the sharp constant.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mq_doob_closed_form(p: f64, c: f64, x: f64, y: f64, out: *mut f64) -> MqStatus {
    guard(|| {
        let mut params = DoobParams::new(p, 3);
        if c > 0.0 {
            params.c = c;
        }
        write(out, doob_closed_form(&params, x, y)?)?;
        Ok(MqStatus::Ok)
    })
}

/// Burkholder value at the norm pair `(x1, x2)`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mq_burkholder_closed_form(p: f64, x1: f64, x2: f64, out: *mut f64) -> MqStatus {
    guard(|| {
        let params = BurkholderParams::new(p)?;
        write(out, burkholder_closed_form(&params, x1, x2)?)?;
        Ok(MqStatus::Ok)
    })
}

/// Reduces a martingale tree given as JSON, preserving the moments of
/// orders `1..=q` of the terminal coordinates. On success `out` receives a
/// JSON object `{"tree": ..., "support_before", "support_after", "bound",
/// "moment_error", "martingale_error"}` to be released with
/// [`mq_string_free`].
///
/// # Safety
/// `tree_json` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mq_tree_reduce_json(tree_json: *const c_char, q: u32, tol: f64, out: *mut *mut c_char) -> MqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let tree = MartingaleTree::from_json(c_str(tree_json)?)?;
        let q = q.max(1) as i32;
        let mut f = |_: usize, path: &[&[f64]]| -> Vec<f64> {
            let last = path[path.len() - 1];
            (1..=q).flat_map(|j| last.iter().map(move |x| x.powi(j))).collect()
        };
        let tol = if tol > 0.0 { tol } else { 1e-12 };
        let rep = reduce_martingale_tree(&tree, &mut f, tol)?;
        let text = format!(
            "{{\"tree\":{},\"support_before\":{},\"support_after\":{},\"bound\":{},\"moment_error\":{:e},\"martingale_error\":{:e}}}",
            rep.reduced.to_json(),
            rep.support_before,
            rep.support_after,
            rep.bound,
            rep.moment_error,
            rep.martingale_error
        );
        out.write(CString::new(text)?.into_raw());
        Ok(MqStatus::Ok)
    })
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
