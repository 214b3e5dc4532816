//! C interface to the ggn solver.
//!
//! Data sets and run reports are opaque heap handles owned by the caller and
//! released with the matching `_free` function. Every entry point returns a
//! [`GgnStatus`]; the message of the last failure on the calling thread is
//! available through [`ggn_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ggn::baseline::{run_nt, NtConfig};
use ggn::driver::{run_ggn, GgnConfig, RunReport, Termination};
use ggn::problem::{simulate_data, ModelProblem, NoisyData, ObservationKind, SyntheticCase};

/// Result codes shared by all functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SolverFailure = 3,
    Panic = 4,
}

/// How a run ended.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgnTermination {
    Discrepancy = 0,
    IterationLimit = 1,
    BetaFailure = 2,
    ForwardFailure = 3,
}

/// Simulated noisy observations together with the exact solution.
pub struct GgnData(NoisyData);

/// Outcome of one solver run.
pub struct GgnReport(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn guard(f: impl FnOnce() -> Result<(), (GgnStatus, String)>) -> GgnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GgnStatus::Ok,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            GgnStatus::Panic
        }
    }
}

/// Copies the last error message of this thread into `buf` (NUL terminated,
/// truncated to `len` bytes). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ggn_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Simulates data. `case` is one of 'a', 'b', 'c'; `l2_obs` selects
/// distributed observation instead of the 9 x 9 point lattice.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ggn_simulate(
    zeta: f64,
    noise: f64,
    case: c_char,
    l2_obs: i32,
    fine_levels: u8,
    seed: u64,
    out: *mut *mut GgnData,
) -> GgnStatus {
    if out.is_null() {
        set_error("null output pointer");
        return GgnStatus::NullPointer;
    }
    guard(|| {
        let invalid = |m: String| (GgnStatus::InvalidArgument, m);
        let case = SyntheticCase::parse(&((case as u8) as char).to_string())
            .ok_or_else(|| invalid("case must be 'a', 'b' or 'c'".into()))?;
        let obs = if l2_obs != 0 { ObservationKind::L2 } else { ObservationKind::Point { n_side: 9 } };
        if !(2..=10).contains(&fine_levels) {
            return Err(invalid(format!("fine_levels {fine_levels} outside 2..=10")));
        }
        let problem = ModelProblem::new(zeta).map_err(|e| invalid(e.to_string()))?;
        let data =
            simulate_data(&problem, case, obs, fine_levels, noise, seed).map_err(|e| invalid(e.to_string()))?;
        *out = Box::into_raw(Box::new(GgnData(data)));
        Ok(())
    })
}

/// Noise norm of the data, or NaN for a null handle.
///
/// # Safety
/// `data` must be null or a live handle from [`ggn_simulate`].
#[no_mangle]
pub unsafe extern "C" fn ggn_data_delta(data: *const GgnData) -> f64 {
    data.as_ref().map_or(f64::NAN, |d| d.0.delta)
}

/// # Safety
/// `data` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ggn_data_free(data: *mut GgnData) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

unsafe fn solve(data: *const GgnData, out: *mut *mut GgnReport, nt: bool) -> GgnStatus {
    let Some(d) = data.as_ref() else {
        set_error("null data handle");
        return GgnStatus::NullPointer;
    };
    if out.is_null() {
        set_error("null output pointer");
        return GgnStatus::NullPointer;
    }
    guard(|| {
        let fail = |m: String| (GgnStatus::SolverFailure, m);
        let problem = ModelProblem::new(d.0.zeta).map_err(|e| fail(e.to_string()))?;
        let report = if nt {
            run_nt(&problem, &d.0, &NtConfig::default())
        } else {
            run_ggn(&problem, &d.0, &GgnConfig::default())
        }
        .map_err(|e| fail(e.to_string()))?;
        *out = Box::into_raw(Box::new(GgnReport(report)));
        Ok(())
    })
}

/// Runs the Gauss-Newton solver with default settings.
///
/// # Safety
/// `data` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn ggn_run_ggn(data: *const GgnData, out: *mut *mut GgnReport) -> GgnStatus {
    solve(data, out, false)
}

/// Runs the nonlinear Tikhonov reference solver with default settings.
///
/// # Safety
/// `data` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn ggn_run_nt(data: *const GgnData, out: *mut *mut GgnReport) -> GgnStatus {
    solve(data, out, true)
}

/// Summary numbers of a finished run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GgnSummary {
    pub iterations: usize,
    pub nodes: usize,
    pub beta: f64,
    pub relative_error: f64,
    pub final_discrepancy: f64,
    pub threshold: f64,
    pub wall_time: f64,
    pub termination: GgnTermination,
}

/// # Safety
/// `report` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn ggn_report_summary(report: *const GgnReport, out: *mut GgnSummary) -> GgnStatus {
    let (Some(r), false) = (report.as_ref(), out.is_null()) else {
        set_error("null pointer");
        return GgnStatus::NullPointer;
    };
    let r = &r.0;
    *out = GgnSummary {
        iterations: r.iterations(),
        nodes: r.nodes,
        beta: r.beta,
        relative_error: r.rel_error,
        final_discrepancy: r.final_i3,
        threshold: r.threshold,
        wall_time: r.wall_time,
        termination: match r.termination {
            Termination::Discrepancy => GgnTermination::Discrepancy,
            Termination::IterationCap => GgnTermination::IterationLimit,
            Termination::BetaSearchFailure => GgnTermination::BetaFailure,
            Termination::ForwardFailure => GgnTermination::ForwardFailure,
        },
    };
    GgnStatus::Ok
}

/// # Safety
/// `report` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ggn_report_free(report: *mut GgnReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
