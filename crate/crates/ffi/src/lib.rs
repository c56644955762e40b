//! C ABI for `metastab`.
//!
//! Objects are opaque heap handles created by `ms_*_new` functions and
//! released with the matching `ms_*_free`. Every fallible call returns an
//! [`MsStatus`]; on failure [`ms_last_error`] gives a message for the
//! calling thread. Well indices are 0-based. Buffers are caller-owned: a
//! call given too little room returns `MS_STATUS_BUFFER_TOO_SMALL` and
//! still reports the required length.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use metastab::levy::{InnerProfile, LevyModel, SlowlyVarying, TailSpec};
use metastab::limitchain;
use metastab::potential::{self, Landscape, PolynomialPotential};
use metastab::simulate::{run_batch, Mode, SimConfig, Simulator, StopKind};
use metastab::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidPotential = 3,
    InvalidModel = 4,
    Precondition = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MsStatus {
    match err {
        Error::InvalidPotential(_) | Error::DegenerateExtremum { .. } | Error::NoMinimum | Error::NonInterlaced(_) => {
            MsStatus::InvalidPotential
        }
        Error::InvalidModel(_) => MsStatus::InvalidModel,
        Error::Domain(_) | Error::Config(_) => MsStatus::InvalidArgument,
        Error::Precondition(_) | Error::NotTwoWell(_) | Error::EqualDepth(_) => MsStatus::Precondition,
        _ => MsStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into a status and a message.
fn guard<F: FnOnce() -> Result<(), (MsStatus, String)>>(f: F) -> MsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MsStatus::Panic
        }
    }
}

fn lib(err: Error) -> (MsStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (MsStatus, String) {
    (MsStatus::NullPointer, format!("{what} is null"))
}

fn arg(msg: impl Into<String>) -> (MsStatus, String) {
    (MsStatus::InvalidArgument, msg.into())
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (MsStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), (MsStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Copies `data` into `buf` of capacity `cap`, always storing the needed
/// length in `len` when it is non-null.
unsafe fn fill<T: Copy>(data: &[T], buf: *mut T, cap: usize, len: *mut usize) -> Result<(), (MsStatus, String)> {
    if !len.is_null() {
        len.write(data.len());
    }
    if data.len() > cap {
        return Err((MsStatus::BufferTooSmall, format!("buffer holds {cap}, need {}", data.len())));
    }
    if !data.is_empty() {
        if buf.is_null() {
            return Err(null("buffer"));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
    }
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ms_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Polynomial potential `U(x) = Σ a_k x^k`.
pub struct MsPotential(PolynomialPotential);

/// Interlaced minima and saddles of a potential.
pub struct MsLandscape(Landscape);

/// Lévy measure with its Gaussian part and drift.
pub struct MsLevyModel(LevyModel);

/// Simulation engine bound to a potential, landscape and noise model.
pub struct MsSimulator(Simulator);

/// Builds `U` from `n` coefficients `a_0..a_{n-1}`.
///
/// # Safety
/// `coefficients` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_potential_new(coefficients: *const f64, n: usize, out: *mut *mut MsPotential) -> MsStatus {
    guard(|| {
        if coefficients.is_null() {
            return Err(null("coefficients"));
        }
        let c = std::slice::from_raw_parts(coefficients, n).to_vec();
        let p = PolynomialPotential::new(c).map_err(lib)?;
        put(out, Box::into_raw(Box::new(MsPotential(p))), "out")
    })
}

/// # Safety
/// `p` must come from [`ms_potential_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ms_potential_free(p: *mut MsPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// `-U'(x)`.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_potential_drift(p: *const MsPotential, x: f64, out: *mut f64) -> MsStatus {
    guard(|| {
        let p = as_ref(p, "potential")?;
        put(out, potential::drift(&p.0, x), "out")
    })
}

/// Locates the extrema of `p`.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_landscape_analyze(p: *const MsPotential, out: *mut *mut MsLandscape) -> MsStatus {
    guard(|| {
        let p = as_ref(p, "potential")?;
        let l = potential::analyze_auto(&p.0).map_err(lib)?;
        put(out, Box::into_raw(Box::new(MsLandscape(l))), "out")
    })
}

/// # Safety
/// `l` must come from [`ms_landscape_analyze`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ms_landscape_free(l: *mut MsLandscape) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// Number of wells, 0 for a null handle.
///
/// # Safety
/// `l` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ms_landscape_n_wells(l: *const MsLandscape) -> usize {
    l.as_ref().map_or(0, |l| l.0.n_wells())
}

/// Minima in increasing order.
///
/// # Safety
/// `l` must be a live handle; `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ms_landscape_minima(
    l: *const MsLandscape,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> MsStatus {
    guard(|| fill(&as_ref(l, "landscape")?.0.minima, buf, cap, len))
}

/// Saddles in increasing order.
///
/// # Safety
/// `l` must be a live handle; `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ms_landscape_saddles(
    l: *const MsLandscape,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> MsStatus {
    guard(|| fill(&as_ref(l, "landscape")?.0.saddles, buf, cap, len))
}

/// Stable model with Lévy measure `c1|y|^{-1-α}` on `y<0` and
/// `c2 y^{-1-α}` on `y>0`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_levy_stable(alpha: f64, c1: f64, c2: f64, out: *mut *mut MsLevyModel) -> MsStatus {
    guard(|| {
        let m = LevyModel::stable(alpha, c1, c2).map_err(lib)?;
        put(out, Box::into_raw(Box::new(MsLevyModel(m))), "out")
    })
}

/// General model: tails `c_± u^{-r} ℓ(u)` with `ℓ = 1` when `log_power` is
/// NaN and `ℓ(u) = ln(e+u)^{log_power}` otherwise. `truncated` drops all
/// jumps below 1; otherwise the inner measure is stable of index `r`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_levy_new(
    d: f64,
    mu: f64,
    r: f64,
    c_plus: f64,
    c_minus: f64,
    log_power: f64,
    truncated: bool,
    out: *mut *mut MsLevyModel,
) -> MsStatus {
    guard(|| {
        let sv = if log_power.is_nan() { SlowlyVarying::Constant } else { SlowlyVarying::LogPower(log_power) };
        let tails = TailSpec::new(r, c_plus, c_minus, sv).map_err(lib)?;
        let inner = if truncated { InnerProfile::TruncatedEmpty } else { InnerProfile::Stable { alpha: r } };
        let m = LevyModel::new(d, mu, tails, inner).map_err(lib)?;
        put(out, Box::into_raw(Box::new(MsLevyModel(m))), "out")
    })
}

/// # Safety
/// `m` must come from a `ms_levy_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ms_levy_free(m: *mut MsLevyModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Generator of the limiting chain (time scale `t/H(1/ε)`), row-major
/// `n×n` with `n` the number of wells.
///
/// # Safety
/// Handles must be live; `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ms_generator(
    l: *const MsLandscape,
    m: *const MsLevyModel,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> MsStatus {
    guard(|| {
        let (l, m) = (as_ref(l, "landscape")?, as_ref(m, "model")?);
        let q = limitchain::compute_generator(&l.0, m.0.tails.r, m.0.kappa()).map_err(lib)?;
        fill(&q.q, buf, cap, len)
    })
}

/// `e^{tQ}`, row-major.
///
/// # Safety
/// Handles must be live; `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ms_transition_matrix(
    l: *const MsLandscape,
    m: *const MsLevyModel,
    t: f64,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> MsStatus {
    guard(|| {
        let (l, m) = (as_ref(l, "landscape")?, as_ref(m, "model")?);
        let q = limitchain::compute_generator(&l.0, m.0.tails.r, m.0.kappa()).map_err(lib)?;
        let p = limitchain::chain_transition_matrix(&q, t).map_err(lib)?;
        fill(&p.concat(), buf, cap, len)
    })
}

/// `λ^i(ε)`, the rate of jumps that leave well `well` directly.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_exit_rate(
    l: *const MsLandscape,
    m: *const MsLevyModel,
    well: usize,
    eps: f64,
    out: *mut f64,
) -> MsStatus {
    guard(|| {
        let (l, m) = (as_ref(l, "landscape")?, as_ref(m, "model")?);
        if well >= l.0.n_wells() {
            return Err(arg(format!("well {well} out of range")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(arg(format!("eps must lie in (0, 1), got {eps}")));
        }
        put(out, limitchain::exit_rate(&l.0, &m.0, well, eps), "out")
    })
}

/// `1/H(1/ε)`.
///
/// # Safety
/// `m` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_time_scale(m: *const MsLevyModel, eps: f64, out: *mut f64) -> MsStatus {
    guard(|| {
        let m = as_ref(m, "model")?;
        put(out, limitchain::time_scale(&m.0, eps).map_err(lib)?, "out")
    })
}

/// Simulation settings. `delta <= 0` selects `Δ_0/4`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsSimParams {
    pub eps: f64,
    pub rho: f64,
    pub gamma: f64,
    pub margin_exponent: f64,
    pub h: f64,
    pub horizon: f64,
    pub overflow: f64,
    pub delta: f64,
    pub seed: u64,
    pub exact_stable: bool,
}

/// Library defaults for noise level `eps`.
#[no_mangle]
pub extern "C" fn ms_sim_params_default(eps: f64) -> MsSimParams {
    let c = SimConfig::new(eps);
    MsSimParams {
        eps,
        rho: c.rho,
        gamma: c.gamma,
        margin_exponent: c.margin_exponent,
        h: c.h,
        horizon: c.horizon,
        overflow: c.overflow,
        delta: 0.0,
        seed: c.seed,
        exact_stable: false,
    }
}

/// # Safety
/// Handles must be live; `params` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ms_simulator_new(
    p: *const MsPotential,
    l: *const MsLandscape,
    m: *const MsLevyModel,
    params: *const MsSimParams,
    out: *mut *mut MsSimulator,
) -> MsStatus {
    guard(|| {
        let (p, l, m, s) =
            (as_ref(p, "potential")?, as_ref(l, "landscape")?, as_ref(m, "model")?, as_ref(params, "params")?);
        let cfg = SimConfig {
            eps: s.eps,
            rho: s.rho,
            gamma: s.gamma,
            margin_exponent: s.margin_exponent,
            h: s.h,
            horizon: s.horizon,
            overflow: s.overflow,
            delta: if s.delta > 0.0 { s.delta } else { 0.25 * l.0.delta0() },
            seed: s.seed,
            mode: if s.exact_stable { Mode::ExactStable } else { Mode::Decomposed },
        };
        let sim = Simulator::new(p.0.clone(), l.0.clone(), &m.0, cfg).map_err(lib)?;
        put(out, Box::into_raw(Box::new(MsSimulator(sim))), "out")
    })
}

/// # Safety
/// `s` must come from [`ms_simulator_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ms_simulator_free(s: *mut MsSimulator) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// One first-exit record.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsExitRecord {
    pub stop_time: f64,
    /// Position at `stop_time`.
    pub x: f64,
    /// Well of the landing point, -1 if none.
    pub landing_well: i64,
    pub n_big_jumps: u64,
    /// 1 if the horizon was reached or the path overflowed.
    pub censored: bool,
    pub overflowed: bool,
}

/// First exits from well `well` started at its minimum, for path indices
/// `0..n`, computed on `workers` threads (0 selects the default). Results
/// do not depend on `workers`.
///
/// # Safety
/// `s` must be live; `records` must hold `n` entries.
#[no_mangle]
pub unsafe extern "C" fn ms_first_exit_batch(
    s: *const MsSimulator,
    well: usize,
    n: usize,
    workers: usize,
    records: *mut MsExitRecord,
) -> MsStatus {
    guard(|| {
        let sim = &as_ref(s, "simulator")?.0;
        if n > 0 && records.is_null() {
            return Err(null("records"));
        }
        let workers = if workers == 0 { metastab::simulate::default_workers() } else { workers };
        let out = run_batch(n as u64, workers, |k| sim.first_exit_sigma(well, None, k))
            .map_err(lib)?
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(lib)?;
        let converted: Vec<MsExitRecord> = out
            .iter()
            .map(|r| MsExitRecord {
                stop_time: r.stop_time,
                x: r.x,
                landing_well: r.landing_well.map_or(-1, |j| j as i64),
                n_big_jumps: r.n_big_jumps,
                censored: r.stop_kind != Some(StopKind::Sigma),
                overflowed: r.overflowed,
            })
            .collect();
        fill(&converted, records, n, ptr::null_mut())
    })
}
