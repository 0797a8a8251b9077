//! C interface to `fragcoal`.
//!
//! Objects are opaque heap handles created by `*_new` and released by the
//! matching `*_free`. Every fallible call returns an [`FcStatus`]; on failure a
//! description is kept per thread and read with [`fc_last_error`]. Results are
//! written through caller-provided pointers, and array outputs take a buffer
//! plus its length and report the length they need.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fragcoal::oracle;
use fragcoal::simulator::{self, SimRng};
use fragcoal::stationary;
use fragcoal::{empirical_g, Error, RateKernel, SystemState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    /// No event can fire; the simulator state is final.
    Absorbed = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Merge/fragmentation rate kernel.
pub struct FcKernel {
    inner: RateKernel,
}

/// One stochastic trajectory, stepped event by event.
pub struct FcSimulator {
    kernel: RateKernel,
    state: SystemState,
    rng: SimRng,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: FcStatus, msg: impl Into<String>) -> FcStatus {
    set_error(msg);
    status
}

fn from_error(err: Error) -> FcStatus {
    let status = match err {
        Error::Numerical { .. } => FcStatus::Numerical,
        _ => FcStatus::InvalidArgument,
    };
    fail(status, err.to_string())
}

fn guard<F: FnOnce() -> FcStatus>(f: F) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(FcStatus::Panic, "internal panic"),
    }
}

macro_rules! deref {
    ($p:expr) => {
        match unsafe { $p.as_ref() } {
            Some(v) => v,
            None => return fail(FcStatus::NullPointer, concat!(stringify!($p), " is null")),
        }
    };
}

macro_rules! deref_mut {
    ($p:expr) => {
        match unsafe { $p.as_mut() } {
            Some(v) => v,
            None => return fail(FcStatus::NullPointer, concat!(stringify!($p), " is null")),
        }
    };
}

/// Copies `values` into `buf` after reporting the needed length.
fn fill<T: Copy>(values: &[T], buf: *mut T, len: usize, needed: *mut usize) -> FcStatus {
    if let Some(n) = unsafe { needed.as_mut() } {
        *n = values.len();
    }
    if len < values.len() {
        return fail(
            FcStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        );
    }
    if values.is_empty() {
        return FcStatus::Ok;
    }
    if buf.is_null() {
        return fail(FcStatus::NullPointer, "buf is null");
    }
    unsafe { ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len()) };
    FcStatus::Ok
}

/// Message for the last failed call on this thread; empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a kernel with `alpha(orders[i]) = alphas[i]`.
///
/// # Safety
/// `orders` and `alphas` must point to `len` readable values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fc_kernel_new(
    orders: *const u32,
    alphas: *const f64,
    len: usize,
    lambda: f64,
    out: *mut *mut FcKernel,
) -> FcStatus {
    guard(|| {
        let out = deref_mut!(out);
        if len > 0 && (orders.is_null() || alphas.is_null()) {
            return fail(FcStatus::NullPointer, "orders or alphas is null");
        }
        let (orders, alphas) = if len == 0 {
            (&[][..], &[][..])
        } else {
            (
                std::slice::from_raw_parts(orders, len),
                std::slice::from_raw_parts(alphas, len),
            )
        };
        let pairs = orders
            .iter()
            .map(|&k| k as usize)
            .zip(alphas.iter().copied());
        match RateKernel::new(pairs, lambda) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(FcKernel { inner }));
                FcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Parses a kernel from JSON such as `{"lambda":0.1,"alpha":{"2":1}}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_kernel_from_json(
    json: *const c_char,
    out: *mut *mut FcKernel,
) -> FcStatus {
    guard(|| {
        let out = deref_mut!(out);
        if json.is_null() {
            return fail(FcStatus::NullPointer, "json is null");
        }
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(_) => return fail(FcStatus::InvalidArgument, "json is not UTF-8"),
        };
        match serde_json::from_str::<RateKernel>(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(FcKernel { inner }));
                FcStatus::Ok
            }
            Err(e) => fail(FcStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `kernel` must come from a kernel constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fc_kernel_free(kernel: *mut FcKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Smallest merge order with positive rate.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_kernel_m(kernel: *const FcKernel, out: *mut u32) -> FcStatus {
    guard(|| {
        let kernel = deref!(kernel);
        *deref_mut!(out) = kernel.inner.m() as u32;
        FcStatus::Ok
    })
}

/// Starts `n` singletons at `t = 0`. The kernel is copied.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_simulator_new(
    kernel: *const FcKernel,
    n: u64,
    seed: u64,
    out: *mut *mut FcSimulator,
) -> FcStatus {
    guard(|| {
        let kernel = deref!(kernel);
        let out = deref_mut!(out);
        match SystemState::singletons(n) {
            Ok(state) => {
                *out = Box::into_raw(Box::new(FcSimulator {
                    kernel: kernel.inner.clone(),
                    state,
                    rng: simulator::rng_from_seed(seed),
                }));
                FcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `sim` must come from [`fc_simulator_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fc_simulator_free(sim: *mut FcSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Fires one event. Returns `FC_STATUS_ABSORBED` if none can fire.
///
/// # Safety
/// `sim` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_simulator_step(sim: *mut FcSimulator) -> FcStatus {
    guard(|| {
        let sim = deref_mut!(sim);
        match simulator::step(&mut sim.state, &sim.kernel, &mut sim.rng) {
            Ok(_) => FcStatus::Ok,
            Err(_) => fail(FcStatus::Absorbed, "no event can fire"),
        }
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_simulator_time(sim: *const FcSimulator, out: *mut f64) -> FcStatus {
    guard(|| {
        *deref_mut!(out) = deref!(sim).state.time();
        FcStatus::Ok
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_simulator_cluster_count(
    sim: *const FcSimulator,
    out: *mut u64,
) -> FcStatus {
    guard(|| {
        *deref_mut!(out) = deref!(sim).state.cluster_count();
        FcStatus::Ok
    })
}

/// Empirical generating function at `x` in `[0, 1]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_simulator_empirical_g(
    sim: *const FcSimulator,
    x: f64,
    out: *mut f64,
) -> FcStatus {
    guard(|| {
        let sim = deref!(sim);
        let out = deref_mut!(out);
        match empirical_g(&sim.state, x) {
            Ok(g) => {
                *out = g;
                FcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Cluster counts by size, `buf[k]` for `k = 0..=n` (`n + 1` entries).
///
/// # Safety
/// `buf` must hold `len` writable values; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn fc_simulator_histogram(
    sim: *const FcSimulator,
    buf: *mut u64,
    len: usize,
    needed: *mut usize,
) -> FcStatus {
    guard(|| fill(deref!(sim).state.histogram(), buf, len, needed))
}

/// Stationary `G(1)` of the limit equations at rate `lambda > 0`; the
/// kernel's own `lambda` is ignored.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_solve_g1(
    kernel: *const FcKernel,
    lambda: f64,
    out: *mut f64,
) -> FcStatus {
    guard(|| {
        let kernel = deref!(kernel);
        let out = deref_mut!(out);
        match stationary::solve_g1(&kernel.inner, lambda) {
            Ok(fp) => {
                *out = fp.g1;
                FcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// `lambda -> 0` limit law for smallest merge order `m`: `buf[k - 1] = p_k`
/// for `k = 1..=k_max`.
///
/// # Safety
/// `buf` must hold `len` writable values; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn fc_limit_p(
    m: u64,
    k_max: u64,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> FcStatus {
    guard(|| match stationary::limit_p(m, k_max) {
        Ok(p) => fill(&p.as_slice()[1..], buf, len, needed),
        Err(e) => from_error(e),
    })
}

/// Stationary densities `w_j` and cluster-size law `p_j` of the limit
/// equations, `j = 1..=j_max`, written to `w[j - 1]` and `p[j - 1]`. Either
/// output may be null.
///
/// # Safety
/// Non-null outputs must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn fc_stationary_w(
    kernel: *const FcKernel,
    lambda: f64,
    j_max: usize,
    w: *mut f64,
    p: *mut f64,
    len: usize,
) -> FcStatus {
    guard(|| {
        let kernel = deref!(kernel);
        let sd = match stationary::stationary_w(&kernel.inner, lambda, j_max) {
            Ok(sd) => sd,
            Err(e) => return from_error(e),
        };
        for (out, dist) in [(w, &sd.w), (p, &sd.p)] {
            if !out.is_null() {
                let status = fill(&dist.as_slice()[1..], out, len, ptr::null_mut());
                if status != FcStatus::Ok {
                    return status;
                }
            }
        }
        FcStatus::Ok
    })
}

/// Stationary law of the exact finite-`n` chain (`n <= 12`) over partitions
/// of `n` in reverse lexicographic order (`[n]` first, all singletons last).
///
/// # Safety
/// `buf` must hold `len` writable values; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn fc_exact_stationary(
    kernel: *const FcKernel,
    n: u32,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> FcStatus {
    guard(|| {
        let kernel = deref!(kernel);
        let pi = oracle::build_generator(n, &kernel.inner)
            .and_then(|g| oracle::stationary_distribution(&g));
        match pi {
            Ok(pi) => fill(&pi, buf, len, needed),
            Err(e) => from_error(e),
        }
    })
}
