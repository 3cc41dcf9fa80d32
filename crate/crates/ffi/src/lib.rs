//! C ABI over the recovery library: opaque ensemble handles, status codes,
//! and flat `double` buffers. Every entry point catches panics, never
//! unwinds across the boundary, and reports detail through a per-thread
//! error message.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dcs_core::nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dcs_core::algorithms::{
    iht_q, ims_q, ist_q, ml_oracle, omp_q, tsr_q, FinalQuantizer, GenieMode, RecoveryConfig,
    RecoveryResult,
};
use dcs_core::measurement::{build_svd_ensemble, MeasurementEnsemble};
use dcs_core::signal::SignalPrior;
use dcs_core::Error;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DegenerateColumn = 3,
    NumericalBreakdown = 4,
    BudgetExceeded = 5,
    Io = 6,
    Config = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized: String = message.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_from_error(err: &Error) -> DcsStatus {
    set_error(&err.to_string());
    match err {
        Error::InvalidArgument(_) => DcsStatus::InvalidArgument,
        Error::DegenerateColumn(_) => DcsStatus::DegenerateColumn,
        Error::NumericalBreakdown(_) => DcsStatus::NumericalBreakdown,
        Error::BudgetExceeded { .. } => DcsStatus::BudgetExceeded,
        Error::Io { .. } => DcsStatus::Io,
        Error::Config { .. } => DcsStatus::Config,
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn dcs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// ABI revision; bumped on any breaking change to this header.
#[no_mangle]
pub extern "C" fn dcs_abi_version() -> u32 {
    1
}

/// Runs a closure, converting panics into `DcsStatus::Panic`.
fn guarded(f: impl FnOnce() -> DcsStatus) -> DcsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            DcsStatus::Panic
        }
    }
}

/// Opaque measurement ensemble handle.
pub struct DcsEnsemble {
    inner: MeasurementEnsemble,
}

/// Draws a seeded random partial-unitary ensemble with `k` rows and `l`
/// columns. On success stores a heap handle in `*out`; free it with
/// [`dcs_ensemble_free`].
#[no_mangle]
pub extern "C" fn dcs_ensemble_build(
    seed: u64,
    k: usize,
    l: usize,
    out: *mut *mut DcsEnsemble,
) -> DcsStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return DcsStatus::NullPointer;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match build_svd_ensemble(k, l, &mut rng) {
            Ok(inner) => {
                let handle = Box::new(DcsEnsemble { inner });
                unsafe { *out = Box::into_raw(handle) };
                DcsStatus::Ok
            }
            Err(e) => status_from_error(&e),
        }
    })
}

/// Releases an ensemble handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn dcs_ensemble_free(ensemble: *mut DcsEnsemble) {
    if !ensemble.is_null() {
        drop(unsafe { Box::from_raw(ensemble) });
    }
}

/// Number of measurement rows `K`.
#[no_mangle]
pub extern "C" fn dcs_ensemble_rows(ensemble: *const DcsEnsemble) -> usize {
    if ensemble.is_null() {
        return 0;
    }
    unsafe { &*ensemble }.inner.k()
}

/// Signal length `L`.
#[no_mangle]
pub extern "C" fn dcs_ensemble_cols(ensemble: *const DcsEnsemble) -> usize {
    if ensemble.is_null() {
        return 0;
    }
    unsafe { &*ensemble }.inner.l()
}

/// Copies the assembled `K x L` measurement matrix into `matrix_out` in
/// row-major order; the buffer must hold `K * L` doubles.
#[no_mangle]
pub extern "C" fn dcs_ensemble_copy_matrix(
    ensemble: *const DcsEnsemble,
    matrix_out: *mut f64,
    len: usize,
) -> DcsStatus {
    guarded(|| {
        if ensemble.is_null() || matrix_out.is_null() {
            set_error("null pointer");
            return DcsStatus::NullPointer;
        }
        let a = unsafe { &*ensemble }.inner.matrix();
        if len != a.nrows() * a.ncols() {
            set_error("matrix buffer length does not match K * L");
            return DcsStatus::InvalidArgument;
        }
        let out = unsafe { std::slice::from_raw_parts_mut(matrix_out, len) };
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                out[r * a.ncols() + c] = a[(r, c)];
            }
        }
        DcsStatus::Ok
    })
}

/// Knobs shared by all iterative solvers. Obtain defaults from
/// [`dcs_recovery_options_default`]; unset optional fields stay NaN or 0.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DcsRecoveryOptions {
    /// Iteration cap, at least 1.
    pub max_iters: u32,
    /// Variance floor below which the turbo solver stops.
    pub stop_eps: f64,
    /// 0 = elementwise nearest symbol, 1 = keep the s largest magnitudes.
    pub final_quantizer: u8,
    /// Shrinkage for the soft-threshold baseline; NaN means unset.
    pub ist_tau: f64,
    /// Greedy iteration count for the pursuit baseline; 0 means unset.
    pub omp_iters: u32,
    /// Stop when an iteration moves no symbol estimate more than this;
    /// NaN disables early exit.
    pub early_exit_tol: f64,
    /// Nonzero selects the alternative turbo variance bookkeeping.
    pub tsr_alt_variance_update: u8,
}

/// Fills `out` with the library defaults.
#[no_mangle]
pub extern "C" fn dcs_recovery_options_default(out: *mut DcsRecoveryOptions) -> DcsStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return DcsStatus::NullPointer;
        }
        let defaults = RecoveryConfig::default();
        unsafe {
            *out = DcsRecoveryOptions {
                max_iters: defaults.max_iters as u32,
                stop_eps: defaults.stop_eps,
                final_quantizer: match defaults.final_quantizer {
                    FinalQuantizer::Elementwise => 0,
                    FinalQuantizer::SparsityMatched => 1,
                },
                ist_tau: f64::NAN,
                omp_iters: 0,
                early_exit_tol: defaults.early_exit_tol.unwrap_or(f64::NAN),
                tsr_alt_variance_update: 0,
            };
        }
        DcsStatus::Ok
    })
}

fn config_from_options(options: *const DcsRecoveryOptions) -> Result<RecoveryConfig, DcsStatus> {
    let mut config = RecoveryConfig::default();
    if options.is_null() {
        return Ok(config);
    }
    let o = unsafe { &*options };
    config.max_iters = o.max_iters as usize;
    config.stop_eps = o.stop_eps;
    config.final_quantizer = match o.final_quantizer {
        0 => FinalQuantizer::Elementwise,
        1 => FinalQuantizer::SparsityMatched,
        other => {
            set_error(&format!("unknown final quantizer {other}"));
            return Err(DcsStatus::InvalidArgument);
        }
    };
    config.ist_tau = if o.ist_tau.is_nan() { None } else { Some(o.ist_tau) };
    config.omp_iters = if o.omp_iters == 0 { None } else { Some(o.omp_iters as usize) };
    config.early_exit_tol = if o.early_exit_tol.is_nan() {
        None
    } else {
        Some(o.early_exit_tol)
    };
    config.tsr_alt_variance_update = o.tsr_alt_variance_update != 0;
    config.genie_mode = GenieMode::None;
    Ok(config)
}

struct RecoverIo<'a> {
    y: DVector<f64>,
    prior: SignalPrior,
    x_out: &'a mut [f64],
}

/// Validates the shared pointer/length contract of the recovery calls.
fn recovery_io<'a>(
    ensemble: *const DcsEnsemble,
    y: *const f64,
    y_len: usize,
    sparsity: usize,
    x_out: *mut f64,
    x_len: usize,
) -> Result<(&'a DcsEnsemble, RecoverIo<'a>), DcsStatus> {
    if ensemble.is_null() || y.is_null() || x_out.is_null() {
        set_error("null pointer");
        return Err(DcsStatus::NullPointer);
    }
    let handle = unsafe { &*ensemble };
    let (k, l) = (handle.inner.k(), handle.inner.l());
    if y_len != k {
        set_error("y length does not match the ensemble row count");
        return Err(DcsStatus::InvalidArgument);
    }
    if x_len != l {
        set_error("x buffer length does not match the ensemble column count");
        return Err(DcsStatus::InvalidArgument);
    }
    let prior = match SignalPrior::ternary(l, sparsity) {
        Ok(p) => p,
        Err(e) => return Err(status_from_error(&e)),
    };
    let y = DVector::from_column_slice(unsafe { std::slice::from_raw_parts(y, y_len) });
    let x_out = unsafe { std::slice::from_raw_parts_mut(x_out, x_len) };
    Ok((handle, RecoverIo { y, prior, x_out }))
}

fn finish(
    result: dcs_core::Result<RecoveryResult>,
    io: RecoverIo<'_>,
    iters_out: *mut u32,
    diverged_out: *mut u8,
) -> DcsStatus {
    match result {
        Ok(res) => {
            for (dst, src) in io.x_out.iter_mut().zip(res.x_hat_discrete.values().iter()) {
                *dst = *src;
            }
            if !iters_out.is_null() {
                unsafe { *iters_out = res.iters_run as u32 };
            }
            if !diverged_out.is_null() {
                unsafe { *diverged_out = u8::from(res.diverged) };
            }
            DcsStatus::Ok
        }
        Err(e) => status_from_error(&e),
    }
}

/// Shared body of the iterative recovery entry points.
fn run_recovery(
    ensemble: *const DcsEnsemble,
    y: *const f64,
    y_len: usize,
    sigma_n_sq: f64,
    sparsity: usize,
    options: *const DcsRecoveryOptions,
    x_out: *mut f64,
    x_len: usize,
    iters_out: *mut u32,
    diverged_out: *mut u8,
    algo: impl FnOnce(
        &DcsEnsemble,
        &RecoverIo<'_>,
        f64,
        &RecoveryConfig,
    ) -> dcs_core::Result<RecoveryResult>,
) -> DcsStatus {
    guarded(|| {
        let (handle, io) = match recovery_io(ensemble, y, y_len, sparsity, x_out, x_len) {
            Ok(v) => v,
            Err(status) => return status,
        };
        let config = match config_from_options(options) {
            Ok(c) => c,
            Err(status) => return status,
        };
        let result = algo(handle, &io, sigma_n_sq, &config);
        finish(result, io, iters_out, diverged_out)
    })
}

/// Iterative soft-feedback recovery (the primary algorithm). Writes the
/// alphabet-constrained estimate into `x_out` (length `L`).
#[no_mangle]
pub extern "C" fn dcs_recover_ims(
    ensemble: *const DcsEnsemble,
    y: *const f64,
    y_len: usize,
    sigma_n_sq: f64,
    sparsity: usize,
    options: *const DcsRecoveryOptions,
    x_out: *mut f64,
    x_len: usize,
    iters_out: *mut u32,
    diverged_out: *mut u8,
) -> DcsStatus {
    run_recovery(
        ensemble, y, y_len, sigma_n_sq, sparsity, options, x_out, x_len, iters_out, diverged_out,
        |h, io, s, c| ims_q(&io.y, &h.inner, s, &io.prior, c),
    )
}

/// Turbo recovery with scalar variance exchange.
#[no_mangle]
pub extern "C" fn dcs_recover_tsr(
    ensemble: *const DcsEnsemble,
    y: *const f64,
    y_len: usize,
    sigma_n_sq: f64,
    sparsity: usize,
    options: *const DcsRecoveryOptions,
    x_out: *mut f64,
    x_len: usize,
    iters_out: *mut u32,
    diverged_out: *mut u8,
) -> DcsStatus {
    run_recovery(
        ensemble, y, y_len, sigma_n_sq, sparsity, options, x_out, x_len, iters_out, diverged_out,
        |h, io, s, c| tsr_q(&io.y, &h.inner, s, &io.prior, c),
    )
}

/// Hard-thresholding baseline. Ignores `sigma_n_sq`.
#[no_mangle]
pub extern "C" fn dcs_recover_iht(
    ensemble: *const DcsEnsemble,
    y: *const f64,
    y_len: usize,
    sigma_n_sq: f64,
    sparsity: usize,
    options: *const DcsRecoveryOptions,
    x_out: *mut f64,
    x_len: usize,
    iters_out: *mut u32,
    diverged_out: *mut u8,
) -> DcsStatus {
    run_recovery(
        ensemble, y, y_len, sigma_n_sq, sparsity, options, x_out, x_len, iters_out, diverged_out,
        |h, io, _s, c| iht_q(&io.y, h.inner.matrix(), &io.prior, c),
    )
}

/// Soft-thresholding baseline; requires `ist_tau` in the options. Ignores
/// `sigma_n_sq`.
#[no_mangle]
pub extern "C" fn dcs_recover_ist(
    ensemble: *const DcsEnsemble,
    y: *const f64,
    y_len: usize,
    sigma_n_sq: f64,
    sparsity: usize,
    options: *const DcsRecoveryOptions,
    x_out: *mut f64,
    x_len: usize,
    iters_out: *mut u32,
    diverged_out: *mut u8,
) -> DcsStatus {
    run_recovery(
        ensemble, y, y_len, sigma_n_sq, sparsity, options, x_out, x_len, iters_out, diverged_out,
        |h, io, _s, c| ist_q(&io.y, h.inner.matrix(), &io.prior, c),
    )
}

/// Greedy pursuit baseline; requires `omp_iters` in the options. Ignores
/// `sigma_n_sq`.
#[no_mangle]
pub extern "C" fn dcs_recover_omp(
    ensemble: *const DcsEnsemble,
    y: *const f64,
    y_len: usize,
    sigma_n_sq: f64,
    sparsity: usize,
    options: *const DcsRecoveryOptions,
    x_out: *mut f64,
    x_len: usize,
    iters_out: *mut u32,
    diverged_out: *mut u8,
) -> DcsStatus {
    run_recovery(
        ensemble, y, y_len, sigma_n_sq, sparsity, options, x_out, x_len, iters_out, diverged_out,
        |h, io, _s, c| omp_q(&io.y, h.inner.matrix(), &io.prior, c),
    )
}

/// Exhaustive maximum-likelihood search over all supports and sign
/// patterns. Fails with `BudgetExceeded` beyond one million candidates.
#[no_mangle]
pub extern "C" fn dcs_recover_ml(
    ensemble: *const DcsEnsemble,
    y: *const f64,
    y_len: usize,
    sparsity: usize,
    x_out: *mut f64,
    x_len: usize,
) -> DcsStatus {
    guarded(|| {
        let (handle, io) = match recovery_io(ensemble, y, y_len, sparsity, x_out, x_len) {
            Ok(v) => v,
            Err(status) => return status,
        };
        match ml_oracle(&io.y, handle.inner.matrix(), &io.prior) {
            Ok(x) => {
                for (dst, src) in io.x_out.iter_mut().zip(x.values().iter()) {
                    *dst = *src;
                }
                DcsStatus::Ok
            }
            Err(e) => status_from_error(&e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    fn build(seed: u64, k: usize, l: usize) -> *mut DcsEnsemble {
        let mut handle: *mut DcsEnsemble = ptr::null_mut();
        assert_eq!(dcs_ensemble_build(seed, k, l, &mut handle), DcsStatus::Ok);
        assert!(!handle.is_null());
        handle
    }

    fn last_error() -> String {
        let ptr = dcs_last_error_message();
        assert!(!ptr.is_null());
        unsafe { std::ffi::CStr::from_ptr(ptr) }
            .to_string_lossy()
            .into_owned()
    }

    #[test]
    fn ensemble_lifecycle_and_shape() {
        let handle = build(3, 6, 10);
        assert_eq!(dcs_ensemble_rows(handle), 6);
        assert_eq!(dcs_ensemble_cols(handle), 10);

        let mut a = vec![0.0; 60];
        assert_eq!(
            dcs_ensemble_copy_matrix(handle, a.as_mut_ptr(), a.len()),
            DcsStatus::Ok
        );
        assert!(a.iter().all(|v| v.is_finite()));
        assert!(a.iter().any(|v| *v != 0.0));

        assert_eq!(
            dcs_ensemble_copy_matrix(handle, a.as_mut_ptr(), 59),
            DcsStatus::InvalidArgument
        );
        dcs_ensemble_free(handle);
        dcs_ensemble_free(ptr::null_mut());
    }

    #[test]
    fn null_pointers_are_reported() {
        assert_eq!(
            dcs_ensemble_build(0, 4, 8, ptr::null_mut()),
            DcsStatus::NullPointer
        );
        assert_eq!(dcs_ensemble_rows(ptr::null()), 0);
        let mut x = [0.0; 8];
        let status = dcs_recover_ims(
            ptr::null(),
            ptr::null(),
            0,
            0.01,
            2,
            ptr::null(),
            x.as_mut_ptr(),
            8,
            ptr::null_mut(),
            ptr::null_mut(),
        );
        assert_eq!(status, DcsStatus::NullPointer);
        assert!(!last_error().is_empty());
    }

    #[test]
    fn defaults_round_trip() {
        let mut options = DcsRecoveryOptions {
            max_iters: 0,
            stop_eps: 0.0,
            final_quantizer: 9,
            ist_tau: 0.0,
            omp_iters: 7,
            early_exit_tol: 0.0,
            tsr_alt_variance_update: 9,
        };
        assert_eq!(dcs_recovery_options_default(&mut options), DcsStatus::Ok);
        assert_eq!(options.max_iters, 50);
        assert_eq!(options.final_quantizer, 0);
        assert!(options.ist_tau.is_nan());
        assert_eq!(options.omp_iters, 0);
        assert_eq!(options.tsr_alt_variance_update, 0);
    }

    /// Full round trip: building y = A x for a known sparse ternary x and
    /// recovering it through the C surface, with low noise so every solver
    /// should succeed.
    #[test]
    fn recovery_round_trip_through_the_c_surface() {
        let (k, l, s) = (24, 32, 3);
        let handle = build(11, k, l);
        let mut a = vec![0.0; k * l];
        assert_eq!(
            dcs_ensemble_copy_matrix(handle, a.as_mut_ptr(), a.len()),
            DcsStatus::Ok
        );

        let mut x_true = vec![0.0f64; l];
        x_true[4] = 1.0;
        x_true[17] = -1.0;
        x_true[29] = 1.0;
        let mut y = vec![0.0f64; k];
        for r in 0..k {
            y[r] = (0..l).map(|c| a[r * l + c] * x_true[c]).sum();
        }

        let mut options = DcsRecoveryOptions {
            max_iters: 0,
            stop_eps: 0.0,
            final_quantizer: 0,
            ist_tau: f64::NAN,
            omp_iters: 0,
            early_exit_tol: f64::NAN,
            tsr_alt_variance_update: 0,
        };
        assert_eq!(dcs_recovery_options_default(&mut options), DcsStatus::Ok);
        options.ist_tau = 0.02;
        options.omp_iters = s as u32;

        let mut x = vec![0.0f64; l];
        let mut iters = 0u32;
        let mut diverged = 2u8;

        // The observation is noiseless; the assumed noise variance is kept
        // moderate because the turbo solver's variance recursion needs it to
        // be a visible fraction of the prior variance.
        for entry in [
            dcs_recover_ims,
            dcs_recover_tsr,
            dcs_recover_iht,
            dcs_recover_ist,
            dcs_recover_omp,
        ] {
            x.fill(9.0);
            let status = entry(
                handle,
                y.as_ptr(),
                k,
                0.005,
                s,
                &options,
                x.as_mut_ptr(),
                l,
                &mut iters,
                &mut diverged,
            );
            assert_eq!(status, DcsStatus::Ok);
            assert_eq!(x, x_true);
            assert_eq!(diverged, 0);
            assert!(iters >= 1);
        }

        x.fill(9.0);
        assert_eq!(
            dcs_recover_ml(handle, y.as_ptr(), k, s, x.as_mut_ptr(), l),
            DcsStatus::Ok
        );
        assert_eq!(x, x_true);

        dcs_ensemble_free(handle);
    }

    #[test]
    fn missing_shrinkage_is_an_invalid_argument() {
        let (k, l) = (6, 10);
        let handle = build(5, k, l);
        let y = vec![0.0f64; k];
        let mut x = vec![0.0f64; l];
        let status = dcs_recover_ist(
            handle,
            y.as_ptr(),
            k,
            0.01,
            2,
            ptr::null(),
            x.as_mut_ptr(),
            l,
            ptr::null_mut(),
            ptr::null_mut(),
        );
        assert_eq!(status, DcsStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        dcs_ensemble_free(handle);
    }

    #[test]
    fn abi_version_is_stable() {
        assert_eq!(dcs_abi_version(), 1);
    }
}
