//! C ABI over the `gwle` estimators.
//!
//! Every function returns a [`GwleStatus`]; on failure the message is
//! available from [`gwle_last_error_message`] on the same thread. Datasets are
//! opaque handles created by [`gwle_dataset_new`] and released with
//! [`gwle_dataset_free`]. Array arguments are row-major and must hold exactly
//! the number of elements documented on each function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use gwle::{
    BandwidthMatrix, ConditionFlag, Dataset, Error, FitConfig, KernelFamily, KernelSpec, LatticeIndex, LocalFit,
    MlweOptions, Observation, Record, ScaleMatrix,
};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GwleStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    SingularFit = 4,
    InsufficientSupport = 5,
    NumericalFailure = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GwleKernel {
    Gaussian = 0,
    Epanechnikov = 1,
    Quartic = 2,
}

impl From<GwleKernel> for KernelSpec {
    fn from(k: GwleKernel) -> Self {
        KernelSpec::new(match k {
            GwleKernel::Gaussian => KernelFamily::Gaussian,
            GwleKernel::Epanechnikov => KernelFamily::Epanechnikov,
            GwleKernel::Quartic => KernelFamily::Quartic,
        })
    }
}

/// Opaque dataset handle.
pub struct GwleDataset(Dataset);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(GwleStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DimensionMismatch { .. } => GwleStatus::DimensionMismatch,
            Error::SingularFit { .. } => GwleStatus::SingularFit,
            Error::InsufficientSupport { .. } => GwleStatus::InsufficientSupport,
            e if e.is_numerical() => GwleStatus::NumericalFailure,
            _ => GwleStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GwleStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any error or panic and converts it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GwleStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GwleStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            GwleStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or point to `len` writable values.
unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

/// # Safety
/// `ptr` must be null or a handle from [`gwle_dataset_new`] not yet freed.
unsafe fn dataset<'a>(ptr: *const GwleDataset) -> Result<&'a Dataset, Failure> {
    ptr.as_ref().map(|d| &d.0).ok_or_else(|| null("dataset"))
}

/// Builds a dataset of `n` records on a lattice with `m` axes.
///
/// `lattice_sizes`: m values. `indices`: n×m one-based lattice coordinates.
/// `x`: n×p covariates. `u`: n×d locations. `y`: n responses. On success
/// `*out` receives a handle owned by the caller.
///
/// # Safety
/// All pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gwle_dataset_new(
    lattice_sizes: *const usize,
    m: usize,
    p: usize,
    d: usize,
    intercept: bool,
    n: usize,
    indices: *const usize,
    x: *const f64,
    u: *const f64,
    y: *const f64,
    out: *mut *mut GwleDataset,
) -> GwleStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let sizes = slice(lattice_sizes, m, "lattice_sizes")?;
        let count = |a: usize, what: &str| {
            n.checked_mul(a)
                .ok_or_else(|| Failure(GwleStatus::InvalidArgument, format!("{what} size overflows")))
        };
        let idx = slice(indices, count(m, "indices")?, "indices")?;
        let xs = slice(x, count(p, "x")?, "x")?;
        let us = slice(u, count(d, "u")?, "u")?;
        let ys = slice(y, n, "y")?;
        let records = (0..n)
            .map(|i| Record {
                index: LatticeIndex::new(idx[i * m..(i + 1) * m].to_vec()),
                obs: Observation {
                    x: xs[i * p..(i + 1) * p].to_vec(),
                    u: us[i * d..(i + 1) * d].to_vec(),
                    y: ys[i],
                },
            })
            .collect();
        let ds = Dataset::new(sizes.to_vec(), p, d, intercept, records)?;
        *out = Box::into_raw(Box::new(GwleDataset(ds)));
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `ds` must be null or a handle from [`gwle_dataset_new`], freed at most once.
#[no_mangle]
pub unsafe extern "C" fn gwle_dataset_free(ds: *mut GwleDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of records.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gwle_dataset_len(ds: *const GwleDataset, out: *mut usize) -> GwleStatus {
    guard(|| {
        let ds = dataset(ds)?;
        *out.as_mut().ok_or_else(|| null("out"))? = ds.len();
        Ok(())
    })
}

/// Checks lattice coverage, dimensions and finiteness. `*violations`
/// receives the number of problems found; the first is available from
/// [`gwle_last_error_message`] when nonzero.
///
/// # Safety
/// `ds` must be a live handle; `violations` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gwle_dataset_validate(ds: *const GwleDataset, violations: *mut usize) -> GwleStatus {
    guard(|| {
        let report = gwle::validate_dataset(dataset(ds)?);
        *violations.as_mut().ok_or_else(|| null("violations"))? = report.violations.len();
        if let Some(v) = report.violations.first() {
            set_error(&v.to_string());
        }
        Ok(())
    })
}

fn write_fit(fit: &LocalFit, beta: &mut [f64], grad: &mut [f64]) {
    beta.copy_from_slice(&fit.beta_hat);
    for (dst, src) in grad.iter_mut().zip(fit.gradient_hat.iter().flatten()) {
        *dst = *src;
    }
}

/// Local GWLE fit at `u0`.
///
/// `u0`, `scales`: d values. `beta_out`: p values. `grad_out`: d×p values,
/// row s holding ∂β/∂u_s. `effective_n` and `ridge_applied` may be null.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn gwle_fit_local(
    ds: *const GwleDataset,
    u0: *const f64,
    d: usize,
    kernel: GwleKernel,
    scales: *const f64,
    h: f64,
    ridge: f64,
    beta_out: *mut f64,
    grad_out: *mut f64,
    effective_n: *mut f64,
    ridge_applied: *mut bool,
) -> GwleStatus {
    guard(|| {
        let ds = dataset(ds)?;
        let u0 = slice(u0, d, "u0")?;
        let scales = ScaleMatrix::new(slice(scales, d, "scales")?.to_vec())?;
        let cfg = FitConfig::new(kernel.into(), scales, h)?.with_ridge(ridge)?;
        let beta = slice_mut(beta_out, ds.p(), "beta_out")?;
        let grad = slice_mut(grad_out, ds.p() * ds.d(), "grad_out")?;
        let fit = gwle::fit_local(ds, u0, &cfg)?;
        write_fit(&fit, beta, grad);
        if let Some(e) = effective_n.as_mut() {
            *e = fit.effective_n;
        }
        if let Some(r) = ridge_applied.as_mut() {
            *r = fit.condition_flag == ConditionFlag::RidgeApplied;
        }
        Ok(())
    })
}

/// Product-kernel local linear fit with per-dimension bandwidths (d values).
/// Output layout as in [`gwle_fit_local`].
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn gwle_mlwe_fit_local(
    ds: *const GwleDataset,
    u0: *const f64,
    d: usize,
    kernel: GwleKernel,
    bandwidths: *const f64,
    ridge: f64,
    beta_out: *mut f64,
    grad_out: *mut f64,
) -> GwleStatus {
    guard(|| {
        let ds = dataset(ds)?;
        let u0 = slice(u0, d, "u0")?;
        let hm = BandwidthMatrix::new(slice(bandwidths, d, "bandwidths")?.to_vec())?;
        let beta = slice_mut(beta_out, ds.p(), "beta_out")?;
        let grad = slice_mut(grad_out, ds.p() * ds.d(), "grad_out")?;
        let opts = MlweOptions {
            ridge_fallback: ridge,
            ..MlweOptions::default()
        };
        let fit = gwle::mlwe_fit_local_with(ds, &ds.responses(), u0, &hm, kernel.into(), opts)?;
        write_fit(&fit, beta, grad);
        Ok(())
    })
}

/// κ₀..κ₄ of the one-dimensional kernel into `out` (5 values).
///
/// # Safety
/// `out` must be writable for 5 values.
#[no_mangle]
pub unsafe extern "C" fn gwle_kernel_moments(kernel: GwleKernel, out: *mut f64) -> GwleStatus {
    guard(|| {
        let out = slice_mut(out, 5, "out")?;
        let m = gwle::kernel_moments(kernel.into())?;
        for (l, o) in out.iter_mut().enumerate() {
            *o = m.kappa(l);
        }
        Ok(())
    })
}

/// Scaled distance `|Λ(a - b)|` between two d-vectors.
///
/// # Safety
/// `a`, `b`, `scales` must hold d values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gwle_distance(
    a: *const f64,
    b: *const f64,
    scales: *const f64,
    d: usize,
    out: *mut f64,
) -> GwleStatus {
    guard(|| {
        let s = ScaleMatrix::new(slice(scales, d, "scales")?.to_vec())?;
        let v = gwle::distance(slice(a, d, "a")?, slice(b, d, "b")?, &s)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Message of the most recent failure on this thread, or "" if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gwle_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gwle_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
