//! C ABI over `momentfit`.
//!
//! Every function returns an `MfStatus`; on failure the message is
//! available from `mf_last_error_message` on the same thread. Handles are
//! opaque and released with their `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use momentfit::basis::{fourier_family, hermite_function_family, legendre_family, tensor_product, BasisFamily, Region};
use momentfit::bench::prng_uniformity_test;
use momentfit::density::{ArgumentLabel, FittedDensity, SignLabel};
use momentfit::estimator::{fit, EstimationOptions, GramMode, KernelSpec, Normalization};
use momentfit::sample::{WeightedSample, Weights};
use momentfit::values::{Coefficients, Scalar, WeightKind};
use momentfit::{Error, ErrorClass};
use num_complex::Complex64;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    /// Malformed or inconsistent arguments, files or models.
    InvalidInput = 1,
    /// Numerical failure: ill-conditioned Gram matrix, divergent quadrature, …
    Numerical = 2,
    NullPointer = 3,
    /// Real weights where complex ones were required, or the reverse.
    WeightKind = 4,
    OutOfDomain = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfNormalization {
    None = 0,
    Lagrange = 1,
    Posthoc = 2,
}

/// Options for `mf_fit`; `kernel_eps <= 0` disables the kernel correction.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MfFitOptions {
    pub normalization: MfNormalization,
    /// Constraint value for `MF_NORMALIZATION_LAGRANGE`.
    pub normalization_constant: f64,
    pub kernel_eps: f64,
    /// Solve with the Gram matrix instead of assuming orthonormality.
    pub solve_gram: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MfPrngResult {
    pub statistic: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Opaque basis family.
pub struct MfFamily(BasisFamily);

/// Opaque weighted sample.
pub struct MfSample(WeightedSample);

/// Opaque fitted density.
pub struct MfModel(FittedDensity);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MfStatus {
    match e {
        Error::OutOfDomain { .. } => MfStatus::OutOfDomain,
        Error::WeightKindMismatch { .. } => MfStatus::WeightKind,
        Error::Io { .. } => MfStatus::Io,
        Error::Trial { source, .. } => status_of(source),
        _ => match e.class() {
            ErrorClass::Input => MfStatus::InvalidInput,
            ErrorClass::Numerical => MfStatus::Numerical,
        },
    }
}

fn guard(body: impl FnOnce() -> Result<(), Error>) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MfStatus::Ok,
        Ok(Err(e)) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Err(_) => {
            set_error("internal panic".to_string());
            MfStatus::Internal
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(format!("null pointer: {}", stringify!($p)));
            return MfStatus::NullPointer;
        })+
    };
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> &'a [f64] {
    if len == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(p, len)
    }
}

fn put<T>(out: *mut *mut T, value: T) {
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message of the last failed call on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn mf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn mf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Normalized Legendre polynomials of degree `0..=order` on `[lo, hi]`.
#[no_mangle]
pub unsafe extern "C" fn mf_family_legendre(order: usize, lo: f64, hi: f64, out: *mut *mut MfFamily) -> MfStatus {
    non_null!(out);
    guard(|| {
        put(out, MfFamily(legendre_family(order, &Region::interval(lo, hi)?)?));
        Ok(())
    })
}

/// Fourier basis with frequencies up to `max_freq` on `[lo, hi]`.
#[no_mangle]
pub unsafe extern "C" fn mf_family_fourier(max_freq: usize, lo: f64, hi: f64, out: *mut *mut MfFamily) -> MfStatus {
    non_null!(out);
    guard(|| {
        put(out, MfFamily(fourier_family(max_freq, &Region::interval(lo, hi)?)?));
        Ok(())
    })
}

/// Hermite functions of order `0..=order` on the real line.
#[no_mangle]
pub unsafe extern "C" fn mf_family_hermite(order: usize, out: *mut *mut MfFamily) -> MfStatus {
    non_null!(out);
    guard(|| {
        put(out, MfFamily(hermite_function_family(order)));
        Ok(())
    })
}

/// Tensor product of `count` one-dimensional families (the factors stay owned by the caller).
#[no_mangle]
pub unsafe extern "C" fn mf_family_tensor(factors: *const *const MfFamily, count: usize, out: *mut *mut MfFamily) -> MfStatus {
    non_null!(factors, out);
    guard(|| {
        let ptrs = std::slice::from_raw_parts(factors, count);
        if ptrs.iter().any(|p| p.is_null()) {
            return Err(Error::invalid("null factor"));
        }
        let fams: Vec<BasisFamily> = ptrs.iter().map(|&p| (*p).0.clone()).collect();
        put(out, MfFamily(tensor_product(&fams)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_family_size(family: *const MfFamily, size: *mut usize) -> MfStatus {
    non_null!(family, size);
    *size = (*family).0.size();
    MfStatus::Ok
}

#[no_mangle]
pub unsafe extern "C" fn mf_family_dim(family: *const MfFamily, dim: *mut usize) -> MfStatus {
    non_null!(family, dim);
    *dim = (*family).0.dim();
    MfStatus::Ok
}

#[no_mangle]
pub unsafe extern "C" fn mf_family_free(family: *mut MfFamily) {
    if !family.is_null() {
        drop(Box::from_raw(family));
    }
}

/// Sample of `n` points stored row-major in `points` (`n·dim` values).
///
/// `weights` holds `n` real weights, or is NULL for unit weights.
#[no_mangle]
pub unsafe extern "C" fn mf_sample_new(
    dim: usize,
    points: *const f64,
    n: usize,
    weights: *const f64,
    out: *mut *mut MfSample,
) -> MfStatus {
    non_null!(points, out);
    guard(|| {
        let coords = slice(points, n * dim).to_vec();
        let w = if weights.is_null() { vec![1.0; n] } else { slice(weights, n).to_vec() };
        put(out, MfSample(WeightedSample::new(dim, coords, Weights::Real(w))?));
        Ok(())
    })
}

/// Sample with complex weights `re[k] + i·im[k]`.
#[no_mangle]
pub unsafe extern "C" fn mf_sample_new_complex(
    dim: usize,
    points: *const f64,
    n: usize,
    re: *const f64,
    im: *const f64,
    out: *mut *mut MfSample,
) -> MfStatus {
    non_null!(points, re, im, out);
    guard(|| {
        let coords = slice(points, n * dim).to_vec();
        let w = slice(re, n).iter().zip(slice(im, n)).map(|(&a, &b)| Complex64::new(a, b)).collect();
        put(out, MfSample(WeightedSample::new(dim, coords, Weights::Complex(w))?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_sample_free(sample: *mut MfSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Default options: no normalization, no kernel correction, orthonormal family assumed.
#[no_mangle]
pub extern "C" fn mf_fit_options_default() -> MfFitOptions {
    MfFitOptions { normalization: MfNormalization::None, normalization_constant: 1.0, kernel_eps: 0.0, solve_gram: false }
}

/// Fits `family` to `sample`; `options` may be NULL for the defaults.
#[no_mangle]
pub unsafe extern "C" fn mf_fit(
    sample: *const MfSample,
    family: *const MfFamily,
    options: *const MfFitOptions,
    out: *mut *mut MfModel,
) -> MfStatus {
    non_null!(sample, family, out);
    guard(|| {
        let o = if options.is_null() { mf_fit_options_default() } else { *options };
        let opts = EstimationOptions {
            normalization: match o.normalization {
                MfNormalization::None => Normalization::None,
                MfNormalization::Lagrange => Normalization::Lagrange { c: o.normalization_constant },
                MfNormalization::Posthoc => Normalization::PosthocRescale,
            },
            kernel_correction: if o.kernel_eps > 0.0 { Some(KernelSpec::gaussian(o.kernel_eps)?) } else { None },
            gram_mode: if o.solve_gram { GramMode::Solve } else { GramMode::AssumeOrthonormal },
        };
        put(out, MfModel(fit(&(*sample).0, &(*family).0, &opts)?));
        Ok(())
    })
}

/// `true` when the model carries complex coefficients.
#[no_mangle]
pub unsafe extern "C" fn mf_model_is_complex(model: *const MfModel, is_complex: *mut bool) -> MfStatus {
    non_null!(model, is_complex);
    *is_complex = (*model).0.weight_kind() == WeightKind::Complex;
    MfStatus::Ok
}

#[no_mangle]
pub unsafe extern "C" fn mf_model_dim(model: *const MfModel, dim: *mut usize) -> MfStatus {
    non_null!(model, dim);
    *dim = (*model).0.dim();
    MfStatus::Ok
}

/// Copies the coefficients into `re` (and `im`, which may be NULL for real models); both hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn mf_model_coefficients(model: *const MfModel, re: *mut f64, im: *mut f64, len: usize) -> MfStatus {
    non_null!(model, re);
    guard(|| {
        let c = &(*model).0.coefficients;
        if len != c.len() {
            return Err(Error::DimensionMismatch { expected: c.len(), got: len });
        }
        let re = std::slice::from_raw_parts_mut(re, len);
        match c {
            Coefficients::Real(a) => {
                re.copy_from_slice(a);
                if !im.is_null() {
                    std::slice::from_raw_parts_mut(im, len).fill(0.0);
                }
            }
            Coefficients::Complex(a) => {
                if im.is_null() {
                    return Err(Error::WeightKindMismatch { expected: "real", found: "complex" });
                }
                let im = std::slice::from_raw_parts_mut(im, len);
                for (k, v) in a.iter().enumerate() {
                    re[k] = v.re;
                    im[k] = v.im;
                }
            }
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_model_coefficient_count(model: *const MfModel, len: *mut usize) -> MfStatus {
    non_null!(model, len);
    *len = (*model).0.coefficients.len();
    MfStatus::Ok
}

fn write_scalar(v: Scalar, re: *mut f64, im: *mut f64) {
    let c = v.to_complex();
    unsafe {
        *re = c.re;
        if !im.is_null() {
            *im = c.im;
        }
    }
}

/// `ρ(x)`; `im` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn mf_model_eval(model: *const MfModel, x: *const f64, dim: usize, re: *mut f64, im: *mut f64) -> MfStatus {
    non_null!(model, x, re);
    guard(|| {
        write_scalar((*model).0.evaluate(slice(x, dim))?, re, im);
        Ok(())
    })
}

/// `∫ρ = Σ a_i F_i`; `im` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn mf_model_integrate(model: *const MfModel, re: *mut f64, im: *mut f64) -> MfStatus {
    non_null!(model, re);
    write_scalar((*model).0.integrate(), re, im);
    MfStatus::Ok
}

/// Sign label of a real model: `1`, `-1`, or `0` on the boundary.
#[no_mangle]
pub unsafe extern "C" fn mf_model_classify_sign(model: *const MfModel, x: *const f64, dim: usize, label: *mut c_int) -> MfStatus {
    non_null!(model, x, label);
    guard(|| {
        *label = match (*model).0.classify_sign(slice(x, dim))? {
            SignLabel::Positive => 1,
            SignLabel::Negative => -1,
            SignLabel::Boundary => 0,
        };
        Ok(())
    })
}

/// Argument class `0..classes` of a complex model, or `-1` when undecided.
#[no_mangle]
pub unsafe extern "C" fn mf_model_classify_argument(
    model: *const MfModel,
    x: *const f64,
    dim: usize,
    classes: usize,
    label: *mut c_int,
) -> MfStatus {
    non_null!(model, x, label);
    guard(|| {
        *label = match (*model).0.classify_argument(slice(x, dim), classes)? {
            ArgumentLabel::Class(k) => k as c_int,
            ArgumentLabel::Undecided => -1,
        };
        Ok(())
    })
}

/// Model as JSON text; release with `mf_string_free`.
#[no_mangle]
pub unsafe extern "C" fn mf_model_to_json(model: *const MfModel, out: *mut *mut c_char) -> MfStatus {
    non_null!(model, out);
    guard(|| {
        let text = serde_json::to_string(&(*model).0.to_model()?)?;
        *out = CString::new(text).map_err(|e| Error::invalid(e.to_string()))?.into_raw();
        Ok(())
    })
}

unsafe fn path_arg(path: *const c_char) -> Result<std::path::PathBuf, Error> {
    CStr::from_ptr(path)
        .to_str()
        .map(std::path::PathBuf::from)
        .map_err(|_| Error::invalid("path is not valid UTF-8"))
}

#[no_mangle]
pub unsafe extern "C" fn mf_model_save(model: *const MfModel, path: *const c_char) -> MfStatus {
    non_null!(model, path);
    guard(|| (*model).0.save(path_arg(path)?, None))
}

#[no_mangle]
pub unsafe extern "C" fn mf_model_load(path: *const c_char, out: *mut *mut MfModel) -> MfStatus {
    non_null!(path, out);
    guard(|| {
        put(out, MfModel(FittedDensity::load(path_arg(path)?)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_model_free(model: *mut MfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Product-of-centred-coordinates statistic over `n_tuples` non-overlapping `dim`-tuples of `values`.
#[no_mangle]
pub unsafe extern "C" fn mf_prng_test(
    values: *const f64,
    len: usize,
    dim: usize,
    n_tuples: usize,
    out: *mut MfPrngResult,
) -> MfStatus {
    non_null!(values, out);
    guard(|| {
        let r = prng_uniformity_test(slice(values, len), dim, n_tuples)?;
        *out = MfPrngResult { statistic: r.statistic, z: r.z, p_value: r.p_value };
        Ok(())
    })
}
