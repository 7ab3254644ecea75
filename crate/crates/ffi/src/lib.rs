//! C ABI over `cxmap`.
//!
//! Inputs are JSON documents in the same form as the instance-file payloads of
//! the `cxmap` CLI. Results live behind opaque handles that the caller frees
//! with the matching `*_free` function. Every fallible call returns a
//! [`CxmStatus`]; on failure [`cxm_last_error`] describes what went wrong.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cxmap::cli::{check_extension, ExtensionCheck};
use cxmap::error::Error;
use cxmap::extension::{self, ExtensionInstance, ExtensionOptions, ExtensionResult};
use cxmap::field::MapFieldJson;
use cxmap::jordan::{self, DecompositionResult};
use cxmap::tolerance::Tolerances;

/// Status codes. Values match the exit codes of the `cxmap` binary where they overlap.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CxmStatus {
    Ok = 0,
    InvalidInput = 1,
    VerificationFailed = 2,
    NullPointer = 3,
    Internal = 4,
}

/// Which half of a Jordan decomposition to export.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CxmPart {
    Plus = 0,
    Minus = 1,
}

/// Opaque handle to a pointwise Jordan decomposition.
pub struct CxmDecomposition {
    result: DecompositionResult,
    reconstruction: f64,
    additivity: f64,
    min_eigenvalue: f64,
}

/// Opaque handle to an extension result and its verification.
pub struct CxmExtension {
    result: ExtensionResult,
    check: ExtensionCheck,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> CxmStatus {
    if err.is_verification_failure() {
        CxmStatus::VerificationFailed
    } else {
        match err {
            Error::Solver(_) | Error::Io(_) => CxmStatus::Internal,
            _ => CxmStatus::InvalidInput,
        }
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CxmStatus, String)>) -> CxmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CxmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CxmStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (CxmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CxmStatus, String) {
    (CxmStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CxmStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CxmStatus::InvalidInput, format!("`{what}` is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T) {
    if !out.is_null() {
        *out = value;
    }
}

fn into_c_string(s: String) -> Result<*mut c_char, (CxmStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (CxmStatus::Internal, "output contains a NUL byte".into()))
}

/// Message for the most recent failure on this thread, or NULL.
///
/// The pointer stays valid until the next `cxm_*` call on the same thread.
#[no_mangle]
pub extern "C" fn cxm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cxm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Free a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from a `cxm_*` function that documents the result as owned
/// by the caller, and must not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cxm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Decompose a map field given as JSON (`{"grid", "algebra", "rho"}`).
///
/// On success `*out` receives a handle to free with [`cxm_decomposition_free`].
///
/// # Safety
/// `field_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cxm_decompose(field_json: *const c_char, out: *mut *mut CxmDecomposition) -> CxmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(field_json, "field_json")?;
        let raw: MapFieldJson = serde_json::from_str(text).map_err(|e| (CxmStatus::InvalidInput, e.to_string()))?;
        let tol = Tolerances::default();
        let field = raw.build(tol.tol_herm).map_err(lib_err)?;
        let result = jordan::decompose_map(&field).map_err(lib_err)?;
        let additivity = jordan::verify_norm_additivity(&result).map_err(lib_err)?;
        let min_eigenvalue = result.min_eigenvalue().map_err(lib_err)?;
        let handle = CxmDecomposition {
            reconstruction: result.reconstruction_residual(),
            additivity,
            min_eigenvalue,
            result,
        };
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// Number of grid nodes in a decomposition.
///
/// # Safety
/// `h` must be a live handle from [`cxm_decompose`]; `nodes` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cxm_decomposition_nodes(h: *const CxmDecomposition, nodes: *mut usize) -> CxmStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        if nodes.is_null() {
            return Err(null("nodes"));
        }
        *nodes = h.result.norms.len();
        Ok(())
    })
}

/// Norms `‖φ(t)‖`, `‖φ₊(t)‖`, `‖φ₋(t)‖` at one node. NULL outputs are skipped.
///
/// # Safety
/// `h` must be a live handle; non-NULL outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cxm_decomposition_norms(
    h: *const CxmDecomposition,
    node: usize,
    total: *mut f64,
    plus: *mut f64,
    minus: *mut f64,
) -> CxmStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        let n = h.result.norms.get(node).ok_or_else(|| {
            (
                CxmStatus::InvalidInput,
                format!("node {node} out of range ({} nodes)", h.result.norms.len()),
            )
        })?;
        write_out(total, n.total);
        write_out(plus, n.plus);
        write_out(minus, n.minus);
        Ok(())
    })
}

/// Reconstruction and norm-additivity residuals, and the smallest eigenvalue
/// over both parts. NULL outputs are skipped.
///
/// # Safety
/// `h` must be a live handle; non-NULL outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cxm_decomposition_residuals(
    h: *const CxmDecomposition,
    reconstruction: *mut f64,
    additivity: *mut f64,
    min_eigenvalue: *mut f64,
) -> CxmStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        write_out(reconstruction, h.reconstruction);
        write_out(additivity, h.additivity);
        write_out(min_eigenvalue, h.min_eigenvalue);
        Ok(())
    })
}

/// One part of the decomposition as map-field JSON. Free with [`cxm_string_free`].
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cxm_decomposition_part_json(
    h: *const CxmDecomposition,
    part: CxmPart,
    out: *mut *mut c_char,
) -> CxmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        let field = match part {
            CxmPart::Plus => &h.result.plus,
            CxmPart::Minus => &h.result.minus,
        };
        let text = serde_json::to_string(field).map_err(|e| (CxmStatus::Internal, e.to_string()))?;
        *out = into_c_string(text)?;
        Ok(())
    })
}

/// Free a decomposition handle. NULL is ignored.
///
/// # Safety
/// `h` must come from [`cxm_decompose`] and must not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cxm_decomposition_free(h: *mut CxmDecomposition) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Extend `φ` from the subspace to the whole space for an extension instance
/// given as JSON, then verify restriction, linearity and domination.
///
/// `*out` is set on `CXM_STATUS_OK` and also on `CXM_STATUS_VERIFICATION_FAILED`
/// when the extension was built but its check failed, so the caller can inspect it.
///
/// # Safety
/// `instance_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cxm_extend(instance_json: *const c_char, seed: u64, out: *mut *mut CxmExtension) -> CxmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(instance_json, "instance_json")?;
        let inst: ExtensionInstance =
            serde_json::from_str(text).map_err(|e| (CxmStatus::InvalidInput, e.to_string()))?;
        let problem = inst.problem().map_err(lib_err)?;
        let opts = ExtensionOptions {
            seed,
            certificate_samples: 256,
            ..ExtensionOptions::default()
        };
        let result = extension::extend_full(&problem, &inst.directions().map_err(lib_err)?, &opts).map_err(lib_err)?;
        let check = check_extension(&inst, &result, 256, seed, &Tolerances::default()).map_err(lib_err)?;
        let passes = check.passes;
        let summary = format!(
            "restriction {:.3e}, linearity {:.3e}, domination slack {:.3e}",
            check.restriction_residual, check.linearity_residual, check.domination_slack
        );
        *out = Box::into_raw(Box::new(CxmExtension { result, check }));
        if passes {
            Ok(())
        } else {
            Err((CxmStatus::VerificationFailed, format!("extension check failed: {summary}")))
        }
    })
}

/// Number of extension steps and grid nodes. NULL outputs are skipped.
///
/// # Safety
/// `h` must be a live handle; non-NULL outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cxm_extension_shape(h: *const CxmExtension, steps: *mut usize, nodes: *mut usize) -> CxmStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        write_out(steps, h.result.steps.len());
        write_out(nodes, h.result.nodes());
        Ok(())
    })
}

/// Copy the selected values `φ̃(z_step)(t)` for every node into `buf`.
///
/// # Safety
/// `h` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cxm_extension_selection(
    h: *const CxmExtension,
    step: usize,
    buf: *mut f64,
    len: usize,
) -> CxmStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let s = h.result.steps.get(step).ok_or_else(|| {
            (
                CxmStatus::InvalidInput,
                format!("step {step} out of range ({} steps)", h.result.steps.len()),
            )
        })?;
        if len < s.selection.len() {
            return Err((
                CxmStatus::InvalidInput,
                format!("buffer holds {len} values, need {}", s.selection.len()),
            ));
        }
        ptr::copy_nonoverlapping(s.selection.as_ptr(), buf, s.selection.len());
        Ok(())
    })
}

/// Verification residuals of the extension. NULL outputs are skipped.
///
/// # Safety
/// `h` must be a live handle; non-NULL outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cxm_extension_check(
    h: *const CxmExtension,
    restriction: *mut f64,
    linearity: *mut f64,
    domination_slack: *mut f64,
    passes: *mut bool,
) -> CxmStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        write_out(restriction, h.check.restriction_residual);
        write_out(linearity, h.check.linearity_residual);
        write_out(domination_slack, h.check.domination_slack);
        write_out(passes, h.check.passes);
        Ok(())
    })
}

/// The full extension result as JSON, in the form `cxmap verify` accepts.
/// Free with [`cxm_string_free`].
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cxm_extension_result_json(h: *const CxmExtension, out: *mut *mut c_char) -> CxmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        let text = serde_json::to_string(&h.result).map_err(|e| (CxmStatus::Internal, e.to_string()))?;
        *out = into_c_string(text)?;
        Ok(())
    })
}

/// Free an extension handle. NULL is ignored.
///
/// # Safety
/// `h` must come from [`cxm_extend`] and must not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cxm_extension_free(h: *mut CxmExtension) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}
