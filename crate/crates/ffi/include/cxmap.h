#ifndef CXMAP_H
#define CXMAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which half of a Jordan decomposition to export.
 */
typedef enum {
  CXM_PART_PLUS = 0,
  CXM_PART_MINUS = 1,
} CxmPart;

/**
 * Status codes. Values match the exit codes of the `cxmap` binary where they overlap.
 */
typedef enum {
  CXM_STATUS_OK = 0,
  CXM_STATUS_INVALID_INPUT = 1,
  CXM_STATUS_VERIFICATION_FAILED = 2,
  CXM_STATUS_NULL_POINTER = 3,
  CXM_STATUS_INTERNAL = 4,
} CxmStatus;

/**
 * Opaque handle to a pointwise Jordan decomposition.
 */
typedef struct CxmDecomposition CxmDecomposition;

/**
 * Opaque handle to an extension result and its verification.
 */
typedef struct CxmExtension CxmExtension;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL.
 *
 * The pointer stays valid until the next `cxm_*` call on the same thread.
 */
const char *cxm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cxm_version(void);

/**
 * Free a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from a `cxm_*` function that documents the result as owned
 * by the caller, and must not be freed twice.
 */
void cxm_string_free(char *s);

/**
 * Decompose a map field given as JSON (`{"grid", "algebra", "rho"}`).
 *
 * On success `*out` receives a handle to free with [`cxm_decomposition_free`].
 *
 * # Safety
 * `field_json` must be a NUL-terminated string and `out` a valid pointer.
 */
CxmStatus cxm_decompose(const char *field_json, CxmDecomposition **out);

/**
 * Number of grid nodes in a decomposition.
 *
 * # Safety
 * `h` must be a live handle from [`cxm_decompose`]; `nodes` a valid pointer.
 */
CxmStatus cxm_decomposition_nodes(const CxmDecomposition *h, size_t *nodes);

/**
 * Norms `‖φ(t)‖`, `‖φ₊(t)‖`, `‖φ₋(t)‖` at one node. NULL outputs are skipped.
 *
 * # Safety
 * `h` must be a live handle; non-NULL outputs must be valid pointers.
 */
CxmStatus cxm_decomposition_norms(const CxmDecomposition *h,
                                  size_t node,
                                  double *total,
                                  double *plus,
                                  double *minus);

/**
 * Reconstruction and norm-additivity residuals, and the smallest eigenvalue
 * over both parts. NULL outputs are skipped.
 *
 * # Safety
 * `h` must be a live handle; non-NULL outputs must be valid pointers.
 */
CxmStatus cxm_decomposition_residuals(const CxmDecomposition *h,
                                      double *reconstruction,
                                      double *additivity,
                                      double *min_eigenvalue);

/**
 * One part of the decomposition as map-field JSON. Free with [`cxm_string_free`].
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
CxmStatus cxm_decomposition_part_json(const CxmDecomposition *h, CxmPart part, char **out);

/**
 * Free a decomposition handle. NULL is ignored.
 *
 * # Safety
 * `h` must come from [`cxm_decompose`] and must not be freed twice.
 */
void cxm_decomposition_free(CxmDecomposition *h);

/**
 * Extend `φ` from the subspace to the whole space for an extension instance
 * given as JSON, then verify restriction, linearity and domination.
 *
 * `*out` is set on `CXM_STATUS_OK` and also on `CXM_STATUS_VERIFICATION_FAILED`
 * when the extension was built but its check failed, so the caller can inspect it.
 *
 * # Safety
 * `instance_json` must be a NUL-terminated string and `out` a valid pointer.
 */
CxmStatus cxm_extend(const char *instance_json, uint64_t seed, CxmExtension **out);

/**
 * Number of extension steps and grid nodes. NULL outputs are skipped.
 *
 * # Safety
 * `h` must be a live handle; non-NULL outputs must be valid pointers.
 */
CxmStatus cxm_extension_shape(const CxmExtension *h, size_t *steps, size_t *nodes);

/**
 * Copy the selected values `φ̃(z_step)(t)` for every node into `buf`.
 *
 * # Safety
 * `h` must be a live handle and `buf` must hold `len` doubles.
 */
CxmStatus cxm_extension_selection(const CxmExtension *h, size_t step, double *buf, size_t len);

/**
 * Verification residuals of the extension. NULL outputs are skipped.
 *
 * # Safety
 * `h` must be a live handle; non-NULL outputs must be valid pointers.
 */
CxmStatus cxm_extension_check(const CxmExtension *h,
                              double *restriction,
                              double *linearity,
                              double *domination_slack,
                              bool *passes);

/**
 * The full extension result as JSON, in the form `cxmap verify` accepts.
 * Free with [`cxm_string_free`].
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
CxmStatus cxm_extension_result_json(const CxmExtension *h, char **out);

/**
 * Free an extension handle. NULL is ignored.
 *
 * # Safety
 * `h` must come from [`cxm_extend`] and must not be freed twice.
 */
void cxm_extension_free(CxmExtension *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CXMAP_H */
