#ifndef FOGTBMA_H
#define FOGTBMA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FogStatus {
  FOG_STATUS_OK = 0,
  FOG_STATUS_NULL_POINTER = 1,
  FOG_STATUS_INVALID_CONFIG = 2,
  FOG_STATUS_DIMENSION = 3,
  FOG_STATUS_BUDGET_TOO_SMALL = 4,
  FOG_STATUS_NON_FINITE = 5,
  FOG_STATUS_PAYLOAD = 6,
  FOG_STATUS_BUFFER_TOO_SMALL = 7,
  FOG_STATUS_INTERNAL = 8,
} FogStatus;

typedef enum FogScheme {
  FOG_SCHEME_QF_TEST_CHANNEL = 0,
  FOG_SCHEME_QF_UNIFORM = 1,
  FOG_SCHEME_DTF = 2,
  FOG_SCHEME_QF_UNQUANTIZED = 3,
} FogScheme;

typedef enum FogDtfAllocation {
  FOG_DTF_ALLOCATION_PER_EVENT = 0,
  FOG_DTF_ALLOCATION_POOLED = 1,
} FogDtfAllocation;

/**
 * Opaque simulator handle.
 */
typedef struct FogSimulator FogSimulator;

/**
 * Problem dimensions of a simulator.
 */
typedef struct FogDims {
  size_t num_events;
  size_t num_values;
  size_t num_devices;
  size_t num_edge_nodes;
  size_t codeword_len;
} FogDims;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *fogtbma_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fogtbma_version(void);

/**
 * Creates a simulator from a JSON document with keys `system`,
 * `fronthaul` and optionally `assignment`, `observation`, `gamp`,
 * `master_seed` (same schema as the CLI config).
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum FogStatus fogtbma_simulator_new(const char *json, struct FogSimulator **out);

/**
 * Releases a simulator. Null is ignored.
 *
 * # Safety
 * `sim` must come from [`fogtbma_simulator_new`] and not be used afterwards.
 */
void fogtbma_simulator_free(struct FogSimulator *sim);

/**
 * # Safety
 * `sim` and `out` must be valid pointers.
 */
enum FogStatus fogtbma_simulator_dims(const struct FogSimulator *sim, struct FogDims *out);

/**
 * Draws evaluation trial `index` at `snr_db` and runs it through `scheme`
 * with `budget_bits` per edge node. Writes the true event states to `xi`
 * (`num_events` entries) and the final LLRs to `llrs`
 * (`num_events * num_values` entries).
 *
 * # Safety
 * `sim` must be valid; `xi` and `llrs` must point to arrays of the stated
 * lengths.
 */
enum FogStatus fogtbma_run_trial(const struct FogSimulator *sim,
                                 enum FogScheme scheme,
                                 uint32_t budget_bits,
                                 double snr_db,
                                 uint64_t index,
                                 size_t *xi,
                                 double *llrs);

/**
 * Applies the threshold rule to a row-major LLR matrix; writes one
 * decided state per event to `out`.
 *
 * # Safety
 * `llrs` must hold `num_events * num_values` values and `out` `num_events`.
 */
enum FogStatus fogtbma_decide(const double *llrs,
                              size_t num_events,
                              size_t num_values,
                              double threshold,
                              size_t *out);

/**
 * Quantization noise variance of the Gaussian test channel at `rate` bits
 * per complex sample and input power `power`. NaN for invalid input.
 */
double fogtbma_test_channel_variance(double power, double rate);

/**
 * Quantizes and packs one edge node's LLRs. `active` holds one byte per
 * event (non-zero = flagged). On success `*written` is the payload length;
 * with `BUFFER_TOO_SMALL` it is the length required.
 *
 * # Safety
 * `llrs` must hold `num_events * num_values` values, `active` `num_events`
 * bytes and `buf` `buf_len` writable bytes.
 */
enum FogStatus fogtbma_dtf_encode(size_t num_events,
                                  size_t num_values,
                                  uint32_t budget_bits,
                                  double clip,
                                  enum FogDtfAllocation allocation,
                                  const double *llrs,
                                  const uint8_t *active,
                                  uint8_t *buf,
                                  size_t buf_len,
                                  size_t *written);

/**
 * Unpacks a payload produced by [`fogtbma_dtf_encode`] with the same codec
 * parameters into dequantized LLRs; unflagged events read back as zeros.
 *
 * # Safety
 * `buf` must hold `buf_len` bytes and `llrs` `num_events * num_values`
 * writable values.
 */
enum FogStatus fogtbma_dtf_decode(size_t num_events,
                                  size_t num_values,
                                  uint32_t budget_bits,
                                  double clip,
                                  enum FogDtfAllocation allocation,
                                  const uint8_t *buf,
                                  size_t buf_len,
                                  double *llrs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FOGTBMA_H */
