#ifndef NRSTREAM_H
#define NRSTREAM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NrsAlgorithm {
  NRS_ALGORITHM_PARITY = 0,
  NRS_ALGORITHM_DOT = 1,
  NRS_ALGORITHM_INDEX = 2,
  NRS_ALGORITHM_DFA = 3,
  NRS_ALGORITHM_SUM = 4,
  NRS_ALGORITHM_COUNT = 5,
} NrsAlgorithm;

typedef enum NrsChannel {
  NRS_CHANNEL_RANDOM = 0,
  NRS_CHANNEL_PREFIX_BURST = 1,
  NRS_CHANNEL_PERIODIC = 2,
  NRS_CHANNEL_COPY_TARGETED = 3,
  NRS_CHANNEL_SYMBOL_TARGETED = 4,
} NrsChannel;

typedef enum NrsMode {
  NRS_MODE_LINEAR = 0,
  NRS_MODE_GENERAL = 1,
} NrsMode;

typedef enum NrsStatus {
  NRS_STATUS_OK = 0,
  NRS_STATUS_NULL_ARGUMENT = 1,
  NRS_STATUS_INVALID_ARGUMENT = 2,
  NRS_STATUS_CONFIG = 3,
  NRS_STATUS_OVER_BUDGET = 4,
  NRS_STATUS_DECODE = 5,
  NRS_STATUS_PANIC = 6,
} NrsStatus;

/**
 * Stream and LDC parameters.
 */
typedef struct NrsParams NrsParams;

/**
 * An encoded stream, optionally behind a corruption pattern. Neither is
 * materialized.
 */
typedef struct NrsStream NrsStream;

/**
 * Outcome of [`nrs_decode`]. The confidence is `conf_num / conf_den`.
 */
typedef struct NrsDecodeResult {
  uint64_t value;
  int64_t conf_num;
  int64_t conf_den;
  uint64_t bits_read;
  uint64_t peak_registers;
  uint64_t peak_collected_bits;
} NrsDecodeResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string, static.
 */
const char *nrs_version(void);

/**
 * Copies the last error message (NUL-terminated) into `buf`. Returns the
 * message length without the terminator; nothing is written when `len` is
 * too small.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t nrs_last_error(char *buf, uintptr_t len);

/**
 * Builds parameters for `n = r^D` with the fixed desk LDC and `eps_ldc = 1/2`.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum NrsStatus nrs_params_new(uint64_t n,
                              uint64_t r,
                              uint64_t ell,
                              uint64_t t,
                              enum NrsMode mode,
                              struct NrsParams **out);

/**
 * The desk configuration: n = 16, r = 4, T = 4, ell 16 (linear) or 64.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum NrsStatus nrs_params_desk(enum NrsMode mode, struct NrsParams **out);

/**
 * # Safety
 * `p` must be null or a handle from `nrs_params_new`/`nrs_params_desk`
 * not yet freed.
 */
void nrs_params_free(struct NrsParams *p);

/**
 * Stream length in bits, 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live params handle.
 */
uint64_t nrs_params_m_len(const struct NrsParams *p);

/**
 * Bits per codeword copy, 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live params handle.
 */
uint64_t nrs_params_copy_bits(const struct NrsParams *p);

/**
 * Encodes `x` (one byte per bit, nonzero = 1, `x_len` must equal n).
 *
 * # Safety
 * `p` must be a live params handle, `x` must point to `x_len` bytes and
 * `out` must be writable.
 */
enum NrsStatus nrs_encode(const struct NrsParams *p,
                          const uint8_t *x,
                          uintptr_t x_len,
                          struct NrsStream **out);

/**
 * # Safety
 * `s` must be null or a stream handle not yet freed.
 */
void nrs_stream_free(struct NrsStream *s);

/**
 * Replaces the stream's corruption with a fresh pattern of `kind` at rate
 * `rho_num / rho_den`, enforcing at most `(1/4 - eps_num / eps_den)` of
 * the stream. Writes the number of flipped bits to `flips` when non-null.
 *
 * # Safety
 * `s` must be a live stream handle; `flips` null or writable.
 */
enum NrsStatus nrs_stream_corrupt(struct NrsStream *s,
                                  enum NrsChannel kind,
                                  uint64_t rho_num,
                                  uint64_t rho_den,
                                  uint64_t eps_num,
                                  uint64_t eps_den,
                                  uint64_t seed,
                                  uint64_t *flips);

/**
 * Decodes the stream once with a decoder seeded by `seed`.
 *
 * `y`/`y_len` feed `dot` (one byte per bit), `target` feeds `index`; both
 * are ignored otherwise.
 *
 * # Safety
 * `s` must be a live stream handle, `y` null or `y_len` readable bytes,
 * `out` writable.
 */
enum NrsStatus nrs_decode(const struct NrsStream *s,
                          enum NrsAlgorithm algorithm,
                          const uint8_t *y,
                          uintptr_t y_len,
                          uint64_t target,
                          uint64_t seed,
                          struct NrsDecodeResult *out);

/**
 * Noiseless reference output for `x` (same input conventions).
 *
 * # Safety
 * `x` must point to `x_len` bytes, `y` null or `y_len` bytes, `out` writable.
 */
enum NrsStatus nrs_reference(enum NrsAlgorithm algorithm,
                             const uint8_t *x,
                             uintptr_t x_len,
                             const uint8_t *y,
                             uintptr_t y_len,
                             uint64_t target,
                             uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NRSTREAM_H */
