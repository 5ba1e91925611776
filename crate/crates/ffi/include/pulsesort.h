#ifndef PULSESORT_H
#define PULSESORT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of PDW variables per pulse (toa, rf, pw, pa, doa).
 */
#define PS_N_VARS 5

typedef enum PsPeriodicFn {
  PS_PERIODIC_FN_LINEAR_PERIODIC = 0,
  PS_PERIODIC_FN_SINUSOIDAL = 1,
} PsPeriodicFn;

typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_POINTER = 1,
  PS_STATUS_INVALID_ARGUMENT = 2,
  PS_STATUS_CONFIG = 3,
  PS_STATUS_PRECONDITION = 4,
  PS_STATUS_NUMERIC_DOMAIN = 5,
  PS_STATUS_DECODE_FAILURE = 6,
  PS_STATUS_SHAPE = 7,
  PS_STATUS_PARSE = 8,
  PS_STATUS_IO = 9,
  PS_STATUS_MISSING = 10,
  PS_STATUS_DIVERGENCE = 11,
  PS_STATUS_BUFFER_TOO_SMALL = 12,
  PS_STATUS_PANIC = 13,
} PsStatus;

/**
 * Opaque trained classifier.
 */
typedef struct PsClassifier PsClassifier;

/**
 * Opaque embedding configuration.
 */
typedef struct PsEmbedConfig PsEmbedConfig;

/**
 * Opaque PDW stream.
 */
typedef struct PsStream PsStream;

/**
 * One pulse as seen from C.
 */
typedef struct PsPulse {
  double toa;
  double rf;
  double pw;
  double pa;
  double doa;
  uint16_t label;
} PsPulse;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *ps_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ps_version(void);

/**
 * The periodic function `f(x)`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one double.
 */
enum PsStatus ps_f_periodic(double x, enum PsPeriodicFn variant, double *out);

/**
 * Cut-off dimension for spread `m`: `⌊δ·log_k m⌋` clamped to `[0, dim]`.
 * Masking replaces the 1-based dimensions `d ≥` this index; a result of
 * `dim` leaves the variable untouched.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `size_t`.
 */
enum PsStatus ps_d_low(double m, size_t dim, size_t delta, uint32_t k, size_t *out);

/**
 * Default embedding configuration: `D = 16` for toa, `8` elsewhere,
 * `δ = 2`, `k = 10`, identity affine maps.
 *
 * # Safety
 * `out` must be null or point to writable memory for one pointer.
 */
enum PsStatus ps_embed_config_default(struct PsEmbedConfig **out);

/**
 * The same `D`, `δ` and `k` for every variable.
 *
 * # Safety
 * `out` must be null or point to writable memory for one pointer.
 */
enum PsStatus ps_embed_config_uniform(size_t dim,
                                      size_t delta,
                                      uint32_t k,
                                      enum PsPeriodicFn variant,
                                      struct PsEmbedConfig **out);

/**
 * Sets the affine map `x' = a·x + b` of one variable (0 toa … 4 doa).
 *
 * # Safety
 * `config` must be null or a live handle.
 */
enum PsStatus ps_embed_config_set_affine(struct PsEmbedConfig *config,
                                         uint32_t var,
                                         double a,
                                         double b);

/**
 * Features per variable in an encoded token (the largest `D`); 0 for null.
 *
 * # Safety
 * `config` must be null or a live handle.
 */
size_t ps_embed_config_token_dim(const struct PsEmbedConfig *config);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void ps_embed_config_free(struct PsEmbedConfig *config);

/**
 * Encodes `len` pulses given as `len × 5` raw values (toa, rf, pw, pa, doa
 * per row) into `len × 5 × token_dim` features written to `out`.
 *
 * # Safety
 * `rows` must point to `5·len` doubles and `out` to `out_len` writable
 * doubles.
 */
enum PsStatus ps_encode(const struct PsEmbedConfig *config,
                        const double *rows,
                        size_t len,
                        double *out,
                        size_t out_len);

/**
 * Recovers the five transformed values of one encoded token.
 *
 * # Safety
 * `token` must point to `token_len` doubles and `out` to 5 writable doubles.
 */
enum PsStatus ps_decode(const struct PsEmbedConfig *config,
                        const double *token,
                        size_t token_len,
                        double *out);

/**
 * An empty stream.
 */
struct PsStream *ps_stream_new(void);

/**
 * Reads a PDW file (`.csv` or binary).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum PsStatus ps_stream_read(const char *path, struct PsStream **out);

/**
 * Writes a stream; the format follows the extension (`.csv` or binary).
 *
 * # Safety
 * `stream` must be a live handle and `path` a NUL-terminated string.
 */
enum PsStatus ps_stream_write(const struct PsStream *stream, const char *path);

/**
 * # Safety
 * `stream` must be null or a live handle.
 */
size_t ps_stream_len(const struct PsStream *stream);

/**
 * # Safety
 * `stream` must be a live handle and `out` writable.
 */
enum PsStatus ps_stream_get(const struct PsStream *stream, size_t index, struct PsPulse *out);

/**
 * Appends one pulse.
 *
 * # Safety
 * `stream` must be a live handle.
 */
enum PsStatus ps_stream_push(struct PsStream *stream, struct PsPulse pulse);

/**
 * # Safety
 * `stream` must be null or a handle not yet freed.
 */
void ps_stream_free(struct PsStream *stream);

/**
 * Loads a checkpoint written by `pulsesort train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum PsStatus ps_classifier_load(const char *path, struct PsClassifier **out);

/**
 * Number of classes; 0 for null.
 *
 * # Safety
 * `clf` must be null or a live handle.
 */
size_t ps_classifier_classes(const struct PsClassifier *clf);

/**
 * Predicts the class of every pulse of `stream` into `labels`
 * (`capacity` ≥ stream length). Input labels are ignored.
 *
 * # Safety
 * Handles must be live and `labels` must hold `capacity` writable values.
 */
enum PsStatus ps_classifier_predict(const struct PsClassifier *clf,
                                    const struct PsStream *stream,
                                    uint16_t *labels,
                                    size_t capacity);

/**
 * # Safety
 * `clf` must be null or a handle not yet freed.
 */
void ps_classifier_free(struct PsClassifier *clf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PULSESORT_H */
