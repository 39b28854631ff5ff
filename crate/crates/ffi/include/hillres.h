#ifndef HILLRES_H
#define HILLRES_H

/* Generated with cbindgen:0.27.0 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HillresKind {
  HILLRES_KIND_BOUND = 0,
  HILLRES_KIND_ANTIBOUND = 1,
  HILLRES_KIND_VIRTUAL = 2,
  HILLRES_KIND_RESONANCE = 3,
} HillresKind;

typedef enum HillresStatus {
  HILLRES_STATUS_OK = 0,
  HILLRES_STATUS_NULL_POINTER = 1,
  HILLRES_STATUS_INVALID_UTF8 = 2,
  HILLRES_STATUS_CONFIG = 3,
  HILLRES_STATUS_INVALID_POTENTIAL = 4,
  HILLRES_STATUS_BEYOND_TRUNCATION = 5,
  HILLRES_STATUS_CLOSED_GAP = 6,
  HILLRES_STATUS_AMBIGUOUS = 7,
  HILLRES_STATUS_NUMERICAL = 8,
  HILLRES_STATUS_BUFFER_TOO_SMALL = 9,
  HILLRES_STATUS_PANIC = 10,
} HillresStatus;

/**
 * Opaque model handle.
 */
typedef struct HillresModel HillresModel;

typedef struct HillresComplex {
  double re;
  double im;
} HillresComplex;

typedef struct HillresMonodromy {
  struct HillresComplex theta1;
  struct HillresComplex theta1p;
  struct HillresComplex phi1;
  struct HillresComplex phi1p;
  struct HillresComplex delta;
  struct HillresComplex beta;
} HillresMonodromy;

/**
 * One gap, with momenta and the original-scale energies of its edges.
 */
typedef struct HillresGap {
  size_t n;
  double lower;
  double upper;
  double mu;
  double e_minus;
  double e_plus;
  bool open;
} HillresGap;

typedef struct HillresJost {
  struct HillresComplex psi_plus;
  struct HillresComplex psi_minus;
  struct HillresComplex locator;
} HillresJost;

typedef struct HillresState {
  struct HillresComplex z;
  /**
   * Energy in the original scale.
   */
  struct HillresComplex energy;
  enum HillresKind kind;
  size_t multiplicity;
} HillresState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Build a model from a JSON configuration (the command-line format).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HillresStatus hillres_model_from_json(const char *json, struct HillresModel **out);

/**
 * Release a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`hillres_model_from_json`] and not be used afterwards.
 */
void hillres_model_free(struct HillresModel *model);

/**
 * Number of gaps in the band structure and the gauge shift.
 *
 * # Safety
 * Pointers must be valid; either output may be null.
 */
enum HillresStatus hillres_model_info(const struct HillresModel *model,
                                      size_t *gaps,
                                      double *gauge_shift);

/**
 * Monodromy data of the background at momentum `z`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HillresStatus hillres_monodromy(const struct HillresModel *model,
                                     struct HillresComplex z,
                                     struct HillresMonodromy *out);

/**
 * Gaps `1..=n_max` into `out`.
 *
 * # Safety
 * `out` must hold `capacity` entries; `written` must be valid.
 */
enum HillresStatus hillres_band_edges(const struct HillresModel *model,
                                      struct HillresGap *out,
                                      size_t capacity,
                                      size_t *written);

/**
 * Jost values and the locator at `z` on the physical sheet.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HillresStatus hillres_jost(const struct HillresModel *model,
                                struct HillresComplex z,
                                struct HillresJost *out);

/**
 * The entire locator `F(z)`, defined on the whole plane.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HillresStatus hillres_locator(const struct HillresModel *model,
                                   struct HillresComplex z,
                                   struct HillresComplex *out);

/**
 * States in gap `n`, using the thresholds from the model's configuration.
 *
 * # Safety
 * `out` must hold `capacity` entries; `written` must be valid.
 */
enum HillresStatus hillres_gap_states(const struct HillresModel *model,
                                      size_t n,
                                      struct HillresState *out,
                                      size_t capacity,
                                      size_t *written);

/**
 * Copy the last error message of this thread into `buffer` (NUL-terminated,
 * truncated to fit) and return its full length without the terminator.
 *
 * # Safety
 * `buffer` must hold `capacity` bytes, or be null with `capacity` 0.
 */
size_t hillres_last_error(char *buffer, size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HILLRES_H */
