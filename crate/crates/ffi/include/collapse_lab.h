#ifndef COLLAPSE_LAB_H
#define COLLAPSE_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum ClStatus {
  CL_STATUS_OK = 0,
  CL_STATUS_NULL_POINTER = 1,
  CL_STATUS_INVALID_ARGUMENT = 2,
  CL_STATUS_INVALID_SPACE = 3,
  /**
   * No value exists, e.g. a comparison angle of an impossible triangle.
   */
  CL_STATUS_UNDEFINED = 4,
  /**
   * The output buffer is too small; the needed length was written.
   */
  CL_STATUS_BUFFER_TOO_SMALL = 5,
  CL_STATUS_IO = 6,
  CL_STATUS_PARSE = 7,
  CL_STATUS_FAILED = 8,
  CL_STATUS_PANIC = 9,
} ClStatus;

/**
 * Distance-matrix file formats.
 */
typedef enum ClFormat {
  CL_FORMAT_TEXT = 0,
  CL_FORMAT_BINARY = 1,
} ClFormat;

/**
 * Opaque finite metric space.
 */
typedef struct ClSpace ClSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cl_last_error(void);

/**
 * Library version as a static string.
 */
const char *cl_version(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed once.
 */
void cl_string_free(char *s);

/**
 * Builds a space from a row-major `n × n` distance table.
 *
 * # Safety
 * `table` must point to `n * n` doubles; `out` must be writable.
 */
enum ClStatus cl_space_from_table(size_t n, const double *table, struct ClSpace **out);

/**
 * Generates a space from a JSON space spec such as
 * `{"kind": "circle", "n": 100, "radius": 1.0}`.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `out` must be writable.
 */
enum ClStatus cl_space_generate(const char *spec_json, struct ClSpace **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ClStatus cl_space_load(const char *path, enum ClFormat format, struct ClSpace **out);

/**
 * # Safety
 * `space` must be a live handle; `path` a NUL-terminated string.
 */
enum ClStatus cl_space_save(const struct ClSpace *space, const char *path, enum ClFormat format);

/**
 * # Safety
 * `space` must be NULL or a handle from this library, freed once.
 */
void cl_space_free(struct ClSpace *space);

/**
 * Number of points, or 0 for a NULL handle.
 *
 * # Safety
 * `space` must be NULL or a live handle.
 */
size_t cl_space_len(const struct ClSpace *space);

/**
 * # Safety
 * `space` must be a live handle; `out` must be writable.
 */
enum ClStatus cl_space_distance(const struct ClSpace *space, size_t i, size_t j, double *out);

/**
 * Sample mesh: the largest nearest-neighbour distance.
 *
 * # Safety
 * `space` must be a live handle; `out` must be writable.
 */
enum ClStatus cl_space_resolution(const struct ClSpace *space, double *out);

/**
 * # Safety
 * `space` must be a live handle; `out` must be writable.
 */
enum ClStatus cl_space_diameter(const struct ClSpace *space, double *out);

/**
 * Angle between sides `a` and `b` of the κ-model triangle with sides
 * `a, b, c`. `CL_STATUS_UNDEFINED` when no such triangle exists.
 *
 * # Safety
 * `out` must be writable.
 */
enum ClStatus cl_comparison_angle(double kappa, double a, double b, double c, double *out);

/**
 * Farthest-first ν-net from `start`. Members are written to `members`
 * when `capacity` allows; `len` always receives the member count.
 *
 * # Safety
 * `space` must be a live handle; `members` must hold `capacity` entries
 * (may be NULL when `capacity` is 0); `len` must be writable.
 */
enum ClStatus cl_greedy_net(const struct ClSpace *space,
                            double nu,
                            size_t start,
                            size_t *members,
                            size_t capacity,
                            size_t *len);

/**
 * Packing profile at exponent `m` over an ascending scale grid, as JSON.
 * Free the result with `cl_string_free`.
 *
 * # Safety
 * `space` must be a live handle; `grid` must hold `grid_len` doubles;
 * `out_json` must be writable.
 */
enum ClStatus cl_packing_profile(const struct ClSpace *space,
                                 double m,
                                 const double *grid,
                                 size_t grid_len,
                                 char **out_json);

/**
 * Runs an experiment from TOML config text and returns the JSON report.
 * `all_passed` receives 1 when every threshold check passed, else 0.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string; `out_json` and
 * `all_passed` must be writable.
 */
enum ClStatus cl_run_experiment(const char *config_toml, char **out_json, int32_t *all_passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COLLAPSE_LAB_H */
