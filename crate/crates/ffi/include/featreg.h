#ifndef FEATREG_H
#define FEATREG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FrStatus {
  FR_STATUS_OK = 0,
  FR_STATUS_NULL_POINTER = 1,
  FR_STATUS_INVALID_ARGUMENT = 2,
  FR_STATUS_IO = 3,
  FR_STATUS_FORMAT = 4,
  FR_STATUS_DEGENERATE = 5,
  FR_STATUS_NO_CONSENSUS = 6,
  FR_STATUS_PANIC = 7,
} FrStatus;

typedef struct FrDescriptors FrDescriptors;

typedef struct FrImage FrImage;

typedef struct FrKeypoints FrKeypoints;

typedef struct FrMatches FrMatches;

/**
 * Zero for `max_octaves` or `max_keypoints` means unbounded.
 */
typedef struct FrDetectorParams {
  double base_sigma;
  uint32_t scales_per_octave;
  uint32_t max_octaves;
  double contrast_threshold;
  double edge_ratio;
  uint32_t max_keypoints;
} FrDetectorParams;

typedef struct FrRansacParams {
  uint32_t max_iterations;
  double inlier_threshold;
  uint32_t min_inliers;
  uint64_t seed;
} FrRansacParams;

typedef struct FrKeypoint {
  double x;
  double y;
  double sigma;
  uint32_t octave;
  double response;
} FrKeypoint;

typedef struct FrMatch {
  size_t idx_a;
  size_t idx_b;
  double d1;
  double d2;
} FrMatch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next `fr_*` call on the same thread.
 */
const char *fr_last_error(void);

struct FrDetectorParams fr_detector_params_default(void);

struct FrRansacParams fr_ransac_params_default(void);

/**
 * Loads a PGM or PPM file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FrStatus fr_image_load(const char *path, struct FrImage **out);

/**
 * Wraps `width * height * channels` interleaved intensities in `[0, 1]`.
 *
 * # Safety
 * `data` must point to that many readable doubles.
 */
enum FrStatus fr_image_from_pixels(size_t width,
                                   size_t height,
                                   size_t channels,
                                   const double *data,
                                   struct FrImage **out);

/**
 * # Safety
 * `img` must be NULL or a live handle.
 */
enum FrStatus fr_image_size(const struct FrImage *img,
                            size_t *width,
                            size_t *height,
                            size_t *channels);

/**
 * # Safety
 * `img` must be NULL or a handle from this library not yet freed.
 */
void fr_image_free(struct FrImage *img);

/**
 * Detects keypoints on the grayscale version of `img`. `params` may be
 * NULL for defaults.
 *
 * # Safety
 * Pointers must be valid or NULL where allowed.
 */
enum FrStatus fr_detect(const struct FrImage *img,
                        const struct FrDetectorParams *params,
                        struct FrKeypoints **out);

/**
 * # Safety
 * `kps` must be a live handle.
 */
size_t fr_keypoints_len(const struct FrKeypoints *kps);

/**
 * # Safety
 * `kps` must be a live handle and `out` writable.
 */
enum FrStatus fr_keypoints_get(const struct FrKeypoints *kps, size_t index, struct FrKeypoint *out);

/**
 * # Safety
 * `kps` must be NULL or a handle not yet freed.
 */
void fr_keypoints_free(struct FrKeypoints *kps);

/**
 * Raw normalized patches of side `side` from a window of `window` pixels
 * at the base scale. Keypoints whose window leaves the image are dropped.
 *
 * # Safety
 * Pointers must be live handles.
 */
enum FrStatus fr_describe_raw(const struct FrImage *img,
                              const struct FrKeypoints *kps,
                              size_t side,
                              double window,
                              struct FrDescriptors **out);

/**
 * # Safety
 * `d` must be a live handle.
 */
size_t fr_descriptors_len(const struct FrDescriptors *d);

/**
 * # Safety
 * `d` must be a live handle.
 */
size_t fr_descriptors_dim(const struct FrDescriptors *d);

/**
 * Keypoint attached to descriptor row `index`.
 *
 * # Safety
 * `d` must be a live handle and `out` writable.
 */
enum FrStatus fr_descriptors_keypoint(const struct FrDescriptors *d,
                                      size_t index,
                                      struct FrKeypoint *out);

/**
 * # Safety
 * `d` must be NULL or a handle not yet freed.
 */
void fr_descriptors_free(struct FrDescriptors *d);

/**
 * Matches `a` against `b`. `metric` is one of cityblock, euclidean,
 * cosine, minkowski[:r], correlation; `method` one of nn1, nn2, nnr1, nnr2.
 *
 * # Safety
 * Pointers must be live handles and NUL-terminated strings.
 */
enum FrStatus fr_match(const struct FrDescriptors *a,
                       const struct FrDescriptors *b,
                       const char *metric,
                       const char *method,
                       double threshold,
                       struct FrMatches **out);

/**
 * # Safety
 * `m` must be a live handle.
 */
size_t fr_matches_len(const struct FrMatches *m);

/**
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum FrStatus fr_matches_get(const struct FrMatches *m, size_t index, struct FrMatch *out);

/**
 * # Safety
 * `m` must be NULL or a handle not yet freed.
 */
void fr_matches_free(struct FrMatches *m);

/**
 * Fits a homography from `a` to `b` over `matches`. Writes the row-major
 * matrix to `h_out[9]` and the inlier count to `inliers_out` (may be NULL).
 * `params` may be NULL for defaults.
 *
 * # Safety
 * Pointers must be live handles; `h_out` must hold 9 doubles.
 */
enum FrStatus fr_ransac(const struct FrDescriptors *a,
                        const struct FrDescriptors *b,
                        const struct FrMatches *matches,
                        const struct FrRansacParams *params,
                        double *h_out,
                        size_t *inliers_out);

/**
 * Maps `(x, y)` through the row-major homography `h[9]`.
 *
 * # Safety
 * `h` must hold 9 doubles; outputs must be writable.
 */
enum FrStatus fr_homography_apply(const double *h,
                                  double x,
                                  double y,
                                  double *out_x,
                                  double *out_y);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEATREG_H */
