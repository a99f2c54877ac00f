#ifndef VPK_H
#define VPK_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum VpkStatus {
  VPK_STATUS_OK = 0,
  VPK_STATUS_NULL_POINTER = 1,
  VPK_STATUS_INVALID_ARGUMENT = 2,
  VPK_STATUS_SHAPE_MISMATCH = 3,
  VPK_STATUS_NON_POSITIVE_DEPTH = 4,
  VPK_STATUS_DEGENERATE_INPUT = 5,
  VPK_STATUS_DEGENERATE_CONFIGURATION = 6,
  VPK_STATUS_ZERO_LENGTH_PART = 7,
  VPK_STATUS_CONFIG_ERROR = 8,
  VPK_STATUS_NON_FINITE_LOSS = 9,
  VPK_STATUS_INVALID_SKELETON = 10,
  VPK_STATUS_FORMAT = 11,
  VPK_STATUS_IO = 12,
  VPK_STATUS_JSON = 13,
  VPK_STATUS_PANIC = 14,
} VpkStatus;

/**
 * Opaque skeleton handle.
 */
typedef struct VpkSkeleton VpkSkeleton;

/**
 * Opaque heatmap volume handle.
 */
typedef struct VpkVolume VpkVolume;

/**
 * Pinhole intrinsics in pixels.
 */
typedef struct VpkCamera {
  double focal;
  double cx;
  double cy;
} VpkCamera;

typedef struct VpkBBox {
  double x;
  double y;
  double w;
  double h;
} VpkBBox;

/**
 * A voxel grid bound to one sample: image box plus a depth slab centered on the root.
 */
typedef struct VpkGrid {
  size_t w;
  size_t h;
  size_t d;
  struct VpkBBox bbox;
  double z_half_range;
  double z_center;
} VpkGrid;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static name of a status code, e.g. `"ShapeMismatch"`.
 */
const char *vpk_status_name(enum VpkStatus status);

/**
 * Byte length of the calling thread's last error message, without the terminator.
 */
size_t vpk_last_error_length(void);

/**
 * Copies the last error message into `buf` (truncated, always NUL-terminated when
 * `cap > 0`) and returns its full length.
 */
size_t vpk_last_error_message(char *buf, size_t cap);

/**
 * The built-in 12-joint skeleton.
 */
enum VpkStatus vpk_skeleton_toy(struct VpkSkeleton **out);

/**
 * Parses and validates a skeleton from its JSON form.
 */
enum VpkStatus vpk_skeleton_from_json(const char *json, struct VpkSkeleton **out);

void vpk_skeleton_free(struct VpkSkeleton *sk);

enum VpkStatus vpk_skeleton_joint_count(const struct VpkSkeleton *sk, size_t *out);

enum VpkStatus vpk_skeleton_root_index(const struct VpkSkeleton *sk, size_t *out);

/**
 * Number of parts scored by [`vpk_pcp3d`].
 */
enum VpkStatus vpk_skeleton_part_count(const struct VpkSkeleton *sk, size_t *out);

/**
 * Samples a random pose (camera frame, mm) into `out_xyz[n * 3]`.
 */
enum VpkStatus vpk_sample_pose(const struct VpkSkeleton *sk,
                               uint64_t seed,
                               double *out_xyz,
                               size_t n);

/**
 * Projects `xyz[n * 3]` into `out_uv[n * 2]` and writes the padded joint box.
 */
enum VpkStatus vpk_project_pose(const double *xyz,
                                size_t n,
                                const struct VpkCamera *cam,
                                double *out_uv,
                                struct VpkBBox *out_bbox);

/**
 * Pixel position and depth to continuous voxel coordinates `out_ijk[3]`.
 */
enum VpkStatus vpk_metric_to_voxel(const struct VpkGrid *g,
                                   double u,
                                   double v,
                                   double z,
                                   double *out_ijk);

/**
 * Inverse of [`vpk_metric_to_voxel`]: writes `(u, v, z)` to `out_uvz[3]`.
 */
enum VpkStatus vpk_voxel_to_metric(const struct VpkGrid *g,
                                   double i,
                                   double j,
                                   double k,
                                   double *out_uvz);

/**
 * Voxel coordinates to a camera-frame point `out_xyz[3]` in mm.
 */
enum VpkStatus vpk_lift_to_3d(const struct VpkGrid *g,
                              const struct VpkCamera *cam,
                              double i,
                              double j,
                              double k,
                              double *out_xyz);

/**
 * Root depth from image points `uv[n * 2]` and root-relative depths `rel_z[n]`,
 * matched against the skeleton's total limb length.
 */
enum VpkStatus vpk_estimate_root_depth(const struct VpkSkeleton *sk,
                                       const double *uv,
                                       const double *rel_z,
                                       size_t n,
                                       const struct VpkCamera *cam,
                                       double *out_z);

/**
 * Gaussian target volume for `n` joints at voxel coordinates `ijk[n * 3]`.
 */
enum VpkStatus vpk_volume_synth(const struct VpkGrid *g,
                                const double *ijk,
                                size_t n,
                                double sigma,
                                struct VpkVolume **out);

/**
 * Reads a volume file.
 */
enum VpkStatus vpk_volume_read(const char *path, struct VpkVolume **out);

enum VpkStatus vpk_volume_write(const struct VpkVolume *vol, const char *path);

void vpk_volume_free(struct VpkVolume *vol);

/**
 * Writes `(w, h, d, n_joints)` to `out_whdn[4]`.
 */
enum VpkStatus vpk_volume_shape(const struct VpkVolume *vol, size_t *out_whdn);

/**
 * Borrowed view of the values, laid out `((joint * d + k) * h + j) * w + i`.
 * Valid until the handle is freed. Returns null for a null handle.
 */
const double *vpk_volume_data(const struct VpkVolume *vol, size_t *out_len);

/**
 * Center of the maximal voxel per joint, into `out_ijk[n * 3]`.
 */
enum VpkStatus vpk_decode_argmax(const struct VpkVolume *vol, double *out_ijk, size_t n);

/**
 * Local expectation around the argmax within `window` voxels per axis.
 */
enum VpkStatus vpk_decode_soft(const struct VpkVolume *vol,
                               size_t window,
                               double *out_ijk,
                               size_t n);

/**
 * Mean per-joint error (mm) after aligning joint `root`.
 */
enum VpkStatus vpk_mpjpe(const double *pred, const double *gt, size_t n, size_t root, double *out);

/**
 * Mean per-joint error (mm) after the best similarity alignment.
 */
enum VpkStatus vpk_reconstruction_error(const double *pred,
                                        const double *gt,
                                        size_t n,
                                        double *out);

/**
 * Fraction of correct parts after aligning the chest joint. When non-null,
 * `out_parts` receives one 0/1 flag per skeleton part.
 */
enum VpkStatus vpk_pcp3d(const struct VpkSkeleton *sk,
                         const double *pred,
                         const double *gt,
                         size_t n,
                         double threshold_fraction,
                         double *out_overall,
                         uint8_t *out_parts);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VPK_H */
