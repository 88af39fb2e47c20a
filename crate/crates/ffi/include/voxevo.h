#ifndef VOXEVO_H
#define VOXEVO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VoxStatus {
  VOX_STATUS_OK = 0,
  VOX_STATUS_NULL_POINTER = 1,
  VOX_STATUS_INVALID_ARGUMENT = 2,
  VOX_STATUS_SHAPE_MISMATCH = 3,
  VOX_STATUS_EMPTY_ROBOT = 4,
  VOX_STATUS_ZERO_LENGTH_SPRING = 5,
  VOX_STATUS_PARSE_ERROR = 6,
  VOX_STATUS_BUFFER_TOO_SMALL = 7,
  VOX_STATUS_PANIC = 8,
} VoxStatus;

/**
 * Opaque genome handle.
 */
typedef struct VoxGenome VoxGenome;

/**
 * Opaque voxel grid handle.
 */
typedef struct VoxGrid VoxGrid;

/**
 * Opaque mass-spring robot handle.
 */
typedef struct VoxRobot VoxRobot;

typedef struct VoxQuery {
  /**
   * Probabilities for empty, muscle_expand, muscle_contract, soft_tissue, hard_bone.
   */
  double probs[5];
  double weight;
} VoxQuery;

typedef struct VoxSimParams {
  double gravity;
  double dt;
  double duration;
  double actuation_frequency;
  /**
   * Nonzero enables ground contact.
   */
  int32_t contact;
} VoxSimParams;

typedef struct VoxTrajectory {
  double com_start[3];
  double com_end[3];
  double horizontal_displacement;
  double max_speed;
  /**
   * Nonzero if the run blew up.
   */
  int32_t diverged;
  uint64_t steps;
} VoxTrajectory;

typedef struct VoxHyperParams {
  double mutation_rate;
  double mutation_scale;
  double crossover_rate;
  double elite_fraction;
} VoxHyperParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; valid until the next
 * failing call on the same thread.
 */
const char *vox_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vox_version(void);

/**
 * Samples a genome. `hidden` may be null only when `n_hidden` is 0.
 *
 * # Safety
 * `hidden` must point to `n_hidden` widths; `out` must be writable.
 */
enum VoxStatus vox_genome_sample(size_t frequencies,
                                 double sigma,
                                 const size_t *hidden,
                                 size_t n_hidden,
                                 uint64_t seed,
                                 struct VoxGenome **out);

/**
 * # Safety
 * `genome` must come from this library or be null.
 */
void vox_genome_free(struct VoxGenome *genome);

/**
 * # Safety
 * Pointers must be valid.
 */
enum VoxStatus vox_genome_parameter_count(const struct VoxGenome *genome, size_t *out);

/**
 * Writes the `2m` encoding of `(x, y, z)` into `buf`. `written` receives
 * the required length even when the buffer is too small.
 *
 * # Safety
 * `buf` must hold `len` doubles; other pointers must be valid.
 */
enum VoxStatus vox_genome_encode(const struct VoxGenome *genome,
                                 double x,
                                 double y,
                                 double z,
                                 double *buf,
                                 size_t len,
                                 size_t *written);

/**
 * # Safety
 * Pointers must be valid.
 */
enum VoxStatus vox_genome_forward(const struct VoxGenome *genome,
                                  double x,
                                  double y,
                                  double z,
                                  struct VoxQuery *out);

/**
 * New genome with Gaussian noise added to each parameter with probability
 * `rate`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum VoxStatus vox_genome_mutate(const struct VoxGenome *genome,
                                 double rate,
                                 double scale,
                                 uint64_t seed,
                                 struct VoxGenome **out);

/**
 * Uniform crossover; the child keeps `a`'s Fourier basis.
 *
 * # Safety
 * Pointers must be valid.
 */
enum VoxStatus vox_genome_crossover(const struct VoxGenome *a,
                                    const struct VoxGenome *b,
                                    uint64_t seed,
                                    struct VoxGenome **out);

/**
 * Queries the genome at every voxel centre of a `w × h × d` grid.
 *
 * # Safety
 * Pointers must be valid.
 */
enum VoxStatus vox_decode(const struct VoxGenome *genome,
                          size_t w,
                          size_t h,
                          size_t d,
                          struct VoxGrid **out);

/**
 * Empty grid of the given size.
 *
 * # Safety
 * `out` must be writable.
 */
enum VoxStatus vox_grid_new(size_t w, size_t h, size_t d, struct VoxGrid **out);

/**
 * # Safety
 * `grid` must come from this library or be null.
 */
void vox_grid_free(struct VoxGrid *grid);

/**
 * Sets one voxel; `material` is the category index 0..=4.
 *
 * # Safety
 * `grid` must be valid.
 */
enum VoxStatus vox_grid_set(struct VoxGrid *grid,
                            size_t x,
                            size_t y,
                            size_t z,
                            uint32_t material,
                            double weight);

/**
 * # Safety
 * Pointers must be valid.
 */
enum VoxStatus vox_grid_get(const struct VoxGrid *grid,
                            size_t x,
                            size_t y,
                            size_t z,
                            uint32_t *material,
                            double *weight);

/**
 * # Safety
 * Pointers must be valid.
 */
enum VoxStatus vox_grid_occupied(const struct VoxGrid *grid, size_t *out);

/**
 * Copy of `grid` keeping only its largest face-connected body.
 *
 * # Safety
 * Pointers must be valid.
 */
enum VoxStatus vox_grid_largest_component(const struct VoxGrid *grid, struct VoxGrid **out);

/**
 * Mean pairwise material-mismatch fraction over `n` same-sized grids.
 *
 * # Safety
 * `grids` must point to `n` valid handles.
 */
enum VoxStatus vox_diversity(const struct VoxGrid *const *grids, size_t n, double *out);

/**
 * Mass-spring network for a grid using the default material table.
 *
 * # Safety
 * Pointers must be valid.
 */
enum VoxStatus vox_robot_build(const struct VoxGrid *grid, struct VoxRobot **out);

/**
 * # Safety
 * `robot` must come from this library or be null.
 */
void vox_robot_free(struct VoxRobot *robot);

/**
 * # Safety
 * Pointers must be valid.
 */
enum VoxStatus vox_robot_counts(const struct VoxRobot *robot, size_t *masses, size_t *springs);

/**
 * Simulates a copy of the robot. `params` may be null for defaults.
 *
 * # Safety
 * `robot` and `out` must be valid; `params` valid or null.
 */
enum VoxStatus vox_robot_simulate(const struct VoxRobot *robot,
                                  const struct VoxSimParams *params,
                                  struct VoxTrajectory *out);

/**
 * Fitness of a genome on a `w × h × d` grid. `params` may be null.
 *
 * # Safety
 * `genome` and `out` must be valid; `params` valid or null.
 */
enum VoxStatus vox_evaluate(const struct VoxGenome *genome,
                            size_t w,
                            size_t h,
                            size_t d,
                            const struct VoxSimParams *params,
                            double *out);

/**
 * Extracts and clamps hyperparameters from advisor reply text.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum VoxStatus vox_parse_reply(const char *text, struct VoxHyperParams *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOXEVO_H */
