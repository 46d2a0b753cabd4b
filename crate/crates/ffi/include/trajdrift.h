#ifndef TRAJDRIFT_H
#define TRAJDRIFT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define TD_LEVENSHTEIN 0

#define TD_LEVENSHTEIN_RATIO 1

#define TD_JARO 2

#define TD_JARO_WINKLER 3

#define TD_LCS_SIMILARITY 4

#define TD_LC_SUBSTRING_SIMILARITY 5

#define TD_DAMERAU 6

#define TD_DAMERAU_SIMILARITY 7

#define TD_DTW 8

#define TD_DTW_SIMILARITY 9

typedef enum TdStatus {
  TD_STATUS_OK = 0,
  TD_STATUS_NULL_POINTER = 1,
  TD_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Input outside a function's domain, e.g. two empty sequences.
   */
  TD_STATUS_DOMAIN_ERROR = 3,
  TD_STATUS_NUMERICAL_FAILURE = 4,
  TD_STATUS_PANIC = 5,
} TdStatus;

typedef struct TdEpisodeSet TdEpisodeSet;

/**
 * Solved 5x5 maze with its fixed policy and optimal path.
 */
typedef struct TdMaze TdMaze;

typedef struct TdSamples TdSamples;

typedef struct TdWelchResult {
  double t;
  double df;
  double p;
  bool drift;
} TdWelchResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a
 * success. Valid until the next call into this library on the same thread.
 */
const char *td_last_error_message(void);

/**
 * Resolves a measure name such as `"jaro_winkler"` to its `TD_*` code.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out_kind` must be writable.
 */
enum TdStatus td_measure_kind_from_name(const char *name, int32_t *out_kind);

/**
 * Computes one measure between two token sequences.
 *
 * # Safety
 * `a`/`b` must point to `a_len`/`b_len` readable tokens (or be null with
 * length 0); `out` must be writable.
 */
enum TdStatus td_measure(int32_t kind,
                         const uint32_t *a,
                         size_t a_len,
                         const uint32_t *b,
                         size_t b_len,
                         double *out);

/**
 * Two-sided Welch's t-test; drift is `p < alpha`.
 *
 * # Safety
 * `a`/`b` must point to `a_len`/`b_len` readable doubles; `out` must be writable.
 */
enum TdStatus td_welch_t_test(const double *a,
                              size_t a_len,
                              const double *b,
                              size_t b_len,
                              double alpha,
                              struct TdWelchResult *out);

/**
 * Builds and solves the maze. `stochastic != 0` selects the softmax policy
 * at temperature `tau`; otherwise the greedy policy is used.
 *
 * # Safety
 * `out` must be writable.
 */
enum TdStatus td_maze_new(int32_t stochastic, double tau, struct TdMaze **out);

/**
 * # Safety
 * `maze` must come from [`td_maze_new`] and not be used afterwards. Null is ignored.
 */
void td_maze_free(struct TdMaze *maze);

/**
 * Number of states (grid cells).
 *
 * # Safety
 * `maze` must be a live handle; `out` must be writable.
 */
enum TdStatus td_maze_state_count(const struct TdMaze *maze, size_t *out);

/**
 * Optimal state value as tabulated (the goal reads 1).
 *
 * # Safety
 * `maze` must be a live handle; `out` must be writable.
 */
enum TdStatus td_maze_value(const struct TdMaze *maze, size_t state, double *out);

/**
 * Copies the optimal path into `buf`. `out_len` always receives the full
 * length; if it exceeds `cap` nothing is copied and InvalidArgument is returned.
 *
 * # Safety
 * `buf` must have room for `cap` tokens (may be null when `cap == 0`);
 * `out_len` must be writable.
 */
enum TdStatus td_maze_optimal_path(const struct TdMaze *maze,
                                   uint32_t *buf,
                                   size_t cap,
                                   size_t *out_len);

/**
 * Generates `n` completed episodes after perturbing the maze transitions
 * with Gaussian noise of standard deviation `noise` (0 leaves them intact).
 *
 * # Safety
 * `maze` must be a live handle; `out` must be writable.
 */
enum TdStatus td_maze_generate_episodes(const struct TdMaze *maze,
                                        double noise,
                                        size_t n,
                                        uint64_t seed,
                                        struct TdEpisodeSet **out);

/**
 * # Safety
 * `set` must be a live handle; `out` must be writable.
 */
enum TdStatus td_episode_set_len(const struct TdEpisodeSet *set, size_t *out);

/**
 * Borrows episode `index`. The token pointer stays valid until the set is freed.
 *
 * # Safety
 * `set` must be a live handle; `tokens` and `len` must be writable.
 */
enum TdStatus td_episode_set_episode(const struct TdEpisodeSet *set,
                                     size_t index,
                                     const uint32_t **tokens,
                                     size_t *len);

/**
 * # Safety
 * `set` must come from this library and not be used afterwards. Null is ignored.
 */
void td_episode_set_free(struct TdEpisodeSet *set);

/**
 * Suffix-pair samples of measure `kind` between the maze's optimal path
 * and every episode of `set`. `window == 0` compares full suffixes.
 *
 * # Safety
 * `maze` and `set` must be live handles; `out` must be writable.
 */
enum TdStatus td_samples_generate(const struct TdMaze *maze,
                                  const struct TdEpisodeSet *set,
                                  int32_t kind,
                                  size_t window,
                                  struct TdSamples **out);

/**
 * Borrows the sample values; valid until the samples are freed.
 *
 * # Safety
 * `samples` must be a live handle; `data` and `len` must be writable.
 */
enum TdStatus td_samples_data(const struct TdSamples *samples, const double **data, size_t *len);

/**
 * Pairs left out because a suffix was missing or outside the measure's domain.
 *
 * # Safety
 * `samples` must be a live handle; `out` must be writable.
 */
enum TdStatus td_samples_skipped(const struct TdSamples *samples, size_t *out);

/**
 * # Safety
 * `samples` must come from this library and not be used afterwards. Null is ignored.
 */
void td_samples_free(struct TdSamples *samples);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAJDRIFT_H */
