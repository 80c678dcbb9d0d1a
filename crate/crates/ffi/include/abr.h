#ifndef ABR_H
#define ABR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Length of an observation vector.
 */
#define ABR_OBS_DIM 48

/**
 * Number of quality levels.
 */
#define ABR_N_LEVELS 6

typedef enum AbrStatus {
  ABR_STATUS_OK = 0,
  ABR_STATUS_NULL_POINTER = 1,
  ABR_STATUS_INVALID_ARGUMENT = 2,
  ABR_STATUS_CONFIG_ERROR = 3,
  ABR_STATUS_DATA_ERROR = 4,
  ABR_STATUS_RUNTIME_ERROR = 5,
  ABR_STATUS_EPISODE_FINISHED = 6,
  ABR_STATUS_PANIC = 7,
} AbrStatus;

typedef struct AbrController AbrController;

typedef struct AbrModel AbrModel;

typedef struct AbrSimulator AbrSimulator;

typedef struct AbrSnapshot AbrSnapshot;

typedef struct AbrTrace AbrTrace;

typedef struct AbrVideo AbrVideo;

typedef struct AbrStepOutcome {
  double delay_s;
  double sleep_s;
  double rebuffer_s;
  double buffer_s;
  uint64_t chunk_bytes;
  size_t prev_level;
  bool done;
} AbrStepOutcome;

typedef struct AbrQoe {
  double total;
  double quality_sum;
  double smoothness_penalty;
  double rebuffer_penalty;
} AbrQoe;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next `abr_*` call on the same thread.
 */
const char *abr_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *abr_version(void);

/**
 * Loads a two-column `time_s bandwidth_mbps` trace file.
 */
enum AbrStatus abr_trace_load(const char *file, struct AbrTrace **out);

/**
 * Builds a trace from parallel arrays of timestamps (s) and bandwidths (Mbps).
 */
enum AbrStatus abr_trace_from_arrays(const double *times_s,
                                     const double *bandwidth_mbps,
                                     size_t n,
                                     struct AbrTrace **out);

void abr_trace_free(struct AbrTrace *trace);

enum AbrStatus abr_video_load(const char *file, struct AbrVideo **out);

/**
 * Synthetic chunk sizes around `kbps * 4 s / 8` with uniform `+-jitter`.
 * `ladder_kbps` must hold `ABR_N_LEVELS` entries.
 */
enum AbrStatus abr_video_synth(const uint32_t *ladder_kbps,
                               size_t n_levels,
                               size_t n_chunks,
                               double jitter,
                               uint64_t seed,
                               struct AbrVideo **out);

enum AbrStatus abr_video_n_chunks(const struct AbrVideo *video, size_t *out);

void abr_video_free(struct AbrVideo *video);

/**
 * Starts an episode with the default simulator settings. With
 * `random_start` the trace cursor starts at a position drawn from `seed`;
 * otherwise at trace time zero.
 */
enum AbrStatus abr_sim_new(const struct AbrTrace *trace,
                           const struct AbrVideo *video,
                           bool random_start,
                           uint64_t seed,
                           struct AbrSimulator **out);

/**
 * Writes the current `ABR_OBS_DIM` observation into `obs`.
 */
enum AbrStatus abr_sim_observe(const struct AbrSimulator *sim, double *obs);

/**
 * Downloads the next chunk at `level`. `outcome` may be NULL.
 */
enum AbrStatus abr_sim_step(struct AbrSimulator *sim, size_t level, struct AbrStepOutcome *outcome);

enum AbrStatus abr_sim_is_done(const struct AbrSimulator *sim, bool *done);

enum AbrStatus abr_sim_snapshot(const struct AbrSimulator *sim, struct AbrSnapshot **out);

/**
 * Rewinds `sim` to `snapshot`. The snapshot stays valid and reusable.
 */
enum AbrStatus abr_sim_restore(struct AbrSimulator *sim, const struct AbrSnapshot *snapshot);

void abr_snapshot_free(struct AbrSnapshot *snapshot);

void abr_sim_free(struct AbrSimulator *sim);

enum AbrStatus abr_model_load(const char *file, struct AbrModel **out);

/**
 * Action distribution for one observation. `probs` (length
 * `ABR_N_LEVELS`) may be NULL; `action` receives the most likely level.
 */
enum AbrStatus abr_model_act(const struct AbrModel *model,
                             const double *obs,
                             size_t obs_len,
                             double *probs,
                             size_t *action);

void abr_model_free(struct AbrModel *model);

/**
 * Creates a rule-based controller (`bb`, `bola`, `robustmpc`, `quetra`) or
 * the lookahead expert (`oracle`, horizon 5, 5000 beams). `mu` is the
 * rebuffering penalty used by planners.
 */
enum AbrStatus abr_controller_new(const char *name, double mu, struct AbrController **out);

/**
 * Clears per-episode state; call before each new episode.
 */
enum AbrStatus abr_controller_reset(struct AbrController *ctrl);

enum AbrStatus abr_controller_select(struct AbrController *ctrl,
                                     const struct AbrSimulator *sim,
                                     size_t *level);

void abr_controller_free(struct AbrController *ctrl);

/**
 * Beam-search expert decision for the simulator's next chunk.
 */
enum AbrStatus abr_expert_select(const struct AbrSimulator *sim,
                                 size_t horizon,
                                 size_t max_beams,
                                 double mu,
                                 size_t *level);

/**
 * Episode QoE from per-chunk levels and stall times.
 */
enum AbrStatus abr_episode_qoe(const size_t *levels,
                               const double *rebuffer_s,
                               size_t n_chunks,
                               const uint32_t *ladder_kbps,
                               size_t n_levels,
                               double mu,
                               struct AbrQoe *out);

/**
 * Average rank per algorithm from a row-major `n_algorithms x n_sets`
 * matrix of mean QoE values (ties share the mean of their positions).
 * Writes `n_algorithms` unrounded values to `ave_rank`.
 */
enum AbrStatus abr_average_rank(const double *qoe,
                                size_t n_algorithms,
                                size_t n_sets,
                                double *ave_rank);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ABR_H */
