#ifndef MQS_H
#define MQS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MqsStatus {
  MQS_STATUS_OK = 0,
  MQS_STATUS_NULL_POINTER = 1,
  MQS_STATUS_INVALID_UTF8 = 2,
  MQS_STATUS_BUFFER_TOO_SMALL = 3,
  MQS_STATUS_PANIC = 4,
  MQS_STATUS_INVALID_INPUT = 10,
  MQS_STATUS_CONFIG = 11,
  MQS_STATUS_IO = 12,
  MQS_STATUS_UNDEPLETED_ASSUMPTION_VIOLATED = 20,
  MQS_STATUS_TRUNCATION = 21,
  MQS_STATUS_ZERO_PROBABILITY_OUTCOME = 22,
  MQS_STATUS_FORMULA_SCOPE = 23,
  MQS_STATUS_DARK_STATE_STALL = 24,
  MQS_STATUS_DIMENSION_CAP = 25,
  MQS_STATUS_STEP_CONTROL_FAILURE = 26,
  MQS_STATUS_ZERO_OVERLAP = 27,
  MQS_STATUS_KERNEL_UNDERRESOLVED = 28,
  MQS_STATUS_GRID_TOO_SMALL = 29,
  MQS_STATUS_DEGENERATE_ROOT = 30,
  MQS_STATUS_SELF_CHECK_FAILED = 40,
} MqsStatus;

// Parsed run configuration.
typedef struct MqsConfig MqsConfig;

// Integer-valued probability distribution.
typedef struct MqsHistogram MqsHistogram;

// Outcome of [`mqs_run`].
typedef struct MqsRunSummary MqsRunSummary;

// One continuous-detection trajectory.
typedef struct MqsTrajectory MqsTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *mqs_version(void);

// Copies the last error message of the calling thread.
enum MqsStatus mqs_last_error(char *buf, size_t len, size_t *needed);

// Parses a JSON run configuration.
enum MqsStatus mqs_config_from_json(const char *json, struct MqsConfig **out);

// Serialises the configuration, defaults included.
enum MqsStatus mqs_config_to_json(const struct MqsConfig *config,
                                  char *buf,
                                  size_t len,
                                  size_t *needed);

enum MqsStatus mqs_config_set_seed(struct MqsConfig *config, uint64_t seed);

enum MqsStatus mqs_config_set_out_dir(struct MqsConfig *config, const char *dir);

// Checks every precondition; on failure the message lists all problems.
enum MqsStatus mqs_config_validate(const struct MqsConfig *config);

void mqs_config_free(struct MqsConfig *config);

// Runs the configured mode and writes its output files.
enum MqsStatus mqs_run(const struct MqsConfig *config, struct MqsRunSummary **out);

// One-line summary of the run.
enum MqsStatus mqs_run_summary_line(const struct MqsRunSummary *summary,
                                    char *buf,
                                    size_t len,
                                    size_t *needed);

size_t mqs_run_summary_file_count(const struct MqsRunSummary *summary);

void mqs_run_summary_free(struct MqsRunSummary *summary);

// Outcoupled-atom distribution P(n0) for equal couplings at the given sin²(Vt).
enum MqsStatus mqs_coherent_n0_distribution(size_t n1,
                                            size_t n2,
                                            double sin2_vt,
                                            struct MqsHistogram **out);

// Distribution of N1 − N2 in the final state of a trajectory.
enum MqsStatus mqs_trajectory_difference_distribution(const struct MqsTrajectory *trajectory,
                                                      struct MqsHistogram **out);

size_t mqs_histogram_len(const struct MqsHistogram *h);

// Value of the first bin.
int64_t mqs_histogram_offset(const struct MqsHistogram *h);

enum MqsStatus mqs_histogram_probabilities(const struct MqsHistogram *h,
                                           double *buf,
                                           size_t len,
                                           size_t *needed);

enum MqsStatus mqs_histogram_moments(const struct MqsHistogram *h, double *mean, double *variance);

// Fringe visibility after Gaussian blur of width `sigma`; `spacing` is 0
// when no regular lattice of peaks is found.
enum MqsStatus mqs_histogram_fringes(const struct MqsHistogram *h,
                                     double sigma,
                                     double *visibility,
                                     int64_t *spacing);

void mqs_histogram_free(struct MqsHistogram *h);

// Detects `nu` atoms one by one from |n1, n2⟩ with jump rate `w`.
// Returns `MQS_STATUS_DARK_STATE_STALL` when the state goes dark first.
enum MqsStatus mqs_trajectory_run(size_t n1,
                                  size_t n2,
                                  double w,
                                  size_t nu,
                                  uint64_t seed,
                                  uint64_t index,
                                  struct MqsTrajectory **out);

// Waiting times between successive detections.
enum MqsStatus mqs_trajectory_taus(const struct MqsTrajectory *t,
                                   double *buf,
                                   size_t len,
                                   size_t *needed);

// ⟨cos φ⟩ after each detection.
enum MqsStatus mqs_trajectory_cosphi_history(const struct MqsTrajectory *t,
                                             double *buf,
                                             size_t len,
                                             size_t *needed);

enum MqsStatus mqs_trajectory_final_cosphi(const struct MqsTrajectory *t, double *cosphi);

void mqs_trajectory_free(struct MqsTrajectory *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MQS_H */
