#ifndef EDGESLICE_H
#define EDGESLICE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EsHop {
  ES_HOP_UPLINK = 0,
  ES_HOP_EDGE = 1,
  ES_HOP_DOWNLINK = 2,
} EsHop;

typedef enum EsPowerSide {
  ES_POWER_SIDE_UE = 0,
  ES_POWER_SIDE_BS = 1,
} EsPowerSide;

typedef enum EsScheme {
  ES_SCHEME_STATIC = 0,
  ES_SCHEME_TCP = 1,
  ES_SCHEME_UCB1 = 2,
  ES_SCHEME_MUCB1 = 3,
} EsScheme;

/**
 * Result code of every call.
 */
typedef enum EsStatus {
  ES_STATUS_OK = 0,
  ES_STATUS_NULL_POINTER = 1,
  ES_STATUS_INVALID_ARGUMENT = 2,
  ES_STATUS_CONFIG = 3,
  ES_STATUS_SIMULATION = 4,
  ES_STATUS_IO = 5,
  ES_STATUS_PANIC = 6,
} EsStatus;

/**
 * Opaque per-state bandit table handle.
 */
typedef struct EsBanditTable EsBanditTable;

/**
 * Opaque loaded scenario handle.
 */
typedef struct EsScenario EsScenario;

/**
 * Opaque simulator handle.
 */
typedef struct EsSimulator EsSimulator;

/**
 * Per-hop delay budgets in seconds.
 */
typedef struct EsHopBudgets {
  double ul;
  double edge;
  double dl;
} EsHopBudgets;

typedef struct EsAllocation {
  uint32_t ul_prbs;
  uint32_t gpu_mhz;
  uint32_t dl_prbs;
} EsAllocation;

/**
 * Frame timestamps in seconds; hops not yet reached are NaN.
 */
typedef struct EsFrame {
  uint32_t flow_id;
  uint64_t seq;
  double ul_bits;
  double dl_bits;
  double t_sent;
  double t_edge_in;
  double t_edge_out;
  double t_received;
} EsFrame;

/**
 * One scheme's whole-run summary.
 */
typedef struct EsSummary {
  double qos_ratio;
  double avg_ul_prbs;
  double avg_dl_prbs;
  double avg_gpu_mhz;
  double ue_savings;
  double bs_savings;
} EsSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *es_last_error(void);

/**
 * Splits `q_c` over the three hops. `base` and `ratios` point to three
 * values each, in uplink, edge, downlink order.
 *
 * # Safety
 * `base` and `ratios` must point to three readable doubles; `out` must be
 * writable.
 */
enum EsStatus es_split_budget(double q_c,
                              const double *base,
                              const double *ratios,
                              struct EsHopBudgets *out_budgets);

/**
 * Default violation penalty for a hop whose largest allocation is `a_max`.
 */
double es_lambda_for(double a_max);

/**
 * Power savings of a constant radio allocation `a` against the maximum,
 * as a fraction, with unit sleep powers.
 *
 * # Safety
 * `out_savings` must be writable.
 */
enum EsStatus es_power_savings(enum EsPowerSide side, double a, double *out_savings);

/**
 * One step of the TCP-like baseline on the sorted level list.
 *
 * # Safety
 * `levels` must point to `n_levels` readable values; `out_action` must be
 * writable.
 */
enum EsStatus es_tcp_step(const uint32_t *levels,
                          uintptr_t n_levels,
                          uint32_t a_prev,
                          bool qos_met,
                          uint32_t *out_action);

/**
 * Creates an empty bandit table over `levels`. The penalty uses
 * `resource_max`, or the largest level when that is larger.
 *
 * # Safety
 * `levels` must point to `n_levels` readable values; `out_table` must be
 * writable.
 */
enum EsStatus es_bandit_new(const uint32_t *levels,
                            uintptr_t n_levels,
                            uint32_t resource_max,
                            struct EsBanditTable **out_table);

/**
 * Releases a table; NULL is ignored.
 *
 * # Safety
 * `table` must come from [`es_bandit_new`] and not be used afterwards.
 */
void es_bandit_free(struct EsBanditTable *table);

/**
 * Arm to play in `state`.
 *
 * # Safety
 * `table` must be a live handle; `out_action` must be writable.
 */
enum EsStatus es_bandit_select(const struct EsBanditTable *table,
                               uint32_t state,
                               uint32_t *out_action);

/**
 * Arm with the lowest empirical cost in `state`; INVALID_ARGUMENT when the
 * state has no data yet.
 *
 * # Safety
 * `table` must be a live handle; `out_action` must be writable.
 */
enum EsStatus es_bandit_greedy(const struct EsBanditTable *table,
                               uint32_t state,
                               uint32_t *out_action);

/**
 * Monotone update from one slot's hop feedback.
 *
 * # Safety
 * `table` must be a live handle not used concurrently.
 */
enum EsStatus es_bandit_update_monotone(struct EsBanditTable *table,
                                        uint32_t state,
                                        uint32_t action,
                                        bool qos_met);

/**
 * Plain UCB1 update with a cost already normalized to `[0, 1]`.
 *
 * # Safety
 * `table` must be a live handle not used concurrently.
 */
enum EsStatus es_bandit_update_single(struct EsBanditTable *table,
                                      uint32_t state,
                                      uint32_t action,
                                      double normalized_cost);

/**
 * Pull count and mean normalized cost of one arm; zeros for unseen states.
 *
 * # Safety
 * `table` must be a live handle; both out pointers must be writable.
 */
enum EsStatus es_bandit_arm(const struct EsBanditTable *table,
                            uint32_t state,
                            uint32_t action,
                            uint64_t *out_pulls,
                            double *out_mean_cost);

/**
 * Simulator with the default calibration and every hop at its maximum.
 *
 * # Safety
 * `out_sim` must be writable.
 */
enum EsStatus es_sim_new(struct EsSimulator **out_sim);

/**
 * Releases a simulator; NULL is ignored.
 *
 * # Safety
 * `sim` must come from [`es_sim_new`] and not be used afterwards.
 */
void es_sim_free(struct EsSimulator *sim);

/**
 * # Safety
 * `sim` must be a live handle; `out_now` must be writable.
 */
enum EsStatus es_sim_now(const struct EsSimulator *sim, double *out_now);

/**
 * Injects a frame sent at `t`; its index is written to `out_frame_id`.
 *
 * # Safety
 * `sim` must be a live handle not used concurrently; `out_frame_id` must be
 * writable.
 */
enum EsStatus es_sim_schedule_frame(struct EsSimulator *sim,
                                    uint32_t flow_id,
                                    double ul_bits,
                                    double dl_bits,
                                    double t,
                                    uintptr_t *out_frame_id);

/**
 * Applies an allocation at slot boundary `t`.
 *
 * # Safety
 * `sim` must be a live handle not used concurrently.
 */
enum EsStatus es_sim_set_allocation(struct EsSimulator *sim,
                                    struct EsAllocation allocation,
                                    double t);

/**
 * Advances to `t`; the number of frames that completed is written to
 * `out_completed` (may be NULL).
 *
 * # Safety
 * `sim` must be a live handle not used concurrently.
 */
enum EsStatus es_sim_advance_to(struct EsSimulator *sim, double t, uintptr_t *out_completed);

/**
 * Copies frame `frame_id`.
 *
 * # Safety
 * `sim` must be a live handle; `out_frame` must be writable.
 */
enum EsStatus es_sim_frame(const struct EsSimulator *sim,
                           uintptr_t frame_id,
                           struct EsFrame *out_frame);

/**
 * Queue content of `hop` at `t`: bits for radio hops, frames for the edge.
 *
 * # Safety
 * `sim` must be a live handle; `out_backlog` must be writable.
 */
enum EsStatus es_sim_backlog(const struct EsSimulator *sim,
                             enum EsHop which,
                             double t,
                             double *out_backlog);

/**
 * Loads and validates a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_scenario` must be writable.
 */
enum EsStatus es_scenario_load(const char *path_utf8, struct EsScenario **out_scenario);

/**
 * Releases a scenario; NULL is ignored.
 *
 * # Safety
 * `scenario` must come from [`es_scenario_load`] and not be used afterwards.
 */
void es_scenario_free(struct EsScenario *scenario);

/**
 * Number of control slots the scenario runs.
 *
 * # Safety
 * `scenario` must be a live handle; `out_slots` must be writable.
 */
enum EsStatus es_scenario_slots(const struct EsScenario *scenario, uint64_t *out_slots);

/**
 * Runs one scheme in memory and writes its summary. A zero-slot scenario
 * yields CONFIG.
 *
 * # Safety
 * `scenario` must be a live handle; `out_summary` must be writable.
 */
enum EsStatus es_scenario_simulate(const struct EsScenario *scenario,
                                   enum EsScheme which,
                                   struct EsSummary *out_summary);

/**
 * Runs one scheme and writes its CSV artifacts into `out_dir`.
 *
 * # Safety
 * `scenario` must be a live handle; `out_dir` must be a NUL-terminated
 * string.
 */
enum EsStatus es_scenario_run(const struct EsScenario *scenario,
                              enum EsScheme which,
                              const char *out_dir);

/**
 * Runs every configured scheme and writes the comparison into `out_dir`.
 *
 * # Safety
 * `scenario` must be a live handle; `out_dir` must be a NUL-terminated
 * string.
 */
enum EsStatus es_scenario_compare(const struct EsScenario *scenario, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDGESLICE_H */
