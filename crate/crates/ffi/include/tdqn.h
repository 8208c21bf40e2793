#ifndef TDQN_H
#define TDQN_H

/* Generated by cbindgen from the tdqn-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TdqnAction {
  TDQN_ACTION_SHORT = 0,
  TDQN_ACTION_LONG = 1,
} TdqnAction;

typedef enum TdqnStatus {
  TDQN_STATUS_OK = 0,
  TDQN_STATUS_NULL_POINTER = 1,
  TDQN_STATUS_INVALID_ARGUMENT = 2,
  TDQN_STATUS_IO = 3,
  TDQN_STATUS_PARSE = 4,
  TDQN_STATUS_CONSTRAINT = 5,
  TDQN_STATUS_PANIC = 6,
} TdqnStatus;

typedef enum TdqnStrategy {
  TDQN_STRATEGY_BUY_HOLD = 0,
  TDQN_STRATEGY_SELL_HOLD = 1,
  TDQN_STRATEGY_TREND_FOLLOWING = 2,
  TDQN_STRATEGY_MEAN_REVERSION = 3,
} TdqnStrategy;

typedef struct TdqnEnv TdqnEnv;

typedef struct TdqnModel TdqnModel;

typedef struct TdqnSeries TdqnSeries;

typedef struct TdqnEnvConfig {
  double cost_rate;
  double epsilon_bound;
  double initial_cash;
  // Observation window length in bars.
  uint32_t tau;
  uint32_t filter_window;
} TdqnEnvConfig;

typedef struct TdqnStep {
  int64_t quantity;
  double reward;
  double cash;
  int64_t shares;
  double value;
  bool done;
} TdqnStep;

// Indicators are NaN when undefined and +infinity when unbounded.
typedef struct TdqnReport {
  double sharpe;
  double pnl;
  double annualized_return;
  double annualized_volatility;
  double profitability_ratio;
  double pnl_ratio;
  double sortino;
  double max_drawdown;
  uint64_t max_drawdown_duration;
  uint64_t trades;
} TdqnReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call into the library on the same thread.
const char *tdqn_last_error(void);

// Library version as a static NUL-terminated string.
const char *tdqn_version(void);

struct TdqnEnvConfig tdqn_env_config_default(void);

// Reads a `date,open,high,low,close,volume` CSV file.
//
// # Safety
// `path` and `instrument` must be NUL-terminated strings; `out` must be
// writable.
enum TdqnStatus tdqn_series_from_csv(const char *path,
                                     const char *instrument,
                                     struct TdqnSeries **out);

// Daily bars built from closing prices alone on a weekday calendar.
//
// # Safety
// `closes` must point to `len` doubles; `instrument` must be NUL-terminated;
// `out` must be writable.
enum TdqnStatus tdqn_series_from_closes(const char *instrument,
                                        const double *closes,
                                        size_t len,
                                        struct TdqnSeries **out);

// Number of bars; 0 for a null handle.
//
// # Safety
// `series` must be null or a live handle.
size_t tdqn_series_len(const struct TdqnSeries *series);

// # Safety
// `series` must be null or a handle not yet freed.
void tdqn_series_free(struct TdqnSeries *series);

// Environment over the whole series, features normalized with the series'
// own statistics. Trading starts at the first bar with a full window.
//
// # Safety
// `series` and `config` must be valid; `out` must be writable.
enum TdqnStatus tdqn_env_new(const struct TdqnSeries *series,
                             const struct TdqnEnvConfig *config,
                             struct TdqnEnv **out);

// # Safety
// `env` must be a live handle.
enum TdqnStatus tdqn_env_reset(struct TdqnEnv *env);

// Trades at the current close and advances one bar.
//
// # Safety
// `env` must be a live handle; `out` must be writable.
enum TdqnStatus tdqn_env_step(struct TdqnEnv *env,
                              enum TdqnAction action_taken,
                              struct TdqnStep *out);

// True when no step remains, or for a null handle.
//
// # Safety
// `env` must be null or a live handle.
bool tdqn_env_done(const struct TdqnEnv *env);

// Length of the network input for this environment's feature settings.
//
// # Safety
// `env` must be null or a live handle.
size_t tdqn_env_input_dim(const struct TdqnEnv *env);

// Writes the current observation, flattened as the network expects it.
//
// # Safety
// `env` must be a live handle; `buffer` must hold `len` doubles.
enum TdqnStatus tdqn_env_observation(const struct TdqnEnv *env, double *buffer, size_t len);

// # Safety
// `env` must be null or a handle not yet freed.
void tdqn_env_free(struct TdqnEnv *env);

// Integer bounds of the feasible trade quantity; `*lo > *hi` when empty.
//
// # Safety
// `config`, `lo` and `hi` must be valid.
enum TdqnStatus tdqn_feasible_range(double cash,
                                    int64_t shares,
                                    double price,
                                    const struct TdqnEnvConfig *config,
                                    int64_t *lo,
                                    int64_t *hi);

// Indicators of a portfolio value path; `positions` has `len - 1` entries,
// position `k` held from value `k` to value `k + 1`.
//
// # Safety
// `values` must hold `len` doubles, `positions` `len - 1` actions; `out`
// must be writable.
enum TdqnStatus tdqn_performance(const double *values,
                                 const enum TdqnAction *positions,
                                 size_t len,
                                 struct TdqnReport *out);

// Runs a benchmark strategy over the series from its first full window.
//
// # Safety
// `series` and `config` must be valid; `out` must be writable.
enum TdqnStatus tdqn_benchmark(const struct TdqnSeries *series,
                               enum TdqnStrategy strategy,
                               uint32_t short_window,
                               uint32_t long_window,
                               const struct TdqnEnvConfig *config,
                               struct TdqnReport *out);

// Loads a model file written by the `train` command.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
enum TdqnStatus tdqn_model_load(const char *path, struct TdqnModel **out);

// # Safety
// `model` must be null or a live handle.
size_t tdqn_model_input_dim(const struct TdqnModel *model);

// Greedy action and both Q-values for one network input.
//
// # Safety
// `model` must be a live handle; `input` must hold `len` doubles;
// `q_values` must be null or hold 2 doubles; `out` must be writable.
enum TdqnStatus tdqn_model_act(const struct TdqnModel *model,
                               const double *input,
                               size_t len,
                               double *q_values,
                               enum TdqnAction *out);

// Environment whose observations are normalized with `model`'s own
// statistics and feature settings, ready for [`tdqn_model_act`].
//
// # Safety
// `series`, `model` and `config` must be valid; `out` must be writable.
enum TdqnStatus tdqn_env_new_for_model(const struct TdqnSeries *series,
                                       const struct TdqnModel *model,
                                       const struct TdqnEnvConfig *config,
                                       struct TdqnEnv **out);

// # Safety
// `model` must be null or a handle not yet freed.
void tdqn_model_free(struct TdqnModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TDQN_H */
