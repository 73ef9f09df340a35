#pragma once

/**
 * @file
 * @brief Closed-loop trials, noise sweeps and result serialization.
 */

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "irof/scenarios.hpp"

namespace irof {

struct StepRecord
{
  int k = 0;
  Vec x;              ///< true state x_k
  Vec y;
  Vec v;              ///< measurement noise in y_k
  Vec w;              ///< process noise driving x_k -> x_{k+1}
  IntervalVector box; ///< refined estimate box used at step k
  Vec point;          ///< point estimate at step k
  IntervalVector one_step_box;  ///< predicted box of x_{k+1}
  Vec u;
  std::string status;
  int iterations = 0;
  int evaluations = 0;
  double objective = 0;
  double max_violation = 0;
  double shifted_violation = 0;
  bool shifted_available = false;
  double entropy = 0;  ///< map entropy after measuring at x_{k+1}; 0 without a map
};

struct ViolationCounts
{
  int state = 0;
  int input = 0;
  int obstacle = 0;
  int containment = 0;  ///< true state outside the logged estimate box
  int prediction = 0;   ///< x_{k+1} outside the logged one-step box

  int constraints() const { return state + input + obstacle; }
  int total() const { return constraints() + containment + prediction; }
};

struct TrialResult
{
  std::string scenario;
  ControllerKind controller = ControllerKind::kIrof;
  std::uint64_t seed = 0;
  Gains gains;  ///< gains used inside the predictor
  TerminalDesign terminal;
  TerminalSetReport terminal_report;
  std::vector<StepRecord> steps;
  Vec x_final;
  double mse = 0;
  ViolationCounts violations;
  bool aborted = false;
  std::string abort_message;
  std::vector<double> step_seconds;  ///< kept out of the result files, which must be reproducible
  nlohmann::json metadata;
};

/// Runs one closed-loop trial. Noise streams depend only on the seed, so trials with different
/// controllers and the same seed see identical w, v and x0. A controller abort ends the trial early.
TrialResult run_trial(const Scenario & s, ControllerKind kind, std::uint64_t seed);

/// Re-evaluates every constraint and containment condition against the logged states.
ViolationCounts recount_violations(const Scenario & s, const TrialResult & r);

/// mean over k of ||x_{k+1} - x_ref||^2.
double tracking_mse(const std::vector<StepRecord> & steps, const Vec & final_state, const Vec & x_ref);

nlohmann::json trial_to_json(const TrialResult & r);
/// One row per step: k, x, box, point, u, status, violation, entropy.
std::string trial_to_csv(const TrialResult & r);

/// Writes <dir>/<scenario>_<controller>_<seed>.{json,csv} and a separate .timing.csv.
void write_trial(const TrialResult & r, const std::string & dir);

struct SweepRow
{
  std::string param;
  double value = 0;
  ControllerKind controller = ControllerKind::kIrof;
  double mse_mean = 0;
  double mse_std = 0;
  int violations = 0;
  std::vector<double> mse;  ///< per seed, in seed order
  int aborted = 0;
};

/// Scenario with alpha or beta replaced. param is "alpha" or "beta".
Scenario with_noise_scale(const Scenario & s, const std::string & param, double value);

/**
 * @brief Paired Monte Carlo over a grid of one noise scale. Seeds are s.seed .. s.seed + seeds - 1.
 * Rows are ordered by value, then controller. threads = 0 uses the hardware concurrency.
 */
std::vector<SweepRow> sweep(const Scenario & s, const std::string & param, const std::vector<double> & values,
                            int seeds, const std::vector<ControllerKind> & controllers, int threads = 0);

/// Header param,value,controller,mse_mean,mse_std,violations.
std::string sweep_csv(const std::vector<SweepRow> & rows);
std::vector<SweepRow> parse_sweep_csv(const std::string & text);

/// Runs task(i) for i in [0, count) on a pool of threads; results keep index order.
void parallel_for(int count, int threads, const std::function<void(int)> & task);

}  // namespace irof
