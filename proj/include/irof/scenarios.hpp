#pragma once

/**
 * @file
 * @brief CSTR and unicycle models, scenario description and loading, plant simulation.
 */

#include <optional>
#include <string>

#include <json.hpp>

#include "irof/gains.hpp"
#include "irof/mpc.hpp"
#include "irof/occupancy.hpp"
#include "irof/rng.hpp"

namespace irof {

struct ExplorationConfig
{
  Vec region_lo;  ///< 2-D
  Vec region_hi;
  int nx = 20;
  int ny = 20;
  double lambda = 1.0;
  /// Row-major ground truth; generated from the trial seed with `density` when empty.
  std::vector<std::uint8_t> ground_truth;
  double density = 0.3;
  std::string entropy = "shannon";  ///< "shannon" or "renyi<order>", e.g. "renyi2"
};

/// Where the terminal set is centered.
enum class TargetMode
{
  kProjected,   ///< closest admissible steady state to x_ref (CSTR: the reference is inadmissible)
  kReference,   ///< x_ref itself with input u_ref (it must be an equilibrium of the mean dynamics)
};

struct Scenario
{
  std::string name;
  std::string system;  ///< "cstr" or "unicycle"
  SystemModel model;
  IntervalVector w_unit;  ///< process-noise box at alpha = 1
  IntervalVector v_unit;  ///< measurement-noise box at beta = 1
  double alpha = 1.0;
  double beta = 1.0;
  IntervalVector X;
  IntervalVector U;
  IntervalVector x0_box;           ///< initial observer box; the true x0 is drawn uniformly inside it
  std::optional<Vec> x0;           ///< fixed initial true state instead of a draw
  Gains gains;
  Vec x_ref;
  Vec u_ref;
  Mat H;
  Mat R;
  bool penalize_applied_input = false;
  /// Stage cost centered at the terminal target instead of x_ref (an admissible reference).
  bool cost_about_target = false;
  TargetMode target_mode = TargetMode::kProjected;
  int horizon = 10;
  int trial_length = 50;
  std::uint64_t seed = 0;
  std::vector<Circle> obstacles;
  TerminalDesignConfig terminal;
  MpcConfig mpc;
  std::optional<ExplorationConfig> exploration;
  nlohmann::json metadata = nlohmann::json::object();

  NoiseBounds noise() const;
  void validate() const;
};

/// The linear CSTR with the published matrices, sets, gain, reference and weights.
Scenario cstr_scenario(double alpha = 1.0, double beta = 1.0);

struct UnicycleParams
{
  double dt = 0.1;
  double delta = 0.05;
  double b_v = 0.05;
  Vec x_lo, x_hi;  ///< state box (px, py, theta, v); |v| <= 1 keeps the remainder sign-stable
};

/// f(x) = A x + mu(x) of the damped unicycle, with the remainder Jacobian bounded over [x_lo, x_hi].
SystemModel unicycle_model(const UnicycleParams & p);

/// Default obstacle-avoidance and exploration setup around the unicycle model.
Scenario unicycle_scenario(const UnicycleParams & p = {});

/// Parses a scenario document (see scenarios/*.json). Unknown keys are rejected.
Scenario scenario_from_json(const nlohmann::json & j);
Scenario load_scenario(const std::string & path);

/// Metadata recorded with every result file (system, noise scale, the exact damping values, gains).
nlohmann::json scenario_summary(const Scenario & s);

/// x+ = f(x) + B u + w.
Vec simulate_plant(const SystemModel & model, const Vec & x, const Vec & u, const Vec & w);

/// Terminal ingredients and costs for one controller kind.
struct ControllerSetup
{
  Gains gains;  ///< K = 0 for the open-loop baseline
  ConstraintSets sets;
  MpcCost cost;
  TerminalDesign terminal;
  TerminalSetReport terminal_report;
};

ControllerSetup setup_controller(const Scenario & s, ControllerKind kind);

/// The ground truth for an exploration scenario and trial seed.
OccupancyMap make_map(const ExplorationConfig & cfg, std::uint64_t seed);

}  // namespace irof
