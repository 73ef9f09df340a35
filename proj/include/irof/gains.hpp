#pragma once

#include <optional>
#include <vector>

#include "irof/system.hpp"

namespace irof {

/// Observer and controller gains with the comparison-system radii they achieve.
struct GainCertificate
{
  Mat L;
  Mat K;
  double rho_obs = 0;  ///< rho(|A - LC| + F_mu)
  double rho_ctl = 0;  ///< rho(|A - BK| + F_mu)
};

/// Computes both radii; throws SpectralConditionViolated (carrying the offending radius) if either is >= 1.
GainCertificate verify_gains(const SystemModel & model, const Mat & L, const Mat & K);

/// Both radii without the pass/fail decision.
std::pair<double, double> gain_radii(const SystemModel & model, const Mat & L, const Mat & K);

struct GainSearchConfig
{
  /// Process-to-measurement weight ratios for the Kalman-type observer family.
  std::vector<double> observer_weights{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4};
  /// State-to-input weight ratios for the LQR controller family.
  std::vector<double> controller_weights{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4};
  /// Optional per-state weight profiles (diagonals) multiplying the scalar ratios; identity if empty.
  std::vector<Vec> state_profiles;
  /// Gains that are already fixed (e.g. taken from a scenario) skip the search on that side.
  std::optional<Mat> fixed_L;
  std::optional<Mat> fixed_K;
  /// Candidates whose max radius is within this of the best are compared by gain norm.
  double tie_tolerance = 1e-3;
  /// Optional admissibility test for controller candidates: the steady feedback share of the input
  /// tightening, 0.5 |K| (Delta_z + Delta_e) under noise boxes w and v, must stay within limit.
  struct InputBudget
  {
    IntervalVector w;
    IntervalVector v;
    Vec limit;
  };
  std::optional<InputBudget> input_budget;
};

/**
 * @brief Search over Riccati-weight families for gains satisfying the spectral conditions.
 *
 * The selected pair minimizes max(rho_obs, rho_ctl); among pairs within tie_tolerance of the minimum the one
 * with the smallest ||L||_F + ||K||_F wins. With an input budget, controller candidates over budget (evaluated
 * with the lowest-radius observer candidate) are dropped first. Deterministic for a given config. Throws SpectralConditionViolated
 * with the best uncertified radii when no candidate passes.
 */
GainCertificate synthesize_gains(const SystemModel & model, const GainSearchConfig & cfg = {});

}  // namespace irof
