#pragma once

#include <functional>
#include <string>
#include <vector>

#include "irof/interval.hpp"

namespace irof {

/**
 * @brief Box-bounded nonlinear program  min f(d)  s.t.  g(d) <= 0,  lower <= d <= upper.
 *
 * `evaluate` computes the objective and all constraints at once (a single-shooting rollout produces both).
 * `derivatives` is optional; when empty, forward (or central) differences are used.
 */
struct NlpProblem
{
  using Evaluate    = std::function<void(const Vec & d, double & f, Vec & g)>;
  using Derivatives = std::function<void(const Vec & d, double f, const Vec & g, Vec & grad, Mat & jac)>;

  int dim = 0;
  int num_constraints = 0;
  Vec lower;
  Vec upper;
  Evaluate evaluate;
  Derivatives derivatives;

  /// Separate objective/constraint callables, for problems not built around a rollout.
  static NlpProblem from_functions(int dim, std::function<double(const Vec &)> objective,
                                   std::function<Vec(const Vec &)> constraints, int num_constraints, Vec lower,
                                   Vec upper);
};

struct NlpConfig
{
  double feas_tol = 1e-6;
  double kkt_tol = 1e-6;
  int max_outer = 50;
  int max_inner = 200;
  double fd_step = 1e-6;
  bool central_differences = false;
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  double max_penalty = 1e10;
  /// Inner Hessian model rho J_A^T J_A over the active rows plus a BFGS model of the rest,
  /// instead of plain BFGS on the whole augmented Lagrangian.
  bool structured_hessian = true;
};

enum class NlpStatus
{
  kOptimal,
  kFeasibleSuboptimal,
  kInfeasible,
  kIterationLimit,
};

std::string to_string(NlpStatus s);

struct NlpSolution
{
  Vec point;
  double objective_value = 0;
  double max_violation = 0;
  double kkt_residual = 0;
  NlpStatus status = NlpStatus::kIterationLimit;
  int iterations = 0;        ///< inner (quasi-Newton) iterations, summed over outer loops
  int outer_iterations = 0;
  int evaluations = 0;       ///< calls of NlpProblem::evaluate, including the built-in finite differences
  Vec multipliers;           ///< constraint multipliers, in the units of f
  double penalty = 0;        ///< final penalty parameter, in the units of f
  /// Violation of the returned incumbent after each outer iteration (index 0 is the warm start).
  std::vector<double> violation_history;
};

/// max(0, max_i g_i), 0 when g is empty.
double max_violation(const Vec & g);

/// Finite-difference gradient and Jacobian at d (f, g are the values at d). Used as the default derivative.
void finite_difference(const NlpProblem & p, const Vec & d, double f, const Vec & g, Vec & grad, Mat & jac,
                       const NlpConfig & cfg, int * evaluations = nullptr);

/**
 * @brief Augmented Lagrangian (PHR) outer loop, projected quasi-Newton inner loop.
 *
 * The warm start is clamped into the bounds. Returns the best incumbent seen: the lowest objective among points
 * with violation <= feas_tol, or the least-violating point when none is feasible, so the returned violation
 * never exceeds max(feas_tol, warm-start violation). Throws NonFiniteEvaluation on NaN/Inf values.
 */
NlpSolution minimize(const NlpProblem & p, const Vec & warm_start, const NlpConfig & cfg = {});

/// Multiplier estimate and penalty carried over from a related solve (e.g. the previous MPC step).
struct NlpDualStart
{
  Vec multipliers;     ///< ignored unless it has one entry per constraint
  double penalty = 0;  ///< ignored unless positive
};

NlpSolution minimize(const NlpProblem & p, const Vec & warm_start, const NlpConfig & cfg,
                     const NlpDualStart & dual);

}  // namespace irof
