#pragma once

/**
 * @file
 * @brief Receding-horizon controller built on the interval predictor: problem construction, the
 * observer/refine/solve/apply loop, warm-start shifting and the terminal ingredients.
 */

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "irof/nlp.hpp"
#include "irof/prediction.hpp"

namespace irof {

struct Circle
{
  Vec center;  ///< 2-vector in the plane spanned by ConstraintSets::plane
  double radius = 0;
};

/// u = Kf(x), the terminal feedback law in input space.
using TerminalLaw = std::function<Vec(const Vec &)>;

struct ConstraintSets
{
  IntervalVector X;
  IntervalVector U;
  std::vector<Circle> obstacles;
  std::array<int, 2> plane{0, 1};  ///< state components holding the position
  IntervalVector Xf;
  TerminalLaw Kf;

  void validate(Eigen::Index n, Eigen::Index m) const;
};

/// Signed distance from a point to a box in the plane (negative inside).
double box_point_signed_distance(const Vec & lo, const Vec & hi, const Vec & c);

/// Quadratic stage and terminal cost around (x_ref, u_ref) and (x_f), plus an optional exploration reward.
struct MpcCost
{
  Mat H;
  Mat R;
  Vec x_ref;
  Vec u_ref;
  Mat P;      ///< terminal weight; zero matrix disables V_f
  Vec x_f;    ///< terminal expansion point
  double lambda = 0.0;
  std::function<double(const Vec &)> exploration;  ///< U(x; M), may be empty
  /// Penalize the applied input -K zhat + u' rather than u' itself.
  bool penalize_applied_input = false;

  double stage(const Vec & x, const Vec & u) const;
  double terminal(const Vec & x) const;
};

enum class InputBoundForm
{
  kFeedback,    ///< bound of -K xhat + u' over xhat in [xi_lo, xi_hi]
  kPrintedK,    ///< the printed form: bound of +K applied to the z interval, plus u'
};

struct MpcConfig
{
  int horizon = 10;
  NlpConfig nlp;
  InputBoundForm input_bound = InputBoundForm::kFeedback;
  /// At l = 0 the point estimate is known, so the input constraint can use it exactly.
  bool exact_first_input = true;
  /// Intersect the initial error box with the previous one-step error prediction.
  bool refine_error_box = true;
  /// Added to every scaled row, so a solution with violation <= feas_tol satisfies the true constraints.
  double constraint_backoff = 1e-6;
  /// Start each solve from the previous step's multipliers.
  bool warm_start_multipliers = true;
  /// Forward-mode derivatives through the rollout; false falls back to one-sided differences.
  bool analytic_derivatives = true;
  /// Apply the least-violating solution when neither the solve nor the shifted warm start is feasible,
  /// instead of throwing ControllerAbort. Meant for runs that start outside the feasible region.
  bool apply_infeasible = false;
};

/// Layout of the stacked constraint vector; every row is scaled to be dimensionless.
struct ConstraintLayout
{
  int n = 0, m = 0, horizon = 0, obstacles = 0;
  bool terminal = true;

  int input_rows() const { return 2 * m; }
  int state_rows() const { return 2 * n + obstacles; }
  /// Row of the input block at step l (l = 0..N-1).
  int input_offset(int l) const { return l == 0 ? 0 : input_rows() + (l - 1) * (state_rows() + input_rows()) + state_rows(); }
  /// Row of the state block at step l (l = 1..N).
  int state_offset(int l) const { return input_rows() + (l - 1) * (state_rows() + input_rows()); }
  int terminal_offset() const { return input_rows() + horizon * state_rows() + (horizon - 1) * input_rows(); }
  int total() const { return terminal_offset() + (terminal ? n : 0); }
};

/// Everything the single-shooting problem needs at one time step.
struct ProblemData
{
  const SystemModel * model = nullptr;
  const NoiseBounds * noise = nullptr;
  const ConstraintSets * sets = nullptr;
  const MpcCost * cost = nullptr;
  Gains gains;
  int horizon = 1;
  InputBoundForm input_bound = InputBoundForm::kFeedback;
  bool exact_first_input = true;
  PredictorState init;
  Vec point;  ///< the point estimate at l = 0
  double backoff = 0.0;
  /// Propagate the point recursion zhat+ = f(zhat) + B(u' - K zhat) + w_hat instead of the interval predictor.
  bool point_prediction = false;
  bool analytic_derivatives = true;
};

/// Predictor rollout with the cost and constraint evaluation attached; caches the last rollout
/// so that finite-difference columns restart from the perturbed step.
class ShootingEvaluator
{
public:
  explicit ShootingEvaluator(ProblemData data);

  const ConstraintLayout & layout() const { return layout_; }
  int dim() const { return data_.horizon * static_cast<int>(data_.model->m()); }

  void evaluate(const Vec & d, double & f, Vec & g);
  /// Dispatches to derivatives_analytic or derivatives_fd.
  void derivatives(const Vec & d, double f, const Vec & g, Vec & grad, Mat & jac, double fd_step);
  /// One-sided differences restarted at the perturbed step.
  void derivatives_fd(const Vec & d, Vec & grad, Mat & jac, double fd_step);
  /// Forward-mode sensitivities; the exploration term is differentiated numerically in x.
  void derivatives_analytic(const Vec & d, Vec & grad, Mat & jac);

  /// Rollout trajectory for a decision vector.
  PredictionTrajectory trajectory(const Vec & d) const;

  /// Decision bounds (input box widened by the feedback range over X).
  IntervalVector decision_bounds() const;

private:
  // Re-runs the rollout from step j (states 0..j must be valid in `st`), refreshing cost terms and rows >= j.
  void sweep_from(int j, const Vec & d, std::vector<PredictorBuffers> & st, std::vector<double> & cost_terms,
                  Vec & g) const;
  void input_rows(int l, const PredictorBuffers & s, const Vec & u_ff, Vec & g) const;
  void state_rows(int l, const PredictorBuffers & s, Vec & g) const;
  void terminal_rows(const PredictorBuffers & s, Vec & g) const;
  double stage_cost(int l, const PredictorBuffers & s, const Vec & u_ff) const;

  ProblemData data_;
  IntervalPredictor predictor_;
  ConstraintLayout layout_;
  SplitMatrix bound_gain_;  ///< -K (feedback form) or +K (printed form)

  // Per-call temporaries, kept to avoid allocations in the rollout.
  struct Scratch
  {
    Vec u_lo, u_hi, xi_lo, xi_hi, lo2, hi2, x, ex, eu;
  };
  mutable Scratch scratch_;
  PredictorTangent tan_a_, tan_b_;

  Vec cached_d_;
  std::vector<PredictorBuffers> base_states_;
  std::vector<double> base_cost_;
  Vec base_g_;
  std::vector<PredictorBuffers> work_states_;
  std::vector<double> work_cost_;
  Vec work_g_;
};

/// The single-shooting problem over the feedforward sequence. The evaluator is shared with the closures.
NlpProblem build_problem(const std::shared_ptr<ShootingEvaluator> & ev, const NlpConfig & cfg);

/// Convenience overload assembling the evaluator from an estimate.
NlpProblem build_problem(const EstimatorState & est, const SystemModel & model, const NoiseBounds & nb,
                         const ConstraintSets & cs, const MpcCost & cost, int horizon, const MpcConfig & cfg = {});

/// Drop the first input and append the terminal law evaluated at the last predicted midpoint, in u' form.
Vec shift_warm_start(const PredictionTrajectory & prev, const ConstraintSets & cs, const Mat & K);

struct TerminalDecreaseReport
{
  double worst_margin = 0;
  Vec worst_point;
  int samples = 0;
};

/// max over a grid of Xf of V_f(f(x) + B Kf(x) + w_hat) - V_f(x) + c(x, Kf(x)).
TerminalDecreaseReport terminal_decrease_check(const SystemModel & model, const NoiseBounds & nb,
                                               const ConstraintSets & cs, const MpcCost & cost,
                                               int samples_per_axis = 10);

struct TerminalSetReport
{
  bool minkowski_ok = false;   ///< Xf grown by Delta_z stays inside X
  bool invariant_ok = false;   ///< sampled f(x) + B Kf(x) + w_hat in Xf
  bool input_ok = false;       ///< sampled Kf(x) in U
  double worst_invariance_excess = 0;
};

TerminalSetReport check_terminal_set(const SystemModel & model, const NoiseBounds & nb, const ConstraintSets & cs,
                                     const Vec & delta_z, int samples_per_axis = 5);

/// Steady-state operating point for a (possibly inadmissible) reference.
struct Target
{
  Vec x;
  Vec u;
};

/**
 * @brief Closest admissible steady state: minimize (x-x_r)'H(x-x_r) + (u-u_r)'R(u-u_r) over u with
 * x = f(x) + B u + w_hat, subject to x inside X shrunk by state_margin and u inside U shrunk by input_margin.
 * The steady state for each u is found by Newton iteration, so I - df/dx must be invertible near it.
 */
Target select_target(const SystemModel & model, const NoiseBounds & nb, const IntervalVector & X,
                     const IntervalVector & U, const Mat & H, const Mat & R, const Vec & x_r, const Vec & u_r,
                     const Vec & state_margin, const Vec & input_margin, const NlpConfig & cfg = {});

struct TerminalDesignConfig
{
  double xf_fraction = 0.02;      ///< Xf half-width as a fraction of the X width
  double margin_scale = 1.0;      ///< target keeps margin_scale * Delta_z + Xf half-width from the X boundary
  double decrease_slack = 1e-6;   ///< V_f = (1 + slack) x Riccati cost, making the decrease strict
};

struct TerminalDesign
{
  Target target;
  Mat Kf;
  Mat P;
  IntervalVector Xf;
  WidthBound width;
  /// Share of the width-dependent target margins kept (1 unless they had to be shrunk to find a target).
  double margin_factor = 1.0;
};

/**
 * @brief Target, Xf box, LQR terminal gain of the linearization at the target and its scaled Riccati cost.
 * Uses the coupled comparison form for Delta_z.
 */
TerminalDesign design_terminal(const SystemModel & model, const NoiseBounds & nb, const Gains & gains,
                               const IntervalVector & X, const IntervalVector & U, const Mat & H, const Mat & R,
                               const Vec & x_r, const Vec & u_r, const TerminalDesignConfig & cfg = {});

/// Terminal law u = u_s - Kf (x - x_s).
TerminalLaw affine_law(const Vec & u_s, const Mat & Kf, const Vec & x_s);

enum class ControllerKind
{
  kIrof,      ///< interval predictor with feedback parameterization
  kNominal,   ///< point prediction from the point estimate
  kOpenLoop,  ///< interval predictor without feedback (K = 0 inside the predictor and in the applied input)
};

std::string to_string(ControllerKind k);
ControllerKind controller_kind_from_string(const std::string & s);

struct MpcStepOutput
{
  Vec u_applied;
  Vec u_ff;                      ///< optimal feedforward sequence, flattened
  PredictionTrajectory trajectory;
  IntervalVector one_step_box;   ///< [z_lo, z_hi] at l = 1
  IntervalVector estimate_box;   ///< refined box used for this step
  Vec point_estimate;
  NlpSolution diagnostics;
  double shifted_violation = 0;  ///< violation of the shifted warm start (0 at the first step)
  bool shifted_available = false;
  bool feasible = true;          ///< false only when an infeasible solution was applied (apply_infeasible)
};

/**
 * @brief Single-owner receding-horizon controller.
 *
 * step(y_k): refine the estimate of x_k with the previous one-step prediction, solve from the shifted warm
 * start, apply u_k = -K xhat_k + u'_0, then advance the observers with (u_k, y_k).
 * Throws ControllerAbort when both the solve and the shifted warm start are infeasible, unless
 * MpcConfig::apply_infeasible is set.
 */
class MpcController
{
public:
  MpcController(ControllerKind kind, const SystemModel & model, NoiseBounds nb, Gains gains, ConstraintSets cs,
                MpcCost cost, EstimatorState init, MpcConfig cfg);

  MpcStepOutput step(const Vec & y);

  ControllerKind kind() const { return kind_; }
  const EstimatorState & estimate() const { return estimator_.state(); }
  const Gains & predictor_gains() const { return pred_gains_; }
  MpcCost & cost() { return cost_; }
  const ConstraintSets & sets() const { return cs_; }
  int step_index() const { return k_; }

private:
  Vec initial_guess(const EstimatorState & est) const;

  ControllerKind kind_;
  const SystemModel * model_;
  NoiseBounds nb_;
  Gains pred_gains_;
  ConstraintSets cs_;
  MpcCost cost_;
  MpcConfig cfg_;
  Estimator estimator_;
  std::optional<PredictorState> one_step_;
  std::optional<PredictionTrajectory> prev_traj_;
  NlpDualStart dual_;
  int k_ = 0;
};

/// Point-prediction problem used by the nominal controller: zhat+ = f(zhat) + B(u' - K zhat) + w_hat.
NlpProblem build_nominal_problem(const Vec & xhat, const SystemModel & model, const NoiseBounds & nb,
                                 const Gains & gains, const ConstraintSets & cs, const MpcCost & cost, int horizon,
                                 const NlpConfig & nlp);

/// Point trajectory of the nominal recursion (states 0..N as zero-width boxes, e = 0).
PredictionTrajectory nominal_trajectory(const Vec & xhat, const SystemModel & model, const NoiseBounds & nb,
                                        const Gains & gains, const Vec & d, int horizon);

}  // namespace irof
