#pragma once

/**
 * @file
 * @brief Interval observer, midpoint-type point observer and the prediction-based refinement.
 *
 * Timing: the box held at time k bounds x_k. The pair (u_k, y_k) produces the box bounding x_{k+1}.
 */

#include "irof/interval.hpp"
#include "irof/system.hpp"

namespace irof {

/// Process and measurement noise boxes together with the quantities derived from the observer gain.
struct NoiseBounds
{
  IntervalVector w;
  IntervalVector v;
  Vec w_hat;
  IntervalVector v_L;  ///< box image of L v
  Vec v_L_hat;

  static NoiseBounds make(IntervalVector w, IntervalVector v, const Mat & L);
};

struct EstimatorState
{
  IntervalVector box;
  Vec point;
  Gains gains;

  /// Box [xhat - hi, xhat - lo] containing e = xhat - x.
  IntervalVector error_box() const;

  /// Initial state with the point estimate at the box midpoint.
  static EstimatorState init(IntervalVector box0, Gains gains);
};

/// Next interval-observer box. Throws IntervalInversion if the result is inverted.
IntervalVector observer_step(const EstimatorState & s, const SystemModel & model, const NoiseBounds & nb,
                             const Vec & u, const Vec & y);

/// xhat+ = (A - L C) xhat + B u + w_hat - v_L_hat + L y + mu(xhat).
Vec point_observer_step(const EstimatorState & s, const SystemModel & model, const NoiseBounds & nb, const Vec & u,
                        const Vec & y);

/// u = -K xhat + u'.
Vec feedback_input(const EstimatorState & s, const Vec & u_ff);

/// Intersect the estimate with a predicted box. Throws EmptyIntersection when they are disjoint.
EstimatorState refine_with_prediction(const EstimatorState & s, const IntervalVector & pred_box);

/// Single-owner stepper bundling both observers.
class Estimator
{
public:
  Estimator(const SystemModel & model, NoiseBounds nb, EstimatorState init);

  const EstimatorState & state() const { return state_; }
  const NoiseBounds & noise() const { return nb_; }

  /// Advance both observers with the input applied at this step and the measurement taken at it.
  void update(const Vec & u, const Vec & y);

  void refine(const IntervalVector & pred_box) { state_ = refine_with_prediction(state_, pred_box); }

private:
  const SystemModel * model_;
  NoiseBounds nb_;
  EstimatorState state_;
};

}  // namespace irof
