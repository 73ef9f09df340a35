#pragma once

/**
 * @file
 * @brief Interval predictor for the coupled state / estimation-error closed loop under
 * u = -K xhat + u', and the comparison-system width bound.
 */

#include <vector>

#include "irof/estimation.hpp"

namespace irof {

struct PredictorState
{
  IntervalVector z;  ///< bounds of x_{k+l}
  IntervalVector e;  ///< bounds of e_{k+l} = xhat_{k+l} - x_{k+l}

  /// Bounds of xhat = x + e.
  IntervalVector xi() const { return minkowski_sum(z, e); }

  /// z = estimate box, e = [xhat - hi, xhat - lo].
  static PredictorState from_estimate(const EstimatorState & s) { return {s.box, s.error_box()}; }
};

struct PredictionTrajectory
{
  std::vector<PredictorState> states;  ///< N + 1 entries
  std::vector<Vec> u_ff;               ///< N entries
};

/// Unpacked predictor state used on hot paths.
struct PredictorBuffers
{
  Vec z_hi, z_lo, e_hi, e_lo;

  void resize(Eigen::Index n)
  {
    z_hi.resize(n);
    z_lo.resize(n);
    e_hi.resize(n);
    e_lo.resize(n);
  }
  static PredictorBuffers from(const PredictorState & p) { return {p.z.hi(), p.z.lo(), p.e.hi(), p.e.lo()}; }
  PredictorState to_state() const;
};

/// Derivatives of the four predictor bounds with respect to a decision vector, stacked as
/// [z_hi; z_lo; e_hi; e_lo] (4n x dim). Row-major so that the sparse step product runs along rows.
struct PredictorTangent
{
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Index n = 0;
  RowMat t;

  void resize(Eigen::Index dim_x, Eigen::Index dim)
  {
    n = dim_x;
    t.setZero(4 * dim_x, dim);
  }
  Eigen::Block<RowMat, Eigen::Dynamic, Eigen::Dynamic, true> z_hi() { return t.middleRows(0, n); }
  Eigen::Block<RowMat, Eigen::Dynamic, Eigen::Dynamic, true> z_lo() { return t.middleRows(n, n); }
  Eigen::Block<const RowMat, Eigen::Dynamic, Eigen::Dynamic, true> z_hi() const { return t.middleRows(0, n); }
  Eigen::Block<const RowMat, Eigen::Dynamic, Eigen::Dynamic, true> z_lo() const { return t.middleRows(n, n); }
  Eigen::Block<const RowMat, Eigen::Dynamic, Eigen::Dynamic, true> e_hi() const { return t.middleRows(2 * n, n); }
  Eigen::Block<const RowMat, Eigen::Dynamic, Eigen::Dynamic, true> e_lo() const { return t.middleRows(3 * n, n); }
};

/// Predictor with the sign-split matrices and affine terms precomputed.
class IntervalPredictor
{
public:
  IntervalPredictor(const SystemModel & model, const NoiseBounds & nb, const Gains & gains);

  Eigen::Index n() const { return model_->n(); }
  const SystemModel & model() const { return *model_; }
  const Gains & gains() const { return gains_; }

  /// One step. Throws IntervalInversion if any output interval is inverted.
  PredictorState step(const PredictorState & p, const Vec & u_ff) const;

  /// In-place one step on unpacked buffers; out must not alias in. Returns false on inversion.
  bool step_into(const PredictorBuffers & in, const Vec & u_ff, PredictorBuffers & out) const;

  /**
   * @brief Forward-mode derivative of step_into at `in`. Only the first `cols` columns of the tangents are
   * touched; u_ff occupies columns [u_col, u_col + m). Kinks of the sign split are taken on the active side.
   */
  void step_tangent(const PredictorBuffers & in, const PredictorTangent & tin, Eigen::Index u_col, Eigen::Index cols,
                    PredictorTangent & tout) const;

private:
  const SystemModel * model_;
  Gains gains_;
  SplitMatrix a_bk_;
  SplitMatrix neg_bk_;
  SplitMatrix a_lc_;
  Vec z_hi_offset_, z_lo_offset_, e_hi_offset_, e_lo_offset_;
  mutable Vec scratch_a_, scratch_b_, scratch_c_, scratch_d_, xi_hi_, xi_lo_, bu_;
  Mat lin_tangent_;  ///< linear part of the step in stacked [z_hi; z_lo; e_hi; e_lo] coordinates
  mutable Mat j1_, j2_, step_mat_;
};

/// Free-function form constructing the predictor on the fly.
PredictorState predictor_step(const PredictorState & p, const SystemModel & model, const NoiseBounds & nb,
                              const Gains & gains, const Vec & u_ff);

/// Roll the predictor over u_ff. Throws IntervalInversion carrying the failing step index.
PredictionTrajectory rollout(const IntervalPredictor & predictor, const PredictorState & init,
                             const std::vector<Vec> & u_ff);

/// Which comparison matrix bounds the predicted widths.
enum class ComparisonForm
{
  /// [[|A-BK| + F, |BK|], [0, |A-LC| + F]].
  kPrinted,
  /// Adds the 2F coupling from z-width into the e-width that the remainder differences generate,
  /// [[|A-BK| + F, |BK|], [2F, |A-LC| + F]]. Equal to kPrinted for linear models.
  kCoupled,
};

struct WidthBound
{
  Mat a_tilde;     ///< 2n x 2n
  Vec b;           ///< [dw; |L| dv + dw]
  Vec delta_star;  ///< [Delta_z; Delta_e] = (I - a_tilde)^{-1} b
  double rho = 0;

  Vec delta_z() const { return delta_star.head(delta_star.size() / 2); }
  Vec delta_e() const { return delta_star.tail(delta_star.size() / 2); }
};

/// Throws SpectralConditionViolated when rho(a_tilde) >= 1.
WidthBound steady_width(const SystemModel & model, const NoiseBounds & nb, const Gains & gains,
                        ComparisonForm form = ComparisonForm::kPrinted);

/// Steady observer width (I - (|A-LC| + F))^{-1} (dw + dv_L). Throws when the comparison matrix is not Schur.
Vec observer_steady_width(const SystemModel & model, const NoiseBounds & nb, const Mat & L);

}  // namespace irof
