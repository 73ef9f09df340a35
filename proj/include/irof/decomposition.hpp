#pragma once

/**
 * @file
 * @brief Additive-remainder decomposition f(x) = A x + mu(x) with a Jacobian sign-stable remainder,
 * and the tight mixed-monotone decomposition function of that remainder.
 */

#include <functional>
#include <vector>

#include "irof/interval.hpp"

namespace irof {

using VecFn = std::function<Vec(const Vec &)>;
using MatFn = std::function<Mat(const Vec &)>;

/// Elementwise bounds lo <= J(x) <= hi over the domain.
struct JacobianBounds
{
  Mat lo;
  Mat hi;

  void validate() const;
};

/// F = hi^+ + lo^-, the nonnegative growth matrix of a decomposition function.
Mat f_bar(const JacobianBounds & jac);

class DecomposedModel
{
public:
  DecomposedModel() = default;

  /**
   * @brief Model with explicit linear part and remainder.
   *
   * @param mu_jac bounds of the remainder Jacobian; each entry must keep one sign (throws Error otherwise).
   * @param mu_jacobian optional analytic Jacobian of the remainder, used for linearization.
   */
  DecomposedModel(Mat a, VecFn mu, JacobianBounds mu_jac, MatFn mu_jacobian = {});

  /// f(x) = A x, remainder identically zero.
  static DecomposedModel linear(Mat a);

  Eigen::Index dim() const { return a_.rows(); }
  const Mat & A() const { return a_; }
  const JacobianBounds & mu_jac() const { return mu_jac_; }
  const Mat & F_bar() const { return f_bar_; }
  bool is_linear() const { return !mu_; }

  /// Row i holds the diagonal of the selector D^i (entries 0/1).
  const Mat & selectors() const { return selectors_; }

  Vec mu(const Vec & x) const;
  Vec f(const Vec & x) const { return a_ * x + mu(x); }

  /// Jacobian of f at x (analytic remainder Jacobian when available, central differences otherwise).
  Mat jacobian(const Vec & x) const;

  /// mu_d(x1, x2): increasing in x1, decreasing in x2, mu_d(x, x) = mu(x).
  Vec decomp(const Vec & x1, const Vec & x2) const;

  /// Adds mu_d(x1, x2) scaled by sign (+1 / -1) to out. scratch is resized as needed.
  void add_decomp(const Vec & x1, const Vec & x2, double sign, Vec & out, Vec & scratch) const;

  /// Jacobian of the remainder alone (analytic when available, central differences otherwise).
  Mat mu_jacobian(const Vec & x) const;

  /// Adds sign * d mu_d / d x1 to j1 and sign * d mu_d / d x2 to j2 (both n x n).
  void add_decomp_jacobian(const Vec & x1, const Vec & x2, double sign, Mat & j1, Mat & j2) const;

private:
  struct SelectorGroup
  {
    Eigen::VectorXd mask;             // 1 where the argument comes from x1
    std::vector<Eigen::Index> rows;   // rows of mu sharing this selector
  };

  void build_groups();

  Mat a_;
  VecFn mu_;
  MatFn mu_jacobian_;
  JacobianBounds mu_jac_;
  Mat f_bar_;
  Mat selectors_;
  std::vector<SelectorGroup> groups_;
};

/**
 * @brief Split f into A x + mu(x) with A_ij taken from one of the Jacobian bounds.
 *
 * Per entry the bound giving the smaller contribution to F_mu is used, ties go to the lower bound.
 */
DecomposedModel jss_decompose(VecFn f, const JacobianBounds & jac);

/// Same as jss_decompose, with the linear part chosen by the caller. Throws if the remainder is not JSS.
DecomposedModel jss_decompose(VecFn f, const JacobianBounds & jac, const Mat & a);

/// Free-function form of DecomposedModel::decomp.
inline Vec decomp_eval(const DecomposedModel & m, const Vec & x1, const Vec & x2) { return m.decomp(x1, x2); }

/**
 * @brief Largest amount by which sampled finite-difference Jacobians of g leave the claimed bounds.
 *
 * Samples are drawn on a deterministic low-discrepancy sequence over the box.
 */
double jacobian_bound_violation(const VecFn & g, const JacobianBounds & jac, const IntervalVector & domain,
                                int samples);

}  // namespace irof
