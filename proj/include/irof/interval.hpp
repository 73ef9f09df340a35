#pragma once

/**
 * @file
 * @brief Interval vectors and the sign-split bounding operators.
 *
 * Stacked interval vectors always put the upper bound first, i.e. [hi; lo].
 */

#include <Eigen/Core>

#include "irof/error.hpp"

namespace irof {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Axis-aligned box [lo, hi] in R^n.
class IntervalVector
{
public:
  IntervalVector() = default;

  /// Throws DimensionError on size mismatch and IntervalInversion if lo > hi anywhere.
  IntervalVector(Vec lo, Vec hi);

  /// Degenerate box {x}.
  static IntervalVector point(const Vec & x) { return IntervalVector(x, x); }

  /// Box centered at c with half-widths r (r >= 0).
  static IntervalVector centered(const Vec & c, const Vec & r) { return IntervalVector(c - r, c + r); }

  const Vec & lo() const { return lo_; }
  const Vec & hi() const { return hi_; }
  Eigen::Index size() const { return lo_.size(); }

  Vec width() const { return hi_ - lo_; }
  Vec midpoint() const { return 0.5 * (lo_ + hi_); }

  /// lo - tol <= x <= hi + tol elementwise.
  bool contains(const Vec & x, double tol = 0.0) const;
  /// other is a subset of this box (with slack tol).
  bool contains(const IntervalVector & other, double tol = 0.0) const;

private:
  Vec lo_;
  Vec hi_;
};

/// Elementwise sign split of a matrix, M = plus - minus.
struct SplitMatrix
{
  Mat plus;
  Mat minus;
  Mat abs;
};

SplitMatrix split(const Mat & m);

/// The 2n x 2n block [[M+, -M-], [-M-, M+]] acting on [hi; lo].
Mat pmbox(const Mat & m);

/// Tight box image {M x : x in box}.
IntervalVector bound_product(const Mat & m, const IntervalVector & x);

/// Allocation-free form of bound_product on a pre-split matrix; writes hi and lo of M x.
void bound_product_into(const SplitMatrix & m, const Vec & x_lo, const Vec & x_hi, Vec & out_lo, Vec & out_hi);

/// Throws EmptyIntersection when the boxes are disjoint in some component.
IntervalVector intersect(const IntervalVector & a, const IntervalVector & b);

IntervalVector minkowski_sum(const IntervalVector & a, const IntervalVector & b);

/// Stack as [hi; lo].
Vec stack_upper_first(const IntervalVector & x);

}  // namespace irof
