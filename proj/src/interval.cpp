#include "irof/interval.hpp"

#include <sstream>

namespace irof {

IntervalVector::IntervalVector(Vec lo, Vec hi) : lo_(std::move(lo)), hi_(std::move(hi))
{
  if (lo_.size() != hi_.size()) {
    throw DimensionError("IntervalVector: lo and hi differ in size");
  }
  for (Eigen::Index i = 0; i < lo_.size(); ++i) {
    if (!(lo_[i] <= hi_[i])) {
      std::ostringstream os;
      os << "IntervalVector: lo > hi in component " << i << " (" << lo_[i] << " > " << hi_[i] << ")";
      throw IntervalInversion(os.str());
    }
  }
}

bool IntervalVector::contains(const Vec & x, double tol) const
{
  if (x.size() != size()) { throw DimensionError("IntervalVector::contains: size mismatch"); }
  return ((x.array() >= lo_.array() - tol) && (x.array() <= hi_.array() + tol)).all();
}

bool IntervalVector::contains(const IntervalVector & other, double tol) const
{
  if (other.size() != size()) { throw DimensionError("IntervalVector::contains: size mismatch"); }
  return ((other.lo_.array() >= lo_.array() - tol) && (other.hi_.array() <= hi_.array() + tol)).all();
}

SplitMatrix split(const Mat & m)
{
  SplitMatrix s;
  s.plus  = m.cwiseMax(0.0);
  s.minus = s.plus - m;
  s.abs   = s.plus + s.minus;
  return s;
}

Mat pmbox(const Mat & m)
{
  if (m.rows() != m.cols()) { throw DimensionError("pmbox: matrix must be square"); }
  const auto n = m.rows();
  const SplitMatrix s = split(m);
  Mat out(2 * n, 2 * n);
  out.topLeftCorner(n, n)     = s.plus;
  out.topRightCorner(n, n)    = -s.minus;
  out.bottomLeftCorner(n, n)  = -s.minus;
  out.bottomRightCorner(n, n) = s.plus;
  return out;
}

void bound_product_into(const SplitMatrix & m, const Vec & x_lo, const Vec & x_hi, Vec & out_lo, Vec & out_hi)
{
  out_hi.noalias() = m.plus * x_hi;
  out_hi.noalias() -= m.minus * x_lo;
  out_lo.noalias() = m.plus * x_lo;
  out_lo.noalias() -= m.minus * x_hi;
}

IntervalVector bound_product(const Mat & m, const IntervalVector & x)
{
  if (m.cols() != x.size()) { throw DimensionError("bound_product: matrix columns do not match box dimension"); }
  const SplitMatrix s = split(m);
  Vec lo, hi;
  bound_product_into(s, x.lo(), x.hi(), lo, hi);
  return IntervalVector(std::move(lo), std::move(hi));
}

IntervalVector intersect(const IntervalVector & a, const IntervalVector & b)
{
  if (a.size() != b.size()) { throw DimensionError("intersect: size mismatch"); }
  Vec lo = a.lo().cwiseMax(b.lo());
  Vec hi = a.hi().cwiseMin(b.hi());
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (lo[i] > hi[i]) {
      std::ostringstream os;
      os << "intersect: empty in component " << i << " ([" << a.lo()[i] << ", " << a.hi()[i] << "] vs ["
         << b.lo()[i] << ", " << b.hi()[i] << "])";
      throw EmptyIntersection(os.str());
    }
  }
  return IntervalVector(std::move(lo), std::move(hi));
}

IntervalVector minkowski_sum(const IntervalVector & a, const IntervalVector & b)
{
  if (a.size() != b.size()) { throw DimensionError("minkowski_sum: size mismatch"); }
  return IntervalVector(a.lo() + b.lo(), a.hi() + b.hi());
}

Vec stack_upper_first(const IntervalVector & x)
{
  Vec s(2 * x.size());
  s << x.hi(), x.lo();
  return s;
}

}  // namespace irof
