#include "irof/decomposition.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace irof {

void JacobianBounds::validate() const
{
  if (lo.rows() != hi.rows() || lo.cols() != hi.cols()) {
    throw DimensionError("JacobianBounds: lo and hi differ in shape");
  }
  if ((lo.array() > hi.array()).any()) { throw Error("JacobianBounds: lo > hi"); }
}

Mat f_bar(const JacobianBounds & jac)
{
  jac.validate();
  const Mat hi_plus  = jac.hi.cwiseMax(0.0);
  const Mat lo_minus = jac.lo.cwiseMax(0.0) - jac.lo;
  return hi_plus + lo_minus;
}

DecomposedModel::DecomposedModel(Mat a, VecFn mu, JacobianBounds mu_jac, MatFn mu_jacobian)
    : a_(std::move(a)), mu_(std::move(mu)), mu_jacobian_(std::move(mu_jacobian)), mu_jac_(std::move(mu_jac))
{
  if (a_.rows() != a_.cols()) { throw DimensionError("DecomposedModel: A must be square"); }
  const auto n = a_.rows();
  if (mu_jac_.lo.size() == 0 && mu_jac_.hi.size() == 0) {
    mu_jac_.lo = Mat::Zero(n, n);
    mu_jac_.hi = Mat::Zero(n, n);
  }
  mu_jac_.validate();
  if (mu_jac_.lo.rows() != n || mu_jac_.lo.cols() != n) {
    throw DimensionError("DecomposedModel: remainder Jacobian bounds must be n x n");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (mu_jac_.lo(i, j) < 0.0 && mu_jac_.hi(i, j) > 0.0) {
        std::ostringstream os;
        os << "DecomposedModel: remainder is not Jacobian sign-stable at entry (" << i << ", " << j << "): ["
           << mu_jac_.lo(i, j) << ", " << mu_jac_.hi(i, j) << "]";
        throw Error(os.str());
      }
    }
  }
  f_bar_ = f_bar(mu_jac_);
  selectors_ = (mu_jac_.hi.array() > 0.0).cast<double>().matrix();
  build_groups();
}

DecomposedModel DecomposedModel::linear(Mat a)
{
  const auto n = a.rows();
  return DecomposedModel(std::move(a), VecFn{}, JacobianBounds{Mat::Zero(n, n), Mat::Zero(n, n)});
}

void DecomposedModel::build_groups()
{
  groups_.clear();
  if (!mu_) { return; }
  // Rows with the same selector pattern need a single remainder evaluation.
  std::map<std::vector<int>, std::size_t> index;
  for (Eigen::Index i = 0; i < dim(); ++i) {
    std::vector<int> key(static_cast<std::size_t>(dim()));
    for (Eigen::Index j = 0; j < dim(); ++j) { key[static_cast<std::size_t>(j)] = selectors_(i, j) > 0.5 ? 1 : 0; }
    auto [it, inserted] = index.try_emplace(key, groups_.size());
    if (inserted) { groups_.push_back({selectors_.row(i).transpose(), {}}); }
    groups_[it->second].rows.push_back(i);
  }
}

Vec DecomposedModel::mu(const Vec & x) const
{
  if (!mu_) { return Vec::Zero(dim()); }
  return mu_(x);
}

Mat DecomposedModel::mu_jacobian(const Vec & x) const
{
  const auto n = dim();
  if (!mu_) { return Mat::Zero(n, n); }
  if (mu_jacobian_) { return mu_jacobian_(x); }
  Mat j(n, n);
  Vec xp = x, xm = x;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[k]));
    xp[k] = x[k] + h;
    xm[k] = x[k] - h;
    j.col(k) = (mu_(xp) - mu_(xm)) / (2.0 * h);
    xp[k] = x[k];
    xm[k] = x[k];
  }
  return j;
}

void DecomposedModel::add_decomp_jacobian(const Vec & x1, const Vec & x2, double sign, Mat & j1, Mat & j2) const
{
  if (!mu_) { return; }
  const auto n = dim();
  Vec p(n);
  for (const auto & g : groups_) {
    for (Eigen::Index i = 0; i < n; ++i) { p[i] = g.mask[i] != 0.0 ? x1[i] : x2[i]; }
    const Mat jm = mu_jacobian(p);
    for (auto r : g.rows) {
      for (Eigen::Index c = 0; c < n; ++c) {
        if (g.mask[c] != 0.0) {
          j1(r, c) += sign * jm(r, c);
        } else {
          j2(r, c) += sign * jm(r, c);
        }
      }
    }
  }
}

Mat DecomposedModel::jacobian(const Vec & x) const
{
  if (!mu_) { return a_; }
  return a_ + mu_jacobian(x);
}

Vec DecomposedModel::decomp(const Vec & x1, const Vec & x2) const
{
  Vec out = Vec::Zero(dim());
  Vec scratch;
  add_decomp(x1, x2, 1.0, out, scratch);
  return out;
}

void DecomposedModel::add_decomp(const Vec & x1, const Vec & x2, double sign, Vec & out, Vec & scratch) const
{
  if (!mu_) { return; }
  for (const auto & g : groups_) {
    scratch.resize(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) { scratch[i] = g.mask[i] != 0.0 ? x1[i] : x2[i]; }
    const Vec v = mu_(scratch);
    for (auto r : g.rows) { out[r] += sign * v[r]; }
  }
}

namespace {

Mat choose_linear_part(const JacobianBounds & jac)
{
  // A = lower bound leaves a remainder Jacobian in [0, hi - lo], A = upper bound one in [lo - hi, 0]; both
  // contribute hi - lo to F_mu, so the tie rule applies everywhere and the lower bound is taken.
  return jac.lo;
}

}  // namespace

DecomposedModel jss_decompose(VecFn f, const JacobianBounds & jac)
{
  jac.validate();
  return jss_decompose(std::move(f), jac, choose_linear_part(jac));
}

DecomposedModel jss_decompose(VecFn f, const JacobianBounds & jac, const Mat & a)
{
  jac.validate();
  if (a.rows() != jac.lo.rows() || a.cols() != jac.lo.cols()) {
    throw DimensionError("jss_decompose: A does not match the Jacobian bounds");
  }
  JacobianBounds mu_jac{jac.lo - a, jac.hi - a};
  VecFn mu = [f = std::move(f), a](const Vec & x) -> Vec { return f(x) - a * x; };
  return DecomposedModel(a, std::move(mu), std::move(mu_jac));
}

namespace {

double radical_inverse(std::uint64_t index, std::uint64_t base)
{
  double inv = 1.0 / static_cast<double>(base);
  double f = inv;
  double r = 0.0;
  while (index > 0) {
    r += f * static_cast<double>(index % base);
    index /= base;
    f *= inv;
  }
  return r;
}

constexpr std::uint64_t kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

}  // namespace

double jacobian_bound_violation(const VecFn & g, const JacobianBounds & jac, const IntervalVector & domain,
                                int samples)
{
  const auto n = domain.size();
  if (n > static_cast<Eigen::Index>(std::size(kPrimes))) { throw DimensionError("jacobian_bound_violation: n > 16"); }
  double worst = 0.0;
  Vec x(n);
  for (int s = 1; s <= samples; ++s) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double t = radical_inverse(static_cast<std::uint64_t>(s), kPrimes[k]);
      x[k] = domain.lo()[k] + t * (domain.hi()[k] - domain.lo()[k]);
    }
    Vec xp = x, xm = x;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[k]));
      xp[k] = x[k] + h;
      xm[k] = x[k] - h;
      const Vec col = (g(xp) - g(xm)) / (2.0 * h);
      xp[k] = x[k];
      xm[k] = x[k];
      for (Eigen::Index i = 0; i < col.size(); ++i) {
        worst = std::max(worst, jac.lo(i, k) - col[i]);
        worst = std::max(worst, col[i] - jac.hi(i, k));
      }
    }
  }
  return worst;
}

}  // namespace irof
