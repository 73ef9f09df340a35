#include "irof/linalg.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>

namespace irof {

namespace {

double dense_radius(const Mat & m)
{
  Eigen::EigenSolver<Mat> es(m, false);
  if (es.info() != Eigen::Success) { throw Error("spectral_radius: eigensolver failed"); }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

double spectral_radius(const Mat & m, double tol)
{
  if (m.rows() != m.cols()) { throw DimensionError("spectral_radius: matrix must be square"); }
  if (m.size() == 0) { return 0.0; }
  if (!m.allFinite()) { throw Error("spectral_radius: non-finite entries"); }
  if ((m.array() < 0.0).any()) { return dense_radius(m); }

  // rho(M + I) = rho(M) + 1 for nonnegative M; the shift removes periodicity.
  const auto n = m.rows();
  const Mat shifted = m + Mat::Identity(n, n);
  Vec x = Vec::Ones(n);
  for (int it = 0; it < 2000; ++it) {
    const Vec y = shifted * x;
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(x[i] > 1e-280)) { return dense_radius(m); }
      const double r = y[i] / x[i];
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    if (hi - lo <= tol * std::max(1.0, hi)) { return std::max(0.0, 0.5 * (lo + hi) - 1.0); }
    x = y / y.maxCoeff();
  }
  return dense_radius(m);
}

Mat solve_dare(const Mat & a, const Mat & b, const Mat & q, const Mat & r)
{
  const auto n = a.rows();
  const Mat i_n = Mat::Identity(n, n);
  Mat ak = a;
  Mat gk = b * r.ldlt().solve(b.transpose());
  Mat hk = q;
  for (int it = 0; it < 200; ++it) {
    const Eigen::PartialPivLU<Mat> w(i_n + gk * hk);
    const Mat w_a = w.solve(ak);
    const Mat w_g = w.solve(gk);
    const Mat h_next = hk + ak.transpose() * hk * w_a;
    gk = gk + ak * w_g * ak.transpose();
    ak = ak * w_a;
    const double change = (h_next - hk).cwiseAbs().maxCoeff();
    hk = 0.5 * (h_next + h_next.transpose());
    if (change <= 1e-13 * std::max(1.0, hk.cwiseAbs().maxCoeff())) { break; }
  }
  if (!hk.allFinite()) { throw Error("solve_dare: did not converge"); }
  return hk;
}

Mat lqr_gain(const Mat & a, const Mat & b, const Mat & q, const Mat & r)
{
  const Mat p = solve_dare(a, b, q, r);
  return (r + b.transpose() * p * b).ldlt().solve(b.transpose() * p * a);
}

Mat kalman_gain(const Mat & a, const Mat & c, const Mat & q, const Mat & r)
{
  const Mat p = solve_dare(a.transpose(), c.transpose(), q, r);
  const Mat s = c * p * c.transpose() + r;
  return a * p * c.transpose() * s.inverse();
}

Mat solve_dlyap(const Mat & a, const Mat & q)
{
  Mat p  = q;
  Mat ak = a;
  for (int it = 0; it < 100; ++it) {
    const Mat next = p + ak.transpose() * p * ak;
    ak = ak * ak;
    const double change = (next - p).cwiseAbs().maxCoeff();
    p = next;
    if (change <= 1e-15 * std::max(1.0, p.cwiseAbs().maxCoeff())) { break; }
  }
  if (!p.allFinite()) { throw Error("solve_dlyap: A is not Schur stable"); }
  return 0.5 * (p + p.transpose());
}

}  // namespace irof
