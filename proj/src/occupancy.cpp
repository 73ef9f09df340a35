#include "irof/occupancy.hpp"

#include <algorithm>
#include <cmath>

#include "irof/error.hpp"

namespace irof {

CellEntropy CellEntropy::shannon()
{
  return {"shannon", [](double p) {
            double h = 0.0;
            if (p > 0.0) { h -= p * std::log(p); }
            if (p < 1.0) { h -= (1.0 - p) * std::log1p(-p); }
            return h;
          }};
}

CellEntropy CellEntropy::renyi(double a)
{
  if (!(a > 0.0) || a == 1.0) { throw Error("CellEntropy::renyi: order must be positive and different from 1"); }
  return {"renyi" + std::to_string(a), [a](double p) {
            if (p <= 0.0 || p >= 1.0) { return 0.0; }
            return std::log(std::pow(p, a) + std::pow(1.0 - p, a)) / (1.0 - a);
          }};
}

OccupancyMap::OccupancyMap(Vec lo, Vec hi, int nx, int ny, std::vector<std::uint8_t> truth, CellEntropy entropy)
    : lo_(std::move(lo)), hi_(std::move(hi)), nx_(nx), ny_(ny), truth_(std::move(truth)), entropy_(std::move(entropy))
{
  if (lo_.size() != 2 || hi_.size() != 2 || !(lo_.array() < hi_.array()).all()) {
    throw DimensionError("OccupancyMap: region must be a nonempty 2-D box");
  }
  if (nx_ <= 0 || ny_ <= 0) { throw DimensionError("OccupancyMap: grid must have positive size"); }
  if (truth_.size() != static_cast<std::size_t>(nx_ * ny_)) {
    throw DimensionError("OccupancyMap: ground truth must have nx * ny cells");
  }
  prob_.assign(truth_.size(), 0.5);
  cell_h_.assign(truth_.size(), entropy_.h(0.5));
}

int OccupancyMap::cell_index(const Vec & pos) const
{
  if (pos.size() < 2 || !std::isfinite(pos[0]) || !std::isfinite(pos[1])) { return -1; }
  if (pos[0] < lo_[0] || pos[0] > hi_[0] || pos[1] < lo_[1] || pos[1] > hi_[1]) { return -1; }
  const int ix = std::min(nx_ - 1, static_cast<int>((pos[0] - lo_[0]) / (hi_[0] - lo_[0]) * nx_));
  const int iy = std::min(ny_ - 1, static_cast<int>((pos[1] - lo_[1]) / (hi_[1] - lo_[1]) * ny_));
  return iy * nx_ + ix;
}

bool OccupancyMap::measure(const Vec & pos)
{
  const int c = cell_index(pos);
  if (c < 0) {
    ++outside_;
    return false;
  }
  const double truth = truth_[static_cast<std::size_t>(c)] ? 1.0 : 0.0;
  double & p = prob_[static_cast<std::size_t>(c)];
  if (p == truth) { return false; }
  p = truth;
  cell_h_[static_cast<std::size_t>(c)] = entropy_.h(p);
  return true;
}

double OccupancyMap::entropy_gain(const Vec & pos) const
{
  const int c = cell_index(pos);
  return c < 0 ? 0.0 : cell_h_[static_cast<std::size_t>(c)];
}

namespace {

// Uniform cubic B-spline weights for fractional offset t in [0, 1).
void bspline_weights(double t, double w[4])
{
  const double t2 = t * t;
  const double t3 = t2 * t;
  w[0] = (1 - t) * (1 - t) * (1 - t) / 6.0;
  w[1] = (3 * t3 - 6 * t2 + 4) / 6.0;
  w[2] = (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0;
  w[3] = t3 / 6.0;
}

}  // namespace

double OccupancyMap::smooth_entropy_gain(const Vec & pos) const
{
  if (cell_index(pos) < 0) { return 0.0; }
  // Continuous cell coordinates with centers at integers.
  const double gx = (pos[0] - lo_[0]) / (hi_[0] - lo_[0]) * nx_ - 0.5;
  const double gy = (pos[1] - lo_[1]) / (hi_[1] - lo_[1]) * ny_ - 0.5;
  const double fx = std::floor(gx);
  const double fy = std::floor(gy);
  double wx[4], wy[4];
  bspline_weights(gx - fx, wx);
  bspline_weights(gy - fy, wy);
  const int x0 = static_cast<int>(fx) - 1;
  const int y0 = static_cast<int>(fy) - 1;
  double out = 0.0;
  for (int b = 0; b < 4; ++b) {
    const int iy = std::clamp(y0 + b, 0, ny_ - 1);
    double row = 0.0;
    for (int a = 0; a < 4; ++a) { row += wx[a] * cell_entropy(std::clamp(x0 + a, 0, nx_ - 1), iy); }
    out += wy[b] * row;
  }
  return out;
}

double OccupancyMap::total_entropy() const
{
  double s = 0.0;
  for (double h : cell_h_) { s += h; }
  return s;
}

OccupancyMap measure_cell(const OccupancyMap & m, const Vec & pos)
{
  OccupancyMap out = m;
  out.measure(pos);
  return out;
}

}  // namespace irof
