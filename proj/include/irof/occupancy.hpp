#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "irof/interval.hpp"

namespace irof {

/// Entropy of a Bernoulli(p) cell. Admissible: concave on [0, 1], zero at 0 and 1, maximal at 0.5.
struct CellEntropy
{
  std::string name;
  std::function<double(double)> h;

  static CellEntropy shannon();
  /// Binary Renyi entropy of order a (a > 0, a != 1); concave for a <= 2.
  static CellEntropy renyi(double a);
};

/// Square-cell grid over a rectangle with per-cell occupancy probabilities and hidden ground truth.
class OccupancyMap
{
public:
  OccupancyMap() = default;
  /// All cells start at probability 0.5. truth is row-major (iy * nx + ix) and must have nx * ny entries.
  OccupancyMap(Vec lo, Vec hi, int nx, int ny, std::vector<std::uint8_t> truth,
               CellEntropy entropy = CellEntropy::shannon());

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  const Vec & lo() const { return lo_; }
  const Vec & hi() const { return hi_; }
  const std::vector<double> & probabilities() const { return prob_; }
  const std::vector<std::uint8_t> & truth() const { return truth_; }
  const CellEntropy & entropy() const { return entropy_; }
  int outside_count() const { return outside_; }

  /// Flat cell index of pos, or -1 outside the region (upper edges belong to the last cell).
  int cell_index(const Vec & pos) const;

  /// Reveal the cell containing pos. Returns true if its probability changed. Outside the region: no-op,
  /// counted in outside_count().
  bool measure(const Vec & pos);

  /// H(p(cell(pos))); 0 outside the region.
  double entropy_gain(const Vec & pos) const;

  /// Cubic B-spline smoothing of the cell entropies (knots at cell centers, border cells repeated),
  /// 0 outside the region. A twice-differentiable stand-in for entropy_gain used by the optimizer.
  double smooth_entropy_gain(const Vec & pos) const;

  /// Sum of cell entropies.
  double total_entropy() const;

private:
  double cell_entropy(int ix, int iy) const { return cell_h_[static_cast<std::size_t>(iy * nx_ + ix)]; }

  Vec lo_, hi_;
  int nx_ = 0, ny_ = 0;
  std::vector<double> prob_;
  std::vector<double> cell_h_;  ///< entropy of each cell, refreshed on measure
  std::vector<std::uint8_t> truth_;
  CellEntropy entropy_;
  int outside_ = 0;
};

/// Copying form of OccupancyMap::measure.
OccupancyMap measure_cell(const OccupancyMap & m, const Vec & pos);

/// Free-function form of OccupancyMap::entropy_gain.
inline double entropy_gain(const OccupancyMap & m, const Vec & pos) { return m.entropy_gain(pos); }

}  // namespace irof
