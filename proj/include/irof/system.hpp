#pragma once

#include "irof/decomposition.hpp"

namespace irof {

/// x+ = f(x) + B u + w,  y = C x + v, with f held in decomposed form.
struct SystemModel
{
  DecomposedModel f;
  Mat B;
  Mat C;

  Eigen::Index n() const { return f.dim(); }
  Eigen::Index m() const { return B.cols(); }
  Eigen::Index p() const { return C.rows(); }

  void validate() const
  {
    if (B.rows() != n()) { throw DimensionError("SystemModel: B must have n rows"); }
    if (C.cols() != n()) { throw DimensionError("SystemModel: C must have n columns"); }
  }
};

/// Observer gain L (n x p) and predictor feedback gain K (m x n); the input is u = -K xhat + u'.
struct Gains
{
  Mat L;
  Mat K;
};

}  // namespace irof
