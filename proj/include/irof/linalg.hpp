#pragma once

#include "irof/interval.hpp"

namespace irof {

/**
 * @brief Spectral radius.
 *
 * Nonnegative matrices go through shifted power iteration with Collatz-Wielandt bounds (converged when the
 * bracket is below tol). Matrices that are not nonnegative, or where the iteration does not settle
 * (reducible Perron vector with zero entries), use the dense eigensolver.
 */
double spectral_radius(const Mat & m, double tol = 1e-10);

/// Stabilizing solution of P = Q + A'PA - A'PB (R + B'PB)^{-1} B'PA (structured doubling).
Mat solve_dare(const Mat & a, const Mat & b, const Mat & q, const Mat & r);

/// u = -K x minimizing sum x'Qx + u'Ru.
Mat lqr_gain(const Mat & a, const Mat & b, const Mat & q, const Mat & r);

/// Predictor-form steady-state Kalman gain, xhat+ = A xhat + L (y - C xhat).
Mat kalman_gain(const Mat & a, const Mat & c, const Mat & q, const Mat & r);

/// P = Q + A'PA for Schur-stable A.
Mat solve_dlyap(const Mat & a, const Mat & q);

}  // namespace irof
