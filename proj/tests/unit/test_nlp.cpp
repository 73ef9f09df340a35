#include <doctest.h>

#include <cmath>
#include <limits>

#include "irof/nlp.hpp"
#include "oracles.hpp"

using namespace irof;

namespace {

/// min 0.5 d'Qd + c'd  s.t.  A d <= b, |d| <= box, with exact derivatives.
NlpProblem qp_problem(const Mat & Q, const Vec & c, const Mat & A, const Vec & b, double box)
{
  NlpProblem p;
  p.dim = static_cast<int>(Q.rows());
  p.num_constraints = static_cast<int>(A.rows());
  p.lower = Vec::Constant(p.dim, -box);
  p.upper = Vec::Constant(p.dim, box);
  p.evaluate = [=](const Vec & d, double & f, Vec & g) {
    f = 0.5 * d.dot(Q * d) + c.dot(d);
    g = A * d - b;
  };
  p.derivatives = [=](const Vec & d, double, const Vec &, Vec & grad, Mat & jac) {
    grad = Q * d + c;
    jac = A;
  };
  return p;
}

}  // namespace

TEST_SUITE("nlp_solver")
{
  TEST_CASE("unconstrained quadratic")
  {
    Mat Q(2, 2);
    Q << 4, 1, 1, 3;
    Vec c(2);
    c << 1, 2;
    const NlpProblem p = qp_problem(Q, c, Mat::Zero(0, 2), Vec::Zero(0), 100.0);
    const NlpSolution s = minimize(p, Vec::Zero(2));
    const Vec ref = Q.ldlt().solve(-c);
    CHECK((s.point - ref).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(s.status == NlpStatus::kOptimal);
    CHECK(s.max_violation == 0.0);
  }

  TEST_CASE("one active constraint: min d^2 s.t. d >= 1")
  {
    const NlpProblem p = NlpProblem::from_functions(
        1, [](const Vec & d) { return d[0] * d[0]; }, [](const Vec & d) { return Vec::Constant(1, 1.0 - d[0]); }, 1,
        Vec::Constant(1, -10.0), Vec::Constant(1, 10.0));
    const NlpSolution s = minimize(p, Vec::Constant(1, 5.0));
    CHECK(s.point[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(s.objective_value == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(s.max_violation <= 1e-6);
    REQUIRE(s.multipliers.size() == 1);
    CHECK(s.multipliers[0] == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(s.status == NlpStatus::kOptimal);
  }

  TEST_CASE("bounds alone")
  {
    const NlpProblem p = NlpProblem::from_functions(
        2, [](const Vec & d) { return (d - Vec::Constant(2, 3.0)).squaredNorm(); }, [](const Vec &) { return Vec(); },
        0, Vec::Constant(2, -1.0), Vec::Constant(2, 1.0));
    const NlpSolution s = minimize(p, Vec::Constant(2, 50.0));
    CHECK((s.point - Vec::Constant(2, 1.0)).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("random convex QPs against the dual active-set oracle")
  {
    StreamRng rng(1, Stream::kTest);
    double worst = 0.0;
    for (int t = 0; t < 40; ++t) {
      const Eigen::Index n = 2 + t % 6, m = 1 + t % 7;
      const Mat M = oracle::random_matrix(rng, n, n, 1.0);
      const Mat Q = M * M.transpose() + 0.1 * Mat::Identity(n, n);
      const Vec c = oracle::random_matrix(rng, n, 1, 3.0);
      const Mat A = oracle::random_matrix(rng, m, n, 1.0);
      Vec b(m);
      for (Eigen::Index i = 0; i < m; ++i) { b[i] = oracle::uniform(rng, 0.1, 1.0); }
      const double box = 2.0;
      Mat Ab(m + 2 * n, n);
      Ab << A, Mat::Identity(n, n), -Mat::Identity(n, n);
      Vec bb(m + 2 * n);
      bb << b, Vec::Constant(2 * n, box);
      const oracle::QpResult ref = oracle::solve_qp(Q, c, Ab, bb);
      REQUIRE(ref.feasible);

      NlpConfig cfg;
      cfg.feas_tol = 1e-9;
      cfg.kkt_tol = 1e-9;
      const NlpSolution s = minimize(qp_problem(Q, c, A, b, box), Vec::Zero(n), cfg);
      CHECK(s.max_violation <= 1e-9);
      const double rel = std::abs(s.objective_value - ref.objective) / std::max(1.0, std::abs(ref.objective));
      worst = std::max(worst, rel);
    }
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("structured and plain inner Hessians reach the same point")
  {
    StreamRng rng(2, Stream::kTest);
    const Eigen::Index n = 5, m = 4;
    const Mat M = oracle::random_matrix(rng, n, n, 1.0);
    const Mat Q = M * M.transpose() + Mat::Identity(n, n);
    const Vec c = oracle::random_matrix(rng, n, 1, 3.0);
    const Mat A = oracle::random_matrix(rng, m, n, 1.0);
    const Vec b = Vec::Constant(m, 0.2);
    NlpConfig cfg;
    cfg.feas_tol = 1e-9;
    cfg.kkt_tol = 1e-9;
    const NlpSolution a = minimize(qp_problem(Q, c, A, b, 3.0), Vec::Zero(n), cfg);
    cfg.structured_hessian = false;
    cfg.max_inner = 2000;
    const NlpSolution p = minimize(qp_problem(Q, c, A, b, 3.0), Vec::Zero(n), cfg);
    CHECK(a.objective_value == doctest::Approx(p.objective_value).epsilon(1e-6));
  }

  TEST_CASE("Rosenbrock inside a box")
  {
    NlpConfig cfg;
    cfg.central_differences = true;
    cfg.max_inner = 2000;
    const NlpProblem p = NlpProblem::from_functions(
        2,
        [](const Vec & d) { return 100.0 * std::pow(d[1] - d[0] * d[0], 2) + std::pow(1.0 - d[0], 2); },
        [](const Vec &) { return Vec(); }, 0, Vec::Constant(2, -2.0), Vec::Constant(2, 0.5));
    const NlpSolution s = minimize(p, Vec::Constant(2, -1.5), cfg);
    // Constrained minimum sits on d0 = 0.5 with d1 = 0.25.
    CHECK(s.point[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(s.point[1] == doctest::Approx(0.25).epsilon(1e-4));
  }

  TEST_CASE("infeasible problem returns the least violating point")
  {
    // d >= 2 and d <= 1 cannot both hold.
    const NlpProblem p = NlpProblem::from_functions(
        1, [](const Vec & d) { return d[0] * d[0]; },
        [](const Vec & d) {
          Vec g(2);
          g << 2.0 - d[0], d[0] - 1.0;
          return g;
        },
        2, Vec::Constant(1, -10.0), Vec::Constant(1, 10.0));
    NlpConfig cfg;
    cfg.max_outer = 15;
    const NlpSolution s = minimize(p, Vec::Constant(1, 0.0), cfg);
    CHECK(s.status == NlpStatus::kInfeasible);
    CHECK(s.max_violation == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(s.max_violation <= 2.0);
    CHECK(s.violation_history.front() == doctest::Approx(2.0));
  }

  TEST_CASE("non-finite objective is reported")
  {
    const NlpProblem p = NlpProblem::from_functions(
        1, [](const Vec & d) { return d[0] > 0.5 ? std::numeric_limits<double>::quiet_NaN() : d[0]; },
        [](const Vec &) { return Vec(); }, 0, Vec::Constant(1, -1.0), Vec::Constant(1, 1.0));
    CHECK_THROWS_AS(minimize(p, Vec::Constant(1, 0.9)), NonFiniteEvaluation);
  }

  TEST_CASE("finite differences")
  {
    const NlpProblem p = NlpProblem::from_functions(
        2, [](const Vec & d) { return std::sin(d[0]) * d[1]; },
        [](const Vec & d) {
          Vec g(1);
          g << d[0] * d[0] - d[1];
          return g;
        },
        1, Vec::Constant(2, -5.0), Vec::Constant(2, 5.0));
    Vec d(2);
    d << 0.3, -1.2;
    double f;
    Vec g;
    p.evaluate(d, f, g);
    Vec grad;
    Mat jac;
    int evals = 0;
    NlpConfig cfg;
    finite_difference(p, d, f, g, grad, jac, cfg, &evals);
    CHECK(evals == 2);
    CHECK(grad[0] == doctest::Approx(std::cos(0.3) * -1.2).epsilon(1e-5));
    CHECK(grad[1] == doctest::Approx(std::sin(0.3)).epsilon(1e-5));
    CHECK(jac(0, 0) == doctest::Approx(0.6).epsilon(1e-5));
    CHECK(jac(0, 1) == doctest::Approx(-1.0).epsilon(1e-5));
    cfg.central_differences = true;
    evals = 0;
    finite_difference(p, d, f, g, grad, jac, cfg, &evals);
    CHECK(evals == 4);
    CHECK(grad[0] == doctest::Approx(std::cos(0.3) * -1.2).epsilon(1e-9));
  }

  TEST_CASE("dual warm start from a converged solve")
  {
    StreamRng rng(3, Stream::kTest);
    const Eigen::Index n = 6, m = 5;
    const Mat M = oracle::random_matrix(rng, n, n, 1.0);
    const Mat Q = M * M.transpose() + Mat::Identity(n, n);
    const Vec c = oracle::random_matrix(rng, n, 1, 5.0);
    const Mat A = oracle::random_matrix(rng, m, n, 1.0);
    const Vec b = Vec::Constant(m, 0.1);
    const NlpProblem p = qp_problem(Q, c, A, b, 3.0);
    const NlpSolution cold = minimize(p, Vec::Zero(n));
    const NlpSolution warm = minimize(p, cold.point, NlpConfig{}, NlpDualStart{cold.multipliers, cold.penalty});
    CHECK(warm.objective_value <= cold.objective_value + 1e-6 * std::max(1.0, std::abs(cold.objective_value)));
    CHECK(warm.outer_iterations <= cold.outer_iterations);
    // Wrong-size multipliers are ignored.
    const NlpSolution ignored = minimize(p, Vec::Zero(n), NlpConfig{}, NlpDualStart{Vec::Ones(2), -1.0});
    CHECK(ignored.objective_value == doctest::Approx(cold.objective_value).epsilon(1e-9));
  }

  TEST_CASE("max_violation")
  {
    CHECK(max_violation(Vec()) == 0.0);
    Vec g(3);
    g << -1, 0.5, 0.2;
    CHECK(max_violation(g) == 0.5);
    CHECK(max_violation(-g.cwiseAbs()) == 0.0);
  }
}
