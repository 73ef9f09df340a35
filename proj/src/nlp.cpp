#include "irof/nlp.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "irof/error.hpp"

namespace irof {

NlpProblem NlpProblem::from_functions(int dim, std::function<double(const Vec &)> objective,
                                      std::function<Vec(const Vec &)> constraints, int num_constraints, Vec lower,
                                      Vec upper)
{
  NlpProblem p;
  p.dim = dim;
  p.num_constraints = num_constraints;
  p.lower = std::move(lower);
  p.upper = std::move(upper);
  p.evaluate = [objective = std::move(objective), constraints = std::move(constraints),
                num_constraints](const Vec & d, double & f, Vec & g) {
    f = objective(d);
    if (num_constraints > 0) {
      g = constraints(d);
    } else {
      g.resize(0);
    }
  };
  return p;
}

std::string to_string(NlpStatus s)
{
  switch (s) {
    case NlpStatus::kOptimal: return "optimal";
    case NlpStatus::kFeasibleSuboptimal: return "feasible_suboptimal";
    case NlpStatus::kInfeasible: return "infeasible";
    case NlpStatus::kIterationLimit: return "iteration_limit";
  }
  return "unknown";
}

double max_violation(const Vec & g)
{
  return g.size() == 0 ? 0.0 : std::max(0.0, g.maxCoeff());
}

namespace {

void check_finite(double f, const Vec & g, int variable)
{
  if (!std::isfinite(f)) {
    throw NonFiniteEvaluation("nlp: non-finite objective" +
                                  (variable >= 0 ? " (perturbing variable " + std::to_string(variable) + ")"
                                                 : std::string()),
                              variable);
  }
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw NonFiniteEvaluation("nlp: non-finite constraint " + std::to_string(i) +
                                    (variable >= 0 ? " (perturbing variable " + std::to_string(variable) + ")"
                                                   : std::string()),
                                variable);
    }
  }
}

class Solver
{
public:
  Solver(const NlpProblem & p, const NlpConfig & cfg) : p_(p), cfg_(cfg)
  {
    if (p.dim <= 0) { throw DimensionError("nlp: dim must be positive"); }
    if (p.lower.size() != p.dim || p.upper.size() != p.dim) { throw DimensionError("nlp: bounds size mismatch"); }
    if ((p.lower.array() > p.upper.array()).any()) { throw DimensionError("nlp: lower bound above upper bound"); }
    if (!p.evaluate) { throw Error("nlp: evaluate callback missing"); }
  }

  NlpSolution run(const Vec & warm, const NlpDualStart & dual)
  {
    if (warm.size() != p_.dim) { throw DimensionError("nlp: warm start size mismatch"); }
    Vec x = warm.cwiseMax(p_.lower).cwiseMin(p_.upper);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x[i])) { throw NonFiniteEvaluation("nlp: non-finite warm start", static_cast<int>(i)); }
    }

    double f;
    Vec g;
    eval(x, f, g, -1);
    scale_ = 1.0 / std::max(1.0, std::abs(f));
    offer(x, f, g);

    const Eigen::Index m = p_.num_constraints;
    // Internally f is scaled by scale_; multipliers and penalty are exchanged in the units of the problem.
    lambda_ = dual.multipliers.size() == m ? Vec(scale_ * dual.multipliers.cwiseMax(0.0)) : Vec(Vec::Zero(m));
    rho_ = dual.penalty > 0 ? std::min(cfg_.max_penalty, scale_ * dual.penalty) : cfg_.initial_penalty;
    sol_.violation_history.push_back(best_viol_);

    double viol = max_violation(g);
    bool converged = false;
    for (int outer = 0; outer < cfg_.max_outer; ++outer) {
      const double omega = std::max(0.1 * cfg_.kkt_tol, std::pow(0.1, outer + 2));
      const double pg = inner(x, f, g, omega);
      ++sol_.outer_iterations;

      const double new_viol = max_violation(g);
      Vec lam_next = (lambda_ + rho_ * g).cwiseMax(0.0);
      const double comp = complementarity(lam_next, g);
      sol_.violation_history.push_back(best_viol_);
      if (new_viol <= cfg_.feas_tol && std::max(pg, comp) <= cfg_.kkt_tol) {
        lambda_ = lam_next;
        converged = true;
        break;
      }
      lambda_ = lam_next;
      if (new_viol > cfg_.feas_tol && new_viol > 0.25 * viol) {
        if (rho_ >= cfg_.max_penalty) {
          penalty_maxed_ = true;
          if (stalled_) { break; }
        }
        rho_ = std::min(cfg_.max_penalty, rho_ * cfg_.penalty_growth);
      }
      viol = new_viol;
    }

    sol_.point = best_x_;
    sol_.objective_value = best_f_;
    sol_.max_violation = best_viol_;
    sol_.multipliers = lambda_ / scale_;
    sol_.penalty = rho_ / scale_;
    sol_.kkt_residual = kkt_at(best_x_, best_f_, best_g_);
    const bool feasible = best_viol_ <= cfg_.feas_tol;
    if (feasible && sol_.kkt_residual <= cfg_.kkt_tol) {
      sol_.status = NlpStatus::kOptimal;
    } else if (feasible) {
      sol_.status = NlpStatus::kFeasibleSuboptimal;
    } else if (penalty_maxed_ || (converged && !feasible)) {
      sol_.status = NlpStatus::kInfeasible;
    } else {
      sol_.status = NlpStatus::kIterationLimit;
    }
    return sol_;
  }

private:
  void eval(const Vec & x, double & f, Vec & g, int variable)
  {
    p_.evaluate(x, f, g);
    ++sol_.evaluations;
    if (g.size() != p_.num_constraints) { throw DimensionError("nlp: constraint vector size mismatch"); }
    check_finite(f, g, variable);
  }

  void derivs(const Vec & x, double f, const Vec & g, Vec & grad, Mat & jac)
  {
    if (p_.derivatives) {
      p_.derivatives(x, f, g, grad, jac);
      if (!grad.allFinite() || !jac.allFinite()) { throw NonFiniteEvaluation("nlp: non-finite derivative", -1); }
    } else {
      finite_difference(p_, x, f, g, grad, jac, cfg_, &sol_.evaluations);
    }
  }

  bool better(double f, double viol) const
  {
    const bool feas = viol <= cfg_.feas_tol;
    const bool best_feas = best_viol_ <= cfg_.feas_tol;
    if (!have_best_) { return true; }
    if (feas != best_feas) { return feas; }
    if (feas) { return f < best_f_; }
    return viol < best_viol_;
  }

  void offer(const Vec & x, double f, const Vec & g)
  {
    const double viol = max_violation(g);
    if (better(f, viol)) {
      best_x_ = x;
      best_f_ = f;
      best_g_ = g;
      best_viol_ = viol;
      have_best_ = true;
    }
  }

  // Scaled augmented Lagrangian value and gradient.
  double merit(double f, const Vec & g) const
  {
    double v = scale_ * f;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double t = std::max(0.0, lambda_[i] + rho_ * g[i]);
      v += (t * t - lambda_[i] * lambda_[i]) / (2.0 * rho_);
    }
    return v;
  }

  Vec merit_grad(const Vec & g, const Vec & grad, const Mat & jac) const
  {
    Vec out = scale_ * grad;
    if (g.size() > 0) {
      const Vec t = (lambda_ + rho_ * g).cwiseMax(0.0);
      out.noalias() += jac.transpose() * t;
    }
    return out;
  }

  double projected_gradient_norm(const Vec & x, const Vec & gr) const
  {
    const Vec step = (x - gr).cwiseMax(p_.lower).cwiseMin(p_.upper) - x;
    return step.size() ? step.cwiseAbs().maxCoeff() : 0.0;
  }

  static double complementarity(const Vec & lam, const Vec & g)
  {
    double c = 0.0;
    for (Eigen::Index i = 0; i < g.size(); ++i) { c = std::max(c, std::abs(std::min(lam[i], -g[i]))); }
    return c;
  }

  double kkt_at(const Vec & x, double f, const Vec & g)
  {
    Vec grad;
    Mat jac;
    derivs(x, f, g, grad, jac);
    Vec lag = scale_ * grad;
    if (g.size() > 0) { lag.noalias() += jac.transpose() * lambda_; }
    return std::max(projected_gradient_norm(x, lag), complementarity(lambda_, g));
  }

  // Projected BFGS on the augmented Lagrangian. Returns the final projected-gradient norm.
  double inner(Vec & x, double & f, Vec & g, double omega)
  {
    const Eigen::Index n = x.size();
    Vec grad;
    Mat jac;
    derivs(x, f, g, grad, jac);
    double phi = merit(f, g);
    Vec gr = merit_grad(g, grad, jac);
    Mat hess = Mat::Identity(n, n);  // whole merit (plain) or the part not covered by rho J_A^T J_A
    Mat model;
    bool fresh = true;
    stalled_ = false;
    const bool structured = cfg_.structured_hessian && g.size() > 0;
    Mat gn;
    auto penalty_curvature = [&](const Vec & gv, const Mat & jv) {
      // Rows active in the shifted penalty, scaled so that gn = rho J_A^T J_A.
      int k = 0;
      for (Eigen::Index i = 0; i < gv.size(); ++i) { k += lambda_[i] + rho_ * gv[i] > 0; }
      Mat ja(k, n);
      k = 0;
      for (Eigen::Index i = 0; i < gv.size(); ++i) {
        if (lambda_[i] + rho_ * gv[i] > 0) { ja.row(k++) = jv.row(i); }
      }
      gn.setZero(n, n);
      if (k > 0) { gn.selfadjointView<Eigen::Lower>().rankUpdate(ja.transpose(), rho_); }
      gn.triangularView<Eigen::StrictlyUpper>() = gn.transpose();
    };
    if (structured) { penalty_curvature(g, jac); }

    double pg = projected_gradient_norm(x, gr);
    for (int it = 0; it < cfg_.max_inner && pg > omega; ++it) {
      ++sol_.iterations;
      // Variables held at a bound by the gradient are fixed for this step.
      std::vector<Eigen::Index> free;
      free.reserve(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) {
        const double span = 1e-12 * std::max(1.0, std::abs(x[i]));
        const bool at_lo = x[i] <= p_.lower[i] + span && gr[i] > 0;
        const bool at_hi = x[i] >= p_.upper[i] - span && gr[i] < 0;
        if (!at_lo && !at_hi) { free.push_back(i); }
      }
      Vec dir = Vec::Zero(n);
      if (!free.empty()) {
        const auto nf = static_cast<Eigen::Index>(free.size());
        Mat hf(nf, nf);
        Vec gf(nf);
        if (structured) {
          model = hess + gn;
        }
        const Mat & h = structured ? model : hess;
        for (Eigen::Index a = 0; a < nf; ++a) {
          gf[a] = gr[free[a]];
          for (Eigen::Index b = 0; b < nf; ++b) { hf(a, b) = h(free[a], free[b]); }
        }
        const Eigen::LLT<Mat> llt(hf);
        const Vec df = llt.info() == Eigen::Success ? Vec(llt.solve(-gf)) : Vec(-gf);
        for (Eigen::Index a = 0; a < nf; ++a) { dir[free[a]] = df[a]; }
      }
      if (!(gr.dot(dir) < 0)) {
        dir = -gr;
        hess.setIdentity();
        fresh = true;
      }

      bool accepted = false;
      Vec x_new, g_new;
      double f_new = 0, phi_new = 0;
      double t = 1.0;
      for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
        x_new = (x + t * dir).cwiseMax(p_.lower).cwiseMin(p_.upper);
        const Vec s = x_new - x;
        if (s.cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + x.cwiseAbs().maxCoeff())) { break; }
        eval(x_new, f_new, g_new, -1);
        phi_new = merit(f_new, g_new);
        if (phi_new <= phi + 1e-4 * gr.dot(s)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        if (fresh) {
          stalled_ = true;
          break;
        }
        hess.setIdentity();
        fresh = true;
        continue;
      }

      Vec grad_new;
      Mat jac_new;
      derivs(x_new, f_new, g_new, grad_new, jac_new);
      const Vec gr_new = merit_grad(g_new, grad_new, jac_new);
      const Vec s = x_new - x;
      Vec y = gr_new - gr;
      if (structured) {
        penalty_curvature(g_new, jac_new);
        y.noalias() -= gn * s;
      }
      const double sy = s.dot(y);
      if (fresh && sy > 0) {
        hess *= y.squaredNorm() / sy;
        fresh = false;
      }
      // Damped BFGS keeps the model positive definite across selector switches.
      const Vec hs = hess * s;
      const double shs = s.dot(hs);
      if (shs > 0) {
        const double theta = sy >= 0.2 * shs ? 1.0 : 0.8 * shs / (shs - sy);
        const Vec r = theta * y + (1.0 - theta) * hs;
        const double sr = s.dot(r);
        if (sr > 1e-16 * s.norm() * r.norm()) {
          hess += r * r.transpose() / sr - hs * hs.transpose() / shs;
        }
      }

      x = x_new;
      f = f_new;
      g = g_new;
      phi = phi_new;
      gr = gr_new;
      offer(x, f, g);
      pg = projected_gradient_norm(x, gr);
    }
    return pg;
  }

  const NlpProblem & p_;
  const NlpConfig & cfg_;
  NlpSolution sol_;
  Vec lambda_;
  double rho_ = 10;
  double scale_ = 1;
  bool penalty_maxed_ = false;
  bool stalled_ = false;

  bool have_best_ = false;
  Vec best_x_;
  Vec best_g_;
  double best_f_ = 0;
  double best_viol_ = 0;
};

}  // namespace

void finite_difference(const NlpProblem & p, const Vec & d, double f, const Vec & g, Vec & grad, Mat & jac,
                       const NlpConfig & cfg, int * evaluations)
{
  const Eigen::Index n = d.size();
  const Eigen::Index m = g.size();
  grad.resize(n);
  jac.resize(m, n);
  Vec x = d;
  double fp, fm;
  Vec gp, gm;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = cfg.fd_step * std::max(1.0, std::abs(d[i]));
    const double up = std::min(p.upper[i], d[i] + h);
    const double dn = std::max(p.lower[i], d[i] - h);
    if (cfg.central_differences && up > dn) {
      x[i] = up;
      p.evaluate(x, fp, gp);
      check_finite(fp, gp, static_cast<int>(i));
      x[i] = dn;
      p.evaluate(x, fm, gm);
      check_finite(fm, gm, static_cast<int>(i));
      if (evaluations) { *evaluations += 2; }
      grad[i] = (fp - fm) / (up - dn);
      if (m) { jac.col(i) = (gp - gm) / (up - dn); }
    } else {
      // Forward step, or backward when the upper bound is hit.
      const double xi = (up > d[i]) ? up : dn;
      const double step = xi - d[i];
      if (step == 0.0) {
        grad[i] = 0.0;
        if (m) { jac.col(i).setZero(); }
        continue;
      }
      x[i] = xi;
      p.evaluate(x, fp, gp);
      check_finite(fp, gp, static_cast<int>(i));
      if (evaluations) { *evaluations += 1; }
      grad[i] = (fp - f) / step;
      if (m) { jac.col(i) = (gp - g) / step; }
    }
    x[i] = d[i];
  }
}

NlpSolution minimize(const NlpProblem & p, const Vec & warm_start, const NlpConfig & cfg)
{
  Solver s(p, cfg);
  return s.run(warm_start, {});
}

NlpSolution minimize(const NlpProblem & p, const Vec & warm_start, const NlpConfig & cfg, const NlpDualStart & dual)
{
  Solver s(p, cfg);
  return s.run(warm_start, dual);
}

}  // namespace irof
