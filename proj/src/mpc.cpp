#include "irof/mpc.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

#include "irof/linalg.hpp"

namespace irof {

void ConstraintSets::validate(Eigen::Index n, Eigen::Index m) const
{
  if (X.size() != n) { throw DimensionError("ConstraintSets: X must have n components"); }
  if (U.size() != m) { throw DimensionError("ConstraintSets: U must have m components"); }
  if (Xf.size() != 0 && Xf.size() != n) { throw DimensionError("ConstraintSets: Xf must have n components"); }
  for (const auto & c : obstacles) {
    if (c.center.size() != 2 || !(c.radius > 0)) { throw DimensionError("ConstraintSets: bad obstacle"); }
    if (n < 2 || plane[0] >= n || plane[1] >= n) { throw DimensionError("ConstraintSets: plane out of range"); }
  }
}

double box_point_signed_distance(const Vec & lo, const Vec & hi, const Vec & c)
{
  const double dx = std::max({lo[0] - c[0], 0.0, c[0] - hi[0]});
  const double dy = std::max({lo[1] - c[1], 0.0, c[1] - hi[1]});
  if (dx > 0 || dy > 0) { return std::hypot(dx, dy); }
  return -std::min({c[0] - lo[0], hi[0] - c[0], c[1] - lo[1], hi[1] - c[1]});
}

double MpcCost::stage(const Vec & x, const Vec & u) const
{
  const Vec ex = x - x_ref;
  double c = ex.dot(H * ex);
  if (R.size() > 0) {
    const Vec eu = u_ref.size() ? Vec(u - u_ref) : u;
    c += eu.dot(R * eu);
  }
  return c;
}

double MpcCost::terminal(const Vec & x) const
{
  if (P.size() == 0) { return 0.0; }
  const Vec ex = x_f.size() ? Vec(x - x_f) : x;
  return ex.dot(P * ex);
}

// ---------------------------------------------------------------------------------------------------------------

namespace {

double safe_width(double w) { return w > 0 ? w : 1.0; }

}  // namespace

ShootingEvaluator::ShootingEvaluator(ProblemData data)
    : data_(std::move(data)), predictor_(*data_.model, *data_.noise, data_.gains)
{
  const auto n = data_.model->n();
  const auto m = data_.model->m();
  if (data_.horizon < 1) { throw DimensionError("ShootingEvaluator: horizon must be >= 1"); }
  data_.sets->validate(n, m);
  layout_.n = static_cast<int>(n);
  layout_.m = static_cast<int>(m);
  layout_.horizon = data_.horizon;
  layout_.obstacles = static_cast<int>(data_.sets->obstacles.size());
  layout_.terminal = data_.sets->Xf.size() == n;
  bound_gain_ = split(data_.input_bound == InputBoundForm::kFeedback ? Mat(-data_.gains.K) : data_.gains.K);

  base_states_.resize(static_cast<std::size_t>(data_.horizon) + 1);
  work_states_.resize(base_states_.size());
  for (auto & s : base_states_) { s.resize(n); }
  for (auto & s : work_states_) { s.resize(n); }
  base_cost_.assign(base_states_.size(), 0.0);
  work_cost_ = base_cost_;
  base_g_.resize(layout_.total());
  work_g_.resize(layout_.total());
  scratch_.lo2.resize(2);
  scratch_.hi2.resize(2);
}

IntervalVector ShootingEvaluator::decision_bounds() const
{
  const IntervalVector k_range = bound_product(data_.gains.K, data_.sets->X);
  const Vec lo1 = data_.sets->U.lo() + k_range.lo();
  const Vec hi1 = data_.sets->U.hi() + k_range.hi();
  const auto m = data_.model->m();
  Vec lo(dim()), hi(dim());
  for (int l = 0; l < data_.horizon; ++l) {
    lo.segment(l * m, m) = lo1;
    hi.segment(l * m, m) = hi1;
  }
  return IntervalVector(lo, hi);
}

void ShootingEvaluator::input_rows(int l, const PredictorBuffers & s, const Vec & u_ff, Vec & g) const
{
  const auto m = data_.model->m();
  const IntervalVector & U = data_.sets->U;
  Vec & lo = scratch_.u_lo;
  Vec & hi = scratch_.u_hi;
  if (l == 0 && data_.exact_first_input) {
    lo.noalias() = u_ff - data_.gains.K * data_.point;
    hi = lo;
  } else if (data_.input_bound == InputBoundForm::kFeedback) {
    scratch_.xi_lo = s.z_lo + s.e_lo;
    scratch_.xi_hi = s.z_hi + s.e_hi;
    bound_product_into(bound_gain_, scratch_.xi_lo, scratch_.xi_hi, lo, hi);
    lo += u_ff;
    hi += u_ff;
  } else {
    bound_product_into(bound_gain_, s.z_lo, s.z_hi, lo, hi);
    lo += u_ff;
    hi += u_ff;
  }
  const int off = layout_.input_offset(l);
  const double back = data_.backoff;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double w = safe_width(U.hi()[i] - U.lo()[i]);
    g[off + 2 * i]     = (hi[i] - U.hi()[i]) / w + back;
    g[off + 2 * i + 1] = (U.lo()[i] - lo[i]) / w + back;
  }
}

void ShootingEvaluator::state_rows(int l, const PredictorBuffers & s, Vec & g) const
{
  const auto n = data_.model->n();
  const IntervalVector & X = data_.sets->X;
  const int off = layout_.state_offset(l);
  const double back = data_.backoff;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = safe_width(X.hi()[i] - X.lo()[i]);
    g[off + 2 * i]     = (s.z_hi[i] - X.hi()[i]) / w + back;
    g[off + 2 * i + 1] = (X.lo()[i] - s.z_lo[i]) / w + back;
  }
  if (data_.sets->obstacles.empty()) { return; }
  const auto & pl = data_.sets->plane;
  Vec & lo2 = scratch_.lo2;
  Vec & hi2 = scratch_.hi2;
  lo2 << s.z_lo[pl[0]], s.z_lo[pl[1]];
  hi2 << s.z_hi[pl[0]], s.z_hi[pl[1]];
  int row = off + 2 * static_cast<int>(n);
  for (const Circle & c : data_.sets->obstacles) {
    g[row++] = (c.radius - box_point_signed_distance(lo2, hi2, c.center)) / c.radius + back;
  }
}

void ShootingEvaluator::terminal_rows(const PredictorBuffers & s, Vec & g) const
{
  if (!layout_.terminal) { return; }
  const IntervalVector & Xf = data_.sets->Xf;
  const int off = layout_.terminal_offset();
  for (Eigen::Index i = 0; i < data_.model->n(); ++i) {
    const double r = 0.5 * (Xf.hi()[i] - Xf.lo()[i]);
    const double c = 0.5 * (Xf.hi()[i] + Xf.lo()[i]);
    const double mid = 0.5 * (s.z_hi[i] + s.z_lo[i]);
    const double t = (mid - c) / std::max(r, 1e-12);
    g[off + i] = t * t - 1.0 + data_.backoff;
  }
}

double ShootingEvaluator::stage_cost(int l, const PredictorBuffers & s, const Vec & u_ff) const
{
  (void)l;
  const MpcCost & cost = *data_.cost;
  Vec & x = scratch_.x;
  Vec & ex = scratch_.ex;
  Vec & eu = scratch_.eu;
  x = 0.5 * (s.z_hi + s.z_lo);
  ex = x - cost.x_ref;
  double c = ex.dot(cost.H * ex);
  if (cost.R.size() > 0) {
    eu = u_ff;
    if (cost.penalize_applied_input) { eu.noalias() -= data_.gains.K * x; }
    if (cost.u_ref.size()) { eu -= cost.u_ref; }
    c += eu.dot(cost.R * eu);
  }
  if (cost.lambda > 0 && cost.exploration) { c -= cost.lambda * cost.exploration(x); }
  return c;
}

void ShootingEvaluator::sweep_from(int j, const Vec & d, std::vector<PredictorBuffers> & st,
                                   std::vector<double> & cost_terms, Vec & g) const
{
  const auto m = data_.model->m();
  const int N = data_.horizon;
  for (int l = j; l < N; ++l) {
    const Vec u = d.segment(l * m, m);
    input_rows(l, st[l], u, g);
    cost_terms[l] = stage_cost(l, st[l], u);
    if (data_.point_prediction) {
      const Vec & z = st[l].z_hi;
      st[l + 1].z_hi = data_.model->f.f(z) + data_.model->B * (u - data_.gains.K * z) + data_.noise->w_hat;
      st[l + 1].z_lo = st[l + 1].z_hi;
      st[l + 1].e_hi.setZero();
      st[l + 1].e_lo.setZero();
    } else if (!predictor_.step_into(st[l], u, st[l + 1])) {
      throw IntervalInversion("shooting: inverted interval at prediction step " + std::to_string(l + 1), l + 1);
    }
    state_rows(l + 1, st[l + 1], g);
  }
  terminal_rows(st[N], g);
  cost_terms[N] = data_.cost->terminal(0.5 * (st[N].z_hi + st[N].z_lo));
}

void ShootingEvaluator::evaluate(const Vec & d, double & f, Vec & g)
{
  if (d.size() != dim()) { throw DimensionError("shooting: decision size mismatch"); }
  base_states_[0] = PredictorBuffers::from(data_.init);
  sweep_from(0, d, base_states_, base_cost_, base_g_);
  f = 0.0;
  for (double c : base_cost_) { f += c; }
  g = base_g_;
  cached_d_ = d;
}

void ShootingEvaluator::derivatives(const Vec & d, double f, const Vec & g, Vec & grad, Mat & jac, double fd_step)
{
  (void)f;
  (void)g;
  if (data_.analytic_derivatives) {
    derivatives_analytic(d, grad, jac);
  } else {
    derivatives_fd(d, grad, jac, fd_step);
  }
}

namespace {

// d(hi), d(lo) of the bound of M x over x in [lo, hi], given the tangents of lo and hi.
void bound_product_tangent(const SplitMatrix & s, const Mat & t_lo, const Mat & t_hi, Mat & o_lo, Mat & o_hi)
{
  o_hi.noalias() = s.plus * t_hi;
  o_hi.noalias() -= s.minus * t_lo;
  o_lo.noalias() = s.plus * t_lo;
  o_lo.noalias() -= s.minus * t_hi;
}

}  // namespace

void ShootingEvaluator::derivatives_analytic(const Vec & d, Vec & grad, Mat & jac)
{
  if (cached_d_.size() != d.size() || cached_d_ != d) {
    double f0;
    Vec g0;
    evaluate(d, f0, g0);
  }
  const auto n = data_.model->n();
  const auto m = data_.model->m();
  const int N = data_.horizon;
  const Eigen::Index D = dim();
  const MpcCost & cost = *data_.cost;
  const Mat & K = data_.gains.K;
  grad.setZero(D);
  jac.setZero(layout_.total(), D);
  tan_a_.resize(n, D);
  tan_b_.resize(n, D);
  PredictorTangent * cur = &tan_a_;
  PredictorTangent * nxt = &tan_b_;

  Mat t_lo, t_hi, o_lo, o_hi, dx;
  Vec gx(n);
  for (int l = 0; l <= N; ++l) {
    const PredictorBuffers & s = base_states_[l];
    const Eigen::Index cols = std::min<Eigen::Index>(D, (l + 1) * m);  // u_l enters at step l
    const Eigen::Index live = l * m;  // columns the state depends on

    // State rows and obstacles at l >= 1.
    if (l >= 1) {
      const IntervalVector & X = data_.sets->X;
      const int off = layout_.state_offset(l);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double w = safe_width(X.hi()[i] - X.lo()[i]);
        jac.row(off + 2 * i).head(live) = cur->z_hi().row(i).head(live) / w;
        jac.row(off + 2 * i + 1).head(live) = -cur->z_lo().row(i).head(live) / w;
      }
      const auto & pl = data_.sets->plane;
      int row = off + 2 * static_cast<int>(n);
      for (const Circle & c : data_.sets->obstacles) {
        const double lo0 = s.z_lo[pl[0]], hi0 = s.z_hi[pl[0]], lo1 = s.z_lo[pl[1]], hi1 = s.z_hi[pl[1]];
        const auto dlo0 = cur->z_lo().row(pl[0]).head(live), dhi0 = cur->z_hi().row(pl[0]).head(live);
        const auto dlo1 = cur->z_lo().row(pl[1]).head(live), dhi1 = cur->z_hi().row(pl[1]).head(live);
        const double ax = lo0 - c.center[0], bx = c.center[0] - hi0;
        const double ay = lo1 - c.center[1], by = c.center[1] - hi1;
        const double ddx = std::max({ax, 0.0, bx}), ddy = std::max({ay, 0.0, by});
        Eigen::RowVectorXd dd = Eigen::RowVectorXd::Zero(live);
        if (ddx > 0 || ddy > 0) {
          const double dist = std::hypot(ddx, ddy);
          if (ddx > 0) { dd += (ddx / dist) * (ax >= bx ? Eigen::RowVectorXd(dlo0) : Eigen::RowVectorXd(-dhi0)); }
          if (ddy > 0) { dd += (ddy / dist) * (ay >= by ? Eigen::RowVectorXd(dlo1) : Eigen::RowVectorXd(-dhi1)); }
        } else {
          // -min(c0 - lo0, hi0 - c0, c1 - lo1, hi1 - c1)
          const double cand[4] = {-ax, -bx, -ay, -by};
          const int k = static_cast<int>(std::min_element(cand, cand + 4) - cand);
          if (k == 0) { dd = dlo0; }
          if (k == 1) { dd = -dhi0; }
          if (k == 2) { dd = dlo1; }
          if (k == 3) { dd = -dhi1; }
        }
        jac.row(row++).head(live) = -dd / c.radius;
      }
    }

    dx = 0.5 * (cur->z_hi().leftCols(cols) + cur->z_lo().leftCols(cols));
    const Vec x = 0.5 * (s.z_hi + s.z_lo);
    if (l == N) {
      if (layout_.terminal) {
        const IntervalVector & Xf = data_.sets->Xf;
        const int off = layout_.terminal_offset();
        for (Eigen::Index i = 0; i < n; ++i) {
          const double r = std::max(0.5 * (Xf.hi()[i] - Xf.lo()[i]), 1e-12);
          const double t = (x[i] - 0.5 * (Xf.hi()[i] + Xf.lo()[i])) / r;
          jac.row(off + i).head(live) = (2.0 * t / r) * dx.row(i).head(live);
        }
      }
      if (cost.P.size() > 0) {
        const Vec ex = cost.x_f.size() ? Vec(x - cost.x_f) : x;
        gx.noalias() = (cost.P + cost.P.transpose()) * ex;
        grad.head(live).noalias() += dx.leftCols(live).transpose() * gx;
      }
      break;
    }

    // Input rows at l.
    const IntervalVector & U = data_.sets->U;
    const int off = layout_.input_offset(l);
    if (l == 0 && data_.exact_first_input) {
      o_lo = Mat::Zero(m, cols);
      o_hi = o_lo;
    } else {
      if (data_.input_bound == InputBoundForm::kFeedback) {
        t_lo = cur->z_lo().leftCols(cols) + cur->e_lo().leftCols(cols);
        t_hi = cur->z_hi().leftCols(cols) + cur->e_hi().leftCols(cols);
      } else {
        t_lo = cur->z_lo().leftCols(cols);
        t_hi = cur->z_hi().leftCols(cols);
      }
      bound_product_tangent(bound_gain_, t_lo, t_hi, o_lo, o_hi);
    }
    o_lo.middleCols(l * m, m) += Mat::Identity(m, m);
    o_hi.middleCols(l * m, m) += Mat::Identity(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double w = safe_width(U.hi()[i] - U.lo()[i]);
      jac.row(off + 2 * i).head(cols) = o_hi.row(i) / w;
      jac.row(off + 2 * i + 1).head(cols) = -o_lo.row(i) / w;
    }

    // Stage cost at l.
    const Vec u = d.segment(l * m, m);
    gx.noalias() = (cost.H + cost.H.transpose()) * (x - cost.x_ref);
    if (cost.R.size() > 0) {
      Vec eu = u;
      if (cost.penalize_applied_input) { eu.noalias() -= K * x; }
      if (cost.u_ref.size()) { eu -= cost.u_ref; }
      const Vec gu = (cost.R + cost.R.transpose()) * eu;
      grad.segment(l * m, m) += gu;
      if (cost.penalize_applied_input) { gx.noalias() -= K.transpose() * gu; }
    }
    if (cost.lambda > 0 && cost.exploration) {
      Vec xp = x, xm = x;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        gx[i] -= cost.lambda * (cost.exploration(xp) - cost.exploration(xm)) / (2.0 * h);
        xp[i] = x[i];
        xm[i] = x[i];
      }
    }
    if (live > 0) { grad.head(live).noalias() += dx.leftCols(live).transpose() * gx; }

    // Propagate to l + 1.
    if (data_.point_prediction) {
      const Mat a = data_.model->f.jacobian(s.z_hi) - data_.model->B * K;
      nxt->z_hi().leftCols(cols).noalias() = a * cur->z_hi().leftCols(cols);
      nxt->z_hi().middleCols(l * m, m) += data_.model->B;
      nxt->z_lo().leftCols(cols) = nxt->z_hi().leftCols(cols);
    } else {
      predictor_.step_tangent(s, *cur, l * m, cols, *nxt);
    }
    std::swap(cur, nxt);
  }
}

void ShootingEvaluator::derivatives_fd(const Vec & d, Vec & grad, Mat & jac, double fd_step)
{
  if (cached_d_.size() != d.size() || cached_d_ != d) {
    double f0;
    Vec g0;
    evaluate(d, f0, g0);
  }
  const auto m = data_.model->m();
  const IntervalVector bounds = decision_bounds();
  grad.resize(dim());
  jac.resize(layout_.total(), dim());
  Vec dp = d;
  for (int j = 0; j < data_.horizon; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index idx = j * m + i;
      const double h0 = fd_step * std::max(1.0, std::abs(d[idx]));
      double h = d[idx] + h0 <= bounds.hi()[idx] ? h0 : -h0;
      if (d[idx] + h < bounds.lo()[idx]) { h = bounds.hi()[idx] - d[idx]; }
      dp[idx] = d[idx] + h;
      h = dp[idx] - d[idx];
      work_states_[j] = base_states_[j];
      work_cost_ = base_cost_;
      work_g_ = base_g_;
      sweep_from(j, dp, work_states_, work_cost_, work_g_);
      double df = 0.0;
      for (int l = j; l <= data_.horizon; ++l) { df += work_cost_[l] - base_cost_[l]; }
      grad[idx] = h != 0.0 ? df / h : 0.0;
      jac.col(idx) = h != 0.0 ? Vec((work_g_ - base_g_) / h) : Vec::Zero(layout_.total());
      dp[idx] = d[idx];
    }
  }
}

PredictionTrajectory ShootingEvaluator::trajectory(const Vec & d) const
{
  const auto m = data_.model->m();
  std::vector<PredictorBuffers> st(base_states_.size());
  for (auto & s : st) { s.resize(data_.model->n()); }
  std::vector<double> cost(base_cost_.size());
  Vec g(layout_.total());
  st[0] = PredictorBuffers::from(data_.init);
  sweep_from(0, d, st, cost, g);
  PredictionTrajectory traj;
  for (const auto & s : st) { traj.states.push_back(s.to_state()); }
  for (int l = 0; l < data_.horizon; ++l) { traj.u_ff.push_back(d.segment(l * m, m)); }
  return traj;
}

NlpProblem build_problem(const std::shared_ptr<ShootingEvaluator> & ev, const NlpConfig & cfg)
{
  NlpProblem p;
  p.dim = ev->dim();
  p.num_constraints = ev->layout().total();
  const IntervalVector b = ev->decision_bounds();
  p.lower = b.lo();
  p.upper = b.hi();
  p.evaluate = [ev](const Vec & d, double & f, Vec & g) { ev->evaluate(d, f, g); };
  if (!cfg.central_differences) {
    const double h = cfg.fd_step;
    p.derivatives = [ev, h](const Vec & d, double f, const Vec & g, Vec & grad, Mat & jac) {
      ev->derivatives(d, f, g, grad, jac, h);
    };
  }
  return p;
}

NlpProblem build_problem(const EstimatorState & est, const SystemModel & model, const NoiseBounds & nb,
                         const ConstraintSets & cs, const MpcCost & cost, int horizon, const MpcConfig & cfg)
{
  ProblemData data;
  data.model = &model;
  data.noise = &nb;
  data.sets = &cs;
  data.cost = &cost;
  data.gains = est.gains;
  data.horizon = horizon;
  data.input_bound = cfg.input_bound;
  data.exact_first_input = cfg.exact_first_input;
  data.init = PredictorState::from_estimate(est);
  data.point = est.point;
  data.backoff = cfg.constraint_backoff;
  data.analytic_derivatives = cfg.analytic_derivatives;
  return build_problem(std::make_shared<ShootingEvaluator>(std::move(data)), cfg.nlp);
}

Vec shift_warm_start(const PredictionTrajectory & prev, const ConstraintSets & cs, const Mat & K)
{
  const auto N = prev.u_ff.size();
  if (N == 0) { throw DimensionError("shift_warm_start: empty trajectory"); }
  const auto m = prev.u_ff.front().size();
  Vec out(static_cast<Eigen::Index>(N) * m);
  for (std::size_t l = 1; l < N; ++l) { out.segment(static_cast<Eigen::Index>(l - 1) * m, m) = prev.u_ff[l]; }
  const Vec z_end = prev.states.back().z.midpoint();
  out.tail(m) = cs.Kf ? Vec(cs.Kf(z_end) + K * z_end) : prev.u_ff.back();
  return out;
}

// ---------------------------------------------------------------------------------------------------------------

namespace {

/// Calls fn on every point of a tensor grid over box (k points per axis, endpoints included).
template <class Fn>
void for_each_grid_point(const IntervalVector & box, int k, Fn && fn)
{
  const auto n = box.size();
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  Vec x(n);
  while (true) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = k > 1 ? static_cast<double>(idx[i]) / (k - 1) : 0.5;
      x[i] = box.lo()[i] + t * (box.hi()[i] - box.lo()[i]);
    }
    fn(x);
    Eigen::Index i = 0;
    while (i < n && ++idx[i] == k) { idx[i++] = 0; }
    if (i == n) { break; }
  }
}

}  // namespace

TerminalDecreaseReport terminal_decrease_check(const SystemModel & model, const NoiseBounds & nb,
                                               const ConstraintSets & cs, const MpcCost & cost, int samples_per_axis)
{
  TerminalDecreaseReport rep;
  rep.worst_margin = -std::numeric_limits<double>::infinity();
  for_each_grid_point(cs.Xf, samples_per_axis, [&](const Vec & x) {
    const Vec u = cs.Kf(x);
    const Vec next = model.f.f(x) + model.B * u + nb.w_hat;
    const double margin = cost.terminal(next) - cost.terminal(x) + cost.stage(x, u);
    ++rep.samples;
    if (margin > rep.worst_margin) {
      rep.worst_margin = margin;
      rep.worst_point = x;
    }
  });
  return rep;
}

TerminalSetReport check_terminal_set(const SystemModel & model, const NoiseBounds & nb, const ConstraintSets & cs,
                                     const Vec & delta_z, int samples_per_axis)
{
  TerminalSetReport rep;
  rep.minkowski_ok = ((cs.Xf.lo() - delta_z).array() >= cs.X.lo().array()).all() &&
                     ((cs.Xf.hi() + delta_z).array() <= cs.X.hi().array()).all();
  rep.invariant_ok = true;
  rep.input_ok = true;
  for_each_grid_point(cs.Xf, samples_per_axis, [&](const Vec & x) {
    const Vec u = cs.Kf(x);
    if (!cs.U.contains(u, 1e-9)) { rep.input_ok = false; }
    const Vec next = model.f.f(x) + model.B * u + nb.w_hat;
    const double excess = std::max((next - cs.Xf.hi()).maxCoeff(), (cs.Xf.lo() - next).maxCoeff());
    rep.worst_invariance_excess = std::max(rep.worst_invariance_excess, excess);
  });
  rep.invariant_ok = rep.worst_invariance_excess <= 1e-9;
  return rep;
}

namespace {

// Solves x = f(x) + B u + w by Newton iteration from x0.
Vec steady_state(const SystemModel & model, const Vec & u, const Vec & w, const Vec & x0)
{
  const auto n = model.n();
  const Mat eye = Mat::Identity(n, n);
  if (model.f.is_linear()) {
    return (eye - model.f.A()).partialPivLu().solve(model.B * u + w);
  }
  Vec x = x0;
  for (int it = 0; it < 50; ++it) {
    const Vec r = x - model.f.f(x) - model.B * u - w;
    if (r.cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + x.cwiseAbs().maxCoeff())) { break; }
    x -= (eye - model.f.jacobian(x)).partialPivLu().solve(r);
  }
  return x;
}

}  // namespace

Target select_target(const SystemModel & model, const NoiseBounds & nb, const IntervalVector & X,
                     const IntervalVector & U, const Mat & H, const Mat & R, const Vec & x_r, const Vec & u_r,
                     const Vec & state_margin, const Vec & input_margin, const NlpConfig & cfg)
{
  const auto n = model.n();
  const auto m = model.m();
  const Vec xs_lo = X.lo() + state_margin;
  const Vec xs_hi = X.hi() - state_margin;
  const Vec us_lo = U.lo() + input_margin;
  const Vec us_hi = U.hi() - input_margin;
  if ((xs_lo.array() > xs_hi.array()).any() || (us_lo.array() > us_hi.array()).any()) {
    throw Error("select_target: margins leave no admissible steady state");
  }
  const Vec xw = X.width().cwiseMax(1e-12);
  const Vec ur = u_r.size() ? u_r : Vec::Zero(m);

  Vec x_guess = x_r.cwiseMax(xs_lo).cwiseMin(xs_hi);
  auto evaluate = [&](const Vec & u, double & f, Vec & g) {
    const Vec x = steady_state(model, u, nb.w_hat, x_guess);
    const Vec ex = x - x_r;
    const Vec eu = u - ur;
    f = ex.dot(H * ex) + eu.dot(R * eu);
    g.resize(2 * n);
    g.head(n) = (x - xs_hi).cwiseQuotient(xw);
    g.tail(n) = (xs_lo - x).cwiseQuotient(xw);
  };
  NlpProblem p;
  p.dim = static_cast<int>(m);
  p.num_constraints = static_cast<int>(2 * n);
  p.lower = us_lo;
  p.upper = us_hi;
  p.evaluate = evaluate;
  NlpConfig c = cfg;
  c.central_differences = true;
  c.feas_tol = std::min(cfg.feas_tol, 1e-9);
  const Vec u0 = ur.cwiseMax(us_lo).cwiseMin(us_hi);
  const NlpSolution sol = minimize(p, u0, c);
  if (sol.max_violation > c.feas_tol) { throw Error("select_target: no admissible steady state found"); }
  Target t;
  t.u = sol.point;
  t.x = steady_state(model, t.u, nb.w_hat, x_guess);
  return t;
}

TerminalLaw affine_law(const Vec & u_s, const Mat & Kf, const Vec & x_s)
{
  return [u_s, Kf, x_s](const Vec & x) -> Vec { return u_s - Kf * (x - x_s); };
}

TerminalDesign design_terminal(const SystemModel & model, const NoiseBounds & nb, const Gains & gains,
                               const IntervalVector & X, const IntervalVector & U, const Mat & H, const Mat & R,
                               const Vec & x_r, const Vec & u_r, const TerminalDesignConfig & cfg)
{
  const auto m = model.m();
  TerminalDesign td;
  td.width = steady_width(model, nb, gains, ComparisonForm::kCoupled);
  const Vec rf = cfg.xf_fraction * X.width();
  const Vec dz = td.width.delta_z();
  const Vec de = td.width.delta_e();

  // The input margin depends on Kf, which depends on the linearization point; one refinement pass suffices
  // for the smooth models used here.
  Vec x_lin = x_r.cwiseMax(X.lo()).cwiseMin(X.hi());
  Mat kf = lqr_gain(model.f.jacobian(x_lin), model.B, H, R);
  const Vec u_ref = u_r.size() ? u_r : Vec::Zero(m);
  for (int pass = 0; pass < 2; ++pass) {
    // Large noise can make the width-dependent margins exceed X or U; shrink them until a target exists.
    // The terminal-set report then flags the missing certificate.
    for (double factor : {1.0, 0.75, 0.5, 0.25, 0.0}) {
      const Vec u_margin = kf.cwiseAbs() * rf + factor * 0.5 * gains.K.cwiseAbs() * (dz + de);
      try {
        td.target = select_target(model, nb, X, U, H, R, x_r, u_ref, factor * cfg.margin_scale * dz + rf, u_margin);
        td.margin_factor = factor;
        break;
      } catch (const Error &) {
        if (factor == 0.0) { throw; }
      }
    }
    if (model.f.is_linear()) { break; }
    kf = lqr_gain(model.f.jacobian(td.target.x), model.B, H, R);
  }
  const Mat a_lin = model.f.jacobian(td.target.x);
  td.Kf = lqr_gain(a_lin, model.B, H, R);
  td.P = (1.0 + cfg.decrease_slack) * solve_dare(a_lin, model.B, H, R);
  td.Xf = IntervalVector::centered(td.target.x, rf);
  return td;
}

// ---------------------------------------------------------------------------------------------------------------

std::string to_string(ControllerKind k)
{
  switch (k) {
    case ControllerKind::kIrof: return "irof";
    case ControllerKind::kNominal: return "nominal";
    case ControllerKind::kOpenLoop: return "openloop";
  }
  return "unknown";
}

ControllerKind controller_kind_from_string(const std::string & s)
{
  if (s == "irof") { return ControllerKind::kIrof; }
  if (s == "nominal") { return ControllerKind::kNominal; }
  if (s == "openloop") { return ControllerKind::kOpenLoop; }
  throw Error("unknown controller '" + s + "' (expected irof, nominal or openloop)");
}

MpcController::MpcController(ControllerKind kind, const SystemModel & model, NoiseBounds nb, Gains gains,
                             ConstraintSets cs, MpcCost cost, EstimatorState init, MpcConfig cfg)
    : kind_(kind),
      model_(&model),
      nb_(std::move(nb)),
      pred_gains_(std::move(gains)),
      cs_(std::move(cs)),
      cost_(std::move(cost)),
      cfg_(std::move(cfg)),
      estimator_(model, nb_, init)
{
  if (kind_ == ControllerKind::kOpenLoop) { pred_gains_.K = Mat::Zero(model.m(), model.n()); }
  EstimatorState s = init;
  s.gains = pred_gains_;
  estimator_ = Estimator(model, nb_, s);
  cs_.validate(model.n(), model.m());
}

Vec MpcController::initial_guess(const EstimatorState & est) const
{
  const auto m = model_->m();
  Vec d(cfg_.horizon * m);
  Vec z = est.point;
  for (int l = 0; l < cfg_.horizon; ++l) {
    const Vec u = cs_.Kf ? cs_.Kf(z) : Vec::Zero(m);
    const Vec u_sat = u.cwiseMax(cs_.U.lo()).cwiseMin(cs_.U.hi());
    d.segment(l * m, m) = u_sat + pred_gains_.K * z;
    z = model_->f.f(z) + model_->B * u_sat + nb_.w_hat;
    z = z.cwiseMax(cs_.X.lo()).cwiseMin(cs_.X.hi());
  }
  return d;
}

MpcStepOutput MpcController::step(const Vec & y)
{
  const bool interval = kind_ != ControllerKind::kNominal;
  EstimatorState est = estimator_.state();
  IntervalVector e_box = est.error_box();
  if (interval && one_step_) {
    estimator_.refine(one_step_->z);
    est = estimator_.state();
    e_box = est.error_box();
    if (cfg_.refine_error_box) { e_box = intersect(e_box, one_step_->e); }
  }

  ProblemData data;
  data.model = model_;
  data.noise = &nb_;
  data.sets = &cs_;
  data.cost = &cost_;
  data.gains = pred_gains_;
  data.horizon = cfg_.horizon;
  data.input_bound = cfg_.input_bound;
  data.exact_first_input = cfg_.exact_first_input;
  data.point = est.point;
  data.backoff = cfg_.constraint_backoff;
  data.analytic_derivatives = cfg_.analytic_derivatives;
  if (interval) {
    data.init = PredictorState{est.box, e_box};
  } else {
    data.init = PredictorState{IntervalVector::point(est.point), IntervalVector::point(Vec::Zero(model_->n()))};
    data.point_prediction = true;
  }
  auto ev = std::make_shared<ShootingEvaluator>(std::move(data));
  const NlpProblem problem = build_problem(ev, cfg_.nlp);

  MpcStepOutput out;
  Vec warm;
  if (prev_traj_) {
    warm = shift_warm_start(*prev_traj_, cs_, pred_gains_.K);
    warm = warm.cwiseMax(problem.lower).cwiseMin(problem.upper);
    double f;
    Vec g;
    ev->evaluate(warm, f, g);
    out.shifted_violation = max_violation(g);
    out.shifted_available = true;
  } else {
    warm = initial_guess(est).cwiseMax(problem.lower).cwiseMin(problem.upper);
  }

  out.diagnostics = minimize(problem, warm, cfg_.nlp, cfg_.warm_start_multipliers ? dual_ : NlpDualStart{});
  const bool solved = out.diagnostics.max_violation <= cfg_.nlp.feas_tol;
  if (!solved && !(out.shifted_available && out.shifted_violation <= cfg_.nlp.feas_tol)) {
    out.feasible = false;
  }
  if (!out.feasible && !cfg_.apply_infeasible) {
    throw ControllerAbort("step " + std::to_string(k_) + ": infeasible (violation " +
                          std::to_string(out.diagnostics.max_violation) + ", status " +
                          to_string(out.diagnostics.status) + ")");
  }

  out.trajectory = ev->trajectory(out.diagnostics.point);
  out.u_ff = out.diagnostics.point;
  out.u_applied = out.trajectory.u_ff.front() - pred_gains_.K * est.point;
  if (!out.feasible) { out.u_applied = out.u_applied.cwiseMax(cs_.U.lo()).cwiseMin(cs_.U.hi()); }
  out.one_step_box = out.trajectory.states[1].z;
  out.estimate_box = est.box;
  out.point_estimate = est.point;

  one_step_ = out.trajectory.states[1];
  prev_traj_ = out.trajectory;
  dual_ = NlpDualStart{out.diagnostics.multipliers, 0.0};
  estimator_.update(out.u_applied, y);
  ++k_;
  return out;
}

NlpProblem build_nominal_problem(const Vec & xhat, const SystemModel & model, const NoiseBounds & nb,
                                 const Gains & gains, const ConstraintSets & cs, const MpcCost & cost, int horizon,
                                 const NlpConfig & nlp)
{
  ProblemData data;
  data.model = &model;
  data.noise = &nb;
  data.sets = &cs;
  data.cost = &cost;
  data.gains = gains;
  data.horizon = horizon;
  data.point = xhat;
  data.init = PredictorState{IntervalVector::point(xhat), IntervalVector::point(Vec::Zero(model.n()))};
  data.point_prediction = true;
  data.backoff = nlp.feas_tol;
  return build_problem(std::make_shared<ShootingEvaluator>(std::move(data)), nlp);
}

PredictionTrajectory nominal_trajectory(const Vec & xhat, const SystemModel & model, const NoiseBounds & nb,
                                        const Gains & gains, const Vec & d, int horizon)
{
  PredictionTrajectory traj;
  const auto m = model.m();
  Vec z = xhat;
  traj.states.push_back({IntervalVector::point(z), IntervalVector::point(Vec::Zero(model.n()))});
  for (int l = 0; l < horizon; ++l) {
    const Vec u = d.segment(l * m, m);
    traj.u_ff.push_back(u);
    z = model.f.f(z) + model.B * (u - gains.K * z) + nb.w_hat;
    traj.states.push_back({IntervalVector::point(z), IntervalVector::point(Vec::Zero(model.n()))});
  }
  return traj;
}

}  // namespace irof
