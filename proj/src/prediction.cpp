#include "irof/prediction.hpp"

#include <Eigen/LU>
#include <cmath>

#include "irof/linalg.hpp"

namespace irof {

namespace {

// Accepts rounding-level inversions (bitwise-symmetric zero-width inputs can still produce them through
// different summation orders) by collapsing to the midpoint; anything larger is a real inversion.
bool settle_inversions(Vec & lo, Vec & hi)
{
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (lo[i] > hi[i]) {
      const double tol = 1e-12 * (1.0 + std::abs(lo[i]) + std::abs(hi[i]));
      if (!(lo[i] - hi[i] <= tol)) { return false; }
      const double mid = 0.5 * (lo[i] + hi[i]);
      lo[i] = mid;
      hi[i] = mid;
    }
  }
  return true;
}

}  // namespace

PredictorState PredictorBuffers::to_state() const
{
  return PredictorState{IntervalVector(z_lo, z_hi), IntervalVector(e_lo, e_hi)};
}

IntervalPredictor::IntervalPredictor(const SystemModel & model, const NoiseBounds & nb, const Gains & gains)
    : model_(&model), gains_(gains)
{
  model.validate();
  const Mat & A = model.f.A();
  const Mat bk  = model.B * gains.K;
  a_bk_   = split(A - bk);
  neg_bk_ = split(-bk);
  a_lc_   = split(A - gains.L * model.C);

  const auto n = model.n();
  lin_tangent_ = Mat::Zero(4 * n, 4 * n);
  auto blk = [&](int r, int c) { return lin_tangent_.block(r * n, c * n, n, n); };
  blk(0, 0) = a_bk_.plus;
  blk(0, 1) = -a_bk_.minus;
  blk(0, 2) = neg_bk_.plus;
  blk(0, 3) = -neg_bk_.minus;
  blk(1, 0) = -a_bk_.minus;
  blk(1, 1) = a_bk_.plus;
  blk(1, 2) = -neg_bk_.minus;
  blk(1, 3) = neg_bk_.plus;
  blk(2, 2) = a_lc_.plus;
  blk(2, 3) = -a_lc_.minus;
  blk(3, 2) = -a_lc_.minus;
  blk(3, 3) = a_lc_.plus;

  z_hi_offset_ = nb.w.hi();
  z_lo_offset_ = nb.w.lo();
  e_hi_offset_ = nb.v_L.hi() - nb.v_L_hat + nb.w_hat - nb.w.lo();
  e_lo_offset_ = nb.v_L.lo() - nb.v_L_hat + nb.w_hat - nb.w.hi();
}

bool IntervalPredictor::step_into(const PredictorBuffers & in, const Vec & u_ff, PredictorBuffers & out) const
{
  const DecomposedModel & f = model_->f;

  // z-block: [A-BK] on z, [-BK] on e.
  out.z_hi.noalias() = a_bk_.plus * in.z_hi;
  out.z_hi.noalias() -= a_bk_.minus * in.z_lo;
  out.z_hi.noalias() += neg_bk_.plus * in.e_hi;
  out.z_hi.noalias() -= neg_bk_.minus * in.e_lo;

  out.z_lo.noalias() = a_bk_.plus * in.z_lo;
  out.z_lo.noalias() -= a_bk_.minus * in.z_hi;
  out.z_lo.noalias() += neg_bk_.plus * in.e_lo;
  out.z_lo.noalias() -= neg_bk_.minus * in.e_hi;

  bu_.noalias() = model_->B * u_ff;
  out.z_hi += z_hi_offset_ + bu_;
  out.z_lo += z_lo_offset_ + bu_;

  // e-block: [A-LC] on e.
  out.e_hi.noalias() = a_lc_.plus * in.e_hi;
  out.e_hi.noalias() -= a_lc_.minus * in.e_lo;
  out.e_lo.noalias() = a_lc_.plus * in.e_lo;
  out.e_lo.noalias() -= a_lc_.minus * in.e_hi;
  out.e_hi += e_hi_offset_;
  out.e_lo += e_lo_offset_;

  if (!f.is_linear()) {
    xi_hi_ = in.z_hi + in.e_hi;
    xi_lo_ = in.z_lo + in.e_lo;
    scratch_a_.setZero(n());  // mu_d(z_hi, z_lo)
    scratch_b_.setZero(n());  // mu_d(z_lo, z_hi)
    f.add_decomp(in.z_hi, in.z_lo, 1.0, scratch_a_, scratch_c_);
    f.add_decomp(in.z_lo, in.z_hi, 1.0, scratch_b_, scratch_c_);
    out.z_hi += scratch_a_;
    out.z_lo += scratch_b_;
    out.e_hi -= scratch_b_;
    out.e_lo -= scratch_a_;
    f.add_decomp(xi_hi_, xi_lo_, 1.0, out.e_hi, scratch_c_);
    f.add_decomp(xi_lo_, xi_hi_, 1.0, out.e_lo, scratch_c_);
  }

  return settle_inversions(out.z_lo, out.z_hi) && settle_inversions(out.e_lo, out.e_hi);
}

void IntervalPredictor::step_tangent(const PredictorBuffers & in, const PredictorTangent & tin, Eigen::Index u_col,
                                     Eigen::Index cols, PredictorTangent & tout) const
{
  const DecomposedModel & f = model_->f;
  const auto n = this->n();
  const auto m = model_->m();
  step_mat_ = lin_tangent_;
  if (!f.is_linear()) {
    auto blk = [&](int r, int c) { return step_mat_.block(r * n, c * n, n, n); };
    const Vec xh = in.z_hi + in.e_hi, xl = in.z_lo + in.e_lo;
    // mu_d(z_hi, z_lo): into z_hi, subtracted from e_lo.
    j1_.setZero(n, n);
    j2_.setZero(n, n);
    f.add_decomp_jacobian(in.z_hi, in.z_lo, 1.0, j1_, j2_);
    blk(0, 0) += j1_;
    blk(0, 1) += j2_;
    blk(3, 0) -= j1_;
    blk(3, 1) -= j2_;
    // mu_d(z_lo, z_hi): into z_lo, subtracted from e_hi.
    j1_.setZero();
    j2_.setZero();
    f.add_decomp_jacobian(in.z_lo, in.z_hi, 1.0, j1_, j2_);
    blk(1, 1) += j1_;
    blk(1, 0) += j2_;
    blk(2, 1) -= j1_;
    blk(2, 0) -= j2_;
    // mu_d(xi_hi, xi_lo) into e_hi and mu_d(xi_lo, xi_hi) into e_lo, with xi = z + e.
    j1_.setZero();
    j2_.setZero();
    f.add_decomp_jacobian(xh, xl, 1.0, j1_, j2_);
    blk(2, 0) += j1_;
    blk(2, 2) += j1_;
    blk(2, 1) += j2_;
    blk(2, 3) += j2_;
    j1_.setZero();
    j2_.setZero();
    f.add_decomp_jacobian(xl, xh, 1.0, j1_, j2_);
    blk(3, 1) += j1_;
    blk(3, 3) += j1_;
    blk(3, 0) += j2_;
    blk(3, 2) += j2_;
  }
  // The step matrix is mostly structural zeros (sign split, sparse gains), so skip them row by row.
  for (Eigen::Index r = 0; r < 4 * n; ++r) {
    auto out = tout.t.row(r).head(cols);
    out.setZero();
    for (Eigen::Index c = 0; c < 4 * n; ++c) {
      const double v = step_mat_(r, c);
      if (v != 0.0) { out.noalias() += v * tin.t.row(c).head(cols); }
    }
  }
  tout.t.block(0, u_col, n, m) += model_->B;
  tout.t.block(n, u_col, n, m) += model_->B;
}

PredictorState IntervalPredictor::step(const PredictorState & p, const Vec & u_ff) const
{
  const PredictorBuffers in = PredictorBuffers::from(p);
  PredictorBuffers out;
  out.resize(n());
  if (!step_into(in, u_ff, out)) { throw IntervalInversion("predictor_step: inverted interval"); }
  return out.to_state();
}

PredictorState predictor_step(const PredictorState & p, const SystemModel & model, const NoiseBounds & nb,
                              const Gains & gains, const Vec & u_ff)
{
  return IntervalPredictor(model, nb, gains).step(p, u_ff);
}

PredictionTrajectory rollout(const IntervalPredictor & predictor, const PredictorState & init,
                             const std::vector<Vec> & u_ff)
{
  PredictionTrajectory traj;
  traj.u_ff = u_ff;
  traj.states.reserve(u_ff.size() + 1);
  traj.states.push_back(init);
  PredictorBuffers cur = PredictorBuffers::from(init);
  PredictorBuffers next;
  next.resize(predictor.n());
  for (std::size_t l = 0; l < u_ff.size(); ++l) {
    if (!predictor.step_into(cur, u_ff[l], next)) {
      throw IntervalInversion("rollout: inverted interval at prediction step " + std::to_string(l + 1),
                              static_cast<int>(l + 1));
    }
    traj.states.push_back(next.to_state());
    std::swap(cur, next);
  }
  return traj;
}

WidthBound steady_width(const SystemModel & model, const NoiseBounds & nb, const Gains & gains, ComparisonForm form)
{
  const auto n = model.n();
  const Mat & A = model.f.A();
  const Mat & F = model.f.F_bar();
  const Mat bk  = model.B * gains.K;

  WidthBound wb;
  wb.a_tilde = Mat::Zero(2 * n, 2 * n);
  wb.a_tilde.topLeftCorner(n, n)     = (A - bk).cwiseAbs() + F;
  wb.a_tilde.topRightCorner(n, n)    = bk.cwiseAbs();
  wb.a_tilde.bottomRightCorner(n, n) = (A - gains.L * model.C).cwiseAbs() + F;
  if (form == ComparisonForm::kCoupled) { wb.a_tilde.bottomLeftCorner(n, n) = 2.0 * F; }

  const Vec dw = nb.w.width();
  wb.b.resize(2 * n);
  wb.b << dw, gains.L.cwiseAbs() * nb.v.width() + dw;

  wb.rho = spectral_radius(wb.a_tilde);
  if (!(wb.rho < 1.0)) {
    throw SpectralConditionViolated("steady_width: rho(A_tilde) = " + std::to_string(wb.rho) + " >= 1", wb.rho);
  }
  wb.delta_star = (Mat::Identity(2 * n, 2 * n) - wb.a_tilde).partialPivLu().solve(wb.b);
  wb.delta_star = wb.delta_star.cwiseMax(0.0);
  return wb;
}

Vec observer_steady_width(const SystemModel & model, const NoiseBounds & nb, const Mat & L)
{
  const auto n = model.n();
  const Mat m = (model.f.A() - L * model.C).cwiseAbs() + model.f.F_bar();
  const double rho = spectral_radius(m);
  if (!(rho < 1.0)) {
    throw SpectralConditionViolated("observer_steady_width: rho = " + std::to_string(rho) + " >= 1", rho);
  }
  const Vec b = nb.w.width() + nb.v_L.width();
  return (Mat::Identity(n, n) - m).partialPivLu().solve(b).cwiseMax(0.0);
}

}  // namespace irof
