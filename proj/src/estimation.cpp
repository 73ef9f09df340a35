#include "irof/estimation.hpp"

namespace irof {

NoiseBounds NoiseBounds::make(IntervalVector w, IntervalVector v, const Mat & L)
{
  if (L.cols() != v.size()) { throw DimensionError("NoiseBounds: L columns must match the output dimension"); }
  if (L.rows() != w.size()) { throw DimensionError("NoiseBounds: L rows must match the state dimension"); }
  NoiseBounds nb;
  nb.v_L     = bound_product(L, v);
  nb.v_L_hat = nb.v_L.midpoint();
  nb.w_hat   = w.midpoint();
  nb.w       = std::move(w);
  nb.v       = std::move(v);
  return nb;
}

IntervalVector EstimatorState::error_box() const { return IntervalVector(point - box.hi(), point - box.lo()); }

EstimatorState EstimatorState::init(IntervalVector box0, Gains gains)
{
  Vec mid = box0.midpoint();
  return EstimatorState{std::move(box0), std::move(mid), std::move(gains)};
}

IntervalVector observer_step(const EstimatorState & s, const SystemModel & model, const NoiseBounds & nb,
                             const Vec & u, const Vec & y)
{
  const Mat & L = s.gains.L;
  const SplitMatrix alc = split(model.f.A() - L * model.C);
  Vec lo, hi;
  bound_product_into(alc, s.box.lo(), s.box.hi(), lo, hi);
  const Vec common = model.B * u + L * y;
  hi += common + nb.w.hi() - nb.v_L.lo() + model.f.decomp(s.box.hi(), s.box.lo());
  lo += common + nb.w.lo() - nb.v_L.hi() + model.f.decomp(s.box.lo(), s.box.hi());
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (lo[i] > hi[i]) {
      throw IntervalInversion("observer_step: inverted bounds in component " + std::to_string(i) +
                              " (gain or decomposition misconfigured)");
    }
  }
  return IntervalVector(std::move(lo), std::move(hi));
}

Vec point_observer_step(const EstimatorState & s, const SystemModel & model, const NoiseBounds & nb, const Vec & u,
                        const Vec & y)
{
  const Mat & L = s.gains.L;
  return (model.f.A() - L * model.C) * s.point + model.B * u + nb.w_hat - nb.v_L_hat + L * y + model.f.mu(s.point);
}

Vec feedback_input(const EstimatorState & s, const Vec & u_ff) { return -s.gains.K * s.point + u_ff; }

EstimatorState refine_with_prediction(const EstimatorState & s, const IntervalVector & pred_box)
{
  EstimatorState out = s;
  out.box = intersect(s.box, pred_box);
  return out;
}

Estimator::Estimator(const SystemModel & model, NoiseBounds nb, EstimatorState init)
    : model_(&model), nb_(std::move(nb)), state_(std::move(init))
{
  model.validate();
}

void Estimator::update(const Vec & u, const Vec & y)
{
  IntervalVector next_box = observer_step(state_, *model_, nb_, u, y);
  Vec next_point          = point_observer_step(state_, *model_, nb_, u, y);
  state_.box   = std::move(next_box);
  state_.point = std::move(next_point);
}

}  // namespace irof
