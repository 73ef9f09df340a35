#include <doctest.h>

#include "irof/prediction.hpp"
#include "irof/scenarios.hpp"
#include "oracles.hpp"

using namespace irof;

namespace {

struct ClosedLoop
{
  Vec x;
  Vec xhat;
};

// One step of the true closed loop with the point observer and u = -K xhat + u'.
ClosedLoop closed_loop_step(const SystemModel & model, const NoiseBounds & nb, const Gains & g, const ClosedLoop & s,
                            const Vec & uff, const Vec & w, const Vec & v)
{
  EstimatorState est{IntervalVector::point(s.xhat), s.xhat, g};
  const Vec u = feedback_input(est, uff);
  const Vec y = model.C * s.x + v;
  return {simulate_plant(model, s.x, u, w), point_observer_step(est, model, nb, u, y)};
}

Vec stacked_width(const PredictorState & p)
{
  Vec d(2 * p.z.size());
  d << p.z.width(), p.e.width();
  return d;
}

}  // namespace

TEST_SUITE("prediction")
{
  TEST_CASE("no feedback, no observer correction, no noise: plain interval propagation")
  {
    const Scenario s = cstr_scenario();
    const Mat & A = s.model.f.A();
    const Gains g{Mat::Zero(2, 1), Mat::Zero(1, 2)};
    const NoiseBounds nb = NoiseBounds::make(IntervalVector::point(Vec::Zero(2)),
                                             IntervalVector::point(Vec::Zero(1)), g.L);
    StreamRng rng(1, Stream::kTest);
    for (int t = 0; t < 50; ++t) {
      const IntervalVector z = oracle::random_box(rng, 2);
      const PredictorState p{z, IntervalVector::point(Vec::Zero(2))};
      const Vec u = Vec::Constant(1, oracle::uniform(rng, -3, 3));
      const PredictorState q = predictor_step(p, s.model, nb, g, u);
      const IntervalVector ref = bound_product(A, z);
      CHECK((q.z.lo() - (ref.lo() + s.model.B * u)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((q.z.hi() - (ref.hi() + s.model.B * u)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(q.e.width().cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("step and step_into agree")
  {
    const Scenario s = unicycle_scenario();
    const NoiseBounds nb = s.noise();
    const IntervalPredictor pred(s.model, nb, s.gains);
    const EstimatorState est = EstimatorState::init(s.x0_box, s.gains);
    const PredictorState p = PredictorState::from_estimate(est);
    Vec u(2);
    u << 0.3, -0.2;
    const PredictorState a = pred.step(p, u);
    PredictorBuffers out;
    out.resize(4);
    REQUIRE(pred.step_into(PredictorBuffers::from(p), u, out));
    CHECK((a.z.hi() - out.z_hi).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.e.lo() - out.e_lo).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("CSTR one step contains sampled closed-loop successors")
  {
    const Scenario s = cstr_scenario();
    const NoiseBounds nb = s.noise();
    const EstimatorState est = EstimatorState::init(s.x0_box, s.gains);
    const PredictorState p = PredictorState::from_estimate(est);
    const PredictorState q = predictor_step(p, s.model, nb, s.gains, Vec::Zero(1));
    StreamRng rng(2, Stream::kTest);
    int misses = 0;
    for (int t = 0; t < 10000; ++t) {
      const Vec x = oracle::random_point(rng, p.z);
      const Vec e = oracle::random_point(rng, p.e);
      const ClosedLoop nxt = closed_loop_step(s.model, nb, s.gains, {x, x + e}, Vec::Zero(1),
                                              oracle::random_point(rng, nb.w), oracle::random_point(rng, nb.v));
      misses += !q.z.contains(nxt.x, 1e-12);
      misses += !q.e.contains(Vec(nxt.xhat - nxt.x), 1e-12);
    }
    CHECK(misses == 0);
  }

  TEST_CASE("width recursion is bounded by the comparison system")
  {
    for (const Scenario & s : {cstr_scenario(), unicycle_scenario()}) {
      const NoiseBounds nb = s.noise();
      const WidthBound wb = steady_width(s.model, nb, s.gains, ComparisonForm::kCoupled);
      const IntervalPredictor pred(s.model, nb, s.gains);
      PredictorState p = PredictorState::from_estimate(EstimatorState::init(s.x0_box, s.gains));
      StreamRng rng(3, Stream::kTest);
      double worst = 0.0;
      for (int l = 0; l < 35; ++l) {
        Vec u(s.model.m());
        for (Eigen::Index i = 0; i < u.size(); ++i) { u[i] = oracle::uniform(rng, -0.2, 0.2); }
        const PredictorState q = pred.step(p, u);
        worst = std::max(worst, (stacked_width(q) - wb.a_tilde * stacked_width(p) - wb.b).maxCoeff());
        p = q;
      }
      CHECK_MESSAGE(worst <= 1e-10, s.name);
    }
  }

  TEST_CASE("printed and coupled comparison forms agree on linear models")
  {
    const Scenario s = cstr_scenario();
    const NoiseBounds nb = s.noise();
    const WidthBound a = steady_width(s.model, nb, s.gains, ComparisonForm::kPrinted);
    const WidthBound b = steady_width(s.model, nb, s.gains, ComparisonForm::kCoupled);
    CHECK((a.a_tilde - b.a_tilde).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.delta_star - b.delta_star).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(a.rho < 1.0);
  }

  TEST_CASE("zero noise gives a zero steady width")
  {
    const Scenario s = cstr_scenario();
    const NoiseBounds nb = NoiseBounds::make(IntervalVector::point(Vec::Zero(2)),
                                             IntervalVector::point(Vec::Zero(1)), s.gains.L);
    const WidthBound wb = steady_width(s.model, nb, s.gains);
    CHECK(wb.delta_star.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("unstable comparison system is reported")
  {
    SystemModel m{DecomposedModel::linear(Mat::Constant(1, 1, 2.0)), Mat::Constant(1, 1, 1.0),
                  Mat::Constant(1, 1, 1.0)};
    const Gains g{Mat::Zero(1, 1), Mat::Zero(1, 1)};
    const NoiseBounds nb = NoiseBounds::make(IntervalVector(Vec::Constant(1, -1), Vec::Constant(1, 1)),
                                             IntervalVector(Vec::Constant(1, -1), Vec::Constant(1, 1)), g.L);
    CHECK_THROWS_AS(steady_width(m, nb, g), SpectralConditionViolated);
    try {
      steady_width(m, nb, g);
    } catch (const SpectralConditionViolated & e) {
      CHECK(e.radius() == doctest::Approx(2.0));
    }
  }

  TEST_CASE("CSTR rollout widths stay under the transient envelope")
  {
    const Scenario s = cstr_scenario();
    const NoiseBounds nb = s.noise();
    const WidthBound wb = steady_width(s.model, nb, s.gains);
    const IntervalPredictor pred(s.model, nb, s.gains);
    const PredictorState p0 = PredictorState::from_estimate(EstimatorState::init(s.x0_box, s.gains));
    const PredictionTrajectory tr = rollout(pred, p0, std::vector<Vec>(10, Vec::Zero(1)));
    REQUIRE(tr.states.size() == 11);
    Mat At = Mat::Identity(4, 4);
    const Vec d0 = stacked_width(p0);
    for (std::size_t l = 0; l < tr.states.size(); ++l) {
      const Vec env = At * d0 + wb.delta_star;
      CHECK((stacked_width(tr.states[l]) - env).maxCoeff() <= 1e-10);
      At = wb.a_tilde * At;
    }
    const PredictionTrajectory none = rollout(pred, p0, {});
    CHECK(none.states.size() == 1);
  }

  TEST_CASE("CSTR steady width bounds the observed widths of long rollouts")
  {
    const Scenario s = cstr_scenario();
    const NoiseBounds nb = s.noise();
    const WidthBound wb = steady_width(s.model, nb, s.gains);
    const IntervalPredictor pred(s.model, nb, s.gains);
    PredictorState p = PredictorState::from_estimate(EstimatorState::init(s.x0_box, s.gains));
    for (int l = 0; l < 200; ++l) { p = pred.step(p, Vec::Zero(1)); }
    CHECK(((stacked_width(p) - wb.delta_star).array() <= 1e-6 * wb.delta_star.array()).all());
  }

  TEST_CASE("predicted boxes contain random closed-loop rollouts")
  {
    for (const Scenario & s : {cstr_scenario(), unicycle_scenario()}) {
      const NoiseBounds nb = s.noise();
      const IntervalPredictor pred(s.model, nb, s.gains);
      int misses = 0;
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        StreamRng rng(seed, Stream::kTest);
        const EstimatorState est = EstimatorState::init(s.x0_box, s.gains);
        std::vector<Vec> uff;
        for (int l = 0; l < 35; ++l) {
          Vec u(s.model.m());
          for (Eigen::Index i = 0; i < u.size(); ++i) { u[i] = oracle::uniform(rng, -0.3, 0.3); }
          uff.push_back(u);
        }
        const PredictionTrajectory tr = rollout(pred, PredictorState::from_estimate(est), uff);
        for (int r = 0; r < 5; ++r) {
          ClosedLoop cl{oracle::random_point(rng, s.x0_box), est.point};
          for (int l = 0; l < 35; ++l) {
            cl = closed_loop_step(s.model, nb, s.gains, cl, uff[static_cast<std::size_t>(l)],
                                  oracle::random_point(rng, nb.w), oracle::random_point(rng, nb.v));
            misses += !tr.states[static_cast<std::size_t>(l + 1)].z.contains(cl.x, 1e-12);
            misses += !tr.states[static_cast<std::size_t>(l + 1)].e.contains(Vec(cl.xhat - cl.x), 1e-12);
          }
        }
      }
      CHECK_MESSAGE(misses == 0, s.name);
    }
  }

  TEST_CASE("step tangent matches finite differences")
  {
    const Scenario s = unicycle_scenario();
    const NoiseBounds nb = s.noise();
    const IntervalPredictor pred(s.model, nb, s.gains);
    StreamRng rng(5, Stream::kTest);
    const PredictorState p = PredictorState::from_estimate(EstimatorState::init(s.x0_box, s.gains));
    // Tangent with respect to the 2 inputs of this step plus a seeded direction on the incoming state.
    PredictorTangent tin, tout;
    tin.resize(4, 3);
    for (Eigen::Index r = 0; r < 16; ++r) { tin.t(r, 2) = oracle::uniform(rng, -1, 1); }
    tout.resize(4, 3);
    Vec u(2);
    u << 0.4, -0.1;
    const PredictorBuffers in = PredictorBuffers::from(p);
    pred.step_tangent(in, tin, 0, 3, tout);

    auto stacked = [](const PredictorBuffers & b) {
      Vec v(16);
      v << b.z_hi, b.z_lo, b.e_hi, b.e_lo;
      return v;
    };
    PredictorBuffers a, b;
    a.resize(4);
    b.resize(4);
    const double h = 1e-6;
    for (int c = 0; c < 3; ++c) {
      Vec up = u, dn = u;
      PredictorBuffers ip = in, im = in;
      if (c < 2) {
        up[c] += h;
        dn[c] -= h;
      } else {
        const Vec d = tin.t.col(2);
        ip.z_hi += h * d.segment(0, 4);
        ip.z_lo += h * d.segment(4, 4);
        ip.e_hi += h * d.segment(8, 4);
        ip.e_lo += h * d.segment(12, 4);
        im.z_hi -= h * d.segment(0, 4);
        im.z_lo -= h * d.segment(4, 4);
        im.e_hi -= h * d.segment(8, 4);
        im.e_lo -= h * d.segment(12, 4);
      }
      REQUIRE(pred.step_into(ip, up, a));
      REQUIRE(pred.step_into(im, dn, b));
      const Vec fd = (stacked(a) - stacked(b)) / (2 * h);
      CHECK((fd - Vec(tout.t.col(c))).cwiseAbs().maxCoeff() < 1e-7);
    }
  }

  TEST_CASE("observer steady width")
  {
    const Scenario s = cstr_scenario();
    const NoiseBounds nb = s.noise();
    const Vec w = observer_steady_width(s.model, nb, s.gains.L);
    const Mat G = (s.model.f.A() - s.gains.L * s.model.C).cwiseAbs();
    CHECK(((Mat::Identity(2, 2) - G) * w - (nb.w.width() + nb.v_L.width())).cwiseAbs().maxCoeff() < 1e-10);
  }
}
