#include <doctest.h>

#include <cmath>
#include <memory>

#include "irof/mpc.hpp"
#include "irof/scenarios.hpp"
#include "oracles.hpp"

using namespace irof;

namespace {

/// Owns everything a ShootingEvaluator points at.
struct Fixture
{
  Scenario s;
  NoiseBounds nb;
  ControllerSetup setup;
  EstimatorState est;

  explicit Fixture(Scenario sc, ControllerKind kind = ControllerKind::kIrof)
      : s(std::move(sc)), nb(s.noise()), setup(setup_controller(s, kind)),
        est(EstimatorState::init(s.x0_box, setup.gains))
  {
  }

  ProblemData data(int horizon, bool point = false) const
  {
    ProblemData d;
    d.model = &s.model;
    d.noise = &nb;
    d.sets = &setup.sets;
    d.cost = &setup.cost;
    d.gains = setup.gains;
    d.horizon = horizon;
    d.point = est.point;
    d.backoff = 1e-6;
    if (point) {
      d.init = PredictorState{IntervalVector::point(est.point), IntervalVector::point(Vec::Zero(s.model.n()))};
      d.point_prediction = true;
    } else {
      d.init = PredictorState::from_estimate(est);
    }
    return d;
  }
};

Vec random_decision(StreamRng & rng, const IntervalVector & bounds, double shrink)
{
  const Vec mid = bounds.midpoint();
  const Vec half = 0.5 * shrink * bounds.width();
  Vec d(mid.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) { d[i] = mid[i] + oracle::uniform(rng, -half[i], half[i]); }
  return d;
}

/// Central differences of evaluate(), independent of the evaluator's own restart logic.
void central_fd(ShootingEvaluator & ev, const Vec & d, double h, Vec & grad, Mat & jac)
{
  const int m = ev.layout().total();
  grad.resize(d.size());
  jac.resize(m, d.size());
  double fp, fm;
  Vec gp, gm;
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    Vec a = d, b = d;
    a[j] += h;
    b[j] -= h;
    ev.evaluate(a, fp, gp);
    ev.evaluate(b, fm, gm);
    grad[j] = (fp - fm) / (2 * h);
    jac.col(j) = (gp - gm) / (2 * h);
  }
}

double rel_err(const Mat & a, const Mat & b) { return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff()); }

}  // namespace

TEST_SUITE("mpc_controller")
{
  TEST_CASE("constraint layout")
  {
    ConstraintLayout one{2, 1, 1, 0, true};
    CHECK(one.input_offset(0) == 0);
    CHECK(one.state_offset(1) == 2);
    CHECK(one.terminal_offset() == 6);
    CHECK(one.total() == 8);

    ConstraintLayout three{4, 2, 3, 1, true};
    // input(0) | state(1) input(1) | state(2) input(2) | state(3) | terminal
    CHECK(three.input_offset(0) == 0);
    CHECK(three.state_offset(1) == 4);
    CHECK(three.input_offset(1) == 13);
    CHECK(three.state_offset(2) == 17);
    CHECK(three.input_offset(2) == 26);
    CHECK(three.state_offset(3) == 30);
    CHECK(three.terminal_offset() == 39);
    CHECK(three.total() == 43);
    three.terminal = false;
    CHECK(three.total() == 39);
  }

  TEST_CASE("signed distance from a box")
  {
    Vec lo(2), hi(2), c(2);
    lo << 0, 0;
    hi << 1, 2;
    c << 4, 6;
    CHECK(box_point_signed_distance(lo, hi, c) == doctest::Approx(5.0));
    c << 0.5, 3;
    CHECK(box_point_signed_distance(lo, hi, c) == doctest::Approx(1.0));
    c << 0.5, 0.5;
    CHECK(box_point_signed_distance(lo, hi, c) == doctest::Approx(-0.5));
    c << 1.0, 1.0;
    CHECK(box_point_signed_distance(lo, hi, c) == doctest::Approx(0.0));
  }

  TEST_CASE("CSTR objective at zero feedforward equals the hand-rolled sum")
  {
    const Fixture fx(cstr_scenario());
    ShootingEvaluator ev(fx.data(10));
    double f;
    Vec g;
    ev.evaluate(Vec::Zero(10), f, g);

    const IntervalPredictor pred(fx.s.model, fx.nb, fx.setup.gains);
    PredictorState p = PredictorState::from_estimate(fx.est);
    Vec xr(2);
    xr << -0.25, 27.3;
    double ref = 0.0;
    for (int l = 0; l < 10; ++l) {
      const Vec ex = p.z.midpoint() - xr;
      ref += 100.0 * ex.squaredNorm();  // R term vanishes at u' = 0
      p = pred.step(p, Vec::Zero(1));
    }
    const Vec ef = p.z.midpoint() - fx.setup.terminal.target.x;
    ref += ef.dot(fx.setup.terminal.P * ef);
    CHECK(f == doctest::Approx(ref).epsilon(1e-12));

    // Terminal rows from the last midpoint.
    const ConstraintLayout & lay = ev.layout();
    const IntervalVector & Xf = fx.setup.sets.Xf;
    for (int i = 0; i < 2; ++i) {
      const double t = (p.z.midpoint()[i] - Xf.midpoint()[i]) / (0.5 * Xf.width()[i]);
      CHECK(g[lay.terminal_offset() + i] == doctest::Approx(t * t - 1.0 + 1e-6).epsilon(1e-12));
    }
  }

  TEST_CASE("input and state rows against vertex enumeration")
  {
    const Fixture fx(unicycle_scenario());
    ProblemData pd = fx.data(5);
    ShootingEvaluator ev(pd);
    StreamRng rng(1, Stream::kTest);
    const Vec d = random_decision(rng, ev.decision_bounds(), 0.1);
    double f;
    Vec g;
    ev.evaluate(d, f, g);
    const PredictionTrajectory tr = ev.trajectory(d);
    const ConstraintLayout & lay = ev.layout();
    const IntervalVector & U = fx.s.U;
    const IntervalVector & X = fx.s.X;
    for (int l = 1; l < 5; ++l) {
      const IntervalVector xi = tr.states[static_cast<std::size_t>(l)].xi();
      const IntervalVector kx = oracle::vertex_image(-fx.setup.gains.K, xi);
      const Vec u = d.segment(2 * l, 2);
      for (int i = 0; i < 2; ++i) {
        const double w = U.width()[i];
        CHECK(g[lay.input_offset(l) + 2 * i] ==
              doctest::Approx((kx.hi()[i] + u[i] - U.hi()[i]) / w + 1e-6).epsilon(1e-10));
        CHECK(g[lay.input_offset(l) + 2 * i + 1] ==
              doctest::Approx((U.lo()[i] - kx.lo()[i] - u[i]) / w + 1e-6).epsilon(1e-10));
      }
    }
    // First input uses the point estimate exactly.
    const Vec u0 = d.head(2) - fx.setup.gains.K * fx.est.point;
    CHECK(g[0] == doctest::Approx((u0[0] - U.hi()[0]) / U.width()[0] + 1e-6).epsilon(1e-12));
    for (int l = 1; l <= 5; ++l) {
      const IntervalVector & z = tr.states[static_cast<std::size_t>(l)].z;
      for (int i = 0; i < 4; ++i) {
        CHECK(g[lay.state_offset(l) + 2 * i] ==
              doctest::Approx((z.hi()[i] - X.hi()[i]) / X.width()[i] + 1e-6).epsilon(1e-12));
      }
      const Circle & c = fx.s.obstacles.front();
      Vec lo2(2), hi2(2);
      lo2 << z.lo()[0], z.lo()[1];
      hi2 << z.hi()[0], z.hi()[1];
      CHECK(g[lay.state_offset(l) + 8] ==
            doctest::Approx((c.radius - box_point_signed_distance(lo2, hi2, c.center)) / c.radius + 1e-6));
    }
  }

  TEST_CASE("analytic derivatives agree with central differences")
  {
    struct Case
    {
      Scenario s;
      int horizon;
      bool point;
    };
    for (const Case & c : {Case{cstr_scenario(), 10, false}, Case{unicycle_scenario(), 12, false},
                           Case{unicycle_scenario(), 12, true}, Case{cstr_scenario(), 10, true}}) {
      const Fixture fx(c.s);
      ShootingEvaluator ev(fx.data(c.horizon, c.point));
      StreamRng rng(2, Stream::kTest);
      for (int t = 0; t < 3; ++t) {
        const Vec d = random_decision(rng, ev.decision_bounds(), 0.2);
        Vec ga, gf;
        Mat ja, jf;
        ev.derivatives_analytic(d, ga, ja);
        central_fd(ev, d, 1e-6, gf, jf);
        CHECK_MESSAGE(rel_err(ga, gf) < 1e-6, c.s.name << (c.point ? " point" : " interval"));
        CHECK_MESSAGE(rel_err(ja, jf) < 1e-6, c.s.name << (c.point ? " point" : " interval"));
        Vec go;
        Mat jo;
        ev.derivatives_fd(d, go, jo, 1e-7);
        CHECK(rel_err(jo, jf) < 1e-4);
      }
    }
  }

  TEST_CASE("shifted warm start")
  {
    PredictionTrajectory tr;
    Vec z(2);
    z << 1.0, 2.0;
    for (int l = 0; l < 4; ++l) { tr.states.push_back({IntervalVector::point(z * l), IntervalVector::point(Vec::Zero(2))}); }
    for (int l = 0; l < 3; ++l) { tr.u_ff.push_back(Vec::Constant(1, 10.0 + l)); }
    ConstraintSets cs;
    Mat K(1, 2);
    K << 0.5, -1.0;
    const Vec held = shift_warm_start(tr, cs, K);
    CHECK(held.size() == 3);
    CHECK(held[0] == 11.0);
    CHECK(held[1] == 12.0);
    CHECK(held[2] == 12.0);
    cs.Kf = [](const Vec & x) { return Vec::Constant(1, -x.sum()); };
    const Vec law = shift_warm_start(tr, cs, K);
    // u' = Kf(z_end) + K z_end with z_end = (3, 6).
    CHECK(law[2] == doctest::Approx(-9.0 + 0.5 * 3.0 - 6.0));
    CHECK_THROWS_AS(shift_warm_start(PredictionTrajectory{}, cs, K), DimensionError);
  }

  TEST_CASE("CSTR terminal ingredients")
  {
    // The decrease condition needs the stage cost centered at the admissible target; x_ref itself is
    // not an equilibrium inside X.
    Scenario sc = cstr_scenario();
    sc.cost_about_target = true;
    const Fixture fx(sc);
    const TerminalDesign & td = fx.setup.terminal;
    // The target is an equilibrium of the mean dynamics.
    const Vec next = fx.s.model.f.f(td.target.x) + fx.s.model.B * td.target.u + fx.nb.w_hat;
    CHECK((next - td.target.x).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(fx.s.U.contains(td.target.u));
    CHECK(fx.s.X.contains(td.target.x));
    const TerminalDecreaseReport rep = terminal_decrease_check(fx.s.model, fx.nb, fx.setup.sets, fx.setup.cost, 10);
    CHECK(rep.samples == 100);
    CHECK(rep.worst_margin <= 0.0);
    CHECK(fx.setup.terminal_report.minkowski_ok);
    CHECK(fx.setup.terminal_report.invariant_ok);
    CHECK(fx.setup.terminal_report.input_ok);
    CHECK(td.margin_factor == 1.0);
  }

  TEST_CASE("feedback shrinks predicted widths relative to the open-loop predictor")
  {
    const Scenario s = cstr_scenario();
    const NoiseBounds nb = s.noise();
    const EstimatorState est = EstimatorState::init(s.x0_box, s.gains);
    const PredictorState p0 = PredictorState::from_estimate(est);
    const std::vector<Vec> zeros(10, Vec::Zero(1));
    const PredictionTrajectory fb = rollout(IntervalPredictor(s.model, nb, s.gains), p0, zeros);
    const PredictionTrajectory ol =
        rollout(IntervalPredictor(s.model, nb, Gains{s.gains.L, Mat::Zero(1, 2)}), p0, zeros);
    CHECK((ol.states[10].z.width() - fb.states[10].z.width()).minCoeff() >= 0.0);
    CHECK(ol.states[10].z.width().sum() > fb.states[10].z.width().sum());
  }

  TEST_CASE("controller step on the CSTR")
  {
    const Scenario s = cstr_scenario();
    const ControllerSetup setup = setup_controller(s, ControllerKind::kIrof);
    MpcController ctl(ControllerKind::kIrof, s.model, s.noise(), setup.gains, setup.sets, setup.cost,
                      EstimatorState::init(s.x0_box, setup.gains), s.mpc);
    Vec x = s.x0_box.midpoint();
    for (int k = 0; k < 5; ++k) {
      const MpcStepOutput out = ctl.step(s.model.C * x);
      CHECK(out.diagnostics.max_violation <= s.mpc.nlp.feas_tol);
      CHECK(s.U.contains(out.u_applied, 1e-9));
      CHECK(out.trajectory.states.size() == 11);
      CHECK(out.estimate_box.contains(x));
      CHECK(out.shifted_available == (k > 0));
      if (k > 0) { CHECK(out.shifted_violation <= s.mpc.nlp.feas_tol); }
      x = simulate_plant(s.model, x, out.u_applied, Vec::Zero(2));
      CHECK(out.one_step_box.contains(x, 1e-12));
    }
    CHECK(ctl.step_index() == 5);
    CHECK(controller_kind_from_string(to_string(ControllerKind::kOpenLoop)) == ControllerKind::kOpenLoop);
    CHECK_THROWS_AS(controller_kind_from_string("lqr"), Error);
  }
}
