#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "irof/gains.hpp"
#include "irof/linalg.hpp"
#include "irof/scenarios.hpp"

using namespace irof;

namespace {

double eigen_radius(const Mat & m) { return m.eigenvalues().cwiseAbs().maxCoeff(); }

}  // namespace

TEST_SUITE("gain_synthesis")
{
  TEST_CASE("CSTR published observer gain: |A - LC| is triangular with radius 0.745")
  {
    const Scenario s = cstr_scenario();
    Mat L(2, 1);
    L << -0.002, 0.390;
    const auto [rho_obs, rho_ctl] = gain_radii(s.model, L, Mat::Zero(1, 2));
    CHECK(rho_obs == doctest::Approx(0.745).epsilon(1e-9));
    (void)rho_ctl;
    const Mat alc = (s.model.f.A() - L * s.model.C).cwiseAbs();
    CHECK(alc(0, 1) == doctest::Approx(0.0));
    CHECK(spectral_radius(alc) == doctest::Approx(std::max(alc(0, 0), alc(1, 1))).epsilon(1e-9));
  }

  TEST_CASE("CSTR certificate with the synthesized controller gain")
  {
    const Scenario s = cstr_scenario();
    const GainCertificate c = verify_gains(s.model, s.gains.L, s.gains.K);
    CHECK(c.rho_obs < 1.0);
    CHECK(c.rho_ctl < 1.0);
    CHECK(c.rho_obs == doctest::Approx(eigen_radius((s.model.f.A() - c.L * s.model.C).cwiseAbs())).epsilon(1e-9));
    CHECK(c.rho_ctl == doctest::Approx(eigen_radius((s.model.f.A() - s.model.B * c.K).cwiseAbs())).epsilon(1e-9));
  }

  TEST_CASE("zero dynamics are certified with zero gains")
  {
    const SystemModel m{DecomposedModel::linear(Mat::Zero(2, 2)), Mat::Identity(2, 1), Mat::Identity(1, 2)};
    const GainCertificate c = verify_gains(m, Mat::Zero(2, 1), Mat::Zero(1, 2));
    CHECK(c.rho_obs == 0.0);
    CHECK(c.rho_ctl == 0.0);
    const GainCertificate s = synthesize_gains(m);
    CHECK(s.L.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.K.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("unstable scalar system without gains is rejected with its radius")
  {
    const SystemModel m{DecomposedModel::linear(Mat::Constant(1, 1, 2.0)), Mat::Constant(1, 1, 1.0),
                        Mat::Constant(1, 1, 1.0)};
    CHECK_THROWS_AS(verify_gains(m, Mat::Zero(1, 1), Mat::Constant(1, 1, 1.5)), SpectralConditionViolated);
    try {
      verify_gains(m, Mat::Zero(1, 1), Mat::Constant(1, 1, 1.5));
    } catch (const SpectralConditionViolated & e) {
      CHECK(e.radius() == doctest::Approx(2.0));
    }
    CHECK_THROWS_AS(verify_gains(m, Mat::Zero(2, 1), Mat::Zero(1, 1)), DimensionError);
  }

  TEST_CASE("search failure reports the best radii")
  {
    // The input does not reach the state: rho(|A - BK|) = 2 for every K.
    const SystemModel m{DecomposedModel::linear(Mat::Constant(1, 1, 2.0)), Mat::Zero(1, 1),
                        Mat::Constant(1, 1, 1.0)};
    CHECK_THROWS_AS(synthesize_gains(m), SpectralConditionViolated);
  }

  TEST_CASE("synthesis is deterministic and respects the input budget")
  {
    const Scenario s = cstr_scenario();
    GainSearchConfig cfg;
    cfg.fixed_L = s.gains.L;
    const GainCertificate a = synthesize_gains(s.model, cfg);
    const GainCertificate b = synthesize_gains(s.model, cfg);
    CHECK(a.K == b.K);
    CHECK(a.rho_ctl < 1.0);
    CHECK(a.L == s.gains.L);

    Vec w(2);
    w << 0.04, 0.8;
    cfg.input_budget = GainSearchConfig::InputBudget{IntervalVector(-w, w),
                                                     IntervalVector(Vec::Constant(1, -0.2), Vec::Constant(1, 0.2)),
                                                     Vec::Constant(1, 7.5)};
    const GainCertificate c = synthesize_gains(s.model, cfg);
    CHECK(c.K == s.gains.K);
    const NoiseBounds nb = NoiseBounds::make(IntervalVector(-w, w), cfg.input_budget->v, c.L);
    const WidthBound wb = steady_width(s.model, nb, Gains{c.L, c.K}, ComparisonForm::kCoupled);
    CHECK((0.5 * c.K.cwiseAbs() * (wb.delta_z() + wb.delta_e()))(0) <= 7.5);

    cfg.input_budget->limit = Vec::Constant(1, -1.0);
    CHECK_THROWS_AS(synthesize_gains(s.model, cfg), Error);
  }

  TEST_CASE("unicycle scenario gains are certified on the default domain")
  {
    const Scenario s = unicycle_scenario();
    const GainCertificate c = verify_gains(s.model, s.gains.L, s.gains.K);
    CHECK(c.rho_obs < 1.0);
    CHECK(c.rho_ctl < 1.0);
    // The Riccati search finds a certified pair as well.
    const GainCertificate g = synthesize_gains(s.model);
    CHECK(std::max(g.rho_obs, g.rho_ctl) < 1.0);
  }
}
