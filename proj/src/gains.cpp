#include "irof/gains.hpp"

#include <cmath>
#include <sstream>

#include "irof/linalg.hpp"
#include "irof/prediction.hpp"

namespace irof {

std::pair<double, double> gain_radii(const SystemModel & model, const Mat & L, const Mat & K)
{
  model.validate();
  if (L.rows() != model.n() || L.cols() != model.p()) { throw DimensionError("gains: L must be n x p"); }
  if (K.rows() != model.m() || K.cols() != model.n()) { throw DimensionError("gains: K must be m x n"); }
  const Mat & A = model.f.A();
  const Mat & F = model.f.F_bar();
  const double rho_obs = spectral_radius((A - L * model.C).cwiseAbs() + F);
  const double rho_ctl = spectral_radius((A - model.B * K).cwiseAbs() + F);
  return {rho_obs, rho_ctl};
}

GainCertificate verify_gains(const SystemModel & model, const Mat & L, const Mat & K)
{
  const auto [rho_obs, rho_ctl] = gain_radii(model, L, K);
  if (!(rho_obs < 1.0)) {
    throw SpectralConditionViolated("verify_gains: rho(|A-LC| + F_mu) = " + std::to_string(rho_obs) + " >= 1",
                                    rho_obs);
  }
  if (!(rho_ctl < 1.0)) {
    throw SpectralConditionViolated("verify_gains: rho(|A-BK| + F_mu) = " + std::to_string(rho_ctl) + " >= 1",
                                    rho_ctl);
  }
  return GainCertificate{L, K, rho_obs, rho_ctl};
}

namespace {

struct Candidate
{
  Mat gain;
  double rho;
};

std::vector<Vec> profiles_or_identity(const GainSearchConfig & cfg, Eigen::Index n)
{
  if (!cfg.state_profiles.empty()) { return cfg.state_profiles; }
  return {Vec::Ones(n)};
}

}  // namespace

GainCertificate synthesize_gains(const SystemModel & model, const GainSearchConfig & cfg)
{
  model.validate();
  const auto n = model.n();
  const auto m = model.m();
  const auto p = model.p();
  const Mat & A = model.f.A();
  const Mat & F = model.f.F_bar();

  auto obs_rho = [&](const Mat & L) { return spectral_radius((A - L * model.C).cwiseAbs() + F); };
  auto ctl_rho = [&](const Mat & K) { return spectral_radius((A - model.B * K).cwiseAbs() + F); };

  std::vector<Candidate> ls, ks;
  if (cfg.fixed_L) {
    ls.push_back({*cfg.fixed_L, obs_rho(*cfg.fixed_L)});
  } else {
    ls.push_back({Mat::Zero(n, p), obs_rho(Mat::Zero(n, p))});
    for (const Vec & prof : profiles_or_identity(cfg, n)) {
      for (double wgt : cfg.observer_weights) {
        try {
          const Mat L = kalman_gain(A, model.C, wgt * Mat(prof.asDiagonal()), Mat::Identity(p, p));
          if (L.allFinite()) { ls.push_back({L, obs_rho(L)}); }
        } catch (const Error &) {
          // Riccati solve failed for this weight; the candidate is skipped.
        }
      }
    }
  }
  if (cfg.fixed_K) {
    ks.push_back({*cfg.fixed_K, ctl_rho(*cfg.fixed_K)});
  } else {
    ks.push_back({Mat::Zero(m, n), ctl_rho(Mat::Zero(m, n))});
    for (const Vec & prof : profiles_or_identity(cfg, n)) {
      for (double wgt : cfg.controller_weights) {
        try {
          const Mat K = lqr_gain(A, model.B, wgt * Mat(prof.asDiagonal()), Mat::Identity(m, m));
          if (K.allFinite()) { ks.push_back({K, ctl_rho(K)}); }
        } catch (const Error &) {
        }
      }
    }
  }

  if (cfg.input_budget) {
    const Candidate * l_ref = &ls.front();
    for (const auto & c : ls) {
      if (c.rho < l_ref->rho) { l_ref = &c; }
    }
    const NoiseBounds nb = NoiseBounds::make(cfg.input_budget->w, cfg.input_budget->v, l_ref->gain);
    std::vector<Candidate> kept;
    for (const auto & c : ks) {
      try {
        const WidthBound wb = steady_width(model, nb, Gains{l_ref->gain, c.gain}, ComparisonForm::kCoupled);
        const Vec share = 0.5 * c.gain.cwiseAbs() * (wb.delta_z() + wb.delta_e());
        if ((share.array() <= cfg.input_budget->limit.array()).all()) { kept.push_back(c); }
      } catch (const SpectralConditionViolated &) {
        // Unbounded widths: over any budget.
      }
    }
    if (kept.empty()) { throw Error("synthesize_gains: no controller candidate within the input budget"); }
    ks = std::move(kept);
  }

  double best_obs = std::numeric_limits<double>::infinity();
  double best_ctl = std::numeric_limits<double>::infinity();
  for (const auto & c : ls) { best_obs = std::min(best_obs, c.rho); }
  for (const auto & c : ks) { best_ctl = std::min(best_ctl, c.rho); }
  const double best_max = std::max(best_obs, best_ctl);
  if (!(best_max < 1.0)) {
    std::ostringstream os;
    os << "synthesize_gains: no certified pair; best rho_obs = " << best_obs << ", best rho_ctl = " << best_ctl;
    throw SpectralConditionViolated(os.str(), best_max);
  }

  const double limit = std::min(best_max + cfg.tie_tolerance, std::nextafter(1.0, 0.0));
  const Candidate * pick_l = nullptr;
  const Candidate * pick_k = nullptr;
  for (const auto & c : ls) {
    if (c.rho <= limit && (!pick_l || c.gain.norm() < pick_l->gain.norm())) { pick_l = &c; }
  }
  for (const auto & c : ks) {
    if (c.rho <= limit && (!pick_k || c.gain.norm() < pick_k->gain.norm())) { pick_k = &c; }
  }
  return GainCertificate{pick_l->gain, pick_k->gain, pick_l->rho, pick_k->rho};
}

}  // namespace irof
