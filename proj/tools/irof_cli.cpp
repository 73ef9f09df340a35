// Command-line entry point: single trials, noise sweeps, gain verification and a quick self test.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "irof/harness.hpp"

namespace {

using namespace irof;

int cmd_run(const std::string & path, const std::string & controller, std::uint64_t seed, const std::string & out)
{
  const Scenario s = load_scenario(path);
  const TrialResult r = run_trial(s, controller_kind_from_string(controller), seed);
  write_trial(r, out);
  const ViolationCounts & v = r.violations;
  std::cout << s.name << " " << controller << " seed " << seed << ": " << r.steps.size() << " steps, mse " << r.mse
            << ", violations state " << v.state << " input " << v.input << " obstacle " << v.obstacle
            << " containment " << v.containment << " prediction " << v.prediction << "\n";
  if (r.aborted) { std::cout << "aborted: " << r.abort_message << "\n"; }
  return v.total() == 0 && !r.aborted ? 0 : 1;
}

int cmd_sweep(const std::string & path, const std::string & param, const std::vector<double> & values, int seeds,
              const std::vector<std::string> & controllers, const std::string & out, int threads)
{
  const Scenario s = load_scenario(path);
  std::vector<ControllerKind> kinds;
  for (const auto & c : controllers) { kinds.push_back(controller_kind_from_string(c)); }
  const auto rows = sweep(s, param, values, seeds, kinds, threads);
  const std::string csv = sweep_csv(rows);
  if (out.empty()) {
    std::cout << csv;
  } else {
    std::filesystem::create_directories(std::filesystem::path(out).parent_path().empty()
                                            ? std::filesystem::path(".")
                                            : std::filesystem::path(out).parent_path());
    std::ofstream(out) << csv;
    std::cout << "wrote " << out << "\n";
  }
  int bad = 0;
  for (const auto & r : rows) { bad += r.violations + r.aborted; }
  return bad == 0 ? 0 : 1;
}

int cmd_verify_gains(const std::string & path)
{
  const Scenario s = load_scenario(path);
  const auto [ro, rc] = gain_radii(s.model, s.gains.L, s.gains.K);
  std::cout << "rho(|A-LC| + F) = " << ro << "\nrho(|A-BK| + F) = " << rc << "\n";
  int status = ro < 1 && rc < 1 ? 0 : 1;
  try {
    const WidthBound wb = steady_width(s.model, s.noise(), s.gains, ComparisonForm::kCoupled);
    std::cout << "rho(comparison) = " << wb.rho << "\nDelta_z =";
    for (Eigen::Index i = 0; i < wb.delta_z().size(); ++i) { std::cout << " " << wb.delta_z()[i]; }
    std::cout << "\n";
  } catch (const SpectralConditionViolated & e) {
    std::cout << "comparison system not Schur: " << e.what() << "\n";
    status = 1;
  }
  std::cout << (status == 0 ? "gains certified\n" : "gains NOT certified\n");
  return status;
}

// Quick versions of the invariant suites; the full acceptance run lives in the test tree.
int cmd_selftest()
{
  int failures = 0;
  auto report = [&](const std::string & name, bool ok, const std::string & detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
    failures += ok ? 0 : 1;
  };

  {
    StreamRng rng(1, Stream::kTest);
    double worst = 0;
    for (int t = 0; t < 1000; ++t) {
      Mat M(2, 3);
      for (Eigen::Index i = 0; i < M.size(); ++i) { M.data()[i] = 4 * rng.uniform() - 2; }
      Vec lo(3), hi(3);
      for (int i = 0; i < 3; ++i) {
        const double a = 4 * rng.uniform() - 2, b = 4 * rng.uniform() - 2;
        lo[i] = std::min(a, b);
        hi[i] = std::max(a, b);
      }
      const IntervalVector out = bound_product(M, IntervalVector(lo, hi));
      Vec vlo = Vec::Constant(2, INFINITY), vhi = Vec::Constant(2, -INFINITY);
      for (int c = 0; c < 8; ++c) {
        Vec x(3);
        for (int i = 0; i < 3; ++i) { x[i] = (c >> i) & 1 ? hi[i] : lo[i]; }
        const Vec y = M * x;
        vlo = vlo.cwiseMin(y);
        vhi = vhi.cwiseMax(y);
      }
      worst = std::max({worst, (out.lo() - vlo).cwiseAbs().maxCoeff(), (out.hi() - vhi).cwiseAbs().maxCoeff()});
    }
    report("bound_product", worst <= 1e-12, "max error vs vertices " + std::to_string(worst));
  }

  for (const Scenario & s : {cstr_scenario(), unicycle_scenario()}) {
    const auto [ro, rc] = gain_radii(s.model, s.gains.L, s.gains.K);
    report(s.name + " gains", ro < 1 && rc < 1, "rho_obs " + std::to_string(ro) + ", rho_ctl " + std::to_string(rc));
  }

  {
    Scenario s = cstr_scenario();
    s.trial_length = 20;
    int viol = 0, aborted = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const TrialResult r = run_trial(s, ControllerKind::kIrof, seed);
      viol += r.violations.total();
      aborted += r.aborted;
    }
    report("cstr closed loop", viol == 0 && aborted == 0,
           std::to_string(viol) + " violations, " + std::to_string(aborted) + " aborts over 3 seeds");
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Interval output-feedback MPC experiments"};
  app.require_subcommand(1);

  std::string scenario, controller = "irof", out = "results", param = "alpha", sweep_out;
  std::uint64_t seed = 0;
  std::vector<double> values;
  std::vector<std::string> controllers{"irof", "openloop"};
  int seeds = 10, threads = 0;

  auto * run = app.add_subcommand("run", "run one closed-loop trial and write JSON/CSV results");
  run->add_option("--scenario", scenario, "scenario JSON file")->required()->check(CLI::ExistingFile);
  run->add_option("--controller", controller, "irof, nominal or openloop")
      ->check(CLI::IsMember({"irof", "nominal", "openloop"}));
  run->add_option("--seed", seed, "trial seed");
  run->add_option("--out", out, "output directory");

  auto * sw = app.add_subcommand("sweep", "paired Monte Carlo over one noise scale");
  sw->add_option("--scenario", scenario, "scenario JSON file")->required()->check(CLI::ExistingFile);
  sw->add_option("--param", param, "alpha or beta")->check(CLI::IsMember({"alpha", "beta"}));
  sw->add_option("--values", values, "noise scale values")->required();
  sw->add_option("--seeds", seeds, "number of paired seeds")->check(CLI::PositiveNumber);
  sw->add_option("--controllers", controllers, "controllers to compare");
  sw->add_option("--out", sweep_out, "CSV output file (stdout when omitted)");
  sw->add_option("--threads", threads, "worker threads, 0 = hardware concurrency");

  auto * vg = app.add_subcommand("verify-gains", "check the spectral conditions of the scenario gains");
  vg->add_option("--scenario", scenario, "scenario JSON file")->required()->check(CLI::ExistingFile);

  auto * st = app.add_subcommand("selftest", "run quick invariant checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) { return cmd_run(scenario, controller, seed, out); }
    if (sw->parsed()) { return cmd_sweep(scenario, param, values, seeds, controllers, sweep_out, threads); }
    if (vg->parsed()) { return cmd_verify_gains(scenario); }
    if (st->parsed()) { return cmd_selftest(); }
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
