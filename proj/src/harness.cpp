#include "irof/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <locale>
#include <sstream>
#include <thread>

namespace irof {

using nlohmann::json;

namespace {

json vec_json(const Vec & v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json mat_json(const Mat & m)
{
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) { row.push_back(m(r, c)); }
    out.push_back(row);
  }
  return out;
}

json box_json(const IntervalVector & b) { return json{{"lo", vec_json(b.lo())}, {"hi", vec_json(b.hi())}}; }

bool inside(const IntervalVector & b, const Vec & x)
{
  return b.size() == x.size() && (x.array() >= b.lo().array()).all() && (x.array() <= b.hi().array()).all();
}

int obstacle_hits(const Scenario & s, const Vec & x)
{
  int hits = 0;
  for (const Circle & c : s.obstacles) {
    const double dx = x[0] - c.center[0];
    const double dy = x[1] - c.center[1];
    if (std::hypot(dx, dy) < c.radius) { ++hits; }
  }
  return hits;
}

}  // namespace

double tracking_mse(const std::vector<StepRecord> & steps, const Vec & final_state, const Vec & x_ref)
{
  if (steps.empty()) { return 0.0; }
  double sum = 0.0;
  for (std::size_t k = 1; k < steps.size(); ++k) { sum += (steps[k].x - x_ref).squaredNorm(); }
  sum += (final_state - x_ref).squaredNorm();
  return sum / static_cast<double>(steps.size());
}

TrialResult run_trial(const Scenario & s, ControllerKind kind, std::uint64_t seed)
{
  s.validate();
  TrialResult r;
  r.scenario = s.name;
  r.controller = kind;
  r.seed = seed;
  r.metadata = scenario_summary(s);

  const ControllerSetup setup = setup_controller(s, kind);
  const NoiseBounds nb = s.noise();
  r.gains = setup.gains;
  r.terminal = setup.terminal;
  r.terminal_report = setup.terminal_report;

  StreamRng rng_w(seed, Stream::kProcess);
  StreamRng rng_v(seed, Stream::kMeasurement);
  StreamRng rng_x0(seed, Stream::kInitialState);

  Vec x = s.x0 ? *s.x0 : sample_noise(s.x0_box, rng_x0);
  const EstimatorState init = EstimatorState::init(s.x0_box, setup.gains);

  MpcConfig cfg = s.mpc;
  cfg.horizon = s.horizon;
  MpcController ctrl(kind, s.model, nb, setup.gains, setup.sets, setup.cost, init, cfg);

  std::optional<OccupancyMap> map;
  if (s.exploration) {
    map = make_map(*s.exploration, seed);
    map->measure(x);
    ctrl.cost().lambda = s.exploration->lambda;
    const OccupancyMap * mp = &*map;
    ctrl.cost().exploration = [mp](const Vec & z) { return mp->smooth_entropy_gain(z); };
  }

  for (int k = 0; k < s.trial_length; ++k) {
    StepRecord rec;
    rec.k = k;
    rec.x = x;
    rec.v = sample_noise(nb.v, rng_v);
    rec.w = sample_noise(nb.w, rng_w);
    rec.y = s.model.C * x + rec.v;

    MpcStepOutput out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out = ctrl.step(rec.y);
    } catch (const Error & e) {
      r.aborted = true;
      r.abort_message = "step " + std::to_string(k) + ": " + e.what();
      break;
    }
    const auto t1 = std::chrono::steady_clock::now();
    r.step_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());

    rec.box = out.estimate_box;
    rec.point = out.point_estimate;
    rec.one_step_box = out.one_step_box;
    rec.u = out.u_applied;
    rec.status = to_string(out.diagnostics.status);
    rec.iterations = out.diagnostics.iterations;
    rec.evaluations = out.diagnostics.evaluations;
    rec.objective = out.diagnostics.objective_value;
    rec.max_violation = out.diagnostics.max_violation;
    rec.shifted_violation = out.shifted_violation;
    rec.shifted_available = out.shifted_available;

    x = simulate_plant(s.model, x, rec.u, rec.w);
    if (map) {
      map->measure(x);
      rec.entropy = map->total_entropy();
    }
    r.steps.push_back(std::move(rec));
  }
  r.x_final = x;
  r.mse = tracking_mse(r.steps, r.x_final, s.x_ref);
  r.violations = recount_violations(s, r);
  return r;
}

ViolationCounts recount_violations(const Scenario & s, const TrialResult & r)
{
  ViolationCounts c;
  for (std::size_t k = 0; k < r.steps.size(); ++k) {
    const StepRecord & st = r.steps[k];
    const Vec & next = k + 1 < r.steps.size() ? r.steps[k + 1].x : r.x_final;
    if (!inside(s.U, st.u)) { ++c.input; }
    if (!inside(s.X, next)) { ++c.state; }
    c.obstacle += obstacle_hits(s, next);
    if (!inside(st.box, st.x)) { ++c.containment; }
    if (r.controller != ControllerKind::kNominal && !inside(st.one_step_box, next)) { ++c.prediction; }
  }
  return c;
}

json trial_to_json(const TrialResult & r)
{
  json j;
  j["scenario"] = r.scenario;
  j["controller"] = to_string(r.controller);
  if (r.controller == ControllerKind::kOpenLoop) { j["label"] = "no-feedback-predictor baseline"; }
  j["seed"] = r.seed;
  j["metadata"] = r.metadata;
  j["predictor_gains"] = {{"L", mat_json(r.gains.L)}, {"K", mat_json(r.gains.K)}};
  j["terminal"] = {{"target_x", vec_json(r.terminal.target.x)},
                   {"target_u", vec_json(r.terminal.target.u)},
                   {"Kf", mat_json(r.terminal.Kf)},
                   {"Xf", box_json(r.terminal.Xf)},
                   {"delta_z", vec_json(r.terminal.width.delta_z())},
                   {"margin_factor", r.terminal.margin_factor},
                   {"minkowski_ok", r.terminal_report.minkowski_ok},
                   {"invariant_ok", r.terminal_report.invariant_ok},
                   {"input_ok", r.terminal_report.input_ok}};
  json steps = json::array();
  for (const StepRecord & st : r.steps) {
    steps.push_back({{"k", st.k},
                     {"x", vec_json(st.x)},
                     {"y", vec_json(st.y)},
                     {"w", vec_json(st.w)},
                     {"v", vec_json(st.v)},
                     {"box", box_json(st.box)},
                     {"point", vec_json(st.point)},
                     {"one_step_box", box_json(st.one_step_box)},
                     {"u", vec_json(st.u)},
                     {"solver",
                      {{"status", st.status},
                       {"iterations", st.iterations},
                       {"evaluations", st.evaluations},
                       {"objective", st.objective},
                       {"max_violation", st.max_violation},
                       {"shifted_violation", st.shifted_violation},
                       {"shifted_available", st.shifted_available}}},
                     {"entropy", st.entropy}});
  }
  j["steps"] = steps;
  j["x_final"] = vec_json(r.x_final);
  j["mse"] = r.mse;
  j["violations"] = {{"state", r.violations.state},
                     {"input", r.violations.input},
                     {"obstacle", r.violations.obstacle},
                     {"containment", r.violations.containment},
                     {"prediction", r.violations.prediction}};
  j["aborted"] = r.aborted;
  j["abort_message"] = r.abort_message;
  return j;
}

std::string trial_to_csv(const TrialResult & r)
{
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17);
  const Eigen::Index n = r.x_final.size();
  const Eigen::Index m = r.gains.K.rows();
  os << "k";
  for (Eigen::Index i = 0; i < n; ++i) { os << ",x" << i; }
  for (Eigen::Index i = 0; i < n; ++i) { os << ",lo" << i << ",hi" << i; }
  for (Eigen::Index i = 0; i < n; ++i) { os << ",xhat" << i; }
  for (Eigen::Index i = 0; i < m; ++i) { os << ",u" << i; }
  os << ",status,max_violation,shifted_violation,entropy\n";
  for (const StepRecord & st : r.steps) {
    os << st.k;
    for (Eigen::Index i = 0; i < n; ++i) { os << ',' << st.x[i]; }
    for (Eigen::Index i = 0; i < n; ++i) { os << ',' << st.box.lo()[i] << ',' << st.box.hi()[i]; }
    for (Eigen::Index i = 0; i < n; ++i) { os << ',' << st.point[i]; }
    for (Eigen::Index i = 0; i < m; ++i) { os << ',' << st.u[i]; }
    os << ',' << st.status << ',' << st.max_violation << ',' << st.shifted_violation << ',' << st.entropy << '\n';
  }
  return os.str();
}

void write_trial(const TrialResult & r, const std::string & dir)
{
  std::filesystem::create_directories(dir);
  const std::string stem = dir + "/" + r.scenario + "_" + to_string(r.controller) + "_" + std::to_string(r.seed);
  std::ofstream(stem + ".json") << trial_to_json(r).dump(1) << '\n';
  std::ofstream(stem + ".csv") << trial_to_csv(r);
  std::ofstream t(stem + ".timing.csv");
  t << std::setprecision(9) << "k,seconds\n";
  for (std::size_t k = 0; k < r.step_seconds.size(); ++k) { t << k << ',' << r.step_seconds[k] << '\n'; }
}

Scenario with_noise_scale(const Scenario & s, const std::string & param, double value)
{
  Scenario out = s;
  if (param == "alpha") {
    out.alpha = value;
  } else if (param == "beta") {
    out.beta = value;
  } else {
    throw Error("sweep parameter must be 'alpha' or 'beta', got '" + param + "'");
  }
  return out;
}

void parallel_for(int count, int threads, const std::function<void(int)> & task)
{
  if (threads <= 0) { threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) { task(i); }
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto & th : pool) { th.join(); }
  for (auto & e : errors) {
    if (e) { std::rethrow_exception(e); }
  }
}

std::vector<SweepRow> sweep(const Scenario & s, const std::string & param, const std::vector<double> & values,
                            int seeds, const std::vector<ControllerKind> & controllers, int threads)
{
  if (values.empty() || seeds <= 0 || controllers.empty()) { throw Error("sweep: empty grid"); }
  std::vector<Scenario> scen;
  for (double v : values) { scen.push_back(with_noise_scale(s, param, v)); }
  const int nv = static_cast<int>(values.size());
  const int nc = static_cast<int>(controllers.size());
  const int total = nv * nc * seeds;
  std::vector<TrialResult> results(static_cast<std::size_t>(total));
  parallel_for(total, threads, [&](int i) {
    const int seed = i % seeds;
    const int c = (i / seeds) % nc;
    const int v = i / (seeds * nc);
    results[static_cast<std::size_t>(i)] =
        run_trial(scen[static_cast<std::size_t>(v)], controllers[static_cast<std::size_t>(c)],
                  s.seed + static_cast<std::uint64_t>(seed));
  });

  std::vector<SweepRow> rows;
  for (int v = 0; v < nv; ++v) {
    for (int c = 0; c < nc; ++c) {
      SweepRow row;
      row.param = param;
      row.value = values[static_cast<std::size_t>(v)];
      row.controller = controllers[static_cast<std::size_t>(c)];
      for (int k = 0; k < seeds; ++k) {
        const TrialResult & tr = results[static_cast<std::size_t>((v * nc + c) * seeds + k)];
        row.mse.push_back(tr.mse);
        row.violations += tr.violations.total();
        row.aborted += tr.aborted ? 1 : 0;
      }
      double mean = 0.0;
      for (double e : row.mse) { mean += e; }
      mean /= seeds;
      double var = 0.0;
      for (double e : row.mse) { var += (e - mean) * (e - mean); }
      row.mse_mean = mean;
      row.mse_std = seeds > 1 ? std::sqrt(var / (seeds - 1)) : 0.0;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow> & rows)
{
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << "param,value,controller,mse_mean,mse_std,violations\n";
  for (const SweepRow & r : rows) {
    os << r.param << ',' << r.value << ',' << to_string(r.controller) << ',' << r.mse_mean << ',' << r.mse_std
       << ',' << r.violations << '\n';
  }
  return os.str();
}

std::vector<SweepRow> parse_sweep_csv(const std::string & text)
{
  std::istringstream is(text);
  is.imbue(std::locale::classic());
  std::string line;
  std::getline(is, line);
  if (line != "param,value,controller,mse_mean,mse_std,violations") { throw Error("sweep csv: bad header"); }
  std::vector<SweepRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) { continue; }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) { f.push_back(cell); }
    if (f.size() != 6) { throw Error("sweep csv: expected 6 fields in '" + line + "'"); }
    SweepRow r;
    r.param = f[0];
    r.value = std::stod(f[1]);
    r.controller = controller_kind_from_string(f[2]);
    r.mse_mean = std::stod(f[3]);
    r.mse_std = std::stod(f[4]);
    r.violations = std::stoi(f[5]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace irof
