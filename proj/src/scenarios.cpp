#include "irof/scenarios.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "irof/linalg.hpp"

namespace irof {

using nlohmann::json;

NoiseBounds Scenario::noise() const
{
  return NoiseBounds::make(IntervalVector(alpha * w_unit.lo(), alpha * w_unit.hi()),
                           IntervalVector(beta * v_unit.lo(), beta * v_unit.hi()), gains.L);
}

void Scenario::validate() const
{
  model.validate();
  const auto n = model.n();
  const auto m = model.m();
  const auto p = model.p();
  if (w_unit.size() != n || v_unit.size() != p) { throw DimensionError(name + ": noise box dimensions"); }
  if (X.size() != n || U.size() != m || x0_box.size() != n) { throw DimensionError(name + ": set dimensions"); }
  if (gains.L.rows() != n || gains.L.cols() != p || gains.K.rows() != m || gains.K.cols() != n) {
    throw DimensionError(name + ": gain dimensions");
  }
  if (x_ref.size() != n || H.rows() != n || H.cols() != n || R.rows() != m || R.cols() != m) {
    throw DimensionError(name + ": cost dimensions");
  }
  if (!(alpha >= 0) || !(beta >= 0)) { throw Error(name + ": noise scales must be nonnegative"); }
  if (horizon < 1 || trial_length < 1) { throw Error(name + ": horizon and trial length must be positive"); }
  if (x0 && !x0_box.contains(*x0)) { throw Error(name + ": x0 outside the initial box"); }
  if (exploration && (exploration->nx <= 0 || exploration->ny <= 0)) { throw Error(name + ": bad grid"); }
}

Scenario cstr_scenario(double alpha, double beta)
{
  Scenario s;
  s.name = "cstr";
  s.system = "cstr";
  Mat A(2, 2);
  A << 0.745, -0.002, 5.610, 0.780;
  Mat B(2, 1);
  B << 5.6e-6, 0.464;
  Mat C(1, 2);
  C << 0.0, 1.0;
  s.model = SystemModel{DecomposedModel::linear(A), B, C};

  Vec w(2);
  w << 0.02, 0.4;
  s.w_unit = IntervalVector(-w, w);
  s.v_unit = IntervalVector(Vec::Constant(1, -0.1), Vec::Constant(1, 0.1));
  s.alpha = alpha;
  s.beta = beta;

  Vec xb(2);
  xb << 0.4, 25.0;
  s.X = IntervalVector(-xb, xb);
  s.U = IntervalVector(Vec::Constant(1, -15.0), Vec::Constant(1, 15.0));
  Vec x0lo(2), x0hi(2);
  x0lo << -0.1, -0.05;
  x0hi << 0.1, 0.05;
  s.x0_box = IntervalVector(x0lo, x0hi);

  Mat L(2, 1);
  L << -0.002, 0.390;
  GainSearchConfig search;
  search.fixed_L = L;
  // Keep the feedback input tightening within half of U up to twice the unit noise, so the controller
  // stays feasible over the whole noise sweep.
  search.input_budget = GainSearchConfig::InputBudget{IntervalVector(-2.0 * w, 2.0 * w),
                                                      IntervalVector(Vec::Constant(1, -0.2), Vec::Constant(1, 0.2)),
                                                      Vec::Constant(1, 7.5)};
  const GainCertificate cert = synthesize_gains(s.model, search);
  s.gains = Gains{cert.L, cert.K};

  s.x_ref.resize(2);
  s.x_ref << -0.25, 27.3;
  s.u_ref = Vec::Zero(1);
  s.H = 100.0 * Mat::Identity(2, 2);
  s.R = 0.01 * Mat::Identity(1, 1);
  s.horizon = 10;
  s.trial_length = 50;
  s.mpc.horizon = 10;
  s.target_mode = TargetMode::kProjected;
  return s;
}

namespace {

std::pair<double, double> sin_range(double a, double b)
{
  double lo = std::min(std::sin(a), std::sin(b));
  double hi = std::max(std::sin(a), std::sin(b));
  const double pi = std::numbers::pi;
  // Interior extrema at pi/2 + k pi.
  for (double t = std::ceil((a - pi / 2) / pi) * pi + pi / 2; t <= b; t += pi) {
    lo = std::min(lo, std::sin(t));
    hi = std::max(hi, std::sin(t));
  }
  return {lo, hi};
}

std::pair<double, double> cos_range(double a, double b)
{
  const double h = std::numbers::pi / 2;
  return sin_range(a + h, b + h);
}

std::pair<double, double> product_range(std::pair<double, double> x, std::pair<double, double> y)
{
  const double c[4] = {x.first * y.first, x.first * y.second, x.second * y.first, x.second * y.second};
  return {*std::min_element(c, c + 4), *std::max_element(c, c + 4)};
}

}  // namespace

SystemModel unicycle_model(const UnicycleParams & p)
{
  const double dt = p.dt;
  Mat A = Mat::Zero(4, 4);
  A << 1 - p.delta, 0, dt, dt,  //
      0, 1 - p.delta, dt, dt,   //
      0, 0, 1, 0,               //
      0, 0, 0, 1 - p.b_v;
  Mat B = Mat::Zero(4, 2);
  B(2, 0) = dt;
  B(3, 1) = dt;
  const Mat C = Mat::Identity(4, 4);

  VecFn mu = [dt](const Vec & x) {
    Vec r = Vec::Zero(4);
    r[0] = dt * (x[3] * std::cos(x[2]) - x[2] - x[3]);
    r[1] = dt * (x[3] * std::sin(x[2]) - x[2] - x[3]);
    return r;
  };
  MatFn mu_jac = [dt](const Vec & x) {
    Mat J = Mat::Zero(4, 4);
    J(0, 2) = dt * (-x[3] * std::sin(x[2]) - 1.0);
    J(0, 3) = dt * (std::cos(x[2]) - 1.0);
    J(1, 2) = dt * (x[3] * std::cos(x[2]) - 1.0);
    J(1, 3) = dt * (std::sin(x[2]) - 1.0);
    return J;
  };

  const auto th = std::make_pair(p.x_lo[2], p.x_hi[2]);
  const auto v = std::make_pair(p.x_lo[3], p.x_hi[3]);
  const auto s = sin_range(th.first, th.second);
  const auto c = cos_range(th.first, th.second);
  const auto vs = product_range(v, s);
  const auto vc = product_range(v, c);
  JacobianBounds jb{Mat::Zero(4, 4), Mat::Zero(4, 4)};
  jb.lo(0, 2) = dt * (-vs.second - 1.0);
  jb.hi(0, 2) = dt * (-vs.first - 1.0);
  jb.lo(0, 3) = dt * (c.first - 1.0);
  jb.hi(0, 3) = dt * (c.second - 1.0);
  jb.lo(1, 2) = dt * (vc.first - 1.0);
  jb.hi(1, 2) = dt * (vc.second - 1.0);
  jb.lo(1, 3) = dt * (s.first - 1.0);
  jb.hi(1, 3) = dt * (s.second - 1.0);
  return SystemModel{DecomposedModel(A, mu, jb, mu_jac), B, C};
}

namespace {

UnicycleParams default_unicycle_params(UnicycleParams p)
{
  if (p.x_lo.size() == 0) {
    p.x_lo.resize(4);
    p.x_lo << -2.5, -2.5, -std::numbers::pi, -1.0;
  }
  if (p.x_hi.size() == 0) {
    p.x_hi.resize(4);
    p.x_hi << 2.5, 2.5, std::numbers::pi, 1.0;
  }
  return p;
}

}  // namespace

Scenario unicycle_scenario(const UnicycleParams & params)
{
  const UnicycleParams p = default_unicycle_params(params);
  Scenario s;
  s.name = "unicycle";
  s.system = "unicycle";
  s.model = unicycle_model(p);

  Vec w(4), v(4);
  w << 0.002, 0.002, 0.005, 0.005;
  v << 0.005, 0.005, 0.01, 0.01;
  s.w_unit = IntervalVector(-w, w);
  s.v_unit = IntervalVector(-v, v);
  s.X = IntervalVector(p.x_lo, p.x_hi);
  Vec ub(2);
  ub << 2.0, 1.0;
  s.U = IntervalVector(-ub, ub);
  Vec x0(4);
  x0 << -2.0, 0.05, 0.0, 0.0;
  s.x0_box = IntervalVector::centered(x0, Vec::Constant(4, 0.02));

  // Heading and speed feedback only: position feedback would couple back through |A - BK| and push the
  // comparison radius past 1.
  Mat K = Mat::Zero(2, 4);
  K(0, 2) = 5.0;
  K(1, 3) = 5.0;
  s.gains = Gains{0.5 * s.model.f.A(), K};

  s.x_ref = Vec::Zero(4);
  s.u_ref = Vec::Zero(2);
  Vec hd(4);
  hd << 1.0, 1.0, 0.1, 0.1;
  s.H = hd.asDiagonal();
  s.R = 0.1 * Mat::Identity(2, 2);
  s.penalize_applied_input = true;
  s.target_mode = TargetMode::kReference;
  s.horizon = 35;
  s.trial_length = 100;
  s.mpc.horizon = 35;
  s.terminal.xf_fraction = 0.02;

  // Slightly below the start-goal line, so a point-prediction controller passes close to it.
  Vec oc(2);
  oc << -1.0, -0.3;
  s.obstacles.push_back(Circle{oc, 0.3});

  ExplorationConfig ex;
  ex.region_lo = p.x_lo.head(2);
  ex.region_hi = p.x_hi.head(2);
  ex.nx = 20;
  ex.ny = 20;
  ex.lambda = 1.0;
  s.exploration = ex;

  s.metadata["delta"] = p.delta;
  s.metadata["b_v"] = p.b_v;
  s.metadata["dt"] = p.dt;
  return s;
}

// ---------------------------------------------------------------------------------------------------------------

namespace {

Vec vec_from(const json & j)
{
  if (!j.is_array()) { throw Error("scenario: expected a numeric array"); }
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) { v[static_cast<Eigen::Index>(i)] = j[i].get<double>(); }
  return v;
}

Mat mat_from(const json & j)
{
  if (!j.is_array() || j.empty() || !j[0].is_array()) { throw Error("scenario: expected a nested numeric array"); }
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != j[0].size()) { throw Error("scenario: ragged matrix"); }
    for (std::size_t c = 0; c < j[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

json to_json(const Vec & v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json to_json(const Mat & m)
{
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) { row.push_back(m(r, c)); }
    out.push_back(row);
  }
  return out;
}

void reject_unknown(const json & j, const std::set<std::string> & allowed, const std::string & where)
{
  if (!j.is_object()) { throw Error("scenario: " + where + " must be an object"); }
  for (const auto & [k, v] : j.items()) {
    (void)v;
    if (!allowed.count(k)) { throw Error("scenario: unknown key '" + k + "' in " + where); }
  }
}

IntervalVector symmetric_box(const json & j) { const Vec r = vec_from(j); return IntervalVector(-r, r); }

}  // namespace

Scenario scenario_from_json(const json & j)
{
  reject_unknown(j,
                 {"name", "system", "noise_scale", "horizon", "trial_length", "seed", "terminal", "exploration",
                  "obstacles", "unicycle", "gains", "solver", "cost"},
                 "scenario");
  const std::string system = j.at("system").get<std::string>();
  Scenario s;
  if (system == "cstr") {
    double a = 1.0, b = 1.0;
    if (j.contains("noise_scale")) {
      a = j["noise_scale"].value("alpha", 1.0);
      b = j["noise_scale"].value("beta", 1.0);
    }
    s = cstr_scenario(a, b);
  } else if (system == "unicycle") {
    UnicycleParams p;
    json u = j.value("unicycle", json::object());
    reject_unknown(u, {"dt", "delta", "b_v", "x_lo", "x_hi", "u_max", "w", "v", "x0", "x0_radius", "goal", "H", "R"},
                   "unicycle");
    p.dt = u.value("dt", p.dt);
    p.delta = u.value("delta", p.delta);
    p.b_v = u.value("b_v", p.b_v);
    if (u.contains("x_lo")) { p.x_lo = vec_from(u["x_lo"]); }
    if (u.contains("x_hi")) { p.x_hi = vec_from(u["x_hi"]); }
    s = unicycle_scenario(p);
    if (u.contains("u_max")) { s.U = symmetric_box(u["u_max"]); }
    if (u.contains("w")) { s.w_unit = symmetric_box(u["w"]); }
    if (u.contains("v")) { s.v_unit = symmetric_box(u["v"]); }
    const Vec x0 = u.contains("x0") ? vec_from(u["x0"]) : s.x0_box.midpoint();
    const Vec r0 = u.contains("x0_radius") ? vec_from(u["x0_radius"]) : Vec(0.5 * s.x0_box.width());
    s.x0_box = IntervalVector::centered(x0, r0);
    if (u.contains("goal")) { s.x_ref = vec_from(u["goal"]); }
    if (u.contains("H")) { s.H = vec_from(u["H"]).asDiagonal(); }
    if (u.contains("R")) { s.R = vec_from(u["R"]).asDiagonal(); }
    if (j.contains("noise_scale")) {
      s.alpha = j["noise_scale"].value("alpha", 1.0);
      s.beta = j["noise_scale"].value("beta", 1.0);
    }
  } else {
    throw Error("scenario: unknown system '" + system + "'");
  }
  if (j.contains("noise_scale")) { reject_unknown(j["noise_scale"], {"alpha", "beta"}, "noise_scale"); }
  s.name = j.value("name", s.name);
  s.horizon = j.value("horizon", s.horizon);
  s.mpc.horizon = s.horizon;
  s.trial_length = j.value("trial_length", s.trial_length);
  s.seed = j.value("seed", s.seed);

  if (j.contains("terminal")) {
    const json & t = j["terminal"];
    reject_unknown(t, {"xf_fraction", "margin_scale", "target", "cost_about_target"}, "terminal");
    s.terminal.xf_fraction = t.value("xf_fraction", s.terminal.xf_fraction);
    s.terminal.margin_scale = t.value("margin_scale", s.terminal.margin_scale);
    if (t.contains("target")) {
      const std::string mode = t["target"].get<std::string>();
      if (mode == "projected") {
        s.target_mode = TargetMode::kProjected;
      } else if (mode == "reference") {
        s.target_mode = TargetMode::kReference;
      } else {
        throw Error("scenario: terminal.target must be 'projected' or 'reference'");
      }
    }
    s.cost_about_target = t.value("cost_about_target", s.cost_about_target);
  }
  if (j.contains("cost")) {
    const json & c = j["cost"];
    reject_unknown(c, {"penalize_applied_input"}, "cost");
    s.penalize_applied_input = c.value("penalize_applied_input", s.penalize_applied_input);
  }
  if (j.contains("gains")) {
    const json & g = j["gains"];
    reject_unknown(g, {"L", "K"}, "gains");
    if (g.contains("L")) { s.gains.L = mat_from(g["L"]); }
    if (g.contains("K")) { s.gains.K = mat_from(g["K"]); }
  }
  if (j.contains("solver")) {
    const json & c = j["solver"];
    reject_unknown(c, {"feas_tol", "kkt_tol", "max_outer", "max_inner", "fd_step", "exact_first_input",
                       "refine_error_box", "input_bound", "analytic_derivatives", "structured_hessian", "apply_infeasible"},
                   "solver");
    s.mpc.nlp.feas_tol = c.value("feas_tol", s.mpc.nlp.feas_tol);
    s.mpc.nlp.kkt_tol = c.value("kkt_tol", s.mpc.nlp.kkt_tol);
    s.mpc.nlp.max_outer = c.value("max_outer", s.mpc.nlp.max_outer);
    s.mpc.nlp.max_inner = c.value("max_inner", s.mpc.nlp.max_inner);
    s.mpc.nlp.fd_step = c.value("fd_step", s.mpc.nlp.fd_step);
    s.mpc.constraint_backoff = s.mpc.nlp.feas_tol;
    s.mpc.exact_first_input = c.value("exact_first_input", s.mpc.exact_first_input);
    s.mpc.refine_error_box = c.value("refine_error_box", s.mpc.refine_error_box);
    s.mpc.analytic_derivatives = c.value("analytic_derivatives", s.mpc.analytic_derivatives);
    s.mpc.apply_infeasible = c.value("apply_infeasible", s.mpc.apply_infeasible);
    s.mpc.nlp.structured_hessian = c.value("structured_hessian", s.mpc.nlp.structured_hessian);
    if (c.contains("input_bound")) {
      const std::string f = c["input_bound"].get<std::string>();
      if (f == "feedback") {
        s.mpc.input_bound = InputBoundForm::kFeedback;
      } else if (f == "printed") {
        s.mpc.input_bound = InputBoundForm::kPrintedK;
      } else {
        throw Error("scenario: solver.input_bound must be 'feedback' or 'printed'");
      }
    }
  }
  if (j.contains("obstacles")) {
    s.obstacles.clear();
    for (const json & o : j["obstacles"]) {
      reject_unknown(o, {"center", "radius"}, "obstacle");
      s.obstacles.push_back(Circle{vec_from(o.at("center")), o.at("radius").get<double>()});
    }
  }
  if (j.contains("exploration")) {
    const json & e = j["exploration"];
    if (e.is_null()) {
      s.exploration.reset();
    } else {
      reject_unknown(e, {"grid", "region", "lambda", "ground_truth", "entropy"}, "exploration");
      ExplorationConfig ex = s.exploration.value_or(ExplorationConfig{});
      if (ex.region_lo.size() == 0) {
        ex.region_lo = s.X.lo().head(2);
        ex.region_hi = s.X.hi().head(2);
      }
      if (e.contains("grid")) {
        ex.nx = e["grid"].at(0).get<int>();
        ex.ny = e["grid"].at(1).get<int>();
      }
      if (e.contains("region")) {
        ex.region_lo = vec_from(e["region"].at(0));
        ex.region_hi = vec_from(e["region"].at(1));
      }
      ex.lambda = e.value("lambda", ex.lambda);
      ex.entropy = e.value("entropy", ex.entropy);
      if (e.contains("ground_truth")) {
        const json & gt = e["ground_truth"];
        if (gt.is_object()) {
          reject_unknown(gt, {"density"}, "ground_truth");
          ex.density = gt.value("density", ex.density);
          ex.ground_truth.clear();
        } else {
          ex.ground_truth.clear();
          for (const json & row : gt) {
            for (const json & c : row) { ex.ground_truth.push_back(c.get<int>() ? 1 : 0); }
          }
        }
      }
      s.exploration = ex;
    }
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::string & path)
{
  std::ifstream in(path);
  if (!in) { throw Error("cannot open scenario file " + path); }
  json j;
  try {
    in >> j;
  } catch (const json::exception & e) {
    throw Error("scenario file " + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

json scenario_summary(const Scenario & s)
{
  json j;
  j["name"] = s.name;
  j["system"] = s.system;
  j["alpha"] = s.alpha;
  j["beta"] = s.beta;
  j["horizon"] = s.horizon;
  j["trial_length"] = s.trial_length;
  j["x_ref"] = to_json(s.x_ref);
  j["L"] = to_json(s.gains.L);
  j["K"] = to_json(s.gains.K);
  j["metadata"] = s.metadata;
  return j;
}

Vec simulate_plant(const SystemModel & model, const Vec & x, const Vec & u, const Vec & w)
{
  return model.f.f(x) + model.B * u + w;
}

ControllerSetup setup_controller(const Scenario & s, ControllerKind kind)
{
  ControllerSetup cs;
  cs.gains = s.gains;
  if (kind == ControllerKind::kOpenLoop) { cs.gains.K = Mat::Zero(s.model.m(), s.model.n()); }
  const NoiseBounds nb = s.noise();

  if (s.target_mode == TargetMode::kProjected) {
    cs.terminal = design_terminal(s.model, nb, cs.gains, s.X, s.U, s.H, s.R, s.x_ref, s.u_ref, s.terminal);
  } else {
    TerminalDesign td;
    td.target = Target{s.x_ref, s.u_ref.size() ? s.u_ref : Vec::Zero(s.model.m())};
    const Mat a_lin = s.model.f.jacobian(td.target.x);
    td.Kf = lqr_gain(a_lin, s.model.B, s.H, s.R);
    td.P = (1.0 + s.terminal.decrease_slack) * solve_dare(a_lin, s.model.B, s.H, s.R);
    td.Xf = IntervalVector::centered(td.target.x, s.terminal.xf_fraction * s.X.width());
    try {
      td.width = steady_width(s.model, nb, cs.gains, ComparisonForm::kCoupled);
    } catch (const SpectralConditionViolated &) {
      // Unbounded predicted widths; the Minkowski check below reports failure.
      td.width.delta_star = Vec::Constant(2 * s.model.n(), std::numeric_limits<double>::infinity());
    }
    cs.terminal = td;
  }

  cs.sets.X = s.X;
  cs.sets.U = s.U;
  cs.sets.obstacles = s.obstacles;
  cs.sets.Xf = cs.terminal.Xf;
  cs.sets.Kf = affine_law(cs.terminal.target.u, cs.terminal.Kf, cs.terminal.target.x);

  cs.cost.H = s.H;
  cs.cost.R = s.R;
  cs.cost.x_ref = s.cost_about_target ? cs.terminal.target.x : s.x_ref;
  cs.cost.u_ref = s.cost_about_target ? cs.terminal.target.u : Vec::Zero(s.model.m());
  cs.cost.P = cs.terminal.P;
  cs.cost.x_f = cs.terminal.target.x;
  cs.cost.penalize_applied_input = s.penalize_applied_input;
  cs.cost.lambda = s.exploration ? s.exploration->lambda : 0.0;

  cs.terminal_report = check_terminal_set(s.model, nb, cs.sets, cs.terminal.width.delta_z());
  return cs;
}

OccupancyMap make_map(const ExplorationConfig & cfg, std::uint64_t seed)
{
  std::vector<std::uint8_t> truth = cfg.ground_truth;
  if (truth.empty()) {
    StreamRng rng(seed, Stream::kGroundTruth);
    truth.resize(static_cast<std::size_t>(cfg.nx * cfg.ny));
    for (auto & c : truth) { c = rng.uniform() < cfg.density ? 1 : 0; }
  }
  CellEntropy h = CellEntropy::shannon();
  if (cfg.entropy.rfind("renyi", 0) == 0) {
    h = CellEntropy::renyi(std::stod(cfg.entropy.substr(5)));
  } else if (cfg.entropy != "shannon") {
    throw Error("exploration: unknown entropy '" + cfg.entropy + "'");
  }
  return OccupancyMap(cfg.region_lo, cfg.region_hi, cfg.nx, cfg.ny, std::move(truth), std::move(h));
}

}  // namespace irof
