#include "dhs/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>

#include "dhs/error.hpp"

namespace dhs {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kEquilibriumTol = 1e-6;

std::string_view to_string(DisturbanceMode mode) {
  switch (mode) {
    case DisturbanceMode::Constant: return "constant";
    case DisturbanceMode::Impulse: return "impulse";
    case DisturbanceMode::Piecewise: return "piecewise";
  }
  return "?";
}

nlohmann::json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

nlohmann::json to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (long i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

nlohmann::json to_json(const Matrix& M) {
  nlohmann::json out = nlohmann::json::array();
  for (long i = 0; i < M.rows(); ++i) out.push_back(to_json(Vector(M.row(i).transpose())));
  return out;
}

nlohmann::json to_json(const OptimalityReport& r) {
  return {{"optimal", r.optimal},
          {"marginal_cost_residual", number(r.marginal_cost_residual)},
          {"weighted_sum_residual", number(r.weighted_sum_residual)},
          {"balance_residual", number(r.balance_residual)}};
}

nlohmann::json to_json(const EquilibriumReport& r) {
  return {{"optimality", to_json(r.optimality)},
          {"error_norm", number(r.error_norm)},
          {"power_mismatch", number(r.power_mismatch)},
          {"temperature_mismatch", number(r.temperature_mismatch)},
          {"dispatch_power", to_json(r.dispatch.P)},
          {"dispatch_temperature", to_json(r.dispatch.T)}};
}

nlohmann::json to_json(const MonotonicityReport& r) {
  return {{"theta_decrease_min_eig", number(r.theta_decrease_min_eig)},
          {"value_decrease_min_eig", number(r.value_decrease_min_eig)},
          {"theta_above_optimum_min_eig", number(r.theta_above_optimum_min_eig)},
          {"max_theta_error", number(r.max_theta_error)},
          {"max_spectral_radius", number(r.max_spectral_radius)}};
}

double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Suffix-friendly form of a sweep value, e.g. -0.2 -> "m0.2", 1e-07 -> "1e-07".
std::string tag(double v) {
  std::string s = format_number(v);
  if (!s.empty() && s[0] == '-') s[0] = 'm';
  return s;
}

// One closed-loop learning run and everything reported about it.
struct LearnCase {
  std::string name;
  Scenario scenario;
  ScenarioModels models;
  SimulationResult sim;
  std::vector<double> costs;
  double distance = kNaN;
  int iterations = 0;
  bool converged = false;
  EquilibriumReport equilibrium;
  MonotonicityReport monotonicity;
  std::optional<double> id_distance;
};

LearnCase run_learn_case(std::string name, Scenario scenario, bool with_id) {
  LearnCase c;
  c.name = std::move(name);
  c.scenario = std::move(scenario);
  c.models = build_models(c.scenario);
  c.sim = simulate(c.scenario, c.models, ControllerMode::Learn);
  c.costs = stage_cost_series(c.sim.log, c.scenario.Qe, c.scenario.Re);
  c.distance = gain_distance(c.sim.final_gain, c.models.optimum.K);
  c.iterations = static_cast<int>(c.sim.log.iterations.size());
  c.converged = c.sim.learning && c.sim.learning->converged;
  c.equilibrium = equilibrium_report(c.scenario, c.models, c.sim.log);
  c.monotonicity = monotonicity_report(c.models, c.sim.log.iterations);
  if (with_id && c.sim.learning) {
    const Matrix K_id = indirect_controller(c.sim.learning->first_batch, c.models.true_aug);
    c.id_distance = gain_distance(K_id, c.models.optimum.K);
  }
  return c;
}

nlohmann::json case_json(const LearnCase& c) {
  nlohmann::json j = {
      {"case", c.name},
      {"variation", c.scenario.variation},
      {"nonlinearity", c.scenario.nonlinearity},
      {"iterations", c.iterations},
      {"converged", c.converged},
      {"final_gain_distance", number(c.distance)},
      {"first_update_step",
       c.sim.learning ? c.sim.learning->first_update_step : -1L},
      {"cumulative_cost", number(cumulative_cost(c.costs, 0, static_cast<long>(c.costs.size())))},
      {"final_gain", to_json(c.sim.final_gain)},
      {"optimal_gain", to_json(c.models.optimum.K)},
      {"initial_gain", to_json(c.models.K0)},
      {"equilibrium", to_json(c.equilibrium)},
      {"monotonicity", to_json(c.monotonicity)},
  };
  if (c.id_distance) j["indirect_gain_distance"] = number(*c.id_distance);
  return j;
}

std::string iterations_csv(const std::vector<const LearnCase*>& cases) {
  std::ostringstream out;
  out << "case,iteration,start_step,samples,pe_rank,gain_delta,oracle_distance,"
         "spectral_radius\n";
  for (const LearnCase* c : cases) {
    for (const IterationRecord& r : c->sim.log.iterations) {
      out << c->name << ',' << r.iteration << ',' << r.start_step << ','
          << r.samples << ',' << r.pe_rank << ',' << format_number(r.gain_delta)
          << ',' << format_number(r.oracle_distance) << ','
          << format_number(r.spectral_radius) << '\n';
    }
  }
  return out.str();
}

template <class T>
std::vector<T> gather(std::vector<std::future<T>>& futures) {
  std::vector<T> out;
  out.reserve(futures.size());
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

ExperimentReport finish(const ExperimentPlan& plan, const std::vector<LearnCase>& cases,
                        nlohmann::json extra) {
  ExperimentReport report;
  nlohmann::json summary = {{"experiment", plan.name},
                            {"config_hash", plan.config_hash},
                            {"seed", plan.base.seed},
                            {"method", to_string(plan.base.learning.method)},
                            {"horizon", plan.base.horizon}};
  int max_iter = 0;
  double max_distance = 0.0;
  nlohmann::json costs = nlohmann::json::object();
  nlohmann::json list = nlohmann::json::array();
  std::vector<const LearnCase*> ptrs;
  for (const LearnCase& c : cases) {
    max_iter = std::max(max_iter, c.iterations);
    max_distance = std::max(max_distance, c.distance);
    costs[c.name] = number(cumulative_cost(c.costs, 0, static_cast<long>(c.costs.size())));
    list.push_back(case_json(c));
    ptrs.push_back(&c);
    report.trajectories.emplace_back(ptrs.size() == 1 ? "" : c.name,
                                     trajectory_csv(c.sim.log));
  }
  summary["iterations"] = max_iter;
  summary["final_gain_distance"] = number(max_distance);
  if (!cases.empty()) {
    summary["optimality_residuals"] = to_json(cases.front().equilibrium.optimality);
  }
  summary["cumulative_costs"] = costs;
  summary["cases"] = list;
  for (auto& [key, value] : extra.items()) summary[key] = value;
  report.summary = std::move(summary);
  report.iterations_csv = iterations_csv(ptrs);
  return report;
}

ExperimentReport run_sweep(const ExperimentPlan& plan, bool with_id) {
  std::vector<double> variations = plan.variations;
  std::vector<double> ws = plan.nonlinearities;
  if (variations.empty()) variations = {plan.base.variation};
  if (ws.empty()) ws = {plan.base.nonlinearity};

  std::vector<std::future<LearnCase>> futures;
  for (double v : variations) {
    for (double w : ws) {
      Scenario s = plan.base;
      s.variation = v;
      s.nonlinearity = w;
      std::string name = "v" + tag(v) + "_w" + tag(w);
      futures.push_back(std::async(std::launch::async, run_learn_case, std::move(name),
                                   std::move(s), with_id));
    }
  }
  std::vector<LearnCase> cases = gather(futures);

  nlohmann::json extra = nlohmann::json::object();
  if (with_id) {
    nlohmann::json grid = nlohmann::json::array();
    for (const LearnCase& c : cases) {
      grid.push_back({{"variation", c.scenario.variation},
                      {"nonlinearity", c.scenario.nonlinearity},
                      {"rl_distance", number(c.distance)},
                      {"id_distance", number(c.id_distance.value_or(kNaN))},
                      {"rl_iterations", c.iterations}});
    }
    extra["comparison"] = grid;
  }
  return finish(plan, cases, std::move(extra));
}

ExperimentReport run_disturbance(const ExperimentPlan& plan) {
  LearnCase c = run_learn_case("disturbance", plan.base, false);
  const long n = plan.base.size();

  // Peak error and the error at the end of each segment of constant load.
  std::vector<long> changes = {0};
  for (const auto& seg : plan.base.disturbance.segments) {
    changes.push_back(seg.start);
    if (seg.end >= 0) changes.push_back(seg.end);
  }
  std::sort(changes.begin(), changes.end());
  changes.erase(std::unique(changes.begin(), changes.end()), changes.end());
  const auto& steps = c.sim.log.steps;
  const long total = static_cast<long>(steps.size());
  nlohmann::json windows = nlohmann::json::array();
  for (std::size_t i = 0; i < changes.size(); ++i) {
    const long from = changes[i];
    const long to = i + 1 < changes.size() ? changes[i + 1] : total;
    if (from >= total || from >= to) continue;
    double peak = 0.0;
    for (long k = from; k < std::min(to, total); ++k) peak = std::max(peak, inf_norm(steps[k].e));
    const Vector Pdis = plan.base.disturbance.at(from, n);
    const DispatchSolution target =
        solve_dispatch(c.models.truth.Lq, plan.base.weights.f, plan.base.weights.g, Pdis);
    const StepRecord& last = steps[std::min(to, total) - 1];
    windows.push_back({{"from", from},
                       {"to", to},
                       {"disturbance", to_json(Pdis)},
                       {"peak_error", number(peak)},
                       {"final_error", number(inf_norm(last.e))},
                       {"final_power_mismatch", number(inf_norm(last.P - target.P))}});
  }
  nlohmann::json extra = {{"disturbance_mode", to_string(plan.base.disturbance.mode)},
                          {"windows", windows}};
  std::vector<LearnCase> cases;
  cases.push_back(std::move(c));
  return finish(plan, cases, std::move(extra));
}

ExperimentReport run_nominal_comparison(const ExperimentPlan& plan) {
  auto learned = std::async(std::launch::async, run_learn_case, std::string("learned"),
                            plan.base, false);
  const ScenarioModels models = build_models(plan.base);
  SimulationResult nominal = simulate(plan.base, models, ControllerMode::Nominal);
  std::vector<LearnCase> cases;
  cases.push_back(learned.get());
  const LearnCase& c = cases.front();

  const std::vector<double> nominal_costs =
      stage_cost_series(nominal.log, plan.base.Qe, plan.base.Re);
  const long total = static_cast<long>(c.costs.size());
  const long from = c.sim.learning && c.sim.learning->first_update_step >= 0
                        ? c.sim.learning->first_update_step
                        : 0;
  const double learned_cost = cumulative_cost(c.costs, from, total);
  const double nominal_cost = cumulative_cost(nominal_costs, from, total);
  const EquilibriumReport nominal_eq = equilibrium_report(plan.base, models, nominal.log);

  nlohmann::json extra = {
      {"window", {{"from", from}, {"to", total}}},
      {"learned_window_cost", number(learned_cost)},
      {"nominal_window_cost", number(nominal_cost)},
      {"nominal_cumulative_cost", number(cumulative_cost(nominal_costs, 0, total))},
      {"nominal_gain_distance", number(gain_distance(models.K0, models.optimum.K))},
      {"nominal_equilibrium", to_json(nominal_eq)}};
  ExperimentReport report = finish(plan, cases, std::move(extra));
  report.summary["cumulative_costs"]["nominal"] =
      number(cumulative_cost(nominal_costs, 0, total));
  report.trajectories.emplace_back("nominal", trajectory_csv(nominal.log));
  return report;
}

}  // namespace

Vector DisturbanceSchedule::at(long k, long n) const {
  for (const auto& seg : segments) {
    if (k >= seg.start && (seg.end < 0 || k < seg.end)) return seg.P_dis;
  }
  return Vector::Zero(n);
}

void DisturbanceSchedule::validate(long n) const {
  long previous_end = 0;
  bool open = false;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    const std::string where = "disturbance segment " + std::to_string(i);
    if (seg.P_dis.size() != n) {
      throw Error(ErrorKind::ValidationFailed,
                  where + " has " + std::to_string(seg.P_dis.size()) +
                      " entries, expected " + std::to_string(n));
    }
    if (!seg.P_dis.allFinite()) {
      throw Error(ErrorKind::ValidationFailed, where + " is not finite");
    }
    if (seg.start < 0 || (seg.end >= 0 && seg.end <= seg.start)) {
      throw Error(ErrorKind::ValidationFailed, where + " has an empty or negative range");
    }
    if (open || (i > 0 && seg.start < previous_end)) {
      throw Error(ErrorKind::ValidationFailed, where + " overlaps its predecessor");
    }
    open = seg.end < 0;
    previous_end = seg.end;
  }
}

ScenarioModels build_models(const Scenario& scenario) {
  ScenarioModels models;
  models.nominal = discretize(scenario.topology, scenario.tau);
  const Matrix lq_true = vary_lq(models.nominal.Lq, scenario.variation);
  models.truth = discretize(lq_true, models.nominal.volumes, scenario.tau);
  models.nominal_aug =
      build_augmented(models.nominal, scenario.weights, scenario.Qe, scenario.Re);
  models.true_aug =
      build_augmented(models.truth, scenario.weights, scenario.Qe, scenario.Re);
  models.K0 = initial_controller(models.nominal, scenario.weights, scenario.Qe,
                                 scenario.Re);
  const double radius = spectral_radius(models.true_aug.closed_loop(models.K0));
  if (!(radius < 1.0)) {
    throw Error(ErrorKind::NotStabilizable,
                "nominal gain does not stabilize the varied plant (radius " +
                    std::to_string(radius) + ")");
  }
  models.optimum = optimal_regulator(models.true_aug);
  return models;
}

DhsSimulator::DhsSimulator(const DhsPlant& plant, const Scenario& scenario)
    : plant_(plant),
      weights_(scenario.weights),
      Qe_(scenario.Qe),
      Re_(scenario.Re),
      disturbance_(scenario.disturbance),
      w_(scenario.nonlinearity),
      horizon_(scenario.horizon),
      bound_(scenario.divergence_bound) {
  const long n = plant_.size();
  if (scenario.T0.size() != n || scenario.P0.size() != n) {
    throw Error(ErrorKind::DimensionMismatch,
                "initial temperature and power must have " + std::to_string(n) +
                    " entries");
  }
  if (horizon_ < 0) throw Error(ErrorKind::ValidationFailed, "negative horizon");
  disturbance_.validate(n);
  T_ = scenario.T0;
  P_prev_ = scenario.P0;
  if (scenario.prehistory == Prehistory::Consistent) {
    const Vector rhs = T_ - plant_.Bd * (P_prev_ + disturbance_.at(0, n));
    T_prev_ = plant_.Ad.partialPivLu().solve(rhs);
  } else {
    T_prev_ = T_;
  }
  e_prev_ = output_and_error(T_prev_, P_prev_, weights_).e;
  temperature_offset_ = Vector::Zero(n);
  error_offset_ = Vector::Zero(n);
  log_.steps.reserve(static_cast<std::size_t>(std::max(0L, horizon_)));
}

Vector DhsSimulator::state() const {
  Vector eps(2 * T_.size());
  eps << T_ - T_prev_, e_prev_;
  return eps;
}

void DhsSimulator::apply(const Vector& du) {
  if (k_ >= horizon_) {
    throw Error(ErrorKind::HorizonExhausted,
                "simulation horizon of " + std::to_string(horizon_) + " steps reached");
  }
  if (du.size() != P_prev_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "input has wrong size");
  }
  const long n = T_.size();
  const Vector P = P_prev_ + du;
  if (w_ != 0.0) {
    const Vector dT = T_ - T_prev_;
    temperature_offset_ += w_ * dT.cwiseAbs2();
    error_offset_ += w_ * e_prev_.cwiseAbs2();
  }
  const Vector e = output_and_error(T_, P, weights_).e + error_offset_;
  const Vector T_next =
      plant_.Ad * T_ + plant_.Bd * (P + disturbance_.at(k_, n)) + temperature_offset_;

  StepRecord record;
  record.k = k_;
  record.T = T_;
  record.P = P;
  record.e = e;
  record.du = du;
  record.stage_cost = 0.5 * (e.dot(Qe_ * e) + du.dot(Re_ * du));
  record.gain_id = gain_id_;
  log_.steps.push_back(std::move(record));

  T_prev_ = T_;
  T_ = T_next;
  P_prev_ = P;
  e_prev_ = e;
  ++k_;
  if (!T_.allFinite() || !e.allFinite() || inf_norm(T_) > bound_) {
    throw Error(ErrorKind::Diverged,
                "temperatures left the bound " + format_number(bound_) + " at step " +
                    std::to_string(k_));
  }
}

SimulationResult simulate(const Scenario& scenario, const ScenarioModels& models,
                          ControllerMode mode, const std::optional<Matrix>& fixed_gain) {
  DhsSimulator sim(models.truth, scenario);
  SimulationResult result;
  Matrix K;
  switch (mode) {
    case ControllerMode::Learn: {
      PolicyIterationOptions options;
      options.method = scenario.learning.method;
      options.eps = scenario.learning.eps;
      options.iteration_cap = scenario.learning.iteration_cap;
      options.stop_on_convergence = scenario.learning.stop_on_convergence;
      options.noise = scenario.noise;
      options.noise.seed = scenario.seed;
      options.oracle_gain = models.optimum.K;
      options.model = std::make_pair(models.true_aug.A, models.true_aug.B);
      options.on_update = [&sim](int id, const Matrix&) { sim.set_gain_id(id); };
      PolicyIterationResult learning =
          run_policy_iteration(sim, models.K0, models.true_aug.Qbar, options);
      K = learning.K;
      result.learning = std::move(learning);
      break;
    }
    case ControllerMode::Fixed:
      if (!fixed_gain) {
        throw Error(ErrorKind::ValidationFailed, "fixed mode needs a gain");
      }
      K = *fixed_gain;
      break;
    case ControllerMode::Nominal:
      K = models.K0;
      break;
  }
  if (K.rows() != scenario.size() || K.cols() != 2 * scenario.size()) {
    throw Error(ErrorKind::DimensionMismatch, "gain has wrong shape");
  }
  while (sim.remaining() > 0) sim.apply(-K * sim.state());
  result.log = sim.take_log();
  if (result.learning) result.log.iterations = result.learning->log;
  result.final_gain = K;
  return result;
}

double gain_distance(const Matrix& K, const Matrix& K_ref) {
  const double ref = K_ref.norm();
  if (ref == 0.0) throw Error(ErrorKind::ZeroReference, "reference gain is zero");
  if (K.rows() != K_ref.rows() || K.cols() != K_ref.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "gain shapes differ");
  }
  return (K - K_ref).norm() / ref;
}

std::vector<double> stage_cost_series(const TrajectoryLog& log, const Matrix& Qe,
                                      const Matrix& Re) {
  std::vector<double> out;
  out.reserve(log.steps.size());
  for (const StepRecord& s : log.steps) {
    out.push_back(0.5 * (s.e.dot(Qe * s.e) + s.du.dot(Re * s.du)));
  }
  return out;
}

double cumulative_cost(const std::vector<double>& series, long from, long to) {
  const long size = static_cast<long>(series.size());
  from = std::clamp(from, 0L, size);
  to = std::clamp(to, from, size);
  double sum = 0.0;
  for (long k = from; k < to; ++k) sum += series[k];
  return sum;
}

EquilibriumReport equilibrium_report(const Scenario& scenario,
                                     const ScenarioModels& models,
                                     const TrajectoryLog& log) {
  if (log.steps.empty()) {
    throw Error(ErrorKind::HistoryTooShort, "no steps to assess");
  }
  const StepRecord& last = log.steps.back();
  const long n = scenario.size();
  const Vector Pdis = scenario.disturbance.at(last.k, n);
  EquilibriumReport r;
  r.dispatch = solve_dispatch(models.truth.Lq, scenario.weights.f, scenario.weights.g, Pdis);
  r.optimality = check_optimality(models.truth.Lq, last.P, last.T, scenario.weights.f,
                                  scenario.weights.g, Pdis, kEquilibriumTol);
  r.error_norm = inf_norm(last.e);
  r.power_mismatch = inf_norm(last.P - r.dispatch.P);
  r.temperature_mismatch = inf_norm(last.T - r.dispatch.T);
  return r;
}

MonotonicityReport monotonicity_report(const ScenarioModels& models,
                                       const std::vector<IterationRecord>& log) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  MonotonicityReport r{inf, inf, inf, 0.0, 0.0};
  const AugmentedSystem& aug = models.true_aug;
  const Matrix& theta_star = models.optimum.Theta.full();
  for (std::size_t i = 0; i < log.size(); ++i) {
    const IterationRecord& rec = log[i];
    const QMatrix model = model_theta(aug, aug.value_matrix(rec.K_used));
    r.max_theta_error = std::max(
        r.max_theta_error, (rec.Theta - model.full()).norm() / model.full().norm());
    r.theta_above_optimum_min_eig =
        std::min(r.theta_above_optimum_min_eig, min_eigenvalue(rec.Theta - theta_star));
    if (i + 1 < log.size()) {
      r.theta_decrease_min_eig =
          std::min(r.theta_decrease_min_eig, min_eigenvalue(rec.Theta - log[i + 1].Theta));
    }
    const double radius = spectral_radius(aug.closed_loop(rec.K_next));
    r.max_spectral_radius = std::max(r.max_spectral_radius, radius);
    if (radius < 1.0) {
      r.value_decrease_min_eig =
          std::min(r.value_decrease_min_eig,
                   min_eigenvalue(aug.value_matrix(rec.K_used) -
                                  aug.value_matrix(rec.K_next)));
    }
  }
  return r;
}

bool is_experiment(std::string_view name) {
  return std::find(std::begin(kExperimentNames), std::end(kExperimentNames), name) !=
         std::end(kExperimentNames);
}

ExperimentReport run_experiment(const ExperimentPlan& plan) {
  if (plan.name == "variation") return run_sweep(plan, false);
  if (plan.name == "indirect-comparison") return run_sweep(plan, true);
  if (plan.name == "disturbance") return run_disturbance(plan);
  if (plan.name == "nominal-comparison") return run_nominal_comparison(plan);
  throw Error(ErrorKind::ValidationFailed, "unknown experiment '" + plan.name + "'");
}

std::string trajectory_csv(const TrajectoryLog& log) {
  std::ostringstream out;
  const long n = log.steps.empty() ? 0 : log.steps.front().T.size();
  out << 'k';
  for (const char* prefix : {"T", "P", "e", "du"}) {
    for (long i = 1; i <= n; ++i) out << ',' << prefix << i;
  }
  out << ",stage_cost,gain_id\n";
  for (const StepRecord& s : log.steps) {
    out << s.k;
    for (const Vector* v : {&s.T, &s.P, &s.e, &s.du}) {
      for (long i = 0; i < v->size(); ++i) out << ',' << format_number((*v)(i));
    }
    out << ',' << format_number(s.stage_cost) << ',' << s.gain_id << '\n';
  }
  return out.str();
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

}  // namespace dhs
