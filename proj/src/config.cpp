#include "dhs/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "dhs/error.hpp"

namespace dhs {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::ParseError, path + ": " + what);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(join(path, key), "required field missing");
  return *it;
}

const json* optional(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

long as_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<long>();
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

Vector as_vector(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  Vector v(static_cast<long>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<long>(i)) = as_number(j[i], index(path, i));
  return v;
}

std::vector<double> as_list(const json& j, const std::string& path) {
  const Vector v = as_vector(j, path);
  return std::vector<double>(v.data(), v.data() + v.size());
}

// A weight matrix given as a scalar (times I), a diagonal, or in full.
Matrix as_weight(const json& j, long n, const std::string& path) {
  if (j.is_number()) return as_number(j, path) * Matrix::Identity(n, n);
  if (!j.is_array() || static_cast<long>(j.size()) != n) {
    fail(path, "expected a number, " + std::to_string(n) + " diagonal entries or an " +
                   std::to_string(n) + "x" + std::to_string(n) + " matrix");
  }
  if (j[0].is_number()) return as_vector(j, path).asDiagonal();
  Matrix M(n, n);
  for (long i = 0; i < n; ++i) {
    const Vector row = as_vector(j[i], index(path, i));
    if (row.size() != n) fail(index(path, i), "expected " + std::to_string(n) + " entries");
    M.row(i) = row.transpose();
  }
  return M;
}

Vector sized(const json& j, long n, const std::string& path) {
  Vector v = as_vector(j, path);
  if (v.size() != n) fail(path, "expected " + std::to_string(n) + " entries, got " +
                                    std::to_string(v.size()));
  return v;
}

NetworkTopology parse_topology(const json& j, const std::string& path) {
  NetworkTopology topology;
  const std::string hx_path = join(path, "exchangers");
  const json& hxs = require(j, "exchangers", path);
  if (!hxs.is_array()) fail(hx_path, "expected an array");
  for (std::size_t i = 0; i < hxs.size(); ++i) {
    const std::string p = index(hx_path, i);
    HeatExchanger hx;
    hx.id = as_string(require(hxs[i], "id", p), join(p, "id"));
    const std::string role = as_string(require(hxs[i], "role", p), join(p, "role"));
    if (role == "producer") {
      hx.role = Role::Producer;
    } else if (role == "consumer") {
      hx.role = Role::Consumer;
    } else {
      fail(join(p, "role"), "expected \"producer\" or \"consumer\"");
    }
    hx.volume = as_number(require(hxs[i], "volume", p), join(p, "volume"));
    hx.through_flow = as_number(require(hxs[i], "through_flow", p), join(p, "through_flow"));
    topology.exchangers.push_back(std::move(hx));
  }
  const std::string pipe_path = join(path, "pipes");
  const json& pipes = require(j, "pipes", path);
  if (!pipes.is_array()) fail(pipe_path, "expected an array");
  for (std::size_t i = 0; i < pipes.size(); ++i) {
    const std::string p = index(pipe_path, i);
    Pipe pipe;
    pipe.from = as_string(require(pipes[i], "from", p), join(p, "from"));
    pipe.to = as_string(require(pipes[i], "to", p), join(p, "to"));
    pipe.flow = as_number(require(pipes[i], "flow", p), join(p, "flow"));
    topology.pipes.push_back(std::move(pipe));
  }
  return topology;
}

DisturbanceSchedule parse_disturbance(const json& j, long n, const std::string& path) {
  DisturbanceSchedule schedule;
  if (const json* mode = optional(j, "mode")) {
    const std::string m = as_string(*mode, join(path, "mode"));
    if (m == "constant") {
      schedule.mode = DisturbanceMode::Constant;
    } else if (m == "impulse") {
      schedule.mode = DisturbanceMode::Impulse;
    } else if (m == "piecewise") {
      schedule.mode = DisturbanceMode::Piecewise;
    } else {
      fail(join(path, "mode"), "expected constant, impulse or piecewise");
    }
  }
  if (const json* segs = optional(j, "segments")) {
    const std::string seg_path = join(path, "segments");
    if (!segs->is_array()) fail(seg_path, "expected an array");
    for (std::size_t i = 0; i < segs->size(); ++i) {
      const std::string p = index(seg_path, i);
      const json& s = (*segs)[i];
      DisturbanceSegment seg;
      if (const json* start = optional(s, "start")) seg.start = as_integer(*start, join(p, "start"));
      if (const json* end = optional(s, "end")) seg.end = as_integer(*end, join(p, "end"));
      seg.P_dis = sized(require(s, "P_dis", p), n, join(p, "P_dis"));
      schedule.segments.push_back(std::move(seg));
    }
  }
  try {
    schedule.validate(n);
  } catch (const Error& err) {
    fail(path, err.what());
  }
  return schedule;
}

ProbingNoiseConfig parse_noise(const json& j, const std::string& path) {
  ProbingNoiseConfig noise;
  if (const json* v = optional(j, "sinusoids_per_channel")) {
    noise.sinusoids_per_channel =
        static_cast<int>(as_integer(*v, join(path, "sinusoids_per_channel")));
  }
  if (const json* v = optional(j, "omega_min")) noise.omega_min = as_number(*v, join(path, "omega_min"));
  if (const json* v = optional(j, "omega_max")) noise.omega_max = as_number(*v, join(path, "omega_max"));
  if (const json* v = optional(j, "amplitude")) noise.amplitude = as_number(*v, join(path, "amplitude"));
  if (const json* v = optional(j, "decay")) noise.decay = as_number(*v, join(path, "decay"));
  if (const json* v = optional(j, "floor")) noise.floor = as_number(*v, join(path, "floor"));
  return noise;
}

LearningSettings parse_learning(const json& j, const std::string& path) {
  LearningSettings s;
  if (const json* v = optional(j, "method")) {
    try {
      s.method = parse_method(as_string(*v, join(path, "method")));
    } catch (const Error&) {
      fail(join(path, "method"), "expected \"matrix\" or \"scalar-ls\"");
    }
  }
  if (const json* v = optional(j, "eps")) s.eps = as_number(*v, join(path, "eps"));
  if (const json* v = optional(j, "iteration_cap")) {
    s.iteration_cap = static_cast<int>(as_integer(*v, join(path, "iteration_cap")));
  }
  if (const json* v = optional(j, "stop_on_convergence")) {
    s.stop_on_convergence = as_bool(*v, join(path, "stop_on_convergence"));
  }
  return s;
}

std::uint64_t as_seed(const json& j, const std::string& path) {
  if (!j.is_number_unsigned()) fail(path, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

}  // namespace

Config parse_config(const std::string& text) {
  try {
    json doc = json::parse(text);
    if (!doc.is_object()) fail("<root>", "expected an object");
    return Config{std::move(doc)};
  } catch (const json::parse_error& err) {
    // The byte offset alone is unhelpful; report line and column.
    const std::size_t pos = std::min<std::size_t>(err.byte, text.size());
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < pos; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ", column " +
                                           std::to_string(column) + ": malformed JSON");
  }
}

Config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ParseError, path + ": cannot open config");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str());
  } catch (const Error& err) {
    std::string what = err.what();
    const std::string prefix = std::string(to_string(ErrorKind::ParseError)) + ": ";
    if (what.rfind(prefix, 0) == 0) what.erase(0, prefix.size());
    throw Error(ErrorKind::ParseError, path + ": " + what);
  }
}

Scenario parse_scenario(const json& doc) {
  Scenario s;
  s.topology = parse_topology(require(doc, "topology", ""), "topology");
  const long n = s.topology.size();
  if (n < 2) fail("topology.exchangers", "at least two exchangers are required");

  if (const json* v = optional(doc, "tau")) s.tau = as_number(*v, "tau");
  const json& costs = require(doc, "costs", "");
  s.weights.f = sized(require(costs, "f", "costs"), n, "costs.f");
  const json* g = optional(costs, "g");
  s.weights.g = g ? sized(*g, n, "costs.g") : Vector::Ones(n);
  const json* Qe = optional(costs, "Qe");
  s.Qe = Qe ? as_weight(*Qe, n, "costs.Qe") : Matrix::Identity(n, n);
  const json* Re = optional(costs, "Re");
  s.Re = Re ? as_weight(*Re, n, "costs.Re") : Matrix::Identity(n, n);

  s.T0 = Vector::Zero(n);
  s.P0 = Vector::Zero(n);
  if (const json* init = optional(doc, "initial")) {
    if (const json* v = optional(*init, "T0")) s.T0 = sized(*v, n, "initial.T0");
    if (const json* v = optional(*init, "P0")) s.P0 = sized(*v, n, "initial.P0");
    if (const json* v = optional(*init, "prehistory")) {
      const std::string p = as_string(*v, "initial.prehistory");
      if (p == "consistent") {
        s.prehistory = Prehistory::Consistent;
      } else if (p == "rest") {
        s.prehistory = Prehistory::Rest;
      } else {
        fail("initial.prehistory", "expected \"consistent\" or \"rest\"");
      }
    }
  }
  if (const json* v = optional(doc, "disturbance")) {
    s.disturbance = parse_disturbance(*v, n, "disturbance");
  }
  if (const json* v = optional(doc, "noise")) s.noise = parse_noise(*v, "noise");
  if (const json* v = optional(doc, "learning")) s.learning = parse_learning(*v, "learning");
  if (const json* v = optional(doc, "variation")) s.variation = as_number(*v, "variation");
  if (const json* v = optional(doc, "nonlinearity")) s.nonlinearity = as_number(*v, "nonlinearity");
  if (const json* v = optional(doc, "horizon")) s.horizon = as_integer(*v, "horizon");
  if (const json* v = optional(doc, "seed")) s.seed = as_seed(*v, "seed");
  if (const json* v = optional(doc, "divergence_bound")) {
    s.divergence_bound = as_number(*v, "divergence_bound");
  }

  if (!(s.variation > -1.0)) fail("variation", "must exceed -1");
  if (!(s.nonlinearity >= 0.0)) fail("nonlinearity", "must be non-negative");
  if (!(s.divergence_bound > 0.0)) fail("divergence_bound", "must be positive");
  if (s.horizon <= required_samples(2 * n, n)) {
    fail("horizon", "must exceed one batch of " +
                        std::to_string(required_samples(2 * n, n)) + " samples");
  }
  return s;
}

ExperimentPlan plan_experiment(const Config& config, const std::string& name,
                               const RunOverrides& overrides) {
  if (!is_experiment(name)) {
    throw Error(ErrorKind::ParseError, "unknown experiment '" + name + "'");
  }
  json doc = config.doc;
  json sweep = json::object();
  if (const json* blocks = optional(doc, "experiments")) {
    if (const json* block = optional(*blocks, name)) {
      if (!block->is_object()) fail("experiments." + name, "expected an object");
      json patch = *block;
      if (const json* s = optional(patch, "sweep")) sweep = *s;
      patch.erase("sweep");
      doc.merge_patch(patch);
    }
  }
  doc.erase("experiments");
  if (overrides.seed) doc["seed"] = *overrides.seed;
  if (overrides.method) doc["learning"]["method"] = std::string(to_string(*overrides.method));
  if (overrides.eps) doc["learning"]["eps"] = *overrides.eps;
  if (overrides.iteration_cap) doc["learning"]["iteration_cap"] = *overrides.iteration_cap;
  if (!optional(doc, "seed")) {
    fail("seed", "required for experiments (set it in the config or pass --seed)");
  }

  ExperimentPlan plan;
  plan.name = name;
  plan.base = parse_scenario(doc);
  const std::string sweep_path = "experiments." + name + ".sweep";
  if (const json* v = optional(sweep, "variations")) {
    plan.variations = as_list(*v, sweep_path + ".variations");
  } else if (name == "variation") {
    plan.variations = {-0.5, -0.2, -0.1, 0.1, 0.2, 0.5};
  } else if (name == "indirect-comparison") {
    plan.variations = {-0.2, -0.1, 0.1, 0.2};
  }
  if (const json* v = optional(sweep, "nonlinearities")) {
    plan.nonlinearities = as_list(*v, sweep_path + ".nonlinearities");
  } else if (name == "indirect-comparison") {
    plan.nonlinearities = {1e-7, 1e-4};
  }
  for (double v : plan.variations) {
    if (!(v > -1.0)) fail(sweep_path + ".variations", "entries must exceed -1");
  }
  for (double w : plan.nonlinearities) {
    if (!(w >= 0.0)) fail(sweep_path + ".nonlinearities", "entries must be non-negative");
  }
  doc["experiment"] = name;
  doc["sweep"] = {{"variations", plan.variations}, {"nonlinearities", plan.nonlinearities}};
  plan.config_hash = config_hash(doc);
  return plan;
}

std::string config_hash(const json& doc) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dhs
