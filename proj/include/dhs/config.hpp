#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "dhs/harness.hpp"

namespace dhs {

/// A parsed config document. `doc` keeps the raw JSON so experiment blocks
/// can be merged on top of the base scenario later.
struct Config {
  nlohmann::json doc;
};

/// ParseError on unreadable files or malformed JSON (with line and column).
Config load_config(const std::string& path);
Config parse_config(const std::string& text);

/// Builds a scenario from a config document. ParseError names the offending
/// field by its path, e.g. "topology.exchangers[1].volume".
Scenario parse_scenario(const nlohmann::json& doc);

/// Command-line settings that take precedence over the document.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<EstimationMethod> method;
  std::optional<double> eps;
  std::optional<int> iteration_cap;
};

/// Resolves an experiment: the block under experiments.<name> is merged over
/// the document, overrides applied, and the sweep grid read (with defaults
/// for the sweeps). The seed is mandatory.
ExperimentPlan plan_experiment(const Config& config, const std::string& name,
                               const RunOverrides& overrides = {});

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& doc);

}  // namespace dhs
