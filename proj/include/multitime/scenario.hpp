#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace multitime {

// Names of the runnable scenarios, in documentation order.
const std::vector<std::string>& scenario_names();

struct ScenarioRun {
    std::string scenario;
    std::vector<std::string> files;  // result files written into output_dir
    nlohmann::json manifest;         // the content written to manifest.json
};

// Runs one scenario described by a JSON config with fields
//   scenario    one of scenario_names()
//   parameters  scenario-specific table (defaults documented per scenario)
//   seed        integer >= 0 for any randomized sampling (default 1)
// and writes its result files plus a manifest.json into output_dir.
//
// Config problems (unknown scenario, missing or ill-typed parameter) are
// rejected before any computation starts, with the offending key named
// in the invalid_input_error message. Runs are deterministic given the
// config and seed: result files are byte-identical across reruns; the
// manifest is exempt only in its wall_time_ms field.
ScenarioRun run_scenario(const nlohmann::json& config, const std::string& output_dir,
                         bool verbose = false);

}  // namespace multitime
