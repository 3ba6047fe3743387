#pragma once

// The CLI workflows. Each writes its outputs to files and returns the
// one-line JSON summary printed on stdout.

#include <json.hpp>

#include "mtgr/config.hpp"

namespace mtgr {

nlohmann::json cmd_gen_data(const RunConfig& cfg);
nlohmann::json cmd_train(const RunConfig& cfg);
nlohmann::json cmd_eval(const RunConfig& cfg);
nlohmann::json cmd_grad_check(const RunConfig& cfg);
nlohmann::json cmd_inspect_mask(const RunConfig& cfg);
nlohmann::json cmd_bench_flops(const RunConfig& cfg);
nlohmann::json cmd_dedup_stats(const RunConfig& cfg);

/// Schema from the config's schema.* lists, or inferred from samples when
/// they are empty.
FeatureSchema resolve_schema(const RunConfig& cfg, const std::vector<AggregatedSample>& samples);

/// Complexity rows for the small/medium/large presets plus the
/// configured model.
std::string flops_table(const RunConfig& cfg);

}  // namespace mtgr
