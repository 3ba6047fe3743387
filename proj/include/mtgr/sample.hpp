#pragma once

// Aggregated per-user samples and their JSONL form.
//
// One line per AggregatedSample:
//   {"user_id": 7, "profile": {"age": 3},
//    "static_seq":   [{"features": {"seq_item": 11}, "ts": 0}],
//    "realtime_seq": [{"features": {"seq_item": 12}, "ts": 1700000100}],
//    "candidates":   [{"features": {"item": 5}, "cross": {"aff": 2},
//                      "request_ts": 1700000200, "click": 1, "purchase": 0}]}

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtgr/schema.hpp"

namespace mtgr {

/// Feature name -> categorical id. Id 0 is reserved for "unknown".
using FeatureMap = std::map<std::string, std::int64_t>;

struct InteractionItem {
  FeatureMap features;
  std::int64_t ts = 0;

  bool operator==(const InteractionItem&) const = default;
};

struct Candidate {
  FeatureMap features;
  FeatureMap cross;
  std::int64_t request_ts = 0;
  int click = 0;
  int purchase = 0;

  bool operator==(const Candidate&) const = default;
};

struct AggregatedSample {
  std::int64_t user_id = 0;
  FeatureMap profile;
  std::vector<InteractionItem> static_seq;
  /// Strictly increasing timestamps.
  std::vector<InteractionItem> realtime_seq;
  std::vector<Candidate> candidates;

  bool operator==(const AggregatedSample&) const = default;

  std::size_t token_count(std::size_t num_profile_features) const {
    return num_profile_features + static_seq.size() + realtime_seq.size() + candidates.size();
  }
};

/// Throws DataError when an invariant is broken: K >= 1, realtime strictly
/// time-ordered, labels in {0,1}, purchase implies click, request_ts > 0.
void validate_sample(const AggregatedSample& sample);

/// Throws SchemaError when the sample names a feature the schema lacks or
/// puts a feature in the wrong slot.
void check_against_schema(const AggregatedSample& sample, const FeatureSchema& schema);

/// Structural check of one JSON line against the dataset schema
/// (docs/dataset.schema.json): exact field set, integer ids, 0/1 labels.
/// Returns an empty string when valid, otherwise the first violation.
std::string validate_record(const nlohmann::json& record);

nlohmann::json to_json(const AggregatedSample& sample);
AggregatedSample sample_from_json(const nlohmann::json& record);

std::vector<AggregatedSample> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<AggregatedSample>& samples);
void write_jsonl(std::ostream& out, const std::vector<AggregatedSample>& samples);

/// Builds a schema from the feature names that appear in a dataset (names
/// sorted within each group).
FeatureSchema infer_schema(const std::vector<AggregatedSample>& samples, int d_model);

}  // namespace mtgr
