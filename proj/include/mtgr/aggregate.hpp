#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mtgr/sample.hpp"

namespace mtgr {

/// One exposure: a single candidate plus the user's state as seen at
/// request time.
struct EventRecord {
  std::int64_t user_id = 0;
  FeatureMap profile;
  std::vector<InteractionItem> static_seq;
  std::vector<InteractionItem> realtime_seq;
  Candidate candidate;
};

struct AggregationOptions {
  /// Width of a training window in seconds. Zero or negative aggregates by
  /// request instead (one sample per user and request_ts, the inference form).
  std::int64_t window_seconds = 3600;
  std::size_t max_static = 1000;
  std::size_t max_realtime = 100;
};

struct AggregationResult {
  std::vector<AggregatedSample> samples;
  /// Records whose profile snapshot disagreed with an earlier one for the
  /// same user and window (the latest snapshot wins).
  std::size_t profile_conflicts = 0;
  /// Realtime items dropped because another item already held the timestamp.
  std::size_t realtime_collisions = 0;
};

/// Merges every record of a user that falls into the same window into one
/// sample. Realtime items from all snapshots are unioned, kept only inside
/// the window, and ordered by time; candidates are ordered by descending
/// request_ts with ties kept in arrival order. Output is sorted by
/// (user_id, window).
AggregationResult aggregate_by_user(const std::vector<EventRecord>& events, const AggregationOptions& options = {});

/// Keeps the most recent max_static / max_realtime items.
void truncate_sequences(AggregatedSample& sample, std::size_t max_static, std::size_t max_realtime);

}  // namespace mtgr
