#include "mtgr/aggregate.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <utility>

#include "mtgr/errors.hpp"

namespace mtgr {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

void truncate_sequences(AggregatedSample& sample, std::size_t max_static, std::size_t max_realtime) {
  auto keep_tail = [](std::vector<InteractionItem>& items, std::size_t cap) {
    if (items.size() > cap) items.erase(items.begin(), items.end() - static_cast<std::ptrdiff_t>(cap));
  };
  keep_tail(sample.static_seq, max_static);
  keep_tail(sample.realtime_seq, max_realtime);
}

AggregationResult aggregate_by_user(const std::vector<EventRecord>& events, const AggregationOptions& options) {
  const bool by_request = options.window_seconds <= 0;

  // (user, window bucket) -> record indices in arrival order.
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.candidate.request_ts <= 0) throw DataError("event without a positive request_ts");
    const std::int64_t bucket =
        by_request ? e.candidate.request_ts : floor_div(e.candidate.request_ts, options.window_seconds);
    groups[{e.user_id, bucket}].push_back(i);
  }

  AggregationResult result;
  result.samples.reserve(groups.size());
  for (const auto& [key, members] : groups) {
    AggregatedSample sample;
    sample.user_id = key.first;

    // Latest snapshot (by request time, then arrival) supplies profile and S.
    std::size_t latest = members.front();
    for (std::size_t idx : members) {
      if (events[idx].candidate.request_ts >= events[latest].candidate.request_ts) latest = idx;
    }
    for (std::size_t idx : members) {
      if (events[idx].profile != events[latest].profile) ++result.profile_conflicts;
    }
    sample.profile = events[latest].profile;
    sample.static_seq = events[latest].static_seq;

    const std::int64_t window_begin = by_request ? 0 : key.second * options.window_seconds;
    const std::int64_t window_end = by_request ? 0 : window_begin + options.window_seconds;
    std::map<std::int64_t, InteractionItem> realtime;
    for (std::size_t idx : members) {
      for (const auto& item : events[idx].realtime_seq) {
        if (!by_request && (item.ts < window_begin || item.ts >= window_end)) continue;
        auto [it, inserted] = realtime.emplace(item.ts, item);
        if (!inserted && it->second != item) ++result.realtime_collisions;
      }
    }
    for (auto& [ts, item] : realtime) sample.realtime_seq.push_back(std::move(item));

    std::vector<std::size_t> order = members;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return events[a].candidate.request_ts > events[b].candidate.request_ts;
    });
    for (std::size_t idx : order) sample.candidates.push_back(events[idx].candidate);

    truncate_sequences(sample, options.max_static, options.max_realtime);
    validate_sample(sample);
    result.samples.push_back(std::move(sample));
  }
  return result;
}

}  // namespace mtgr
