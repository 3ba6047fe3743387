#include "mtgr/tokenize.hpp"

namespace mtgr {

TokenLayout make_layout(const AggregatedSample& sample, const FeatureSchema& schema) {
  TokenLayout layout;
  layout.n_profile = schema.user_profile_features().size();
  layout.n_static = sample.static_seq.size();
  layout.n_realtime = sample.realtime_seq.size();
  layout.n_candidates = sample.candidates.size();
  const std::size_t total = layout.n_profile + layout.n_static + layout.n_realtime + layout.n_candidates;
  layout.tags.reserve(total);
  layout.timestamps.reserve(total);
  for (std::size_t i = 0; i < layout.n_profile; ++i) {
    layout.tags.push_back(TokenGroup::UserProfile);
    layout.timestamps.push_back(0);
  }
  for (std::size_t i = 0; i < layout.n_static; ++i) {
    layout.tags.push_back(TokenGroup::StaticSeq);
    layout.timestamps.push_back(0);
  }
  for (const auto& item : sample.realtime_seq) {
    layout.tags.push_back(TokenGroup::RealtimeSeq);
    layout.timestamps.push_back(item.ts);
  }
  for (const auto& c : sample.candidates) {
    layout.candidate_positions.push_back(static_cast<Index>(layout.tags.size()));
    layout.tags.push_back(TokenGroup::Candidate);
    layout.timestamps.push_back(c.request_ts);
  }
  return layout;
}

std::vector<EmbeddingKey> collect_keys(const AggregatedSample& sample, const FeatureSchema& schema) {
  std::vector<EmbeddingKey> keys;
  for (const auto& name : schema.user_profile_features()) {
    keys.push_back({schema.spec(name).table_id, feature_id(sample.profile, name)});
  }
  for (const auto& name : schema.sequence_item_features()) {
    const auto table = schema.spec(name).table_id;
    for (const auto& it : sample.static_seq) keys.push_back({table, feature_id(it.features, name)});
    for (const auto& it : sample.realtime_seq) keys.push_back({table, feature_id(it.features, name)});
  }
  for (const auto& name : schema.candidate_item_features()) {
    const auto table = schema.spec(name).table_id;
    for (const auto& c : sample.candidates) keys.push_back({table, feature_id(c.features, name)});
  }
  for (const auto& name : schema.cross_features()) {
    const auto table = schema.spec(name).table_id;
    for (const auto& c : sample.candidates) keys.push_back({table, feature_id(c.cross, name)});
  }
  return keys;
}

}  // namespace mtgr
