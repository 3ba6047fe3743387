#include "mtgr/schema.hpp"

#include <cmath>
#include <set>

#include "mtgr/errors.hpp"

namespace mtgr {

const char* to_string(FeatureGroup group) {
  switch (group) {
    case FeatureGroup::UserProfile: return "user_profile";
    case FeatureGroup::SequenceItem: return "sequence_item";
    case FeatureGroup::CandidateItem: return "candidate_item";
    case FeatureGroup::Cross: return "cross";
  }
  return "?";
}

const char* to_string(TokenGroup group) {
  switch (group) {
    case TokenGroup::UserProfile: return "profile";
    case TokenGroup::StaticSeq: return "static";
    case TokenGroup::RealtimeSeq: return "realtime";
    case TokenGroup::Candidate: return "candidate";
  }
  return "?";
}

int choose_embedding_dim(int k, int d_model) {
  if (k < 1) throw SchemaError("choose_embedding_dim: k must be >= 1");
  const long dim = std::lround(static_cast<double>(d_model) / static_cast<double>(k));
  return static_cast<int>(std::max(1L, dim));
}

FeatureSchema FeatureSchema::make(std::vector<std::string> profile, std::vector<std::string> sequence_item,
                                  std::vector<std::string> candidate_item, std::vector<std::string> cross,
                                  int d_model) {
  if (d_model < 1) throw SchemaError("d_model must be positive");
  FeatureSchema schema;
  schema.d_model_ = d_model;
  schema.profile_ = std::move(profile);
  schema.sequence_item_ = std::move(sequence_item);
  schema.candidate_item_ = std::move(candidate_item);
  schema.cross_ = std::move(cross);

  auto add = [&](const std::vector<std::string>& names, FeatureGroup group, int dim) {
    for (const auto& name : names) {
      FeatureSpec spec;
      spec.name = name;
      spec.group = group;
      spec.dim = dim;
      spec.table_id = static_cast<std::uint32_t>(schema.features_.size());
      schema.features_.push_back(std::move(spec));
    }
  };
  add(schema.profile_, FeatureGroup::UserProfile, d_model);
  if (!schema.sequence_item_.empty()) {
    add(schema.sequence_item_, FeatureGroup::SequenceItem,
        choose_embedding_dim(static_cast<int>(schema.sequence_item_.size()), d_model));
  }
  const int per_candidate = static_cast<int>(schema.candidate_item_.size() + schema.cross_.size());
  if (per_candidate > 0) {
    const int dim = choose_embedding_dim(per_candidate, d_model);
    add(schema.candidate_item_, FeatureGroup::CandidateItem, dim);
    add(schema.cross_, FeatureGroup::Cross, dim);
  }
  schema.validate();
  return schema;
}

void FeatureSchema::validate() const {
  std::set<std::string> seen;
  for (const auto& f : features_) {
    if (f.name.empty()) throw SchemaError("feature with empty name");
    if (!seen.insert(f.name).second) throw SchemaError("feature '" + f.name + "' belongs to more than one group");
    if (f.dim <= 0) throw SchemaError("feature '" + f.name + "' has non-positive embedding dim");
  }
  if (sequence_item_.empty()) throw SchemaError("schema needs at least one sequence item feature");
  if (candidate_item_.empty() && cross_.empty()) throw SchemaError("schema needs at least one candidate feature");
}

const FeatureSpec& FeatureSchema::spec(const std::string& name) const {
  for (const auto& f : features_) {
    if (f.name == name) return f;
  }
  throw SchemaError("unknown feature '" + name + "'");
}

bool FeatureSchema::contains(const std::string& name) const {
  for (const auto& f : features_) {
    if (f.name == name) return true;
  }
  return false;
}

int FeatureSchema::sequence_token_width() const {
  int w = 0;
  for (const auto& f : features_) {
    if (f.group == FeatureGroup::SequenceItem) w += f.dim;
  }
  return w;
}

int FeatureSchema::candidate_token_width() const {
  int w = 0;
  for (const auto& f : features_) {
    if (f.group == FeatureGroup::CandidateItem || f.group == FeatureGroup::Cross) w += f.dim;
  }
  return w;
}

}  // namespace mtgr
