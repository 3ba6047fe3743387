#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mtgr {

/// The four feature groups a raw feature can belong to.
enum class FeatureGroup { UserProfile, SequenceItem, CandidateItem, Cross };

const char* to_string(FeatureGroup group);

/// Token groups seen by the encoder. Profile and static-sequence tokens are
/// "static"; realtime and candidate tokens carry timestamps.
enum class TokenGroup : std::uint8_t { UserProfile = 0, StaticSeq = 1, RealtimeSeq = 2, Candidate = 3 };

inline constexpr int kNumTokenGroups = 4;

const char* to_string(TokenGroup group);

/// Embedding width per feature when k features are concatenated into one
/// d_model token: the nearest integer to d_model / k, at least 1.
int choose_embedding_dim(int k, int d_model);

struct FeatureSpec {
  std::string name;
  FeatureGroup group = FeatureGroup::UserProfile;
  int dim = 0;
  /// Logical embedding table id; the index of the feature in the schema.
  std::uint32_t table_id = 0;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;

  /// Profile features get d_model-wide embeddings (one token each). Sequence
  /// features share choose_embedding_dim(#seq features), candidate item and
  /// cross features share choose_embedding_dim(#item + #cross).
  static FeatureSchema make(std::vector<std::string> profile, std::vector<std::string> sequence_item,
                            std::vector<std::string> candidate_item, std::vector<std::string> cross, int d_model);

  /// Throws SchemaError on duplicate names, empty groups that must not be
  /// empty, or non-positive widths.
  void validate() const;

  const std::vector<FeatureSpec>& features() const { return features_; }
  const FeatureSpec& spec(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::string>& user_profile_features() const { return profile_; }
  const std::vector<std::string>& sequence_item_features() const { return sequence_item_; }
  const std::vector<std::string>& candidate_item_features() const { return candidate_item_; }
  const std::vector<std::string>& cross_features() const { return cross_; }

  int d_model() const { return d_model_; }
  int sequence_token_width() const;
  int candidate_token_width() const;

 private:
  std::vector<FeatureSpec> features_;
  std::vector<std::string> profile_;
  std::vector<std::string> sequence_item_;
  std::vector<std::string> candidate_item_;
  std::vector<std::string> cross_;
  int d_model_ = 0;
};

}  // namespace mtgr
