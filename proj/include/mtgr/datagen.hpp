#pragma once

// Seeded synthetic data with planted click/purchase signal.
//
// Users and items carry latent vectors; items belong to categories. Each
// user gets one session inside an aggregation window: a few requests, each
// showing a few candidates, with realtime browsing before and between
// requests. The click logit is
//
//   b0 + w_cross * affinity + w_seq * seq_share + w_profile * profile_effect
//      + w_rt * realtime_share
//
// where affinity is the standardized user.item dot product (the cross
// feature is its quantile bucket), seq_share / realtime_share are the
// fractions of long-term / earlier-realtime items in the candidate's
// category, and profile_effect is a per-age-bucket offset. b0 is solved for
// the requested click rate. Purchases are drawn among clicks only. A click
// is often followed by a realtime interaction with the same item, which is
// what makes peeking at later realtime tokens a leak.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtgr/sample.hpp"

namespace mtgr {

struct GenConfig {
  std::size_t num_users = 10000;
  std::uint64_t seed = 7;
  double test_fraction = 0.2;

  std::size_t num_items = 2000;
  std::size_t num_categories = 20;
  std::size_t latent_dim = 8;
  std::size_t age_buckets = 8;
  std::size_t num_cities = 16;
  std::size_t cross_buckets = 16;

  std::size_t min_requests = 1;
  std::size_t max_requests = 4;
  std::size_t min_candidates = 1;
  std::size_t max_candidates = 5;

  /// Truncated Pareto lengths for the long-term sequence.
  std::size_t static_min = 10;
  std::size_t static_cap = 1000;
  double static_alpha = 1.2;
  /// Realtime items browsed before the first request / between requests.
  std::size_t realtime_before_max = 8;
  std::size_t realtime_between_max = 2;
  std::size_t realtime_cap = 100;
  /// Chance a click is followed by a realtime interaction with the item.
  double follow_probability = 0.8;

  double w_cross = 1.5;
  double w_seq = 2.0;
  double w_profile = 0.3;
  double w_rt = 2.0;
  double click_rate = 0.045;
  double purchase_rate = 0.17;

  std::int64_t window_seconds = 3600;
  std::int64_t base_ts = 1700000000;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Ground truth for one impression.
struct ImpressionTruth {
  std::int64_t user_id = 0;
  std::int64_t request_ts = 0;
  std::int64_t item = 0;
  bool test = false;
  double affinity = 0, seq_share = 0, profile_effect = 0, realtime_share = 0;
  double p_click = 0, p_purchase = 0;
  int click = 0, purchase = 0;
};

struct GeneratedData {
  /// Aggregated by user and window.
  std::vector<AggregatedSample> train;
  /// One sample per request, realtime items strictly before the request.
  std::vector<AggregatedSample> test;
  std::vector<ImpressionTruth> truth;
  nlohmann::json manifest;
};

/// Click logit without the intercept.
double planted_logit(const GenConfig& cfg, double affinity, double seq_share, double profile_effect,
                     double realtime_share);

GeneratedData generate_dataset(const GenConfig& cfg);

/// Writes train.jsonl, test.jsonl and manifest.json into dir.
void write_dataset(const std::filesystem::path& dir, const GeneratedData& data);

/// Permutes cross-feature ids across all candidates of a split, which keeps
/// their marginal distribution and destroys their link to the label.
void shuffle_cross_features(std::vector<AggregatedSample>& samples, std::uint64_t seed);

}  // namespace mtgr
