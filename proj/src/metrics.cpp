#include "mtgr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mtgr/errors.hpp"

namespace mtgr {

std::optional<double> auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(scores[i])) throw DataError("auc: non-finite score at " + std::to_string(i));
    if (labels[i] != 0 && labels[i] != 1) throw DataError("auc: label outside {0,1} at " + std::to_string(i));
    positives += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of positive ranks, ties sharing the mean of their rank range (1-based).
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) rank_sum += labels[order[k]] * midrank;
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double q = static_cast<double>(negatives);
  return (rank_sum - p * (p + 1) / 2.0) / (p * q);
}

std::optional<double> auc(std::span<const ScoredImpression> impressions) {
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(impressions.size());
  labels.reserve(impressions.size());
  for (const auto& imp : impressions) {
    scores.push_back(imp.score);
    labels.push_back(imp.label);
  }
  return auc(scores, labels);
}

std::optional<double> gauc(std::span<const ScoredImpression> impressions, GaucWeighting weighting) {
  std::map<std::int64_t, std::vector<ScoredImpression>> by_user;
  for (const auto& imp : impressions) by_user[imp.user_id].push_back(imp);
  double weighted = 0.0;
  double total_weight = 0.0;
  for (const auto& [user, group] : by_user) {
    const auto a = auc(std::span<const ScoredImpression>(group));
    if (!a) continue;
    const double w = weighting == GaucWeighting::Impressions ? static_cast<double>(group.size()) : 1.0;
    weighted += w * *a;
    total_weight += w;
  }
  if (total_weight == 0.0) return std::nullopt;
  return weighted / total_weight;
}

FlopsBreakdown flops_estimate(const HstuConfig& cfg, const SequenceLengths& lengths, int sequence_token_width,
                              int candidate_token_width) {
  const double d = cfg.d_model;
  const double seq_tokens = static_cast<double>(lengths.n_static + lengths.n_realtime);
  const double k = static_cast<double>(lengths.n_candidates);
  const double length = static_cast<double>(lengths.n_profile) + seq_tokens + k;
  const double half = std::max(1.0, std::floor(d / 2));

  FlopsBreakdown f;
  f.projection = 2.0 * seq_tokens * sequence_token_width * d + 2.0 * k * candidate_token_width * d;
  const double per_layer = 8.0 * length * d * d      // Q, K, V, U
                           + 2.0 * length * length * d  // pairwise scores over all heads
                           + 2.0 * length * length * d  // scores x V
                           + length * d                 // gate
                           + 4.0 * length * d * d;      // two d x d MLP matmuls
  f.encoder = per_layer * cfg.n_layer;
  f.head = k * (2.0 * d * half + 2.0 * half * 2.0);
  f.total = f.projection + f.encoder + f.head;
  f.per_candidate = k > 0 ? f.total / k : 0.0;
  return f;
}

}  // namespace mtgr
