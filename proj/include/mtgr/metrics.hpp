#pragma once

// Ranking metrics and the analytical FLOPs model.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mtgr/encoder.hpp"

namespace mtgr {

struct ScoredImpression {
  std::int64_t user_id = 0;
  double score = 0.0;
  int label = 0;
};

/// Mann-Whitney AUC with midranks for ties. nullopt when the input lacks a
/// positive or a negative (AUC undefined). Throws DataError on non-finite
/// scores or labels outside {0,1}.
std::optional<double> auc(std::span<const double> scores, std::span<const int> labels);
std::optional<double> auc(std::span<const ScoredImpression> impressions);

enum class GaucWeighting { Unweighted, Impressions };

/// Mean of per-user AUC over users with both classes; users with a single
/// class are skipped. nullopt when no user qualifies.
std::optional<double> gauc(std::span<const ScoredImpression> impressions,
                           GaucWeighting weighting = GaucWeighting::Unweighted);

struct SequenceLengths {
  std::size_t n_profile = 0;
  std::size_t n_static = 0;
  std::size_t n_realtime = 0;
  std::size_t n_candidates = 1;
};

struct FlopsBreakdown {
  double projection = 0;
  double encoder = 0;
  double head = 0;
  double total = 0;
  /// total / n_candidates.
  double per_candidate = 0;
};

/// Forward FLOPs of one aggregated sample, counting 2*m*n*k per matmul plus
/// the L*d elementwise gate. Norms, activations and bias adds are ignored.
/// Per layer: 4 projections 8*L*d^2, scores 2*L^2*d, value mix 2*L^2*d,
/// gate L*d, MLP 4*L*d^2. n_layer may be 0.
FlopsBreakdown flops_estimate(const HstuConfig& cfg, const SequenceLengths& lengths, int sequence_token_width,
                              int candidate_token_width);

}  // namespace mtgr
