#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtgr/schema.hpp"

namespace mtgr {

enum class MaskMode { Dynamic, Causal, Full };

const char* to_string(MaskMode mode);
MaskMode parse_mask_mode(const std::string& text);

/// L x L visibility: (i, j) == 1 iff token i may read token j.
struct MaskMatrix {
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> visible;
  std::vector<TokenGroup> tags;
  std::vector<std::int64_t> timestamps;

  Eigen::Index size() const { return visible.rows(); }
  bool operator()(Eigen::Index i, Eigen::Index j) const { return visible(i, j) != 0; }

  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> as() const {
    return visible.cast<Scalar>();
  }

  /// Text grid, one row per reading token: '1' visible, a middle dot hidden.
  std::string to_grid(const std::vector<std::string>& labels = {}) const;
};

/// The three visibility rules:
///  - profile and static-sequence tokens are visible to every token; static
///    rows read only static columns;
///  - a realtime token is visible to realtime/candidate tokens with a strictly
///    later timestamp;
///  - a candidate token is visible to itself only.
/// The diagonal is always 1. Realtime and candidate tokens need ts > 0.
MaskMatrix build_dynamic_mask(const std::vector<TokenGroup>& tags, const std::vector<std::int64_t>& timestamps);

/// Causal over token positions (j <= i) or fully visible; both keep the
/// candidate rule (candidate columns are visible on the diagonal only).
MaskMatrix build_mask(MaskMode mode, const std::vector<TokenGroup>& tags, const std::vector<std::int64_t>& timestamps);

struct MaskFixture {
  std::vector<TokenGroup> tags;
  std::vector<std::int64_t> timestamps;
  std::vector<std::string> labels;
};

/// Two profile tokens (age, ctr), two long-term items, two realtime items and
/// three candidates whose times interleave:
/// target3 (1) < rt2 (2) < target2 (3) < rt1 (4) < target1 (5).
MaskFixture interleaved_fixture();

}  // namespace mtgr
