#include "mtgr/mask.hpp"

#include <algorithm>
#include <sstream>

#include "mtgr/errors.hpp"

namespace mtgr {

namespace {

bool is_static(TokenGroup g) { return g == TokenGroup::UserProfile || g == TokenGroup::StaticSeq; }

void check_inputs(const std::vector<TokenGroup>& tags, const std::vector<std::int64_t>& timestamps) {
  if (tags.size() != timestamps.size()) throw DimensionError("mask: tags and timestamps differ in length");
}

}  // namespace

const char* to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::Dynamic: return "dynamic";
    case MaskMode::Causal: return "causal";
    case MaskMode::Full: return "full";
  }
  return "?";
}

MaskMode parse_mask_mode(const std::string& text) {
  if (text == "dynamic") return MaskMode::Dynamic;
  if (text == "causal") return MaskMode::Causal;
  if (text == "full") return MaskMode::Full;
  throw ConfigError("unknown mask mode '" + text + "' (expected dynamic, causal or full)");
}

MaskMatrix build_dynamic_mask(const std::vector<TokenGroup>& tags, const std::vector<std::int64_t>& timestamps) {
  check_inputs(tags, timestamps);
  const auto n = static_cast<Eigen::Index>(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!is_static(tags[i]) && timestamps[i] <= 0) {
      throw DataError(std::string("mask: ") + to_string(tags[i]) + " token " + std::to_string(i) +
                      " has no timestamp");
    }
  }
  MaskMatrix m;
  m.tags = tags;
  m.timestamps = timestamps;
  m.visible.setZero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TokenGroup row = tags[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j) {
      const TokenGroup col = tags[static_cast<std::size_t>(j)];
      bool v = false;
      if (i == j) {
        v = true;
      } else if (is_static(col)) {
        v = true;
      } else if (col == TokenGroup::RealtimeSeq) {
        v = !is_static(row) && timestamps[static_cast<std::size_t>(j)] < timestamps[static_cast<std::size_t>(i)];
      }
      // Static rows read static columns only; candidate columns stay hidden.
      if (is_static(row) && !is_static(col) && i != j) v = false;
      m.visible(i, j) = v ? 1 : 0;
    }
  }
  return m;
}

MaskMatrix build_mask(MaskMode mode, const std::vector<TokenGroup>& tags, const std::vector<std::int64_t>& timestamps) {
  if (mode == MaskMode::Dynamic) return build_dynamic_mask(tags, timestamps);
  check_inputs(tags, timestamps);
  const auto n = static_cast<Eigen::Index>(tags.size());
  MaskMatrix m;
  m.tags = tags;
  m.timestamps = timestamps;
  m.visible.setZero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      bool v = mode == MaskMode::Full || j <= i;
      if (tags[static_cast<std::size_t>(j)] == TokenGroup::Candidate) v = (i == j);
      m.visible(i, j) = v ? 1 : 0;
    }
  }
  return m;
}

MaskFixture interleaved_fixture() {
  using G = TokenGroup;
  return {{G::UserProfile, G::UserProfile, G::StaticSeq, G::StaticSeq, G::RealtimeSeq, G::RealtimeSeq, G::Candidate,
           G::Candidate, G::Candidate},
          {0, 0, 0, 0, 4, 2, 5, 3, 1},
          {"age", "ctr", "seq1", "seq2", "rt1", "rt2", "target1", "target2", "target3"}};
}

std::string MaskMatrix::to_grid(const std::vector<std::string>& labels) const {
  std::size_t width = 0;
  for (const auto& l : labels) width = std::max(width, l.size());
  std::ostringstream out;
  for (Eigen::Index i = 0; i < size(); ++i) {
    if (!labels.empty()) {
      const auto& l = labels[static_cast<std::size_t>(i)];
      out << l << std::string(width + 1 - l.size(), ' ');
    }
    for (Eigen::Index j = 0; j < size(); ++j) out << (visible(i, j) ? "1" : "\u00b7");
    out << '\n';
  }
  return out.str();
}

}  // namespace mtgr
