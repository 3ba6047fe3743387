#pragma once

// Feature -> token conversion. Block order is profile, static sequence,
// realtime sequence, candidates:
//  - each profile feature is one token, embedded straight to d_model;
//  - each S/R item is concat(per-feature embeddings) projected to d_model;
//  - each candidate is concat(item embeddings, cross embeddings) projected
//    to d_model.

#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mtgr/embedding_store.hpp"
#include "mtgr/ops.hpp"
#include "mtgr/sample.hpp"

namespace mtgr {

struct TokenLayout {
  std::vector<TokenGroup> tags;
  /// 0 for profile and static tokens.
  std::vector<std::int64_t> timestamps;
  /// Token position of candidate k (sample order).
  std::vector<Index> candidate_positions;
  std::size_t n_profile = 0;
  std::size_t n_static = 0;
  std::size_t n_realtime = 0;
  std::size_t n_candidates = 0;

  std::size_t size() const { return tags.size(); }
};

TokenLayout make_layout(const AggregatedSample& sample, const FeatureSchema& schema);

/// Every embedding key tokenize() will read, in read order, duplicates kept.
std::vector<EmbeddingKey> collect_keys(const AggregatedSample& sample, const FeatureSchema& schema);

/// Id of a feature in a value map; missing features map to 0 ("unknown").
inline std::int64_t feature_id(const FeatureMap& values, const std::string& name) {
  auto it = values.find(name);
  return it == values.end() ? 0 : it->second;
}

/// A worker-local copy of the embedding rows one step needs: one leaf per
/// physical table, one row per unique key.
template <typename Scalar>
class LocalEmbeddings {
 public:
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  LocalEmbeddings() = default;

  LocalEmbeddings(const std::vector<EmbeddingKey>& keys, const std::vector<Row>& rows, const MergePlan& plan,
                  bool trainable) {
    if (keys.size() != rows.size()) throw DimensionError("LocalEmbeddings: key/row count mismatch");
    const std::size_t tables = plan.physical.size();
    keys_.assign(tables, {});
    std::vector<std::vector<std::size_t>> members(tables);
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const std::size_t p = plan.physical_index(keys[i].table_id);
      if (where_.try_emplace(keys[i], p, static_cast<Index>(keys_[p].size())).second) {
        keys_[p].push_back(keys[i]);
        members[p].push_back(i);
      }
    }
    tables_.reserve(tables);
    for (std::size_t p = 0; p < tables; ++p) {
      Matrix<Scalar> m(static_cast<Index>(members[p].size()), plan.physical[p].dim);
      for (std::size_t r = 0; r < members[p].size(); ++r) m.row(static_cast<Index>(r)) = rows[members[p][r]];
      tables_.push_back(trainable ? Tensor<Scalar>::parameter(std::move(m)) : Tensor<Scalar>::constant(std::move(m)));
    }
  }

  std::pair<std::size_t, Index> locate(const EmbeddingKey& key) const {
    auto it = where_.find(key);
    if (it == where_.end()) {
      throw ContractError("embedding key (" + std::to_string(key.table_id) + ", " + std::to_string(key.feature_id) +
                          ") was not fetched for this worker");
    }
    return it->second;
  }

  const std::vector<Tensor<Scalar>>& tables() const { return tables_; }

  /// Same key layout over different leaves (shapes must match).
  LocalEmbeddings with_tables(std::vector<Tensor<Scalar>> tables) const {
    if (tables.size() != tables_.size()) throw DimensionError("with_tables: table count mismatch");
    for (std::size_t i = 0; i < tables.size(); ++i) {
      if (tables[i].shape() != tables_[i].shape()) throw DimensionError("with_tables: table shape mismatch");
    }
    LocalEmbeddings out = *this;
    out.tables_ = std::move(tables);
    return out;
  }
  const std::vector<EmbeddingKey>& keys(std::size_t physical) const { return keys_[physical]; }

 private:
  std::vector<Tensor<Scalar>> tables_;
  std::vector<std::vector<EmbeddingKey>> keys_;
  std::unordered_map<EmbeddingKey, std::pair<std::size_t, Index>, EmbeddingKeyHash> where_;
};

template <typename Scalar>
struct TokenizerParams {
  Tensor<Scalar> seq_w, seq_b;    // sequence_token_width x d, 1 x d
  Tensor<Scalar> cand_w, cand_b;  // candidate_token_width x d, 1 x d

  std::vector<Tensor<Scalar>> tensors() const { return {seq_w, seq_b, cand_w, cand_b}; }
};

template <typename Scalar>
struct TokenSequence {
  Tensor<Scalar> tokens;
  TokenLayout layout;
};

namespace detail {

/// Rows for keys that may live in different local tables, in key order.
template <typename Scalar>
Tensor<Scalar> gather_keys(const LocalEmbeddings<Scalar>& local, const std::vector<EmbeddingKey>& keys) {
  std::vector<std::pair<std::size_t, Index>> at;
  at.reserve(keys.size());
  bool single_table = true;
  for (const auto& k : keys) {
    at.push_back(local.locate(k));
    single_table = single_table && at.back().first == at.front().first;
  }
  if (single_table) {
    std::vector<Index> rows;
    rows.reserve(at.size());
    for (const auto& [t, r] : at) rows.push_back(r);
    return gather_rows(local.tables()[at.front().first], std::move(rows));
  }
  std::vector<Tensor<Scalar>> parts;
  parts.reserve(at.size());
  for (const auto& [t, r] : at) parts.push_back(gather_rows(local.tables()[t], std::vector<Index>{r}));
  return concat_rows(parts);
}

/// concat over features of per-feature embeddings, one row per entity.
template <typename Scalar>
Tensor<Scalar> feature_block(const LocalEmbeddings<Scalar>& local, const FeatureSchema& schema,
                             const std::vector<std::string>& names, const std::vector<const FeatureMap*>& entities) {
  std::vector<Tensor<Scalar>> columns;
  columns.reserve(names.size());
  for (const auto& name : names) {
    const auto table = schema.spec(name).table_id;
    std::vector<EmbeddingKey> keys;
    keys.reserve(entities.size());
    for (const FeatureMap* values : entities) keys.push_back({table, feature_id(*values, name)});
    columns.push_back(gather_keys(local, keys));
  }
  return columns.size() == 1 ? columns.front() : concat_cols(columns);
}

}  // namespace detail

template <typename Scalar>
TokenSequence<Scalar> tokenize(const AggregatedSample& sample, const FeatureSchema& schema,
                               const LocalEmbeddings<Scalar>& local, const TokenizerParams<Scalar>& params) {
  check_against_schema(sample, schema);
  TokenSequence<Scalar> seq;
  seq.layout = make_layout(sample, schema);

  std::vector<Tensor<Scalar>> blocks;
  if (!schema.user_profile_features().empty()) {
    std::vector<EmbeddingKey> keys;
    for (const auto& name : schema.user_profile_features()) {
      keys.push_back({schema.spec(name).table_id, feature_id(sample.profile, name)});
    }
    blocks.push_back(detail::gather_keys(local, keys));
  }

  std::vector<const FeatureMap*> items;
  for (const auto& it : sample.static_seq) items.push_back(&it.features);
  for (const auto& it : sample.realtime_seq) items.push_back(&it.features);
  if (!items.empty()) {
    auto concat = detail::feature_block(local, schema, schema.sequence_item_features(), items);
    blocks.push_back(add_row(matmul(concat, params.seq_w), params.seq_b));
  }

  std::vector<const FeatureMap*> cand_items;
  std::vector<const FeatureMap*> cand_cross;
  for (const auto& c : sample.candidates) {
    cand_items.push_back(&c.features);
    cand_cross.push_back(&c.cross);
  }
  std::vector<Tensor<Scalar>> cand_parts;
  if (!schema.candidate_item_features().empty()) {
    cand_parts.push_back(detail::feature_block(local, schema, schema.candidate_item_features(), cand_items));
  }
  if (!schema.cross_features().empty()) {
    cand_parts.push_back(detail::feature_block(local, schema, schema.cross_features(), cand_cross));
  }
  const auto cand_concat = cand_parts.size() == 1 ? cand_parts.front() : concat_cols(cand_parts);
  blocks.push_back(add_row(matmul(cand_concat, params.cand_w), params.cand_b));

  seq.tokens = blocks.size() == 1 ? blocks.front() : concat_rows(blocks);
  if (seq.tokens.cols() != schema.d_model()) throw DimensionError("tokenize: token width != d_model");
  return seq;
}

}  // namespace mtgr
