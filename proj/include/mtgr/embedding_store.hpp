#pragma once

// Sharded embedding store built from a table-merging plan, plus the
// simulated all-to-all lookup with two-stage id deduplication.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "mtgr/hash_table.hpp"
#include "mtgr/schema.hpp"

namespace mtgr {

/// Per-table settings that must agree for two tables to share storage.
struct TableHyperparams {
  double init_scale = 0.0;
  bool eviction = true;
  std::size_t max_rows = 0;

  bool operator==(const TableHyperparams&) const = default;
};

struct LogicalTable {
  std::uint32_t table_id = 0;
  std::string name;
  int dim = 0;
  TableHyperparams hyper;
};

struct PhysicalTablePlan {
  int dim = 0;
  TableHyperparams hyper;
  std::vector<std::uint32_t> logical_ids;
};

struct MergePlan {
  std::vector<PhysicalTablePlan> physical;
  /// Indexed by logical table id.
  std::vector<std::size_t> physical_of;

  std::size_t physical_index(std::uint32_t table_id) const;
};

/// Groups logical tables with equal dim and hyperparameters into one
/// physical table keyed by (table_id, feature_id). Physical tables are
/// ordered by first appearance. With merge=false each logical table maps to
/// its own physical table.
MergePlan merge_tables(const std::vector<LogicalTable>& tables, bool merge = true);
MergePlan merge_tables(const FeatureSchema& schema, bool merge = true);

class ShardRouter {
 public:
  explicit ShardRouter(std::size_t num_shards = 1);

  std::size_t num_shards() const { return num_shards_; }
  std::size_t shard_of(const EmbeddingKey& key) const;

 private:
  std::size_t num_shards_;
};

struct TransferStats {
  /// Ids requested by all workers, duplicates included.
  std::size_t requested = 0;
  /// Ids sent after per-worker dedup (stage 1).
  std::size_t after_stage1 = 0;
  /// Ids looked up after per-shard dedup of the union (stage 2).
  std::size_t after_stage2 = 0;
  std::size_t id_bytes_naive = 0;
  std::size_t id_bytes_sent = 0;
  std::size_t vector_bytes_naive = 0;
  std::size_t vector_bytes_returned = 0;

  /// (stage1 + stage2) transfers vs the 2 * requested of a naive exchange.
  double reduction() const {
    if (requested == 0) return 0.0;
    return 1.0 - static_cast<double>(after_stage1 + after_stage2) / (2.0 * static_cast<double>(requested));
  }

  TransferStats& operator+=(const TransferStats& o) {
    requested += o.requested;
    after_stage1 += o.after_stage1;
    after_stage2 += o.after_stage2;
    id_bytes_naive += o.id_bytes_naive;
    id_bytes_sent += o.id_bytes_sent;
    vector_bytes_naive += o.vector_bytes_naive;
    vector_bytes_returned += o.vector_bytes_returned;
    return *this;
  }
};

inline constexpr std::size_t kKeyWireBytes = sizeof(std::uint32_t) + sizeof(std::int64_t);

template <typename Scalar>
class EmbeddingStore {
 public:
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  EmbeddingStore(MergePlan plan, std::size_t num_shards, TableOptions base = {})
      : plan_(std::move(plan)), router_(num_shards) {
    shards_.resize(router_.num_shards());
    for (std::size_t s = 0; s < shards_.size(); ++s) {
      for (const auto& phys : plan_.physical) {
        TableOptions opts = base;
        opts.init_scale = phys.hyper.init_scale;
        opts.eviction = phys.hyper.eviction;
        opts.max_rows = phys.hyper.max_rows;
        shards_[s].emplace_back(phys.dim, opts);
      }
    }
  }

  const MergePlan& plan() const { return plan_; }
  const ShardRouter& router() const { return router_; }
  std::size_t num_shards() const { return shards_.size(); }
  std::size_t num_physical() const { return plan_.physical.size(); }

  DynamicHashTable<Scalar>& table(std::size_t shard, std::size_t physical) { return shards_[shard][physical]; }
  const DynamicHashTable<Scalar>& table(std::size_t shard, std::size_t physical) const {
    return shards_[shard][physical];
  }

  DynamicHashTable<Scalar>& table_for(const EmbeddingKey& key) {
    return shards_[router_.shard_of(key)][plan_.physical_index(key.table_id)];
  }

  int dim_of(std::uint32_t table_id) const { return plan_.physical[plan_.physical_index(table_id)].dim; }

  void begin_step(std::uint64_t step) {
    for (auto& shard : shards_) {
      for (auto& t : shard) t.begin_step(step);
    }
  }

  /// Direct single-key lookup (the naive path).
  Row lookup(const EmbeddingKey& key) {
    auto values = table_for(key).lookup_or_init(key);
    Row row(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) row(static_cast<Eigen::Index>(i)) = values[i];
    return row;
  }

  /// The row a lookup would return, without inserting or touching metadata.
  Row peek(const EmbeddingKey& key) const {
    const auto& table = shards_[router_.shard_of(key)][plan_.physical_index(key.table_id)];
    Row row(table.dim());
    if (auto slot = table.find(key)) {
      auto values = table.slab().values(*slot);
      for (Eigen::Index i = 0; i < row.size(); ++i) row(i) = values[static_cast<std::size_t>(i)];
    } else {
      auto init = table.initial_row(key);
      for (Eigen::Index i = 0; i < row.size(); ++i) row(i) = init[static_cast<std::size_t>(i)];
    }
    return row;
  }

  std::size_t live_rows() const {
    std::size_t n = 0;
    for (const auto& shard : shards_) {
      for (const auto& t : shard) n += t.size();
    }
    return n;
  }

  /// Writes one file per (shard, physical table) into dir.
  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (std::size_t s = 0; s < shards_.size(); ++s) {
      for (std::size_t p = 0; p < shards_[s].size(); ++p) {
        std::ofstream out(dir / file_name(s, p), std::ios::binary);
        if (!out) throw DataError("cannot write embedding checkpoint in " + dir.string());
        shards_[s][p].save(out);
      }
    }
  }

  void load(const std::filesystem::path& dir) {
    for (std::size_t s = 0; s < shards_.size(); ++s) {
      for (std::size_t p = 0; p < shards_[s].size(); ++p) {
        std::ifstream in(dir / file_name(s, p), std::ios::binary);
        if (!in) throw DataError("missing embedding checkpoint " + (dir / file_name(s, p)).string());
        shards_[s][p] = DynamicHashTable<Scalar>::load(in, shards_[s][p].options());
      }
    }
  }

  static std::string file_name(std::size_t shard, std::size_t physical) {
    return "shard" + std::to_string(shard) + "_table" + std::to_string(physical) + ".bin";
  }

 private:
  MergePlan plan_;
  ShardRouter router_;
  std::vector<std::vector<DynamicHashTable<Scalar>>> shards_;
};

/// Result of a deduplicated exchange. Workers see their unique keys (stage-1
/// view) plus the map back to their original request positions.
template <typename Scalar>
struct DedupLookupResult {
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  std::vector<std::vector<EmbeddingKey>> unique_keys;
  std::vector<std::vector<Row>> unique_rows;
  /// inverse[w][i] indexes unique_keys[w] for request position i.
  std::vector<std::vector<std::size_t>> inverse;
  TransferStats stats;

  /// Rows for worker w in original request order.
  std::vector<Row> rows_for(std::size_t w) const {
    std::vector<Row> out;
    out.reserve(inverse[w].size());
    for (std::size_t u : inverse[w]) out.push_back(unique_rows[w][u]);
    return out;
  }
};

/// Stage 1 dedups each worker's ids before routing; stage 2 dedups the union
/// that arrives at each shard before touching the table. Every unique id per
/// shard is looked up exactly once, so rows are bitwise identical to the
/// naive per-id path.
template <typename Scalar>
DedupLookupResult<Scalar> two_stage_dedup_lookup(const std::vector<std::vector<EmbeddingKey>>& ids,
                                                 EmbeddingStore<Scalar>& store) {
  using Row = typename DedupLookupResult<Scalar>::Row;
  const std::size_t workers = ids.size();
  const std::size_t shards = store.num_shards();
  DedupLookupResult<Scalar> result;
  result.unique_keys.resize(workers);
  result.unique_rows.resize(workers);
  result.inverse.resize(workers);

  // Stage 1: per-worker unique, first-occurrence order.
  // outbox[w][s] lists indexes into unique_keys[w] routed to shard s.
  std::vector<std::vector<std::vector<std::size_t>>> outbox(workers, std::vector<std::vector<std::size_t>>(shards));
  for (std::size_t w = 0; w < workers; ++w) {
    std::unordered_map<EmbeddingKey, std::size_t, EmbeddingKeyHash> seen;
    result.inverse[w].reserve(ids[w].size());
    for (const auto& key : ids[w]) {
      auto [it, inserted] = seen.try_emplace(key, result.unique_keys[w].size());
      if (inserted) {
        result.unique_keys[w].push_back(key);
        outbox[w][store.router().shard_of(key)].push_back(it->second);
      }
      result.inverse[w].push_back(it->second);
    }
    result.stats.requested += ids[w].size();
    result.stats.after_stage1 += result.unique_keys[w].size();
    result.unique_rows[w].resize(result.unique_keys[w].size());
  }

  // Stage 2: each shard dedups the union of its inbox, looks each id up
  // once, and answers every sender.
  for (std::size_t s = 0; s < shards; ++s) {
    std::vector<EmbeddingKey> shard_unique;
    std::unordered_map<EmbeddingKey, std::size_t, EmbeddingKeyHash> position;
    for (std::size_t w = 0; w < workers; ++w) {
      for (std::size_t u : outbox[w][s]) {
        const auto& key = result.unique_keys[w][u];
        if (position.try_emplace(key, shard_unique.size()).second) shard_unique.push_back(key);
      }
    }
    result.stats.after_stage2 += shard_unique.size();
    std::vector<Row> fetched;
    fetched.reserve(shard_unique.size());
    for (const auto& key : shard_unique) {
      auto& table = store.table(s, store.plan().physical_index(key.table_id));
      auto values = table.lookup_or_init(key);
      fetched.emplace_back(Eigen::Map<const Row>(values.data(), static_cast<Eigen::Index>(values.size())));
    }
    for (std::size_t w = 0; w < workers; ++w) {
      for (std::size_t u : outbox[w][s]) {
        const Row& row = fetched[position.at(result.unique_keys[w][u])];
        result.unique_rows[w][u] = row;
        result.stats.vector_bytes_returned += static_cast<std::size_t>(row.size()) * sizeof(Scalar);
      }
    }
  }

  for (std::size_t w = 0; w < workers; ++w) {
    for (const auto& key : ids[w]) {
      result.stats.vector_bytes_naive += static_cast<std::size_t>(store.dim_of(key.table_id)) * sizeof(Scalar);
    }
  }
  result.stats.id_bytes_naive = result.stats.requested * kKeyWireBytes;
  result.stats.id_bytes_sent = result.stats.after_stage1 * kKeyWireBytes;
  return result;
}

}  // namespace mtgr
