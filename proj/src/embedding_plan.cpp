#include "mtgr/embedding_store.hpp"

#include "mtgr/errors.hpp"

namespace mtgr {

std::size_t MergePlan::physical_index(std::uint32_t table_id) const {
  if (table_id >= physical_of.size()) {
    throw ContractError("embedding table " + std::to_string(table_id) + " is not registered");
  }
  return physical_of[table_id];
}

MergePlan merge_tables(const std::vector<LogicalTable>& tables, bool merge) {
  MergePlan plan;
  std::uint32_t max_id = 0;
  for (const auto& t : tables) {
    if (t.dim <= 0) throw ContractError("table '" + t.name + "' has non-positive dim");
    max_id = std::max(max_id, t.table_id);
  }
  plan.physical_of.assign(tables.empty() ? 0 : max_id + 1, 0);
  for (const auto& t : tables) {
    std::size_t target = plan.physical.size();
    if (merge) {
      for (std::size_t p = 0; p < plan.physical.size(); ++p) {
        if (plan.physical[p].dim == t.dim && plan.physical[p].hyper == t.hyper) {
          target = p;
          break;
        }
      }
    }
    if (target == plan.physical.size()) plan.physical.push_back({t.dim, t.hyper, {}});
    plan.physical[target].logical_ids.push_back(t.table_id);
    plan.physical_of[t.table_id] = target;
  }
  return plan;
}

MergePlan merge_tables(const FeatureSchema& schema, bool merge) {
  std::vector<LogicalTable> tables;
  for (const auto& f : schema.features()) tables.push_back({f.table_id, f.name, f.dim, {}});
  return merge_tables(tables, merge);
}

ShardRouter::ShardRouter(std::size_t num_shards) : num_shards_(num_shards) {
  if (num_shards == 0) throw ContractError("ShardRouter needs at least one shard");
}

std::size_t ShardRouter::shard_of(const EmbeddingKey& key) const {
  return EmbeddingKeyHash{}(key) % num_shards_;
}

}  // namespace mtgr
