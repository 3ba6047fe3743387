#include "mtgr/trainer.hpp"

#include <algorithm>
#include <numeric>

namespace mtgr {

BatchPlan plan_dynamic_batches(std::span<const std::size_t> lengths, std::size_t workers, std::size_t budget) {
  if (workers < 1) throw ConfigError("plan_dynamic_batches: need at least one worker");
  BatchPlan plan;
  plan.budget = budget;
  plan.assignments.assign(workers, {});
  plan.batch_sizes.assign(workers, 0);
  plan.token_loads.assign(workers, 0);

  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });
  for (std::size_t i : order) {
    if (lengths[i] > budget) {
      throw DataError("sample " + std::to_string(i) + " has " + std::to_string(lengths[i]) +
                      " tokens, more than the per-worker budget " + std::to_string(budget));
    }
    std::size_t best = 0;
    for (std::size_t w = 1; w < workers; ++w) {
      if (plan.token_loads[w] < plan.token_loads[best]) best = w;
    }
    if (plan.token_loads[best] + lengths[i] > budget) {
      throw DataError("batch does not fit: sample " + std::to_string(i) + " (" + std::to_string(lengths[i]) +
                      " tokens) exceeds every worker's remaining budget");
    }
    plan.assignments[best].push_back(i);
    plan.token_loads[best] += lengths[i];
    ++plan.batch_sizes[best];
  }
  for (auto& a : plan.assignments) std::sort(a.begin(), a.end());
  return plan;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json EvalReport::to_json() const {
  return {{"ctr_auc", optional_json(ctr_auc)},     {"ctr_gauc", optional_json(ctr_gauc)},
          {"ctcvr_auc", optional_json(ctcvr_auc)}, {"ctcvr_gauc", optional_json(ctcvr_gauc)},
          {"logloss", logloss},                    {"impressions", impressions},
          {"users", users}};
}

nlohmann::json MetricRecord::to_json() const {
  return {{"step", step}, {"loss", loss}, {"auc", optional_json(auc)}, {"gauc", optional_json(gauc)}};
}

EpochSampler::EpochSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), state_(seed) {
  if (batch_size_ == 0) throw ConfigError("batch_size must be >= 1");
  order_.resize(n_);
  reshuffle();
}

void EpochSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), 0);
  // Fisher-Yates on splitmix64 so the order is the same on every platform.
  for (std::size_t i = n_; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(detail::splitmix64(state_) % i);
    std::swap(order_[i - 1], order_[j]);
  }
  cursor_ = 0;
}

std::vector<std::size_t> EpochSampler::next() {
  if (cursor_ >= n_) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t end = std::min(n_, cursor_ + batch_size_);
  std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return batch;
}

}  // namespace mtgr
