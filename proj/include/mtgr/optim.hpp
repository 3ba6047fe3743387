#pragma once

// Adam for dense matrices and lazily for embedding rows.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "mtgr/embedding_store.hpp"
#include "mtgr/tensor.hpp"

namespace mtgr {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct DenseAdamState {
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;
  std::uint64_t t = 0;
};

template <typename Scalar>
using SparseGrads = std::map<EmbeddingKey, RowVector<Scalar>>;

namespace detail {

template <typename Scalar>
void adam_update(Scalar* value, Scalar* m, Scalar* v, const Scalar* g, Index n, std::uint64_t t, const AdamConfig& cfg) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (Index i = 0; i < n; ++i) {
    const double gi = g[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
    m[i] = static_cast<Scalar>(mi);
    v[i] = static_cast<Scalar>(vi);
    value[i] = static_cast<Scalar>(value[i] - cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps));
  }
}

}  // namespace detail

/// One bias-corrected Adam step over every dense parameter.
template <typename Scalar>
void adam_step(std::vector<Matrix<Scalar>>& params, const std::vector<Matrix<Scalar>>& grads,
               DenseAdamState<Scalar>& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ContractError("adam_step: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
      state.v.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: optimizer state does not match parameters");
  ++state.t;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols()) {
      throw DimensionError("adam_step: gradient shape mismatch for parameter " + std::to_string(i));
    }
    detail::adam_update(params[i].data(), state.m[i].data(), state.v[i].data(), grads[i].data(), params[i].size(),
                        state.t, cfg);
  }
}

/// Adam on the embedding rows named in grads only; each row keeps its own
/// step count, so rows not touched this step are left exactly as they are.
template <typename Scalar>
void sparse_adam_step(EmbeddingStore<Scalar>& store, const SparseGrads<Scalar>& grads, const AdamConfig& cfg) {
  for (const auto& [key, g] : grads) {
    auto& table = store.table_for(key);
    const auto slot = table.find(key);
    if (!slot) throw ContractError("sparse_adam_step: key was evicted before its update");
    if (g.size() != table.dim()) throw DimensionError("sparse_adam_step: gradient row width mismatch");
    auto& slab = table.slab();
    auto& meta = slab.meta(*slot);
    ++meta.adam_steps;
    detail::adam_update(slab.values(*slot).data(), slab.adam_m(*slot).data(), slab.adam_v(*slot).data(), g.data(),
                        g.size(), meta.adam_steps, cfg);
  }
}

}  // namespace mtgr
