#pragma once

// Simulated data-parallel training. One step takes a fixed global batch,
// splits it across W workers by token budget (dynamic batch size), runs each
// worker's forward/backward, merges worker gradients weighted by their batch
// size and applies Adam to dense parameters and to the touched embedding rows.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mtgr/metrics.hpp"
#include "mtgr/model.hpp"
#include "mtgr/optim.hpp"

namespace mtgr {

struct BatchPlan {
  /// Sample indices per worker, ascending.
  std::vector<std::vector<std::size_t>> assignments;
  std::vector<std::size_t> batch_sizes;
  std::vector<std::size_t> token_loads;
  std::size_t budget = 0;
};

/// Greedy longest-first packing: samples sorted by descending length (ties
/// by index) each go to the worker with the most remaining budget (ties to
/// the lowest worker). Throws DataError if a sample is longer than the budget
/// or no worker has room for it.
BatchPlan plan_dynamic_batches(std::span<const std::size_t> lengths, std::size_t workers, std::size_t budget);

template <typename Scalar>
struct GradientSet {
  std::vector<Matrix<Scalar>> dense;
  SparseGrads<Scalar> sparse;
  /// Weighted mean loss the gradient belongs to.
  double loss = 0.0;
};

/// g = sum_w bs_w g_w / sum_w bs_w over dense and sparse parts. Rows absent
/// from a worker count as zero for it.
template <typename Scalar>
GradientSet<Scalar> aggregate_gradients_weighted(const std::vector<GradientSet<Scalar>>& grads,
                                                 std::span<const double> batch_sizes) {
  if (grads.empty() || grads.size() != batch_sizes.size()) {
    throw ContractError("aggregate_gradients_weighted: need one batch size per worker gradient");
  }
  double total = 0.0;
  for (double b : batch_sizes) {
    if (b < 0) throw ContractError("aggregate_gradients_weighted: negative batch size");
    total += b;
  }
  if (total <= 0) throw ContractError("aggregate_gradients_weighted: all workers are empty");
  const auto& ref = grads.front().dense;
  for (const auto& g : grads) {
    if (g.dense.size() != ref.size()) throw ContractError("aggregate_gradients_weighted: parameter sets differ");
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (g.dense[i].rows() != ref[i].rows() || g.dense[i].cols() != ref[i].cols()) {
        throw ContractError("aggregate_gradients_weighted: shape of parameter " + std::to_string(i) + " differs");
      }
    }
  }
  GradientSet<Scalar> out;
  for (const auto& m : ref) out.dense.push_back(Matrix<Scalar>::Zero(m.rows(), m.cols()));
  for (std::size_t w = 0; w < grads.size(); ++w) {
    if (batch_sizes[w] == 0) continue;
    const auto weight = static_cast<Scalar>(batch_sizes[w] / total);
    for (std::size_t i = 0; i < ref.size(); ++i) out.dense[i] += weight * grads[w].dense[i];
    for (const auto& [key, row] : grads[w].sparse) {
      auto [it, inserted] = out.sparse.try_emplace(key, RowVector<Scalar>::Zero(row.size()));
      if (it->second.size() != row.size()) throw ContractError("aggregate_gradients_weighted: sparse row width differs");
      it->second += weight * row;
    }
    out.loss += batch_sizes[w] / total * grads[w].loss;
  }
  return out;
}

enum class LossWeighting { Sample, Token };

struct TrainConfig {
  AdamConfig adam;
  std::size_t num_workers = 1;
  /// Tokens per worker-step; 0 means the step's total token count.
  std::size_t token_budget = 0;
  /// Samples per global step.
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::uint64_t max_steps = 100;
  /// Evaluate every n steps (and after the last one); 0 disables.
  std::uint64_t eval_every = 0;
  bool threaded = false;
  /// Global-norm clip over all gradients; 0 disables.
  double grad_clip = 0.0;
  LossWeighting weighting = LossWeighting::Sample;
  GaucWeighting gauc_weighting = GaucWeighting::Unweighted;
};

template <typename Scalar>
struct StepGradients {
  GradientSet<Scalar> aggregated;
  std::vector<GradientSet<Scalar>> per_worker;
  std::vector<double> weights;
  BatchPlan plan;
  TransferStats transfer;
};

/// Loss and gradient of one worker's samples against shared dense leaves
/// and its local embedding copy: sum_i w_i grad(l_i) / sum_i w_i.
template <typename Scalar>
GradientSet<Scalar> worker_gradient(const FeatureSchema& schema, const HstuConfig& hstu,
                                    const std::vector<Tensor<Scalar>>& dense_leaves,
                                    const LocalEmbeddings<Scalar>& local,
                                    const std::vector<const AggregatedSample*>& samples,
                                    const std::vector<double>& sample_weights) {
  GradientSet<Scalar> out;
  for (const auto& p : dense_leaves) out.dense.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
  std::vector<Matrix<Scalar>> table_grads;
  for (const auto& t : local.tables()) table_grads.push_back(Matrix<Scalar>::Zero(t.rows(), t.cols()));
  double total_weight = 0.0;
  for (double w : sample_weights) total_weight += w;
  if (samples.empty()) return out;

  const auto dense = DenseParams<Scalar>::assemble(dense_leaves, hstu.n_layer);
  std::vector<Tensor<Scalar>> params = dense_leaves;
  params.insert(params.end(), local.tables().begin(), local.tables().end());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto fwd = forward_sample(*samples[i], schema, hstu, dense, local);
    const auto loss = ranking_loss(fwd.logits, labels_of(*samples[i]));
    const auto g = grad(loss, params);
    const auto share = static_cast<Scalar>(sample_weights[i] / total_weight);
    for (std::size_t p = 0; p < dense_leaves.size(); ++p) out.dense[p] += share * g[p];
    for (std::size_t t = 0; t < table_grads.size(); ++t) table_grads[t] += share * g[dense_leaves.size() + t];
    out.loss += sample_weights[i] / total_weight * static_cast<double>(loss.item());
  }
  for (std::size_t t = 0; t < table_grads.size(); ++t) {
    const auto& keys = local.keys(t);
    for (std::size_t r = 0; r < keys.size(); ++r) out.sparse.emplace(keys[r], table_grads[t].row(static_cast<Index>(r)));
  }
  return out;
}

template <typename Scalar>
class Trainer {
 public:
  Trainer(Model<Scalar>& model, TrainConfig cfg) : model_(model), cfg_(cfg) {
    if (cfg_.num_workers < 1) throw ConfigError("num_workers must be >= 1");
    if (cfg_.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  }

  Model<Scalar>& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  DenseAdamState<Scalar>& dense_state() { return dense_state_; }
  std::uint64_t step_count() const { return step_; }

  double sample_weight(const AggregatedSample& s) const {
    return cfg_.weighting == LossWeighting::Token
               ? static_cast<double>(s.token_count(model_.schema().user_profile_features().size()))
               : 1.0;
  }

  /// Plans the batch over `workers`, fetches embeddings through the
  /// deduplicated exchange and returns per-worker and aggregated gradients.
  /// Inserts unseen keys into the store but changes no values.
  StepGradients<Scalar> compute(const std::vector<const AggregatedSample*>& batch, std::size_t workers) {
    const auto& schema = model_.schema();
    std::vector<std::size_t> lengths;
    std::size_t total_tokens = 0;
    for (const auto* s : batch) {
      lengths.push_back(s->token_count(schema.user_profile_features().size()));
      total_tokens += lengths.back();
    }
    StepGradients<Scalar> out;
    out.plan = plan_dynamic_batches(lengths, workers, cfg_.token_budget ? cfg_.token_budget : total_tokens);

    std::vector<std::vector<EmbeddingKey>> ids(workers);
    std::vector<std::vector<const AggregatedSample*>> worker_samples(workers);
    std::vector<std::vector<double>> worker_weights(workers);
    out.weights.assign(workers, 0.0);
    for (std::size_t w = 0; w < workers; ++w) {
      for (std::size_t i : out.plan.assignments[w]) {
        const auto keys = collect_keys(*batch[i], schema);
        ids[w].insert(ids[w].end(), keys.begin(), keys.end());
        worker_samples[w].push_back(batch[i]);
        worker_weights[w].push_back(sample_weight(*batch[i]));
        out.weights[w] += worker_weights[w].back();
      }
    }
    const auto fetched = two_stage_dedup_lookup(ids, model_.store());
    out.transfer = fetched.stats;

    const auto dense_leaves = model_.dense_leaves(true);
    std::vector<LocalEmbeddings<Scalar>> locals;
    locals.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      locals.emplace_back(fetched.unique_keys[w], fetched.unique_rows[w], model_.store().plan(), true);
    }
    out.per_worker.resize(workers);
    auto run = [&](std::size_t w) {
      out.per_worker[w] =
          worker_gradient(schema, model_.hstu(), dense_leaves, locals[w], worker_samples[w], worker_weights[w]);
    };
    if (cfg_.threaded && workers > 1) {
      std::vector<std::exception_ptr> errors(workers);
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
          try {
            run(w);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    } else {
      for (std::size_t w = 0; w < workers; ++w) run(w);
    }
    out.aggregated = aggregate_gradients_weighted(out.per_worker, out.weights);
    return out;
  }

  /// One optimizer step on the batch; returns the batch loss.
  double step(const std::vector<const AggregatedSample*>& batch) {
    ++step_;
    model_.store().begin_step(step_);
    auto grads = compute(batch, cfg_.num_workers);
    apply(grads.aggregated);
    return grads.aggregated.loss;
  }

  void apply(GradientSet<Scalar>& g) {
    if (cfg_.grad_clip > 0) clip(g);
    adam_step(model_.dense_values(), g.dense, dense_state_, cfg_.adam);
    sparse_adam_step(model_.store(), g.sparse, cfg_.adam);
  }

 private:
  void clip(GradientSet<Scalar>& g) const {
    double sq = 0.0;
    for (const auto& m : g.dense) sq += static_cast<double>(m.squaredNorm());
    for (const auto& [k, row] : g.sparse) sq += static_cast<double>(row.squaredNorm());
    const double norm = std::sqrt(sq);
    if (norm <= cfg_.grad_clip) return;
    const auto s = static_cast<Scalar>(cfg_.grad_clip / norm);
    for (auto& m : g.dense) m *= s;
    for (auto& [k, row] : g.sparse) row *= s;
  }

  Model<Scalar>& model_;
  TrainConfig cfg_;
  DenseAdamState<Scalar> dense_state_;
  std::uint64_t step_ = 0;
};

struct EvalReport {
  std::optional<double> ctr_auc, ctr_gauc, ctcvr_auc, ctcvr_gauc;
  double logloss = 0.0;
  std::size_t impressions = 0;
  std::size_t users = 0;

  nlohmann::json to_json() const;
};

template <typename Scalar>
EvalReport evaluate(const Model<Scalar>& model, const std::vector<AggregatedSample>& samples,
                    GaucWeighting weighting = GaucWeighting::Unweighted) {
  std::vector<ScoredImpression> ctr, ctcvr;
  double loss = 0.0;
  for (const auto& s : samples) {
    const auto p = model.predict(s);
    for (std::size_t k = 0; k < s.candidates.size(); ++k) {
      const auto& c = s.candidates[k];
      const double pc = static_cast<double>(p(static_cast<Index>(k), 0));
      const double pv = static_cast<double>(p(static_cast<Index>(k), 1));
      ctr.push_back({s.user_id, pc, c.click});
      ctcvr.push_back({s.user_id, pv, c.click & c.purchase});
      const double tiny = 1e-12;
      loss -= c.click ? std::log(std::max(pc, tiny)) : std::log(std::max(1.0 - pc, tiny));
    }
  }
  EvalReport r;
  r.ctr_auc = auc(std::span<const ScoredImpression>(ctr));
  r.ctr_gauc = gauc(ctr, weighting);
  r.ctcvr_auc = auc(std::span<const ScoredImpression>(ctcvr));
  r.ctcvr_gauc = gauc(ctcvr, weighting);
  r.impressions = ctr.size();
  r.logloss = ctr.empty() ? 0.0 : loss / static_cast<double>(ctr.size());
  std::vector<std::int64_t> users;
  for (const auto& s : samples) users.push_back(s.user_id);
  std::sort(users.begin(), users.end());
  r.users = static_cast<std::size_t>(std::unique(users.begin(), users.end()) - users.begin());
  return r;
}

struct MetricRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  std::optional<double> auc, gauc;

  nlohmann::json to_json() const;
};

/// Visit order over a dataset: one seeded permutation per epoch, batches
/// never straddle an epoch boundary.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();
  std::uint64_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  std::size_t n_, batch_size_;
  std::uint64_t state_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
};

/// Writes {dense.bin, sparse/, config.snapshot} into dir.
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& dir, const Model<Scalar>& model, const DenseAdamState<Scalar>& state,
                     const std::string& snapshot) {
  std::filesystem::create_directories(dir);
  model.save_dense(dir / "dense.bin", state.m, state.v, state.t);
  model.store().save(dir / "sparse");
  std::ofstream out(dir / "config.snapshot");
  if (!out) throw DataError("cannot write " + (dir / "config.snapshot").string());
  out << snapshot;
}

template <typename Scalar>
DenseAdamState<Scalar> load_checkpoint(const std::filesystem::path& dir, Model<Scalar>& model) {
  auto dense = model.load_dense(dir / "dense.bin");
  model.store().load(dir / "sparse");
  return {std::move(dense.adam_m), std::move(dense.adam_v), dense.adam_t};
}

struct TrainHooks {
  /// Receives one record per step.
  std::function<void(const MetricRecord&)> on_step;
  /// Called with the failing step when a non-finite value aborts training.
  std::function<void(std::uint64_t step, const std::vector<const AggregatedSample*>& batch, const std::string& what)>
      on_numeric_error;
};

template <typename Scalar>
std::vector<MetricRecord> train(Trainer<Scalar>& trainer, const std::vector<AggregatedSample>& data,
                                const std::vector<AggregatedSample>& eval_data, const TrainHooks& hooks = {}) {
  const auto& cfg = trainer.config();
  std::vector<MetricRecord> log;
  if (cfg.max_steps == 0) return log;
  if (data.empty()) throw DataError("training set is empty");
  EpochSampler sampler(data.size(), cfg.batch_size, cfg.seed);
  for (std::uint64_t s = 1; s <= cfg.max_steps; ++s) {
    std::vector<const AggregatedSample*> batch;
    for (std::size_t i : sampler.next()) batch.push_back(&data[i]);
    MetricRecord rec;
    rec.step = s;
    try {
      rec.loss = trainer.step(batch);
    } catch (const NumericError& e) {
      if (hooks.on_numeric_error) hooks.on_numeric_error(s, batch, e.what());
      throw;
    }
    if (!std::isfinite(rec.loss)) {
      if (hooks.on_numeric_error) hooks.on_numeric_error(s, batch, "non-finite loss");
      throw NumericError("non-finite loss at step " + std::to_string(s));
    }
    const bool eval_now = cfg.eval_every > 0 && !eval_data.empty() && (s % cfg.eval_every == 0 || s == cfg.max_steps);
    if (eval_now) {
      const auto report = evaluate(trainer.model(), eval_data, cfg.gauc_weighting);
      rec.auc = report.ctr_auc;
      rec.gauc = report.ctr_gauc;
    }
    if (hooks.on_step) hooks.on_step(rec);
    log.push_back(rec);
  }
  return log;
}

}  // namespace mtgr
