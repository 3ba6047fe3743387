#pragma once

// The full ranking model: sparse embedding store + dense parameters
// (tokenizer projections, encoder layers, output head).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "mtgr/embedding_store.hpp"
#include "mtgr/encoder.hpp"
#include "mtgr/tokenize.hpp"

namespace mtgr {

enum class DenseInit { Glorot, Zeros, Ones };

struct DenseSpec {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  DenseInit init = DenseInit::Glorot;
};

/// Names, shapes and initializers of every dense parameter, in the fixed
/// order used by checkpoints and optimizer state.
std::vector<DenseSpec> dense_layout(const FeatureSchema& schema, const HstuConfig& cfg);

struct ModelConfig {
  HstuConfig hstu;
  std::size_t num_shards = 4;
  bool merge_tables = true;
  TableOptions table;
  std::uint64_t seed = 17;
};

/// Typed view of a flat dense parameter list.
template <typename Scalar>
struct DenseParams {
  TokenizerParams<Scalar> tokenizer;
  std::vector<LayerParams<Scalar>> layers;
  HeadParams<Scalar> head;

  static DenseParams assemble(const std::vector<Tensor<Scalar>>& flat, int n_layer) {
    const std::size_t expected = 4 + 16 * static_cast<std::size_t>(n_layer) + 4;
    if (flat.size() != expected) {
      throw ContractError("dense parameter list has " + std::to_string(flat.size()) + " entries, expected " +
                          std::to_string(expected));
    }
    DenseParams p;
    std::size_t i = 0;
    p.tokenizer = {flat[0], flat[1], flat[2], flat[3]};
    i = 4;
    for (int l = 0; l < n_layer; ++l) {
      LayerParams<Scalar> lp;
      lp.norm_in = {flat[i], flat[i + 1]};
      lp.w_q = flat[i + 2];
      lp.w_k = flat[i + 3];
      lp.w_v = flat[i + 4];
      lp.w_u = flat[i + 5];
      lp.b_q = flat[i + 6];
      lp.b_k = flat[i + 7];
      lp.b_v = flat[i + 8];
      lp.b_u = flat[i + 9];
      lp.norm_out = {flat[i + 10], flat[i + 11]};
      lp.mlp_w1 = flat[i + 12];
      lp.mlp_b1 = flat[i + 13];
      lp.mlp_w2 = flat[i + 14];
      lp.mlp_b2 = flat[i + 15];
      p.layers.push_back(std::move(lp));
      i += 16;
    }
    p.head = {flat[i], flat[i + 1], flat[i + 2], flat[i + 3]};
    return p;
  }
};

template <typename Scalar>
struct SampleOutput {
  /// K x 2 logits in candidate order.
  Tensor<Scalar> logits;
  TokenLayout layout;
};

template <typename Scalar>
SampleOutput<Scalar> forward_sample(const AggregatedSample& sample, const FeatureSchema& schema, const HstuConfig& cfg,
                                    const DenseParams<Scalar>& dense, const LocalEmbeddings<Scalar>& local) {
  auto seq = tokenize(sample, schema, local, dense.tokenizer);
  const MaskMatrix mask = build_mask(cfg.mask_mode, seq.layout.tags, seq.layout.timestamps);
  const auto encoded = encode(seq.tokens, mask, dense.layers, cfg);
  return {candidate_logits(encoded, seq.layout.tags, dense.head), std::move(seq.layout)};
}

inline CandidateLabels labels_of(const AggregatedSample& sample) {
  CandidateLabels labels;
  for (const auto& c : sample.candidates) {
    labels.click.push_back(c.click);
    labels.purchase.push_back(c.purchase);
  }
  return labels;
}

template <typename Scalar>
class Model {
 public:
  static constexpr char kDenseMagic[8] = {'M', 'T', 'G', 'R', 'D', 'N', 'S', '1'};

  Model(FeatureSchema schema, ModelConfig cfg)
      : schema_(std::move(schema)),
        cfg_(std::move(cfg)),
        store_(merge_tables(schema_, cfg_.merge_tables), cfg_.num_shards, table_options(cfg_)),
        layout_(dense_layout(schema_, cfg_.hstu)) {
    cfg_.hstu.validate();
    schema_.validate();
    if (schema_.d_model() != cfg_.hstu.d_model) throw ConfigError("schema d_model differs from encoder d_model");
    std::mt19937_64 rng(cfg_.seed);
    for (const auto& spec : layout_) {
      Matrix<Scalar> m(spec.rows, spec.cols);
      switch (spec.init) {
        case DenseInit::Zeros: m.setZero(); break;
        case DenseInit::Ones: m.setOnes(); break;
        case DenseInit::Glorot: {
          const double bound = std::sqrt(6.0 / static_cast<double>(spec.rows + spec.cols));
          std::uniform_real_distribution<double> dist(-bound, bound);
          for (Index c = 0; c < m.cols(); ++c) {
            for (Index r = 0; r < m.rows(); ++r) m(r, c) = static_cast<Scalar>(dist(rng));
          }
          break;
        }
      }
      dense_.push_back(std::move(m));
    }
  }

  const FeatureSchema& schema() const { return schema_; }
  const ModelConfig& config() const { return cfg_; }
  const HstuConfig& hstu() const { return cfg_.hstu; }
  EmbeddingStore<Scalar>& store() { return store_; }
  const EmbeddingStore<Scalar>& store() const { return store_; }
  const std::vector<DenseSpec>& layout() const { return layout_; }
  std::vector<Matrix<Scalar>>& dense_values() { return dense_; }
  const std::vector<Matrix<Scalar>>& dense_values() const { return dense_; }

  /// Fresh leaves over the current dense values (trainable or constant).
  std::vector<Tensor<Scalar>> dense_leaves(bool trainable) const {
    std::vector<Tensor<Scalar>> out;
    out.reserve(dense_.size());
    for (const auto& m : dense_) out.push_back(trainable ? Tensor<Scalar>::parameter(m) : Tensor<Scalar>::constant(m));
    return out;
  }

  /// Inference: K x 2 sigmoid probabilities (CTR, CTCVR) without mutating
  /// the embedding store.
  Matrix<Scalar> predict(const AggregatedSample& sample) const {
    const auto keys = collect_keys(sample, schema_);
    std::vector<typename EmbeddingStore<Scalar>::Row> rows;
    rows.reserve(keys.size());
    for (const auto& k : keys) rows.push_back(store_.peek(k));
    const LocalEmbeddings<Scalar> local(keys, rows, store_.plan(), false);
    const auto dense = DenseParams<Scalar>::assemble(dense_leaves(false), cfg_.hstu.n_layer);
    const auto out = forward_sample(sample, schema_, cfg_.hstu, dense, local);
    return out.logits.value().unaryExpr([](Scalar z) { return detail::sigmoid(z); });
  }

  void save_dense(const std::filesystem::path& path, const std::vector<Matrix<Scalar>>& adam_m = {},
                  const std::vector<Matrix<Scalar>>& adam_v = {}, std::uint64_t adam_t = 0) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(kDenseMagic, sizeof(kDenseMagic));
    detail::write_pod(out, static_cast<std::uint32_t>(sizeof(Scalar)));
    detail::write_pod(out, static_cast<std::uint64_t>(dense_.size()));
    detail::write_pod(out, adam_t);
    const bool has_state = adam_m.size() == dense_.size() && adam_v.size() == dense_.size();
    detail::write_pod(out, static_cast<std::uint8_t>(has_state));
    for (std::size_t i = 0; i < dense_.size(); ++i) {
      const auto& name = layout_[i].name;
      detail::write_pod(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::write_pod(out, static_cast<std::uint64_t>(dense_[i].rows()));
      detail::write_pod(out, static_cast<std::uint64_t>(dense_[i].cols()));
      write_matrix(out, dense_[i]);
      if (has_state) {
        write_matrix(out, adam_m[i]);
        write_matrix(out, adam_v[i]);
      }
    }
  }

  /// Restores dense values; returns the optimizer moments if the file has them.
  struct DenseState {
    std::vector<Matrix<Scalar>> adam_m, adam_v;
    std::uint64_t adam_t = 0;
  };

  DenseState load_dense(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kDenseMagic, sizeof(magic)) != 0) throw DataError("bad dense checkpoint magic");
    if (detail::read_pod<std::uint32_t>(in) != sizeof(Scalar)) throw DataError("dense checkpoint precision mismatch");
    const auto count = detail::read_pod<std::uint64_t>(in);
    if (count != dense_.size()) throw DataError("dense checkpoint parameter count mismatch");
    DenseState state;
    state.adam_t = detail::read_pod<std::uint64_t>(in);
    const bool has_state = detail::read_pod<std::uint8_t>(in) != 0;
    for (std::size_t i = 0; i < count; ++i) {
      const auto len = detail::read_pod<std::uint32_t>(in);
      std::string name(len, '\0');
      in.read(name.data(), len);
      if (name != layout_[i].name) throw DataError("dense checkpoint has '" + name + "' where '" + layout_[i].name + "' was expected");
      const auto rows = static_cast<Index>(detail::read_pod<std::uint64_t>(in));
      const auto cols = static_cast<Index>(detail::read_pod<std::uint64_t>(in));
      if (rows != dense_[i].rows() || cols != dense_[i].cols()) throw DataError("dense checkpoint shape mismatch for " + name);
      read_matrix(in, dense_[i]);
      if (has_state) {
        state.adam_m.emplace_back(rows, cols);
        state.adam_v.emplace_back(rows, cols);
        read_matrix(in, state.adam_m.back());
        read_matrix(in, state.adam_v.back());
      }
    }
    return state;
  }

 private:
  static TableOptions table_options(const ModelConfig& cfg) { return cfg.table; }

  static void write_matrix(std::ostream& out, const Matrix<Scalar>& m) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(Scalar) * m.size()));
  }
  static void read_matrix(std::istream& in, Matrix<Scalar>& m) {
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(Scalar) * m.size()));
    if (!in) throw DataError("truncated dense checkpoint");
  }

  FeatureSchema schema_;
  ModelConfig cfg_;
  EmbeddingStore<Scalar> store_;
  std::vector<DenseSpec> layout_;
  std::vector<Matrix<Scalar>> dense_;
};

}  // namespace mtgr
