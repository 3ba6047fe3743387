#include "mtgr/gradcheck_suite.hpp"

#include <random>

#include "mtgr/gradcheck.hpp"
#include "mtgr/model.hpp"

namespace mtgr {

namespace {

using T = Tensor<double>;
using M = Matrix<double>;
using Fn = std::function<T(const std::vector<T>&)>;

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  M matrix(Index r, Index c, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    M m(r, c);
    for (Index i = 0; i < m.size(); ++i) m(i) = d(rng_);
    return m;
  }

 private:
  std::mt19937_64 rng_;
};

/// Reduces any output to a scalar through a fixed random projection so no
/// gradient direction is trivially symmetric.
T project(const T& out, const M& weights) { return sum(mul(out, T::constant(weights))); }

ModuleCheck check(const std::string& name, const Fn& f, const std::vector<M>& params, double step) {
  const auto r = finite_diff_check<double>(f, params, step);
  return {name, r.max_relative_error, r.coordinates};
}

std::vector<TokenGroup> encoder_tags() {
  using G = TokenGroup;
  return {G::UserProfile, G::UserProfile, G::StaticSeq,   G::StaticSeq,   G::StaticSeq, G::RealtimeSeq,
          G::RealtimeSeq, G::RealtimeSeq, G::RealtimeSeq, G::Candidate,   G::Candidate, G::Candidate};
}

std::vector<std::int64_t> encoder_timestamps() { return {0, 0, 0, 0, 0, 10, 20, 30, 40, 35, 15, 45}; }

std::vector<M> random_layer(Sampler& s, Index d) {
  std::vector<M> p;
  p.push_back(M::Ones(kNumTokenGroups, d) + 0.1 * s.matrix(kNumTokenGroups, d));
  p.push_back(0.1 * s.matrix(kNumTokenGroups, d));
  for (int i = 0; i < 4; ++i) p.push_back(s.matrix(d, d, -0.6, 0.6));
  for (int i = 0; i < 4; ++i) p.push_back(0.1 * s.matrix(1, d));
  p.push_back(M::Ones(kNumTokenGroups, d) + 0.1 * s.matrix(kNumTokenGroups, d));
  p.push_back(0.1 * s.matrix(kNumTokenGroups, d));
  p.push_back(s.matrix(d, d, -0.6, 0.6));
  p.push_back(0.1 * s.matrix(1, d));
  p.push_back(s.matrix(d, d, -0.6, 0.6));
  p.push_back(0.1 * s.matrix(1, d));
  return p;
}

LayerParams<double> layer_from(const std::vector<T>& v, std::size_t at) {
  LayerParams<double> p;
  p.norm_in = {v[at], v[at + 1]};
  p.w_q = v[at + 2];
  p.w_k = v[at + 3];
  p.w_v = v[at + 4];
  p.w_u = v[at + 5];
  p.b_q = v[at + 6];
  p.b_k = v[at + 7];
  p.b_v = v[at + 8];
  p.b_u = v[at + 9];
  p.norm_out = {v[at + 10], v[at + 11]};
  p.mlp_w1 = v[at + 12];
  p.mlp_b1 = v[at + 13];
  p.mlp_w2 = v[at + 14];
  p.mlp_b2 = v[at + 15];
  return p;
}

}  // namespace

std::vector<ModuleCheck> run_gradient_checks(std::uint64_t seed, double step) {
  Sampler s(seed);
  std::vector<ModuleCheck> out;
  const M w44 = s.matrix(4, 4), w43 = s.matrix(4, 3), w45 = s.matrix(4, 5), w84 = s.matrix(8, 4), w128 = s.matrix(12, 8);
  const M mask = (s.matrix(4, 4).array() > 0).cast<double>().matrix();

  out.push_back(check("matmul", [&](const std::vector<T>& v) { return project(matmul(v[0], v[1]), w43); },
                      {s.matrix(4, 5), s.matrix(5, 3)}, step));
  out.push_back(check("matmul_nt", [&](const std::vector<T>& v) { return project(matmul_nt(v[0], v[1]), w44); },
                      {s.matrix(4, 3), s.matrix(4, 3)}, step));
  out.push_back(check("add", [&](const std::vector<T>& v) { return project(add(v[0], v[1]), w43); },
                      {s.matrix(4, 3), s.matrix(4, 3)}, step));
  out.push_back(check("sub", [&](const std::vector<T>& v) { return project(sub(v[0], v[1]), w43); },
                      {s.matrix(4, 3), s.matrix(4, 3)}, step));
  out.push_back(check("mul", [&](const std::vector<T>& v) { return project(mul(v[0], v[1]), w43); },
                      {s.matrix(4, 3), s.matrix(4, 3)}, step));
  out.push_back(check("scale", [&](const std::vector<T>& v) { return project(scale(v[0], 0.37), w43); },
                      {s.matrix(4, 3)}, step));
  out.push_back(check("add_row", [&](const std::vector<T>& v) { return project(add_row(v[0], v[1]), w43); },
                      {s.matrix(4, 3), s.matrix(1, 3)}, step));
  out.push_back(check("mul_row", [&](const std::vector<T>& v) { return project(mul_row(v[0], v[1]), w43); },
                      {s.matrix(4, 3), s.matrix(1, 3)}, step));
  out.push_back(check("mask_mul", [&](const std::vector<T>& v) { return project(mask_mul(v[0], mask), w44); },
                      {s.matrix(4, 4)}, step));
  out.push_back(check("silu", [&](const std::vector<T>& v) { return project(silu(v[0]), w43); },
                      {s.matrix(4, 3, -3, 3)}, step));
  out.push_back(check("standardize_rows",
                      [&](const std::vector<T>& v) { return project(standardize_rows(v[0], 1e-6), w45); },
                      {s.matrix(4, 5)}, step));
  out.push_back(check("layer_norm",
                      [&](const std::vector<T>& v) { return project(layer_norm(v[0], v[1], v[2], 1e-6), w45); },
                      {s.matrix(4, 5), s.matrix(1, 5), s.matrix(1, 5)}, step));
  out.push_back(check("gather_rows",
                      [&](const std::vector<T>& v) {
                        return project(gather_rows(v[0], std::vector<Index>{2, 0, 2, 1}), w43);
                      },
                      {s.matrix(3, 3)}, step));
  out.push_back(check("slice_cols", [&](const std::vector<T>& v) { return project(slice_cols(v[0], 1, 3), w43); },
                      {s.matrix(4, 5)}, step));
  out.push_back(check("concat_cols",
                      [&](const std::vector<T>& v) { return project(concat_cols(std::vector<T>{v[0], v[1]}), w45); },
                      {s.matrix(4, 2), s.matrix(4, 3)}, step));
  out.push_back(check("concat_rows",
                      [&](const std::vector<T>& v) { return project(concat_rows(std::vector<T>{v[0], v[1]}), w84); },
                      {s.matrix(3, 4), s.matrix(5, 4)}, step));
  out.push_back(check("sum", [&](const std::vector<T>& v) { return sum(mul(v[0], v[0])); }, {s.matrix(3, 4)}, step));
  out.push_back(check("mean", [&](const std::vector<T>& v) { return mean(mul(v[0], v[0])); }, {s.matrix(3, 4)}, step));
  {
    M targets(4, 1);
    targets << 1, 0, 0, 1;
    out.push_back(check("bce_with_logits",
                        [&](const std::vector<T>& v) { return bce_with_logits(v[0], targets); },
                        {s.matrix(4, 1, -3, 3)}, step));
  }

  const auto tags = encoder_tags();
  const auto rows = norm_rows(tags, true);
  out.push_back(check("group_layer_norm",
                      [&](const std::vector<T>& v) {
                        return project(group_layer_norm(v[0], rows, GroupNormParams<double>{v[1], v[2]}, 1e-6),
                                       w128);
                      },
                      {s.matrix(12, 8), s.matrix(kNumTokenGroups, 8), s.matrix(kNumTokenGroups, 8)}, step));

  HstuConfig cfg;
  cfg.n_layer = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  const MaskMatrix dyn = build_dynamic_mask(tags, encoder_timestamps());
  const M proj12 = s.matrix(12, 8);
  {
    std::vector<M> params{s.matrix(12, 8)};
    const auto layer = random_layer(s, 8);
    params.insert(params.end(), layer.begin(), layer.end());
    const M m = dyn.as<double>();
    out.push_back(check("hstu_layer",
                        [&](const std::vector<T>& v) {
                          return project(hstu_layer_forward(v[0], m, rows, layer_from(v, 1), cfg), proj12);
                        },
                        params, step));
  }
  {
    std::vector<M> params{s.matrix(12, 8)};
    for (int l = 0; l < 2; ++l) {
      const auto layer = random_layer(s, 8);
      params.insert(params.end(), layer.begin(), layer.end());
    }
    out.push_back(check("encoder",
                        [&](const std::vector<T>& v) {
                          std::vector<LayerParams<double>> layers{layer_from(v, 1), layer_from(v, 17)};
                          return project(encode(v[0], dyn, layers, cfg), proj12);
                        },
                        params, step));
  }
  {
    // Whole model: embeddings -> tokens -> encoder -> head -> loss.
    const auto schema = FeatureSchema::make({"age"}, {"seq_item", "seq_cat"}, {"item"}, {"aff"}, 8);
    ModelConfig mc;
    mc.hstu = cfg;
    mc.hstu.n_layer = 1;
    mc.num_shards = 2;
    Model<double> model(schema, mc);
    AggregatedSample sample;
    sample.user_id = 1;
    sample.profile = {{"age", 3}};
    sample.static_seq = {{{{"seq_item", 4}, {"seq_cat", 2}}, 0}, {{{"seq_item", 6}, {"seq_cat", 1}}, 0}};
    sample.realtime_seq = {{{{"seq_item", 5}, {"seq_cat", 1}}, 100}, {{{"seq_item", 4}, {"seq_cat", 2}}, 300}};
    sample.candidates = {{{{"item", 9}}, {{"aff", 1}}, 400, 1, 1},
                         {{{"item", 7}}, {{"aff", 2}}, 200, 0, 0},
                         {{{"item", 9}}, {{"aff", 3}}, 200, 1, 0}};
    const auto keys = collect_keys(sample, schema);
    std::vector<typename EmbeddingStore<double>::Row> fetched;
    for (const auto& k : keys) fetched.push_back(model.store().lookup(k));
    const LocalEmbeddings<double> probe(keys, fetched, model.store().plan(), true);
    std::vector<M> params;
    for (auto m : model.dense_values()) {
      // Perturb the ones/zeros initialisation so every path is exercised.
      m += 0.1 * s.matrix(m.rows(), m.cols());
      params.push_back(m);
    }
    const std::size_t n_dense = params.size();
    for (const auto& t : probe.tables()) params.push_back(t.value());
    const auto labels = labels_of(sample);
    out.push_back(check("model",
                        [&](const std::vector<T>& v) {
                          std::vector<T> dense_leaves(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n_dense));
                          const auto dense = DenseParams<double>::assemble(dense_leaves, mc.hstu.n_layer);
                          const auto swapped = probe.with_tables(
                              std::vector<T>(v.begin() + static_cast<std::ptrdiff_t>(n_dense), v.end()));
                          const auto fwd = forward_sample(sample, schema, mc.hstu, dense, swapped);
                          return ranking_loss(fwd.logits, labels);
                        },
                        params, step));
  }
  return out;
}

}  // namespace mtgr
