#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mtgr/encoder.hpp"
#include "mtgr/mask.hpp"
#include "test_util.hpp"

using namespace mtgr;
using T = Tensor<double>;
using M = Matrix<double>;

namespace {

M random_matrix(std::mt19937_64& rng, Index r, Index c, double sd = 0.5) {
  std::normal_distribution<double> n(0.0, sd);
  M m(r, c);
  for (Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

LayerParams<double> random_layer(std::mt19937_64& rng, int d) {
  LayerParams<double> p;
  auto P = [](M m) { return T::parameter(std::move(m)); };
  p.norm_in = {P(M::Ones(kNumTokenGroups, d) + random_matrix(rng, kNumTokenGroups, d, 0.1)),
               P(random_matrix(rng, kNumTokenGroups, d, 0.1))};
  p.w_q = P(random_matrix(rng, d, d));
  p.w_k = P(random_matrix(rng, d, d));
  p.w_v = P(random_matrix(rng, d, d));
  p.w_u = P(random_matrix(rng, d, d));
  p.b_q = P(random_matrix(rng, 1, d, 0.1));
  p.b_k = P(random_matrix(rng, 1, d, 0.1));
  p.b_v = P(random_matrix(rng, 1, d, 0.1));
  p.b_u = P(random_matrix(rng, 1, d, 0.1));
  p.norm_out = {P(M::Ones(kNumTokenGroups, d) + random_matrix(rng, kNumTokenGroups, d, 0.1)),
                P(random_matrix(rng, kNumTokenGroups, d, 0.1))};
  p.mlp_w1 = P(random_matrix(rng, d, d));
  p.mlp_b1 = P(random_matrix(rng, 1, d, 0.1));
  p.mlp_w2 = P(random_matrix(rng, d, d));
  p.mlp_b2 = P(random_matrix(rng, 1, d, 0.1));
  return p;
}

double silu_s(double x) { return x / (1.0 + std::exp(-x)); }

/// Scalar loops, one head, per-token group norm.
M scalar_hstu(const M& x, const M& mask, const std::vector<Index>& g, const LayerParams<double>& p, double eps,
              double normalizer) {
  const Index L = x.rows(), d = x.cols();
  auto norm = [&](const M& in, const GroupNormParams<double>& np) {
    M out(L, d);
    for (Index i = 0; i < L; ++i) {
      double mu = 0, var = 0;
      for (Index c = 0; c < d; ++c) mu += in(i, c);
      mu /= static_cast<double>(d);
      for (Index c = 0; c < d; ++c) var += (in(i, c) - mu) * (in(i, c) - mu);
      var /= static_cast<double>(d);
      for (Index c = 0; c < d; ++c) {
        out(i, c) = (in(i, c) - mu) / std::sqrt(var + eps) * np.gamma.value()(g[i], c) + np.beta.value()(g[i], c);
      }
    }
    return out;
  };
  auto lin = [&](const M& in, const T& w, const T& b) {
    M out(L, d);
    for (Index i = 0; i < L; ++i) {
      for (Index c = 0; c < d; ++c) {
        double s = b.value()(0, c);
        for (Index r = 0; r < d; ++r) s += in(i, r) * w.value()(r, c);
        out(i, c) = s;
      }
    }
    return out;
  };
  const M xn = norm(x, p.norm_in);
  const M q = lin(xn, p.w_q, p.b_q), k = lin(xn, p.w_k, p.b_k), v = lin(xn, p.w_v, p.b_v), u = lin(xn, p.w_u, p.b_u);
  M mixed = M::Zero(L, d);
  for (Index i = 0; i < L; ++i) {
    for (Index j = 0; j < L; ++j) {
      double dot = 0;
      for (Index c = 0; c < d; ++c) dot += q(i, c) * k(j, c);
      const double a = silu_s(dot) / normalizer * mask(i, j);
      for (Index c = 0; c < d; ++c) mixed(i, c) += a * v(j, c);
    }
  }
  M gated(L, d);
  for (Index i = 0; i < L; ++i)
    for (Index c = 0; c < d; ++c) gated(i, c) = mixed(i, c) * u(i, c);
  const M y = norm(gated, p.norm_out);
  M h = lin(y, p.mlp_w1, p.mlp_b1);
  for (Index i = 0; i < h.size(); ++i) h(i) = silu_s(h(i));
  return lin(h, p.mlp_w2, p.mlp_b2) + x;
}

/// Independent statement of the three visibility rules.
bool rule_visible(TokenGroup row, std::int64_t row_ts, TokenGroup col, std::int64_t col_ts, bool same) {
  if (same) return true;
  const bool row_static = row == TokenGroup::UserProfile || row == TokenGroup::StaticSeq;
  switch (col) {
    case TokenGroup::UserProfile:
    case TokenGroup::StaticSeq: return true;
    case TokenGroup::RealtimeSeq: return !row_static && col_ts < row_ts;
    case TokenGroup::Candidate: return false;
  }
  return false;
}

}  // namespace

TEST(Mask, InterleavedFixturePattern) {
  const auto fx = interleaved_fixture();
  ASSERT_EQ(fx.labels, (std::vector<std::string>{"age", "ctr", "seq1", "seq2", "rt1", "rt2", "target1", "target2",
                                                 "target3"}));
  const auto m = build_dynamic_mask(fx.tags, fx.timestamps);
  const char* expected[] = {
      "111100000", "111100000", "111100000", "111100000", "111111000",
      "111101000", "111111100", "111101010", "111100001",
  };
  for (Index i = 0; i < 9; ++i) {
    for (Index j = 0; j < 9; ++j) EXPECT_EQ(m(i, j), expected[i][j] == '1') << i << "," << j;
  }
  EXPECT_FALSE(m(8, 5));  // target3 is older than rt2
  EXPECT_FALSE(m(7, 4));  // target2 is older than rt1
  EXPECT_TRUE(m(6, 4));
}

TEST(Mask, GridText) {
  const auto fx = interleaved_fixture();
  const auto grid = build_dynamic_mask(fx.tags, fx.timestamps).to_grid(fx.labels);
  EXPECT_NE(grid.find("target3 1111····1"), std::string::npos);
}

TEST(Mask, RandomTimestampsMatchRuleInterpreter) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 14;
    std::vector<TokenGroup> tags;
    std::vector<std::int64_t> ts;
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = static_cast<TokenGroup>(rng() % kNumTokenGroups);
      tags.push_back(g);
      const bool timed = g == TokenGroup::RealtimeSeq || g == TokenGroup::Candidate;
      ts.push_back(timed ? 1 + static_cast<std::int64_t>(rng() % 6) : 0);
    }
    const auto m = build_dynamic_mask(tags, ts);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        ASSERT_EQ(m(static_cast<Index>(i), static_cast<Index>(j)), rule_visible(tags[i], ts[i], tags[j], ts[j], i == j));
      }
    }
  }
}

TEST(Mask, CausalAndFullKeepCandidateRule) {
  const auto fx = interleaved_fixture();
  const auto causal = build_mask(MaskMode::Causal, fx.tags, fx.timestamps);
  const auto full = build_mask(MaskMode::Full, fx.tags, fx.timestamps);
  for (Index i = 0; i < 9; ++i) {
    for (Index j = 0; j < 9; ++j) {
      const bool cand_col = fx.tags[static_cast<std::size_t>(j)] == TokenGroup::Candidate;
      EXPECT_EQ(full(i, j), cand_col ? i == j : true);
      EXPECT_EQ(causal(i, j), cand_col ? i == j : j <= i);
    }
  }
  EXPECT_TRUE(full(8, 4));  // the leak dynamic masking removes
}

TEST(Mask, MissingTimestampRejected) {
  EXPECT_THROW(build_dynamic_mask({TokenGroup::RealtimeSeq}, {0}), DataError);
  EXPECT_THROW(build_dynamic_mask({TokenGroup::StaticSeq}, {0, 1}), DimensionError);
  EXPECT_THROW(parse_mask_mode("sideways"), ConfigError);
}

TEST(Encoder, GroupNormMatchesPlainNormThenScaling) {
  std::mt19937_64 rng(4);
  const M x = random_matrix(rng, 4, 5, 1.0);
  GroupNormParams<double> p{T::constant(random_matrix(rng, kNumTokenGroups, 5)),
                            T::constant(random_matrix(rng, kNumTokenGroups, 5))};
  const std::vector<Index> rows = {0, 2, 2, 3};
  const auto y = group_layer_norm(T::constant(x), rows, p, 1e-6).value();
  const auto plain = standardize_rows(T::constant(x), 1e-6).value();
  for (Index i = 0; i < 4; ++i) {
    const Eigen::RowVectorXd expected =
        plain.row(i).cwiseProduct(p.gamma.value().row(rows[static_cast<std::size_t>(i)])) +
        p.beta.value().row(rows[static_cast<std::size_t>(i)]);
    EXPECT_LT((y.row(i) - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Encoder, TwoTokenLayerMatchesScalarTranscription) {
  HstuConfig cfg;
  cfg.n_layer = 1;
  cfg.d_model = 2;
  cfg.n_heads = 1;
  LayerParams<double> p;
  auto C = [](std::initializer_list<double> v, Index r, Index c) {
    M m(r, c);
    Index i = 0;
    for (double x : v) m(i / c, i % c) = x, ++i;
    return T::constant(m);
  };
  p.norm_in = {C({1, 1, 1.5, 0.5, 0.8, 1.2, 1, 1}, 4, 2), C({0, 0, 0.1, -0.1, 0.2, 0, 0, 0}, 4, 2)};
  p.w_q = C({0.5, -0.3, 0.2, 0.8}, 2, 2);
  p.w_k = C({0.7, 0.1, -0.4, 0.6}, 2, 2);
  p.w_v = C({1.0, 0.5, -0.5, 1.0}, 2, 2);
  p.w_u = C({0.3, 0.9, 0.6, -0.2}, 2, 2);
  p.b_q = C({0.1, 0.0}, 1, 2);
  p.b_k = C({0.0, -0.1}, 1, 2);
  p.b_v = C({0.2, 0.2}, 1, 2);
  p.b_u = C({0.5, 0.5}, 1, 2);
  p.norm_out = {C({1, 1, 0.9, 1.1, 1.3, 0.7, 1, 1}, 4, 2), C({0, 0, 0.05, 0, 0, -0.05, 0, 0}, 4, 2)};
  p.mlp_w1 = C({0.4, -0.6, 0.3, 0.2}, 2, 2);
  p.mlp_b1 = C({0.1, -0.1}, 1, 2);
  p.mlp_w2 = C({-0.2, 0.5, 0.7, 0.1}, 2, 2);
  p.mlp_b2 = C({0.0, 0.3}, 1, 2);
  M x(2, 2);
  x << 0.3, -1.2, 2.0, 0.4;
  M mask(2, 2);
  mask << 1, 0, 1, 1;
  const std::vector<Index> groups = {1, 2};
  const auto y = hstu_layer_forward(T::constant(x), mask, groups, p, cfg).value();
  const M expected = scalar_hstu(x, mask, groups, p, cfg.eps, 2.0);
  EXPECT_LT((y - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encoder, RandomLayerMatchesScalarTranscription) {
  std::mt19937_64 rng(21);
  HstuConfig cfg;
  cfg.d_model = 6;
  cfg.n_heads = 1;
  cfg.normalizer = NormalizerMode::Fixed;
  cfg.fixed_normalizer = 3.0;
  const auto p = random_layer(rng, 6);
  const M x = random_matrix(rng, 5, 6, 1.0);
  M mask = M::Ones(5, 5);
  mask(0, 3) = mask(2, 4) = 0;
  const std::vector<Index> groups = {0, 1, 2, 3, 3};
  const auto y = hstu_layer_forward(T::constant(x), mask, groups, p, cfg).value();
  EXPECT_LT((y - scalar_hstu(x, mask, groups, p, cfg.eps, 3.0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encoder, PresetHeadShapes) {
  const auto small = HstuConfig::small();
  EXPECT_EQ(small.d_model, 512);
  EXPECT_EQ(small.n_heads, 2);
  EXPECT_EQ(small.head_dim(), 256);
  std::mt19937_64 rng(3);
  HstuConfig one = small;
  one.n_layer = 1;
  const auto p = random_layer(rng, 512);
  const std::vector<TokenGroup> tags = {TokenGroup::UserProfile, TokenGroup::StaticSeq, TokenGroup::RealtimeSeq,
                                        TokenGroup::Candidate, TokenGroup::Candidate};
  const auto mask = build_dynamic_mask(tags, {0, 0, 5, 9, 7});
  const auto out = encode(T::constant(random_matrix(rng, 5, 512, 1.0)), mask, {p}, one);
  EXPECT_EQ(out.rows(), 5);
  EXPECT_EQ(out.cols(), 512);
}

TEST(Encoder, ThreeLayersEqualManualComposition) {
  std::mt19937_64 rng(9);
  HstuConfig cfg;
  cfg.n_layer = 3;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  std::vector<LayerParams<double>> layers;
  for (int l = 0; l < 3; ++l) layers.push_back(random_layer(rng, 8));
  const auto fx = interleaved_fixture();
  const auto mask = build_dynamic_mask(fx.tags, fx.timestamps);
  const M x = random_matrix(rng, 9, 8, 1.0);
  const auto out = encode(T::constant(x), mask, layers, cfg).value();
  const auto rows = norm_rows(fx.tags, true);
  T manual = T::constant(x);
  for (const auto& l : layers) manual = hstu_layer_forward(manual, mask.as<double>(), rows, l, cfg);
  EXPECT_EQ(out, manual.value());
  cfg.n_layer = 2;
  EXPECT_THROW(encode(T::constant(x), mask, layers, cfg), ContractError);
}

TEST(Encoder, GlnOffUsesOneNorm) {
  const std::vector<TokenGroup> tags = {TokenGroup::Candidate, TokenGroup::StaticSeq};
  EXPECT_EQ(norm_rows(tags, false), (std::vector<Index>{0, 0}));
  EXPECT_EQ(norm_rows(tags, true), (std::vector<Index>{3, 1}));
}

TEST(Encoder, ConfigValidation) {
  HstuConfig cfg;
  cfg.d_model = 10;
  cfg.n_heads = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.n_heads = 2;
  cfg.n_layer = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Head, ThreeCandidatesGiveThreePairs) {
  std::mt19937_64 rng(1);
  HeadParams<double> head{T::constant(random_matrix(rng, 4, 2)), T::constant(random_matrix(rng, 1, 2)),
                          T::constant(random_matrix(rng, 2, 2)), T::constant(random_matrix(rng, 1, 2))};
  const auto fx = interleaved_fixture();
  const auto logits = candidate_logits(T::constant(random_matrix(rng, 9, 4)), fx.tags, head);
  EXPECT_EQ(logits.rows(), 3);
  EXPECT_EQ(logits.cols(), 2);
}

TEST(Head, OneCandidateHandMatmul) {
  M w1(2, 1), b1(1, 1), w2(1, 2), b2(1, 2), enc(2, 2);
  w1 << 0.5, -1.0;
  b1 << 0.25;
  w2 << 2.0, -3.0;
  b2 << 0.1, 0.2;
  enc << 9, 9, 1.0, 0.5;
  HeadParams<double> head{T::constant(w1), T::constant(b1), T::constant(w2), T::constant(b2)};
  const auto logits =
      candidate_logits(T::constant(enc), {TokenGroup::StaticSeq, TokenGroup::Candidate}, head).value();
  const double h = silu_s(1.0 * 0.5 + 0.5 * -1.0 + 0.25);
  EXPECT_NEAR(logits(0, 0), 2.0 * h + 0.1, 1e-15);
  EXPECT_NEAR(logits(0, 1), -3.0 * h + 0.2, 1e-15);
}

TEST(Loss, ZeroLogitsGiveTwoLn2) {
  const auto loss = ranking_loss(T::constant(M::Zero(3, 2)), {{1, 0, 1}, {1, 0, 0}});
  EXPECT_NEAR(loss.item(), 2.0 * std::log(2.0), 1e-15);
}

TEST(Loss, MatchesBceFormula) {
  std::mt19937_64 rng(6);
  const M z = random_matrix(rng, 5, 2, 2.0);
  const CandidateLabels labels{{1, 0, 1, 1, 0}, {1, 0, 0, 1, 0}};
  double ctr = 0, ctcvr = 0;
  for (int i = 0; i < 5; ++i) {
    auto bce = [](double logit, int y) {
      const double p = 1.0 / (1.0 + std::exp(-logit));
      return -(y * std::log(p) + (1 - y) * std::log(1 - p));
    };
    ctr += bce(z(i, 0), labels.click[static_cast<std::size_t>(i)]);
    ctcvr += bce(z(i, 1), labels.click[static_cast<std::size_t>(i)] & labels.purchase[static_cast<std::size_t>(i)]);
  }
  EXPECT_NEAR(ranking_loss(T::constant(z), labels).item(), ctr / 5 + ctcvr / 5, 1e-12);
  EXPECT_THROW(ranking_loss(T::constant(z), {{0, 0, 0, 0, 0}, {1, 0, 0, 0, 0}}), ContractError);
}
