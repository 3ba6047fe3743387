#pragma once

// HSTU-style encoder: group layer norm, Q/K/V/U projections, silu pairwise
// scores scaled by a length normalizer and masked multiplicatively, a gated
// value path, a second group layer norm, an MLP and a residual. Candidate
// tokens feed a two-output head (CTR, CTCVR).

#include <string>
#include <vector>

#include "mtgr/mask.hpp"
#include "mtgr/ops.hpp"
#include "mtgr/schema.hpp"

namespace mtgr {

enum class NormalizerMode { TotalLength, Fixed };

struct HstuConfig {
  int n_layer = 3;
  int d_model = 512;
  int n_heads = 2;
  double eps = 1e-6;
  NormalizerMode normalizer = NormalizerMode::TotalLength;
  /// Divisor used when normalizer == Fixed.
  double fixed_normalizer = 1.0;
  bool use_gln = true;
  MaskMode mask_mode = MaskMode::Dynamic;

  int head_dim() const { return d_model / n_heads; }

  /// Throws ConfigError unless d_model % n_heads == 0 and n_layer >= 1.
  void validate() const;

  static HstuConfig small();
  static HstuConfig medium();
  static HstuConfig large();
};

template <typename Scalar>
struct GroupNormParams {
  /// kNumTokenGroups x d_model affine rows, one per token group.
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
};

template <typename Scalar>
struct LayerParams {
  GroupNormParams<Scalar> norm_in;
  Tensor<Scalar> w_q, w_k, w_v, w_u;  // d x d
  Tensor<Scalar> b_q, b_k, b_v, b_u;  // 1 x d
  GroupNormParams<Scalar> norm_out;
  Tensor<Scalar> mlp_w1, mlp_b1, mlp_w2, mlp_b2;

  std::vector<Tensor<Scalar>> tensors() const {
    return {norm_in.gamma, norm_in.beta, w_q, w_k, w_v, w_u, b_q, b_k, b_v, b_u,
            norm_out.gamma, norm_out.beta, mlp_w1, mlp_b1, mlp_w2, mlp_b2};
  }
};

/// d -> d/2 -> 2 output head.
template <typename Scalar>
struct HeadParams {
  Tensor<Scalar> w1, b1, w2, b2;

  std::vector<Tensor<Scalar>> tensors() const { return {w1, b1, w2, b2}; }
};

/// Row index into the group-norm tables for each token. Without GLN every
/// token uses row 0 (one shared layer norm).
inline std::vector<Index> norm_rows(const std::vector<TokenGroup>& tags, bool use_gln) {
  std::vector<Index> rows(tags.size(), 0);
  if (use_gln) {
    for (std::size_t i = 0; i < tags.size(); ++i) rows[i] = static_cast<Index>(tags[i]);
  }
  return rows;
}

/// Per-token standardization followed by the affine of the token's group.
template <typename Scalar>
Tensor<Scalar> group_layer_norm(const Tensor<Scalar>& x, const std::vector<Index>& group_rows,
                                const GroupNormParams<Scalar>& params, Scalar eps) {
  if (static_cast<Index>(group_rows.size()) != x.rows()) {
    throw DimensionError("group_layer_norm: " + std::to_string(group_rows.size()) + " group tags for " +
                         std::to_string(x.rows()) + " tokens");
  }
  if (params.gamma.cols() != x.cols() || params.beta.cols() != x.cols() || params.gamma.rows() != params.beta.rows()) {
    throw DimensionError("group_layer_norm: affine shape does not match d_model");
  }
  for (Index g : group_rows) {
    if (g < 0 || g >= params.gamma.rows()) {
      throw ConfigError("group_layer_norm: no affine parameters for group " + std::to_string(g));
    }
  }
  Tensor<Scalar> normed = standardize_rows(x, eps);
  return add(mul(normed, gather_rows(params.gamma, group_rows)), gather_rows(params.beta, group_rows));
}

template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b) {
  return add_row(matmul(x, w), b);
}

/// One encoder layer. `mask` is the L x L visibility as 0/1 scalars.
template <typename Scalar>
Tensor<Scalar> hstu_layer_forward(const Tensor<Scalar>& x, const Matrix<Scalar>& mask,
                                  const std::vector<Index>& group_rows, const LayerParams<Scalar>& p,
                                  const HstuConfig& cfg) {
  const Index length = x.rows();
  if (x.cols() != cfg.d_model) {
    throw DimensionError("hstu_layer_forward: input width " + std::to_string(x.cols()) + " != d_model " +
                         std::to_string(cfg.d_model));
  }
  if (mask.rows() != length || mask.cols() != length) {
    throw DimensionError("hstu_layer_forward: mask is " + std::to_string(mask.rows()) + "x" +
                         std::to_string(mask.cols()) + " for " + std::to_string(length) + " tokens");
  }
  const auto eps = static_cast<Scalar>(cfg.eps);
  const Scalar normalizer =
      cfg.normalizer == NormalizerMode::TotalLength ? static_cast<Scalar>(length) : static_cast<Scalar>(cfg.fixed_normalizer);

  const Tensor<Scalar> x_norm = group_layer_norm(x, group_rows, p.norm_in, eps);
  const Tensor<Scalar> q = linear(x_norm, p.w_q, p.b_q);
  const Tensor<Scalar> k = linear(x_norm, p.w_k, p.b_k);
  const Tensor<Scalar> v = linear(x_norm, p.w_v, p.b_v);
  const Tensor<Scalar> u = linear(x_norm, p.w_u, p.b_u);

  const Index hd = cfg.head_dim();
  std::vector<Tensor<Scalar>> heads;
  heads.reserve(static_cast<std::size_t>(cfg.n_heads));
  for (int h = 0; h < cfg.n_heads; ++h) {
    const Tensor<Scalar> qh = cfg.n_heads == 1 ? q : slice_cols(q, h * hd, hd);
    const Tensor<Scalar> kh = cfg.n_heads == 1 ? k : slice_cols(k, h * hd, hd);
    const Tensor<Scalar> vh = cfg.n_heads == 1 ? v : slice_cols(v, h * hd, hd);
    // Row i of scores holds token i's reads: silu(q_i . k_j) / normalizer, masked.
    const Tensor<Scalar> scores = mask_mul(scale(silu(matmul_nt(qh, kh)), Scalar(1) / normalizer), mask);
    heads.push_back(matmul(scores, vh));
  }
  const Tensor<Scalar> mixed = heads.size() == 1 ? heads.front() : concat_cols(heads);
  const Tensor<Scalar> gated = mul(mixed, u);
  const Tensor<Scalar> y = group_layer_norm(gated, group_rows, p.norm_out, eps);
  const Tensor<Scalar> hidden = silu(linear(y, p.mlp_w1, p.mlp_b1));
  return add(linear(hidden, p.mlp_w2, p.mlp_b2), x);
}

/// n_layer applications of hstu_layer_forward with the same mask.
template <typename Scalar>
Tensor<Scalar> encode(const Tensor<Scalar>& tokens, const MaskMatrix& mask, const std::vector<LayerParams<Scalar>>& layers,
                      const HstuConfig& cfg) {
  if (static_cast<int>(layers.size()) != cfg.n_layer) {
    throw ContractError("encode: " + std::to_string(layers.size()) + " layer parameter sets for n_layer " +
                        std::to_string(cfg.n_layer));
  }
  if (static_cast<Index>(mask.tags.size()) != tokens.rows()) throw DimensionError("encode: mask/token count mismatch");
  const Matrix<Scalar> m = mask.as<Scalar>();
  const auto rows = norm_rows(mask.tags, cfg.use_gln);
  Tensor<Scalar> x = tokens;
  for (const auto& layer : layers) x = hstu_layer_forward(x, m, rows, layer, cfg);
  return x;
}

/// K x 2 logits (column 0 CTR, column 1 CTCVR), one row per candidate token
/// in token order.
template <typename Scalar>
Tensor<Scalar> candidate_logits(const Tensor<Scalar>& encoded, const std::vector<TokenGroup>& tags,
                                const HeadParams<Scalar>& head) {
  std::vector<Index> rows;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == TokenGroup::Candidate) rows.push_back(static_cast<Index>(i));
  }
  if (rows.empty()) throw ContractError("candidate_logits: sequence has no candidate tokens");
  if (static_cast<Index>(tags.size()) != encoded.rows()) throw DimensionError("candidate_logits: tag count mismatch");
  const Tensor<Scalar> cand = gather_rows(encoded, rows);
  return linear(silu(linear(cand, head.w1, head.b1)), head.w2, head.b2);
}

struct CandidateLabels {
  std::vector<int> click;
  std::vector<int> purchase;
};

/// Mean BCE(click, ctr logit) + mean BCE(click AND purchase, ctcvr logit).
template <typename Scalar>
Tensor<Scalar> ranking_loss(const Tensor<Scalar>& logits, const CandidateLabels& labels) {
  const Index k = logits.rows();
  if (logits.cols() != 2) throw DimensionError("ranking_loss: logits must be K x 2");
  if (static_cast<Index>(labels.click.size()) != k || static_cast<Index>(labels.purchase.size()) != k) {
    throw DimensionError("ranking_loss: label count does not match candidates");
  }
  Matrix<Scalar> click(k, 1);
  Matrix<Scalar> conversion(k, 1);
  for (Index i = 0; i < k; ++i) {
    const int c = labels.click[static_cast<std::size_t>(i)];
    const int p = labels.purchase[static_cast<std::size_t>(i)];
    if (p == 1 && c == 0) throw ContractError("ranking_loss: purchase without click");
    click(i, 0) = static_cast<Scalar>(c);
    conversion(i, 0) = static_cast<Scalar>(c & p);
  }
  return add(bce_with_logits(slice_cols(logits, 0, 1), click), bce_with_logits(slice_cols(logits, 1, 1), conversion));
}

}  // namespace mtgr
