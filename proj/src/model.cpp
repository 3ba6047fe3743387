#include "mtgr/model.hpp"

namespace mtgr {

std::vector<DenseSpec> dense_layout(const FeatureSchema& schema, const HstuConfig& cfg) {
  const Index d = cfg.d_model;
  const Index groups = kNumTokenGroups;
  std::vector<DenseSpec> out;
  out.push_back({"tokenizer.seq_w", schema.sequence_token_width(), d, DenseInit::Glorot});
  out.push_back({"tokenizer.seq_b", 1, d, DenseInit::Zeros});
  out.push_back({"tokenizer.cand_w", schema.candidate_token_width(), d, DenseInit::Glorot});
  out.push_back({"tokenizer.cand_b", 1, d, DenseInit::Zeros});
  for (int l = 0; l < cfg.n_layer; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    out.push_back({p + "norm_in.gamma", groups, d, DenseInit::Ones});
    out.push_back({p + "norm_in.beta", groups, d, DenseInit::Zeros});
    for (const char* w : {"w_q", "w_k", "w_v", "w_u"}) out.push_back({p + w, d, d, DenseInit::Glorot});
    for (const char* b : {"b_q", "b_k", "b_v", "b_u"}) out.push_back({p + b, 1, d, DenseInit::Zeros});
    out.push_back({p + "norm_out.gamma", groups, d, DenseInit::Ones});
    out.push_back({p + "norm_out.beta", groups, d, DenseInit::Zeros});
    out.push_back({p + "mlp_w1", d, d, DenseInit::Glorot});
    out.push_back({p + "mlp_b1", 1, d, DenseInit::Zeros});
    out.push_back({p + "mlp_w2", d, d, DenseInit::Glorot});
    out.push_back({p + "mlp_b2", 1, d, DenseInit::Zeros});
  }
  const Index half = std::max<Index>(1, d / 2);
  out.push_back({"head.w1", d, half, DenseInit::Glorot});
  out.push_back({"head.b1", 1, half, DenseInit::Zeros});
  out.push_back({"head.w2", half, 2, DenseInit::Glorot});
  out.push_back({"head.b2", 1, 2, DenseInit::Zeros});
  return out;
}

}  // namespace mtgr
