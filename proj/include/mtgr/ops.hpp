#pragma once

// Differentiable primitives over Tensor. Everything in the encoder and the
// tokenizer is built from these; each one is covered by the finite-difference
// suite in tests/test_tensor.cpp.

#include <cmath>
#include <string>
#include <vector>

#include "mtgr/tensor.hpp"

namespace mtgr {

namespace detail {

inline std::string shape_str(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
  }
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + detail::shape_str(a.rows(), a.cols()) + " x " +
                         detail::shape_str(b.rows(), b.cols()));
  }
  Matrix<Scalar> out = a.value() * b.value();
  return Tensor<Scalar>::from_op(std::move(out), {a, b}, "matmul",
                                 [](detail::BackwardContext<Scalar>& ctx) {
                                   if (ctx.needs(0)) ctx.parent_grads[0] = ctx.upstream * ctx.input(1).transpose();
                                   if (ctx.needs(1)) ctx.parent_grads[1] = ctx.input(0).transpose() * ctx.upstream;
                                 });
}

/// a * b^T, the pairwise dot products between rows of a and rows of b.
template <typename Scalar>
Tensor<Scalar> matmul_nt(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: row widths disagree " + detail::shape_str(a.rows(), a.cols()) + " vs " +
                         detail::shape_str(b.rows(), b.cols()));
  }
  Matrix<Scalar> out = a.value() * b.value().transpose();
  return Tensor<Scalar>::from_op(std::move(out), {a, b}, "matmul_nt",
                                 [](detail::BackwardContext<Scalar>& ctx) {
                                   if (ctx.needs(0)) ctx.parent_grads[0] = ctx.upstream * ctx.input(1);
                                   if (ctx.needs(1)) ctx.parent_grads[1] = ctx.upstream.transpose() * ctx.input(0);
                                 });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  return Tensor<Scalar>::from_op(a.value() + b.value(), {a, b}, "add", [](detail::BackwardContext<Scalar>& ctx) {
    if (ctx.needs(0)) ctx.parent_grads[0] = ctx.upstream;
    if (ctx.needs(1)) ctx.parent_grads[1] = ctx.upstream;
  });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  return Tensor<Scalar>::from_op(a.value() - b.value(), {a, b}, "sub", [](detail::BackwardContext<Scalar>& ctx) {
    if (ctx.needs(0)) ctx.parent_grads[0] = ctx.upstream;
    if (ctx.needs(1)) ctx.parent_grads[1] = -ctx.upstream;
  });
}

/// Elementwise product.
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "mul");
  return Tensor<Scalar>::from_op(a.value().cwiseProduct(b.value()), {a, b}, "mul",
                                 [](detail::BackwardContext<Scalar>& ctx) {
                                   if (ctx.needs(0)) ctx.parent_grads[0] = ctx.upstream.cwiseProduct(ctx.input(1));
                                   if (ctx.needs(1)) ctx.parent_grads[1] = ctx.upstream.cwiseProduct(ctx.input(0));
                                 });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s) {
  return Tensor<Scalar>::from_op(a.value() * s, {a}, "scale", [s](detail::BackwardContext<Scalar>& ctx) {
    ctx.parent_grads[0] = ctx.upstream * s;
  });
}

/// Broadcasts a 1xn row over every row of a (bias add).
template <typename Scalar>
Tensor<Scalar> add_row(const Tensor<Scalar>& a, const Tensor<Scalar>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: expected 1x" + std::to_string(a.cols()) + " row, got " +
                         detail::shape_str(row.rows(), row.cols()));
  }
  Matrix<Scalar> out = a.value().rowwise() + row.value().row(0);
  return Tensor<Scalar>::from_op(std::move(out), {a, row}, "add_row", [](detail::BackwardContext<Scalar>& ctx) {
    if (ctx.needs(0)) ctx.parent_grads[0] = ctx.upstream;
    if (ctx.needs(1)) ctx.parent_grads[1] = ctx.upstream.colwise().sum();
  });
}

/// Broadcasts a 1xn row as an elementwise factor over every row of a.
template <typename Scalar>
Tensor<Scalar> mul_row(const Tensor<Scalar>& a, const Tensor<Scalar>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("mul_row: expected 1x" + std::to_string(a.cols()) + " row, got " +
                         detail::shape_str(row.rows(), row.cols()));
  }
  Matrix<Scalar> out = a.value().array().rowwise() * row.value().row(0).array();
  return Tensor<Scalar>::from_op(std::move(out), {a, row}, "mul_row",
                                 [](detail::BackwardContext<Scalar>& ctx) {
                                   if (ctx.needs(0)) {
                                     ctx.parent_grads[0] = ctx.upstream.array().rowwise() * ctx.input(1).row(0).array();
                                   }
                                   if (ctx.needs(1)) {
                                     ctx.parent_grads[1] = ctx.upstream.cwiseProduct(ctx.input(0)).colwise().sum();
                                   }
                                 });
}

/// Elementwise product with a constant matrix; no gradient flows to the mask.
template <typename Scalar>
Tensor<Scalar> mask_mul(const Tensor<Scalar>& a, const Matrix<Scalar>& mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw DimensionError("mask_mul: mask " + detail::shape_str(mask.rows(), mask.cols()) + " vs input " +
                         detail::shape_str(a.rows(), a.cols()));
  }
  return Tensor<Scalar>::from_op(a.value().cwiseProduct(mask), {a}, "mask_mul",
                                 [mask](detail::BackwardContext<Scalar>& ctx) {
                                   ctx.parent_grads[0] = ctx.upstream.cwiseProduct(mask);
                                 });
}

/// x * sigmoid(x), elementwise.
template <typename Scalar>
Tensor<Scalar> silu(const Tensor<Scalar>& x) {
  Matrix<Scalar> out = x.value().unaryExpr([](Scalar v) { return v * detail::sigmoid(v); });
  return Tensor<Scalar>::from_op(std::move(out), {x}, "silu", [](detail::BackwardContext<Scalar>& ctx) {
                                   // d/dx x*s(x) = s(x) * (1 + x * (1 - s(x)))
                                   const Matrix<Scalar>& xv = ctx.input(0);
                                   Matrix<Scalar> d = xv.unaryExpr([](Scalar v) {
                                     const Scalar s = detail::sigmoid(v);
                                     return s * (Scalar(1) + v * (Scalar(1) - s));
                                   });
                                   ctx.parent_grads[0] = ctx.upstream.cwiseProduct(d);
                                 });
}

/// Per-row standardization: (x - mean) / sqrt(var + eps), population variance.
template <typename Scalar>
Tensor<Scalar> standardize_rows(const Tensor<Scalar>& x, Scalar eps) {
  const Index n = x.cols();
  if (n == 0) throw DimensionError("standardize_rows: zero-width input");
  const Matrix<Scalar>& xv = x.value();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(xv.rows());
  Matrix<Scalar> y(xv.rows(), n);
  for (Index r = 0; r < xv.rows(); ++r) {
    const Scalar mean = xv.row(r).mean();
    const Scalar var = (xv.row(r).array() - mean).square().sum() / Scalar(n);
    inv_std(r) = Scalar(1) / std::sqrt(var + eps);
    y.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  return Tensor<Scalar>::from_op(std::move(y), {x}, "standardize_rows",
                                 [inv_std, n](detail::BackwardContext<Scalar>& ctx) {
                                   const Matrix<Scalar>& g = ctx.upstream;
                                   const Matrix<Scalar>& y = ctx.output;
                                   Matrix<Scalar> gx(g.rows(), g.cols());
                                   for (Index r = 0; r < g.rows(); ++r) {
                                     const Scalar g_mean = g.row(r).mean();
                                     const Scalar gy_mean = g.row(r).cwiseProduct(y.row(r)).sum() / Scalar(n);
                                     gx.row(r) = inv_std(r) * (g.row(r).array() - g_mean - y.row(r).array() * gy_mean);
                                   }
                                   ctx.parent_grads[0] = std::move(gx);
                                 });
}

/// Standard layer norm over the last dimension with a 1xn affine.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                          Scalar eps) {
  return add_row(mul_row(standardize_rows(x, eps), gamma), beta);
}

/// Picks rows of table by index (embedding gather); backward scatter-adds.
template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& table, std::vector<Index> indices) {
  Matrix<Scalar> out(static_cast<Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= table.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) + " out of " +
                           std::to_string(table.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = table.value().row(indices[i]);
  }
  const Index table_rows = table.rows();
  return Tensor<Scalar>::from_op(std::move(out), {table}, "gather_rows",
                                 [indices = std::move(indices), table_rows](detail::BackwardContext<Scalar>& ctx) {
                                   Matrix<Scalar> g = Matrix<Scalar>::Zero(table_rows, ctx.upstream.cols());
                                   for (std::size_t i = 0; i < indices.size(); ++i) {
                                     g.row(indices[i]) += ctx.upstream.row(static_cast<Index>(i));
                                   }
                                   ctx.parent_grads[0] = std::move(g);
                                 });
}

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& x, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > x.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + std::to_string(x.cols()) + " columns");
  }
  const Index rows = x.rows();
  const Index cols = x.cols();
  return Tensor<Scalar>::from_op(x.value().middleCols(begin, count), {x}, "slice_cols",
                                 [rows, cols, begin, count](detail::BackwardContext<Scalar>& ctx) {
                                   Matrix<Scalar> g = Matrix<Scalar>::Zero(rows, cols);
                                   g.middleCols(begin, count) = ctx.upstream;
                                   ctx.parent_grads[0] = std::move(g);
                                 });
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index total = 0;
  std::vector<Index> widths;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts disagree");
    widths.push_back(p.cols());
    total += p.cols();
  }
  Matrix<Scalar> out(rows, total);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return Tensor<Scalar>::from_op(std::move(out), parts, "concat_cols",
                                 [widths](detail::BackwardContext<Scalar>& ctx) {
                                   Index off = 0;
                                   for (std::size_t i = 0; i < widths.size(); ++i) {
                                     if (ctx.needs(i)) ctx.parent_grads[i] = ctx.upstream.middleCols(off, widths[i]);
                                     off += widths[i];
                                   }
                                 });
}

template <typename Scalar>
Tensor<Scalar> concat_rows(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index total = 0;
  std::vector<Index> heights;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("concat_rows: column counts disagree");
    heights.push_back(p.rows());
    total += p.rows();
  }
  Matrix<Scalar> out(total, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return Tensor<Scalar>::from_op(std::move(out), parts, "concat_rows",
                                 [heights](detail::BackwardContext<Scalar>& ctx) {
                                   Index off = 0;
                                   for (std::size_t i = 0; i < heights.size(); ++i) {
                                     if (ctx.needs(i)) ctx.parent_grads[i] = ctx.upstream.middleRows(off, heights[i]);
                                     off += heights[i];
                                   }
                                 });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  const Index rows = x.rows();
  const Index cols = x.cols();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  return Tensor<Scalar>::from_op(std::move(out), {x}, "sum", [rows, cols](detail::BackwardContext<Scalar>& ctx) {
    ctx.parent_grads[0] = Matrix<Scalar>::Constant(rows, cols, ctx.upstream(0, 0));
  });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  if (x.value().size() == 0) throw DimensionError("mean: empty input");
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.value().size()));
}

/// Mean binary cross-entropy between sigmoid(logits) and 0/1 targets, computed
/// in the numerically stable softplus form.
template <typename Scalar>
Tensor<Scalar> bce_with_logits(const Tensor<Scalar>& logits, const Matrix<Scalar>& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw DimensionError("bce_with_logits: targets " + detail::shape_str(targets.rows(), targets.cols()) +
                         " vs logits " + detail::shape_str(logits.rows(), logits.cols()));
  }
  const Index n = logits.value().size();
  if (n == 0) throw DimensionError("bce_with_logits: empty input");
  const Matrix<Scalar>& z = logits.value();
  Scalar total = 0;
  for (Index i = 0; i < z.size(); ++i) {
    const Scalar zi = z(i);
    total += std::max(zi, Scalar(0)) - zi * targets(i) + std::log1p(std::exp(-std::abs(zi)));
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total / Scalar(n);
  return Tensor<Scalar>::from_op(std::move(out), {logits}, "bce_with_logits",
                                 [targets, n](detail::BackwardContext<Scalar>& ctx) {
                                   Matrix<Scalar> g = ctx.input(0).unaryExpr([](Scalar v) { return detail::sigmoid(v); }) - targets;
                                   ctx.parent_grads[0] = g * (ctx.upstream(0, 0) / Scalar(n));
                                 });
}

}  // namespace mtgr
