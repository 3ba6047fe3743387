#pragma once

// Dense matrix values with a reverse-mode tape.
//
// A Tensor is a cheap handle onto an immutable graph node. Ops in ops.hpp
// create new nodes that remember their parents and a backward rule; grad()
// walks the graph from a scalar output in reverse topological order.
// Gradients live in a map owned by the grad() call, never on the nodes, so
// several threads may differentiate graphs that share parameter leaves.

#include <Eigen/Dense>

#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mtgr/errors.hpp"

namespace mtgr {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

namespace detail {
inline std::atomic<bool>& finite_checks_flag() {
  static std::atomic<bool> flag{true};
  return flag;
}
}  // namespace detail

/// Eager NaN/Inf detection after every op (on by default).
inline bool finite_checks_enabled() { return detail::finite_checks_flag().load(std::memory_order_relaxed); }
inline void set_finite_checks(bool on) { detail::finite_checks_flag().store(on, std::memory_order_relaxed); }

namespace detail {

template <typename Scalar>
struct Node;

/// Handed to an op's backward rule: upstream gradient in, one slot per parent out.
template <typename Scalar>
struct BackwardContext {
  const Matrix<Scalar>& upstream;
  const Matrix<Scalar>& output;
  std::span<const std::shared_ptr<Node<Scalar>>> parents;
  std::vector<Matrix<Scalar>>& parent_grads;
  std::span<const bool> parent_needs;

  bool needs(std::size_t i) const { return parent_needs[i]; }
  const Matrix<Scalar>& input(std::size_t i) const { return parents[i]->value; }
};

template <typename Scalar>
struct Node {
  using BackwardFn = std::function<void(BackwardContext<Scalar>&)>;

  Matrix<Scalar> value;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
  bool requires_grad = false;
  const char* op = "leaf";
};

}  // namespace detail

template <typename Scalar = double>
class Tensor {
 public:
  using scalar_type = Scalar;
  using MatrixType = Matrix<Scalar>;
  using NodeType = detail::Node<Scalar>;

  Tensor() = default;

  /// A leaf that never receives gradient.
  static Tensor constant(MatrixType value) { return leaf(std::move(value), false); }

  /// A trainable leaf.
  static Tensor parameter(MatrixType value) { return leaf(std::move(value), true); }

  static Tensor scalar(Scalar v, bool requires_grad = false) {
    MatrixType m(1, 1);
    m(0, 0) = v;
    return leaf(std::move(m), requires_grad);
  }

  /// Records an op node. Used by ops.hpp; the backward rule only runs for
  /// nodes that require grad.
  static Tensor from_op(MatrixType value, std::vector<Tensor> parents, const char* op,
                        typename NodeType::BackwardFn backward) {
    auto node = std::make_shared<NodeType>();
    node->value = std::move(value);
    node->op = op;
    for (const auto& p : parents) {
      node->requires_grad = node->requires_grad || p.requires_grad();
    }
    if (node->requires_grad) {
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node_);
      node->backward = std::move(backward);
    }
    if (finite_checks_enabled() && !node->value.allFinite()) {
      throw NumericError(std::string("non-finite output from op '") + op + "'");
    }
    return Tensor(std::move(node));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const MatrixType& value() const { return node_->value; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  std::vector<Index> shape() const { return {rows(), cols()}; }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->parents.empty() && !node_->backward; }
  const char* op() const { return node_->op; }

  Scalar item() const {
    if (rows() != 1 || cols() != 1) throw ContractError("item() on a non-scalar tensor");
    return node_->value(0, 0);
  }

  const std::shared_ptr<NodeType>& node() const { return node_; }

  /// Same leaf identity, used as a map key.
  const void* id() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  static Tensor leaf(MatrixType value, bool requires_grad) {
    if (finite_checks_enabled() && !value.allFinite()) {
      throw NumericError("non-finite leaf value");
    }
    auto node = std::make_shared<NodeType>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  std::shared_ptr<NodeType> node_;
};

/// Reverse-mode gradients of a scalar output with respect to leaf params.
/// The result is aligned with params; unreachable params get zeros.
template <typename Scalar>
std::vector<Matrix<Scalar>> grad(const Tensor<Scalar>& output, std::span<const Tensor<Scalar>> params) {
  using NodeType = detail::Node<Scalar>;
  if (output.rows() != 1 || output.cols() != 1) {
    throw ContractError("grad() needs a scalar output, got " + std::to_string(output.rows()) + "x" +
                        std::to_string(output.cols()));
  }
  for (const auto& p : params) {
    if (!p.is_leaf()) throw ContractError(std::string("grad() param is not a leaf (op '") + p.op() + "')");
  }

  std::vector<Matrix<Scalar>> result;
  result.reserve(params.size());
  if (!output.requires_grad()) {
    for (const auto& p : params) result.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
    return result;
  }

  // Iterative post-order DFS gives a topological order; each node visited once.
  std::vector<NodeType*> order;
  std::unordered_map<NodeType*, bool> visited;
  std::vector<std::pair<NodeType*, std::size_t>> stack;
  stack.emplace_back(output.node().get(), 0);
  visited[output.node().get()] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeType* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited[parent]) {
        visited[parent] = true;
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<NodeType*, Matrix<Scalar>> grads;
  grads[output.node().get()] = Matrix<Scalar>::Ones(1, 1);
  std::vector<Matrix<Scalar>> parent_grads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeType* node = *it;
    if (!node->backward) continue;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    const Matrix<Scalar> upstream = std::move(found->second);
    grads.erase(found);

    const std::size_t n = node->parents.size();
    parent_grads.assign(n, Matrix<Scalar>());
    std::unique_ptr<bool[]> needs(new bool[n]);
    for (std::size_t i = 0; i < n; ++i) needs[i] = node->parents[i]->requires_grad;
    detail::BackwardContext<Scalar> ctx{upstream, node->value, node->parents, parent_grads,
                                        std::span<const bool>(needs.get(), n)};
    node->backward(ctx);

    for (std::size_t i = 0; i < n; ++i) {
      if (!needs[i] || parent_grads[i].size() == 0) continue;
      NodeType* parent = node->parents[i].get();
      auto [slot, inserted] = grads.try_emplace(parent);
      if (inserted) {
        slot->second = std::move(parent_grads[i]);
      } else {
        slot->second += parent_grads[i];
      }
    }
  }

  for (const auto& p : params) {
    auto found = grads.find(p.node().get());
    if (found == grads.end()) {
      result.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
    } else {
      if (finite_checks_enabled() && !found->second.allFinite()) {
        throw NumericError("non-finite gradient");
      }
      result.push_back(found->second);
    }
  }
  return result;
}

template <typename Scalar>
std::vector<Matrix<Scalar>> grad(const Tensor<Scalar>& output, const std::vector<Tensor<Scalar>>& params) {
  return grad(output, std::span<const Tensor<Scalar>>(params.data(), params.size()));
}

}  // namespace mtgr
