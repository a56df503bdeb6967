#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "metadg/tensor.hpp"

namespace metadg {

class Tape;

// Gradient accumulation target handed to backward rules. grad(node) returns
// the gradient buffer for that input node, or nullptr when the node does not
// need a gradient.
class GradSink {
 public:
  double* grad(int node);

 private:
  friend class Tape;
  explicit GradSink(Tape& tape) : tape_(tape) {}
  Tape& tape_;
};

// Gradients keyed by tape node id. Every requires_grad leaf is present,
// zero-filled if the loss did not depend on it.
class GradMap {
 public:
  bool has(int node) const;
  const Tensor& at(int node) const;
  // Gradient for a tape-bound tensor (leaf or interior node).
  const Tensor& for_tensor(const Tensor& t) const;

 private:
  friend class Tape;
  std::vector<Tensor> by_node_;
};

using BackwardFn = std::function<void(const double* out_grad, GradSink& sink)>;

// Reverse-mode tape. Operations append nodes in execution order, so inputs
// always precede their consumers and one reverse sweep is a valid backward
// pass. Single-owner: one tape per training stage, never shared.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Binds existing storage as a leaf node. Values are shared, not copied.
  Tensor leaf(const Tensor& storage, bool requires_grad);
  Tensor constant(const Tensor& storage) { return leaf(storage, false); }

  // Op-extension point: registers computed values as a new node.
  Tensor record(const char* op, Shape shape, std::vector<double> values,
                const std::vector<int>& inputs, BackwardFn backward);

  // Reverse sweep from a scalar loss node. Each node is visited once.
  GradMap backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }
  bool node_needs_grad(int node) const;
  const char* node_op(int node) const;

  // True when `t` was produced by (or bound to) this tape.
  bool owns(const Tensor& t) const { return t.node() >= 0 && t.tape_id() == id_; }

 private:
  friend class GradSink;

  struct Node {
    const char* op;
    Shape shape;
    std::shared_ptr<std::vector<double>> values;
    bool needs_grad;
    bool is_leaf;
    BackwardFn backward;
  };

  double* grad_buffer(int node);

  std::uint64_t id_;
  std::vector<Node> nodes_;
  std::vector<std::unique_ptr<std::vector<double>>> grads_;
};

namespace ops {

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b);
Tensor add(Tape& t, const Tensor& a, const Tensor& b);
Tensor sub(Tape& t, const Tensor& a, const Tensor& b);
Tensor mul(Tape& t, const Tensor& a, const Tensor& b);
Tensor scalar_mul(Tape& t, const Tensor& a, double c);
Tensor gather_rows(Tape& t, const Tensor& a, const std::vector<int>& ids);
Tensor mean_axis(Tape& t, const Tensor& a, int axis);
Tensor l2_normalize_rows(Tape& t, const Tensor& a);
Tensor softmax_rows(Tape& t, const Tensor& a);
Tensor log(Tape& t, const Tensor& a);
Tensor exp(Tape& t, const Tensor& a);
Tensor tanh(Tape& t, const Tensor& a);
Tensor sigmoid(Tape& t, const Tensor& a);
Tensor concat(Tape& t, std::span<const Tensor> parts, int axis);
Tensor transpose(Tape& t, const Tensor& a);
Tensor cross_entropy_with_logits(Tape& t, const Tensor& logits, const std::vector<int>& labels);

}  // namespace ops

}  // namespace metadg
