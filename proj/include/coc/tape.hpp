#pragma once

#include <deque>
#include <functional>
#include <random>
#include <vector>

#include "coc/tensor.hpp"

namespace coc {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; owns nothing.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Reverse-mode gradient tape. Operations append nodes in execution order;
/// backward() replays them once in strict reverse order and accumulates
/// gradients additively into every requires_grad leaf. A tape is single-use:
/// calling backward twice is a StateError.
class Tape {
 public:
  struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily during backward
    bool needs_grad = false;
    Tensor* leaf = nullptr;
    std::function<void(Tape&)> backward;
  };

  /// Leaf tied to an external parameter; backward() adds into t.grad.
  Var leaf(Tensor& t);
  Var constant(const Tensor& t);
  Var constant(std::vector<int> shape, std::vector<double> values);
  Var constant_scalar(double v);

  const std::vector<int>& shape(Var v) const { return node(v.id).shape; }
  const std::vector<double>& value(Var v) const { return node(v.id).value; }
  const std::vector<double>& grad(Var v) const { return node(v.id).grad; }
  double scalar(Var v) const;

  void backward(Var loss);
  bool consumed() const { return consumed_; }
  size_t size() const { return nodes_.size(); }

  // Low-level surface for ops and for modules that fuse a whole computation
  // into one node with a hand-derived backward (the contrastive loss does).
  int add_node(std::vector<int> shape, std::vector<double> value, bool needs_grad,
               std::function<void(Tape&)> backward);
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  std::vector<double>& grad_buf(int id);

 private:
  std::deque<Node> nodes_;
  bool consumed_ = false;
};

// Elementary ops. Shapes are checked; mismatches raise DimensionError naming
// the op and both shapes. Outputs carry gradient bookkeeping iff any input
// requires it.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var add_rowwise(Var m, Var row_vec);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var concat(const std::vector<Var>& xs, int axis);
Var row(Var m, int r);
Var transpose(Var m);
Var tanh(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var exp(Var a);
Var softmax(Var a, int axis);
Var sum_all(Var a);
Var mean_all(Var a);
Var l2_normalize(Var a, int axis);
Var dropout(Var a, double rate, bool train, std::mt19937_64& rng);
Var bce_with_logits(Var logits, const std::vector<double>& targets);

}  // namespace coc
