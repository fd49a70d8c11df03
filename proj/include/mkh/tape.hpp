#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "mkh/array.hpp"

namespace mkh {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Array& value() const;
  const Array& grad() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode differentiation record. Nodes are appended in evaluation
/// order, so parents always precede children and a single reverse sweep
/// visits every node once.
///
/// A tape constructed with `record_gradients = false` keeps forward values
/// only; it is what evaluation and finite-difference probes use.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Array& grad_out)>;

  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array value);
  /// Differentiable input (model parameter or probed argument).
  Var leaf(Array value);

  /// Appends a node. Throws NumericError naming `op` when `value` holds NaN/Inf.
  Var record(const char* op, Array value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(const char* op, Array value, const std::vector<Var>& parents, BackwardFn backward);

  const Array& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient after backward(); zeros for nodes the loss does not reach.
  const Array& grad(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }

  /// Zero-initialised on first use; ops add their contribution into it.
  Array& grad_accumulator(std::size_t id);

  void backward(Var loss);

 private:
  struct Node {
    const char* op;
    Array value;
    Array grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool record_;
};

}  // namespace mkh
