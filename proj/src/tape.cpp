#include "mkh/tape.hpp"

#include <string>

namespace mkh {

const Array& Var::value() const { return tape->value(id); }
const Array& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Array value) {
  if (!value.all_finite()) throw NumericError("non-finite value passed as constant");
  nodes_.push_back(Node{"constant", std::move(value), {}, false, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Array value) {
  if (!value.all_finite()) throw NumericError("non-finite value passed as leaf");
  nodes_.push_back(Node{"leaf", std::move(value), {}, record_, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(const char* op, Array value, std::initializer_list<Var> parents, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  bool needs = false;
  if (record_) {
    for (const Var& p : parents) needs = needs || nodes_[p.id].requires_grad;
  }
  nodes_.push_back(Node{op, std::move(value), {}, needs, false, needs ? std::move(backward) : BackwardFn{}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(const char* op, Array value, const std::vector<Var>& parents, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  bool needs = false;
  if (record_) {
    for (const Var& p : parents) needs = needs || nodes_[p.id].requires_grad;
  }
  nodes_.push_back(Node{op, std::move(value), {}, needs, false, needs ? std::move(backward) : BackwardFn{}});
  return Var{this, nodes_.size() - 1};
}

const Array& Tape::grad(std::size_t id) { return grad_accumulator(id); }

Array& Tape::grad_accumulator(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Array(node.value.shape(), 0.0);
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss belongs to another tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_string(nodes_[loss.id].value.shape()));
  }
  if (!record_) throw std::logic_error("backward: tape was created without gradient recording");
  for (auto& node : nodes_) {
    if (node.has_grad) std::fill(node.grad.values().begin(), node.grad.values().end(), 0.0);
  }
  grad_accumulator(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    node.backward(*this, node.grad);
  }
}

}  // namespace mkh
