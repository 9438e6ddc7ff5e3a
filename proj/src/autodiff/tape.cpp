#include "kanslu/autodiff/tape.hpp"

#include <string>

#include "kanslu/errors.hpp"

namespace kanslu::ad {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("unbound Var");
  return tape_->value(*this);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(*this); }

const Tensor& BackwardContext::output() const { return tape_.nodes_[node_].value(); }

const Tensor& BackwardContext::input(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].value();
}

bool BackwardContext::needs_grad(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].requires_grad;
}

std::span<double> BackwardContext::grad_input(std::size_t i) {
  auto& in = tape_.nodes_[tape_.nodes_[node_].inputs.at(i)];
  if (!in.requires_grad) return {};
  if (!in.reached) {
    in.grad.assign(in.value().numel(), 0.0);
    in.reached = true;
  }
  return in.grad;
}

Var Tape::leaf(Tensor& bound) {
  if (backward_done_) throw ContractError("tape already ran backward; reset() before recording");
  Node n;
  n.bound = &bound;
  n.requires_grad = bound.requires_grad();
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  if (backward_done_) throw ContractError("tape already ran backward; reset() before recording");
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (backward_done_) throw ContractError("tape already ran backward; reset() before recording");
  Node n;
  n.owned = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    check_owned(v);
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Tape::backward(Var root) {
  check_owned(root);
  if (backward_done_) throw ContractError("backward already ran on this tape; call reset() first");
  Node& r = nodes_[root.id()];
  if (r.value().numel() != 1) {
    throw ContractError("backward root must be scalar, got shape " + shape_str(r.value().shape()));
  }
  backward_done_ = true;
  if (!r.requires_grad) return;
  r.grad.assign(1, 1.0);
  r.reached = true;

  for (std::uint32_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.reached || !n.backward) continue;
    BackwardContext ctx(*this, id, n.grad);
    n.backward(ctx);
    // Interior gradients are not needed once propagated.
    Buffer().swap(n.grad);
    n.backward = nullptr;
  }
  for (Node& n : nodes_) {
    if (n.bound && n.reached && n.requires_grad) n.bound->accumulate_grad(n.grad);
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

const Tape::Node& Tape::node(Var v) const {
  check_owned(v);
  return nodes_[v.id()];
}

void Tape::check_owned(Var v) const {
  if (!v.valid() || &v.tape() != this || v.id() >= nodes_.size()) throw ContractError("Var does not belong to this tape");
}

const Tensor& Tape::value(Var v) const { return node(v).value(); }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

bool Tape::has_grad(Var v) const {
  const Node& n = node(v);
  return n.reached && !n.grad.empty();
}

std::span<const double> Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.reached || n.grad.empty()) throw ContractError("node has no gradient");
  return n.grad;
}

}  // namespace kanslu::ad
