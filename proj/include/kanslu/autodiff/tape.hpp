#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "kanslu/autodiff/tensor.hpp"

namespace kanslu::ad {

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class BackwardContext {
 public:
  std::span<const double> grad_output() const { return grad_output_; }
  const Tensor& output() const;
  const Tensor& input(std::size_t i) const;
  bool needs_grad(std::size_t i) const;
  // Zero-initialised on first access; callers accumulate into it.
  std::span<double> grad_input(std::size_t i);

 private:
  friend class Tape;
  BackwardContext(Tape& tape, std::uint32_t node, std::span<const double> g)
      : tape_(tape), node_(node), grad_output_(g) {}

  Tape& tape_;
  std::uint32_t node_;
  std::span<const double> grad_output_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

// Records operations in execution order so reverse traversal is a valid
// topological order. Single-threaded; one backward pass per reset.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Parameter or input owned elsewhere. When `bound.requires_grad()` the
  // gradient reaching this node is added to `bound`'s grad after backward.
  // `bound` must outlive the tape's current recording.
  Var leaf(Tensor& bound);
  Var constant(Tensor value);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  void backward(Var root);
  void reset();

  std::size_t size() const noexcept { return nodes_.size(); }
  bool backward_done() const noexcept { return backward_done_; }

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  // Gradient that reached a leaf or constant node during backward, if any.
  bool has_grad(Var v) const;
  std::span<const double> grad(Var v) const;

 private:
  friend class BackwardContext;

  struct Node {
    Tensor owned;
    Tensor* bound = nullptr;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool reached = false;
    Buffer grad;

    const Tensor& value() const { return bound ? *bound : owned; }
  };

  const Node& node(Var v) const;
  void check_owned(Var v) const;

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace kanslu::ad
