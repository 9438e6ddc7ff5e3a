#pragma once

#include <string>
#include <vector>

#include "kanslu/autodiff/tensor.hpp"

namespace kanslu::ad {

// A named tensor owned by a model. Non-trainable entries are buffers such as
// batch-norm running statistics: checkpointed but never optimised.
struct NamedParameter {
  std::string name;
  Tensor* tensor = nullptr;
  bool trainable = true;
};

using ParameterList = std::vector<NamedParameter>;

inline std::size_t trainable_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) {
    if (p.trainable) n += p.tensor->numel();
  }
  return n;
}

}  // namespace kanslu::ad
