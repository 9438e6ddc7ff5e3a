#pragma once

#include <cstddef>

namespace kanslu::testing {

// Live heap bytes while a probe is active. Linking alloc_hook.cpp replaces
// the global operator new/delete of the executable.
struct AllocStats {
  std::size_t peak = 0;
  std::size_t largest = 0;
};

class AllocProbe {
 public:
  AllocProbe();
  ~AllocProbe();
  AllocProbe(const AllocProbe&) = delete;
  AllocProbe& operator=(const AllocProbe&) = delete;

  AllocStats stats() const;
};

}  // namespace kanslu::testing
