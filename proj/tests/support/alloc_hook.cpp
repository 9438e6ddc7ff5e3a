#include "alloc_hook.hpp"

#include <malloc.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <new>

namespace {

std::atomic<bool> tracking{false};
std::atomic<std::size_t> live{0};
std::atomic<std::size_t> peak{0};
std::atomic<std::size_t> largest{0};

void raise_to(std::atomic<std::size_t>& target, std::size_t value) {
  std::size_t prev = target.load();
  while (value > prev && !target.compare_exchange_weak(prev, value)) {
  }
}

void on_alloc(void* p) {
  if (!tracking.load(std::memory_order_relaxed)) return;
  const std::size_t n = malloc_usable_size(p);
  raise_to(peak, live.fetch_add(n) + n);
  raise_to(largest, n);
}

void on_free(void* p) {
  if (!p || !tracking.load(std::memory_order_relaxed)) return;
  const std::size_t n = malloc_usable_size(p);
  std::size_t cur = live.load();
  while (!live.compare_exchange_weak(cur, cur >= n ? cur - n : 0)) {
  }
}

void* checked(void* p) {
  if (!p) throw std::bad_alloc();
  on_alloc(p);
  return p;
}

}  // namespace

namespace kanslu::testing {

AllocProbe::AllocProbe() {
  live = 0;
  peak = 0;
  largest = 0;
  tracking = true;
}

AllocProbe::~AllocProbe() { tracking = false; }

AllocStats AllocProbe::stats() const { return {peak.load(), largest.load()}; }

}  // namespace kanslu::testing

void* operator new(std::size_t n) { return checked(std::malloc(n ? n : 1)); }
void* operator new[](std::size_t n) { return checked(std::malloc(n ? n : 1)); }
void* operator new(std::size_t n, std::align_val_t a) {
  const auto align = static_cast<std::size_t>(a);
  return checked(std::aligned_alloc(align, (std::max<std::size_t>(n, 1) + align - 1) / align * align));
}
void* operator new[](std::size_t n, std::align_val_t a) { return operator new(n, a); }
void operator delete(void* p) noexcept {
  on_free(p);
  std::free(p);
}
void operator delete[](void* p) noexcept { operator delete(p); }
void operator delete(void* p, std::size_t) noexcept { operator delete(p); }
void operator delete[](void* p, std::size_t) noexcept { operator delete(p); }
void operator delete(void* p, std::align_val_t) noexcept { operator delete(p); }
void operator delete[](void* p, std::align_val_t) noexcept { operator delete(p); }
void operator delete(void* p, std::size_t, std::align_val_t) noexcept { operator delete(p); }
void operator delete[](void* p, std::size_t, std::align_val_t) noexcept { operator delete(p); }
