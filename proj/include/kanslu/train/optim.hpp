#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kanslu/autodiff/parameter.hpp"

namespace kanslu::train {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// One decoupled-decay Adam update of `params` in place. `step` is the
// 1-based update count used for bias correction.
void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                  std::size_t step, double lr, const AdamWConfig& cfg);

// Owns first and second moments for every trainable parameter. Parameters
// that received no gradient since the last step are left untouched.
class AdamW {
 public:
  AdamW(ad::ParameterList params, AdamWConfig cfg = {});

  void step(double lr);
  void zero_grad();
  std::size_t steps() const noexcept { return steps_; }
  const AdamWConfig& config() const noexcept { return cfg_; }

 private:
  struct Slot {
    ad::Tensor* param;
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamWConfig cfg_;
  std::vector<Slot> slots_;
  std::size_t steps_ = 0;
};

struct SchedulerConfig {
  double factor = 0.5;
  std::size_t patience = 2;
  double threshold = 1e-4;
  double min_lr = 1e-7;

  friend bool operator==(const SchedulerConfig&, const SchedulerConfig&) = default;
};

// Multiplies the learning rate by `factor` once the monitored metric has
// failed to beat its best by more than `threshold` for `patience` epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, SchedulerConfig cfg = {});

  // Feeds one epoch's metric and returns the learning rate for the next.
  double step(double metric);
  double lr() const noexcept { return lr_; }
  std::size_t reductions() const noexcept { return reductions_; }

 private:
  SchedulerConfig cfg_;
  double lr_;
  double best_;
  std::size_t bad_epochs_ = 0;
  std::size_t reductions_ = 0;
};

}  // namespace kanslu::train
