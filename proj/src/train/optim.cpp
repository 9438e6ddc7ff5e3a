#include "kanslu/train/optim.hpp"

#include <cmath>
#include <limits>

#include "kanslu/errors.hpp"

namespace kanslu::train {

void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                  std::size_t step, double lr, const AdamWConfig& cfg) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] *= decay;
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
  }
}

AdamW::AdamW(ad::ParameterList params, AdamWConfig cfg) : cfg_(cfg) {
  for (const auto& p : params) {
    if (!p.trainable) continue;
    slots_.push_back({p.tensor, std::vector<double>(p.tensor->numel(), 0.0), std::vector<double>(p.tensor->numel(), 0.0)});
  }
}

void AdamW::step(double lr) {
  ++steps_;
  for (Slot& s : slots_) {
    if (!s.param->has_grad()) continue;
    adamw_update(s.param->data(), s.param->grad(), s.m, s.v, steps_, lr, cfg_);
  }
}

void AdamW::zero_grad() {
  for (Slot& s : slots_) s.param->clear_grad();
}

PlateauScheduler::PlateauScheduler(double initial_lr, SchedulerConfig cfg)
    : cfg_(cfg), lr_(initial_lr), best_(-std::numeric_limits<double>::infinity()) {
  if (initial_lr < 0.0) throw ParameterError("learning rate must be non-negative");
  if (cfg.factor <= 0.0 || cfg.factor >= 1.0) throw ParameterError("scheduler factor must be in (0, 1)");
  if (cfg.patience == 0) throw ParameterError("scheduler patience must be positive");
}

double PlateauScheduler::step(double metric) {
  if (metric > best_ + cfg_.threshold) {
    best_ = metric;
    bad_epochs_ = 0;
    return lr_;
  }
  if (++bad_epochs_ >= cfg_.patience) {
    bad_epochs_ = 0;
    const double reduced = std::max(lr_ * cfg_.factor, cfg_.min_lr);
    // A rate already at or below the floor is left alone.
    if (reduced < lr_) {
      lr_ = reduced;
      ++reductions_;
    }
  }
  return lr_;
}

}  // namespace kanslu::train
