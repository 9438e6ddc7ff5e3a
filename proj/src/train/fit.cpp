#include "kanslu/train/fit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "kanslu/autodiff/ops.hpp"
#include "kanslu/errors.hpp"
#include "kanslu/random.hpp"
#include "kanslu/train/checkpoint.hpp"

namespace kanslu::train {

RunConfig RunConfig::cnn_defaults() {
  RunConfig c;
  // Bounds activation memory of the CNN to 32 spectrograms per pass.
  c.micro_batch = 32;
  return c;
}

RunConfig RunConfig::embedding_defaults() {
  RunConfig c;
  c.max_epochs = 50;
  c.batch_size = 64;
  c.lr = 5e-5;
  return c;
}

void RunConfig::validate() const {
  if (max_epochs == 0) throw ConfigError("train.max_epochs must be positive");
  if (early_stop_patience == 0) throw ConfigError("train.early_stop_patience must be positive");
  if (early_stop_patience >= max_epochs) {
    throw ConfigError("train.early_stop_patience (" + std::to_string(early_stop_patience) +
                      ") must be smaller than train.max_epochs (" + std::to_string(max_epochs) + ")");
  }
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be a finite non-negative number");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  if (!(scheduler.factor > 0.0 && scheduler.factor < 1.0)) throw ConfigError("train.scheduler.factor must be in (0, 1)");
  if (scheduler.patience == 0) throw ConfigError("train.scheduler.patience must be positive");
  if (!(scheduler.min_lr >= 0.0)) throw ConfigError("train.scheduler.min_lr must be non-negative");
}

ad::Tensor slice_rows(const ad::Tensor& t, std::size_t begin, std::size_t end) {
  if (t.rank() == 0 || end > t.dim(0) || begin > end) throw IndexError("row slice out of range");
  ad::Shape shape = t.shape();
  const std::size_t row = t.numel() / t.dim(0);
  shape[0] = end - begin;
  ad::Tensor out(shape);
  std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(begin * row), (end - begin) * row, out.data().begin());
  return out;
}

std::vector<std::size_t> predict(blocks::Model& model, const data::LabeledSet& set, std::size_t batch_size) {
  std::vector<std::size_t> out;
  out.reserve(set.size());
  data::BatchStream stream(set.size(), set.source(), batch_size, 0, false);
  while (auto batch = stream.next()) {
    const ad::Tensor probs = model.predict_proba(batch->features);
    const std::size_t k = probs.dim(1);
    for (std::size_t r = 0; r < probs.dim(0); ++r) {
      const auto row = probs.data().subspan(r * k, k);
      out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

MetricsReport evaluate(blocks::Model& model, const data::LabeledSet& set, std::size_t num_classes,
                       std::size_t batch_size) {
  if (set.size() == 0) throw ContractError("cannot evaluate an empty split");
  return compute_metrics(set.labels, predict(model, set, batch_size), num_classes);
}

FitResult fit(blocks::Model& model, const data::PreparedData& data, const RunConfig& cfg,
              const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.train.size() == 0 || data.validation.size() == 0) {
    throw ContractError("training needs non-empty train and validation splits");
  }
  const ad::ParameterList params = model.parameters();
  AdamWConfig opt_cfg;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW optimizer(params, opt_cfg);
  PlateauScheduler scheduler(cfg.lr, cfg.scheduler);
  Rng dropout_rng(derive_seed(cfg.seed, 2));
  data::BatchStream stream(data.train.size(), data.train.source(), cfg.batch_size, derive_seed(cfg.seed, 3));
  const std::size_t pass = cfg.pass_size();

  FitResult result;
  Snapshot best = take_snapshot(params);
  double best_acc = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  double lr = cfg.lr;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    stream.start_epoch(epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0, steps = 0, batch_no = 0;
    while (auto batch = stream.next()) {
      ++batch_no;
      const std::size_t n = batch->labels.size();
      for (std::size_t begin = 0; begin < n; begin += pass) {
        const std::size_t end = std::min(n, begin + pass);
        const ad::Tensor x = begin == 0 && end == n ? batch->features : slice_rows(batch->features, begin, end);
        const std::span<const std::size_t> y(batch->labels.data() + begin, end - begin);
        ad::Tape tape;
        ad::Var loss = ad::softmax_cross_entropy(model.forward(tape, x, true, dropout_rng), y);
        const double value = loss.value().item();
        if (!std::isfinite(value)) {
          throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batch_no));
        }
        loss_sum += value * static_cast<double>(end - begin);
        // Weight each micro-batch mean so the accumulated gradient is the batch mean.
        const double share = static_cast<double>(end - begin) / static_cast<double>(n);
        tape.backward(share == 1.0 ? loss : ad::scale(loss, tape.constant(ad::Tensor::scalar(share))));
      }
      optimizer.step(lr);
      optimizer.zero_grad();
      seen += n;
      ++steps;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const MetricsReport val = evaluate(model, data.validation, data.num_classes(), pass);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.lr = lr;
    rec.val_accuracy = val.accuracy;
    rec.val_f1_macro = val.f1_macro;
    rec.improved = val.accuracy > best_acc + cfg.scheduler.threshold;
    if (rec.improved) {
      best_acc = val.accuracy;
      result.best_epoch = epoch;
      best = take_snapshot(params);
      stale = 0;
    } else {
      ++stale;
    }
    TimingRecord timing{epoch, seconds, seconds > 0 ? steps / seconds : 0.0, seconds > 0 ? seen / seconds : 0.0};
    result.log.push_back(rec);
    result.timing.push_back(timing);
    if (on_epoch) on_epoch(rec, timing);
    lr = scheduler.step(val.accuracy);
    if (stale >= cfg.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  restore_snapshot(best, params);
  result.best_val_accuracy = best_acc;
  return result;
}

}  // namespace kanslu::train
