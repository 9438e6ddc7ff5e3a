#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kanslu/blocks/model.hpp"
#include "kanslu/data/dataset.hpp"
#include "kanslu/train/metrics.hpp"
#include "kanslu/train/optim.hpp"

namespace kanslu::train {

struct RunConfig {
  std::size_t max_epochs = 20;
  std::size_t early_stop_patience = 5;
  std::size_t batch_size = 256;
  // Examples per forward/backward pass; gradients of the micro-batches of one
  // batch are accumulated before a single optimiser step. 0 = whole batch.
  std::size_t micro_batch = 0;
  double lr = 1e-4;
  double weight_decay = 0.01;
  SchedulerConfig scheduler;
  std::uint64_t seed = 0;

  static RunConfig cnn_defaults();
  static RunConfig embedding_defaults();
  void validate() const;
  std::size_t pass_size() const { return micro_batch ? micro_batch : batch_size; }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double lr = 0.0;
  double val_accuracy = 0.0;
  double val_f1_macro = 0.0;
  bool improved = false;
};

// Wall-clock measurements, kept apart from the deterministic epoch log.
struct TimingRecord {
  std::size_t epoch = 0;
  double seconds = 0.0;
  double steps_per_second = 0.0;
  double examples_per_second = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> log;
  std::vector<TimingRecord> timing;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochRecord&, const TimingRecord&)>;

// Trains on data.train, validates on data.validation after every epoch and
// leaves the model at the best-validation-accuracy parameters (earliest epoch
// on ties). Throws TrainingAborted on a non-finite loss.
FitResult fit(blocks::Model& model, const data::PreparedData& data, const RunConfig& cfg,
              const EpochCallback& on_epoch = {});

std::vector<std::size_t> predict(blocks::Model& model, const data::LabeledSet& set, std::size_t batch_size);
MetricsReport evaluate(blocks::Model& model, const data::LabeledSet& set, std::size_t num_classes,
                       std::size_t batch_size);

// Slices rows [begin, end) of a batch tensor along its leading axis.
ad::Tensor slice_rows(const ad::Tensor& t, std::size_t begin, std::size_t end);

}  // namespace kanslu::train
