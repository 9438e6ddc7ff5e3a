#include "kanslu/train/metrics.hpp"

#include "kanslu/errors.hpp"

namespace kanslu::train {

MetricsReport compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                              std::size_t num_classes) {
  if (truth.size() != predicted.size()) throw DimensionError("truth and prediction counts differ");
  MetricsReport r;
  r.count = truth.size();
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= num_classes || predicted[i] >= num_classes) throw IndexError("class index out of range");
    ++r.confusion[truth[i]][predicted[i]];
  }
  std::size_t correct = 0;
  r.per_class_f1.assign(num_classes, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    correct += r.confusion[c][c];
    std::size_t row = 0, col = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      row += r.confusion[c][k];
      col += r.confusion[k][c];
    }
    const double tp = static_cast<double>(r.confusion[c][c]);
    const double precision = col ? tp / static_cast<double>(col) : 0.0;
    const double recall = row ? tp / static_cast<double>(row) : 0.0;
    r.per_class_f1[c] = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    r.f1_macro += r.per_class_f1[c];
  }
  if (num_classes) r.f1_macro /= static_cast<double>(num_classes);
  r.accuracy = r.count ? static_cast<double>(correct) / static_cast<double>(r.count) : 0.0;
  return r;
}

}  // namespace kanslu::train
