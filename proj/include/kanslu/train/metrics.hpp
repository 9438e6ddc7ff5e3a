#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace kanslu::train {

struct MetricsReport {
  double accuracy = 0.0;
  double f1_macro = 0.0;
  std::vector<double> per_class_f1;
  // confusion[truth][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t count = 0;
};

// Macro F1 averages over all `num_classes`, zero-support classes included,
// with F1 = 0 whenever precision + recall = 0.
MetricsReport compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                              std::size_t num_classes);

}  // namespace kanslu::train
