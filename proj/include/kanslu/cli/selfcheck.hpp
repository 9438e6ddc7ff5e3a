#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace kanslu::cli {

struct CheckResult {
  std::string name;
  bool passed = false;
  // Worst observed statistic and the bound it is held to.
  double worst = 0.0;
  double bound = 0.0;
  std::string detail;
  double seconds = 0.0;
};

struct SelfcheckOptions {
  // Random seeds per gradient check and trials per oracle comparison.
  std::size_t seeds = 20;
  std::size_t kan_trials = 20;
  // Test-only: name of a check whose computation is deliberately perturbed.
  std::string inject;
};

// Efficient KAN forward vs the naive per-edge expansion, every basis family.
CheckResult check_kan_oracle(const SelfcheckOptions& options);
// Central finite differences (eps 1e-5) against the tape.
CheckResult check_grad_primitives(const SelfcheckOptions& options);
CheckResult check_grad_kan(const SelfcheckOptions& options);
CheckResult check_grad_ff_block(const SelfcheckOptions& options);
CheckResult check_grad_cnn_tiny(const SelfcheckOptions& options);
// Partition of unity, Chebyshev vs cos(n arccos u), rational denominator >= 1.
CheckResult check_basis_identities(const SelfcheckOptions& options);
// compute_metrics vs brute-force confusion/F1 on 100 random prediction sets.
CheckResult check_metric_oracle(const SelfcheckOptions& options);

std::vector<std::string> selfcheck_names();
std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& options);

}  // namespace kanslu::cli
