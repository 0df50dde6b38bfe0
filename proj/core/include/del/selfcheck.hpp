#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace del {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<CheckResult> check_squash_values();
std::vector<CheckResult> check_recovery();
std::vector<CheckResult> check_pooling_limits();

/// Tape-built operators against their plain builders, 1e-12.
std::vector<CheckResult> check_builder_equivalence(std::uint64_t seed);

/// Closed-form interval masses against adaptive quadrature on `grids`
/// random logistic grids (B <= 8, N <= 32), 1e-6 absolute, including the
/// separable 2-d factorization.
std::vector<CheckResult> check_oracle_equivalence(int grids, std::uint64_t seed);

/// Analytic gradients against central finite differences (step 1e-4,
/// vector relative error < 1e-5) for every learnable parameter class, on
/// `configs_per_layer` random configurations per layer type.
std::vector<CheckResult> check_gradients(int configs_per_layer, std::uint64_t seed);

/// Parameter totals for every published model row (28x28x1 and 32x32x3).
std::vector<CheckResult> check_param_counts();

/// Two identical tiny runs on synthetic data produce byte-identical run
/// records, summaries, checkpoints, and rendered images.
std::vector<CheckResult> check_determinism();

/// The fast battery behind `del verify`; needs no dataset files and stays
/// well under a minute.
std::vector<CheckResult> run_selfchecks();

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace del
