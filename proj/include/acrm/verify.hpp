#pragma once

// Full-model finite-difference verification: builds each model variant at
// desk scale, draws random instances, and checks the analytic gradient of the
// total loss against central differences.

#include "acrm/common.hpp"
#include "acrm/data.hpp"
#include "acrm/model.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace acrm {

struct GradSuiteOptions {
  int trials = 20;          // random instances per variant
  int max_coords = 60;      // sampled coordinates per trial (keeps runtime bounded)
  Real eps = 1e-5;
  Real tol = 1e-4;
  std::uint64_t seed = 20240501;
  std::ostream* progress = nullptr;
};

struct GradSuiteResult {
  bool ok = true;
  Real worst = 0;
  long coords_checked = 0;
  std::vector<std::string> failures;
};

// The six checked variants: dt, dg, st, sg, attention off, tied LSTM.
std::vector<ModelConfig> gradcheck_variants();

// Random instance compatible with `cfg` (frames <= 6, words <= 5).
Instance random_tiny_instance(const ModelConfig& cfg, Rng& rng);

// Gradient of the total loss for one instance against central differences.
Real model_grad_check(AcrmModel& model, const Instance& inst, Real eps,
                      std::optional<int> max_coords, std::uint64_t seed);

GradSuiteResult run_gradcheck_suite(const GradSuiteOptions& opts = {});

}  // namespace acrm
