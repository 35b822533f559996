#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mrinet/layers.hpp"
#include "mrinet/rng.hpp"

namespace mrinet {

struct GradReport {
  std::string label;
  double max_rel_error = 0.0;  // over the input and every trainable parameter
  std::size_t checked = 0;     // number of scalar derivatives compared
  bool pass = false;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

struct GradCheckOptions {
  double step = 1e-5;
  // Multiplies analytic gradients by (1 + corrupt); harness self-test only.
  double corrupt = 0.0;
  Mode mode = Mode::train;
};

// Compares layer_backward against central differences of L = sum(r * y) for a
// seeded random r. Numeric derivatives difference the outputs elementwise
// before the weighted sum, which keeps cancellation error per element.
GradReport grad_check(const LayerConfig& config, const Tensor& input,
                      std::span<const Tensor> params, double tolerance, SeededRng& rng,
                      std::span<const int> labels = {}, const GradCheckOptions& options = {});

// Layer families accepted by run_gradcheck_suite / the CLI.
// "all" expands to every family; "pool" = max + mean; "act" = sigmoid + tanh + relu.
std::vector<std::string> gradcheck_variants(const std::string& family);

// Runs `trials` random configurations for each variant in `family` and folds
// them into one report per variant.
std::vector<GradReport> run_gradcheck_suite(const std::string& family, int trials,
                                            double tolerance, std::uint64_t seed);

}  // namespace mrinet
