#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "metadg/tensor.hpp"

namespace metadg {

struct GradcheckTerm {
  std::string name;
  double max_rel_err = 0.0;
  std::int64_t checked_coords = 0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckTerm> terms;
  double tolerance = 0.0;
  bool pass = false;
};

// Test fixture hook: mutates the analytic gradients of one term before the
// comparison, so a corrupted backward rule is provably detected.
using GradTamper = std::function<void(const std::string& term, std::vector<Tensor>& grads)>;

// Finite-difference comparison of every loss term (classification, memory,
// jury, and the combined two-stage losses) against analytic gradients of a
// small randomized model. Checks each parameter coordinate where either
// gradient exceeds 1e-8 in magnitude, with relative error |a-f|/max(|a|,|f|).
GradcheckReport run_gradcheck(std::uint64_t seed, double tolerance = 1e-4, double h = 1e-5,
                              const GradTamper& tamper = {});

}  // namespace metadg
