#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rebarnet {

// Central-difference validation of every analytic gradient in the layer
// library, plus an end-to-end check through a small network. The objective
// for a layer f is L(x) = sum(g .* f(x)) with a fixed random projection g,
// so dL/dx equals the layer's backward pass applied to g.

struct GradCheckReport {
  std::string name;          // "<layer-kind>.<argument>" or "network.params"
  double max_rel_err = 0.0;  // worst |analytic - fd| / max(|a|, |fd|, 1e-3)
  std::size_t checks = 0;    // number of scalar comparisons
  bool passed = false;
};

struct GradCheckSummary {
  std::vector<GradCheckReport> reports;
  double tolerance = 0.0;
  double step = 0.0;
  bool all_passed = false;
};

// Runs every check with FD step 1e-5. Deterministic for a given seed.
GradCheckSummary run_gradcheck(double tolerance = 1e-4,
                               std::uint64_t seed = 7);

}  // namespace rebarnet
