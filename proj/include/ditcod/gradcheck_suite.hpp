#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ditcod/gradcheck.hpp"

namespace ditcod {

struct SuiteCase {
  std::string name;
  std::function<GradcheckResult(std::uint64_t seed)> run;
};

/// Every differentiable op plus the model composites (bconv, backbone block, stream
/// head, boundary level, enhance+aggregate+fuse, dtit layer, predict head, end-to-end
/// decoder, ppa and bce losses) at small, seeded sizes.
std::vector<SuiteCase> gradcheck_suite();

struct SuiteOutcome {
  std::string name;
  std::uint64_t seed;
  GradcheckResult result;
};

/// Runs every case for seeds 1..n_seeds; `report` sees each outcome as it finishes.
std::vector<SuiteOutcome> run_gradcheck_suite(std::size_t n_seeds,
                                              const std::function<void(const SuiteOutcome&)>& report = {});

}  // namespace ditcod
