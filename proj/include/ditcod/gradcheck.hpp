#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ditcod/tensor.hpp"

namespace ditcod {

struct GradcheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Denominator floor for the per-coordinate relative error, so coordinates whose
  // true derivative is ~0 are judged on an absolute scale.
  double floor = 1e-5;
  // Coordinates where the central difference itself is unreliable (a ReLU kink lies
  // within eps) are skipped; the check fails if more than this fraction is skipped.
  double max_skip_fraction = 0.1;
  // 0 checks every coordinate; otherwise a seeded sample of this many per input.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t coords_skipped = 0;
  std::size_t worst_input = 0;
  std::size_t worst_coord = 0;
  bool passed = false;
};

/// Compares reverse-mode gradients of a scalar closure against central differences
/// (f(x+eps*e) - f(x-eps*e)) / 2eps for every listed input. A coordinate that
/// disagrees is re-probed at eps/2; if the two differences disagree with each other,
/// f is not smooth at that scale and the coordinate is counted as skipped.
/// The closure must read the inputs' current data and be deterministic. Throws
/// NumericalError if f is not finite.
GradcheckResult gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                          const GradcheckOptions& opt = {});

std::string describe(const GradcheckResult& r);

}  // namespace ditcod
