#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "ditcod/gradcheck.hpp"
#include "ditcod/ops.hpp"
#include "ditcod/tape.hpp"
#include "ditcod/tensor.hpp"

namespace ditcod::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.mutable_data()) v = dist(rng);
  return t;
}

/// Gradcheck of <f(), w> for a fixed random weight map w, so that every output
/// element contributes to the scalar with a distinct coefficient.
inline GradcheckResult check_projection(const std::function<Tensor()>& f,
                                        const std::vector<Tensor>& inputs, std::uint64_t seed,
                                        GradcheckOptions opt = {}) {
  Shape out_shape;
  {
    NoGradScope no_grad;
    out_shape = f().shape();
  }
  const Tensor w = random_tensor(out_shape, seed ^ 0x9E3779B97F4A7C15ull);
  opt.seed = seed;
  return gradcheck([&] { return ops::weighted_sum(f(), w); }, inputs, opt);
}

}  // namespace ditcod::testing
