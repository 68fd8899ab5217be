#pragma once

#include "ditcod/tensor.hpp"

namespace ditcod {

struct CannyParams {
  double sigma = 1.0;
  double low = 0.1;   // fraction of the maximum gradient magnitude
  double high = 0.3;  // fraction of the maximum gradient magnitude
};

/// Binary edge map of a mask in [0,1], shape [1,H,W] or [H,W] (output has the same shape).
///
/// The mask is mapped to 2m-1 so that the complement is an exact negation, then
/// Gaussian blur (radius ceil(3 sigma)) -> Sobel -> 4-bin non-maximum suppression ->
/// double threshold -> 8-connected hysteresis. Borders replicate. Direction bins
/// depend on |gx|, |gy| and sign(gx*gy) only, so canny(m) == canny(1-m) exactly.
///
/// Non-maximum suppression keeps a pixel whose magnitude exceeds its neighbour on the
/// negative side of the bin and is not below the one on the positive side; on a
/// symmetric step this keeps exactly one of the two equal pixels straddling the edge.
Tensor canny(const Tensor& mask, const CannyParams& params = {});

}  // namespace ditcod
