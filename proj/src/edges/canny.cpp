#include "ditcod/canny.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "ditcod/errors.hpp"

namespace ditcod {

namespace {

struct Plane {
  std::size_t h, w;
  std::vector<double> v;
  double at(long y, long x) const {  // replicate border
    y = std::clamp(y, 0L, static_cast<long>(h) - 1);
    x = std::clamp(x, 0L, static_cast<long>(w) - 1);
    return v[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  }
};

std::vector<double> gaussian_kernel(double sigma) {
  const long r = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(r) + 1);
  double sum = 0.0;
  for (long i = 0; i <= r; ++i) {
    k[i] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += i == 0 ? k[i] : 2.0 * k[i];
  }
  for (double& x : k) x /= sum;
  return k;  // k[i] is the weight at offset +-i
}

// One separable pass; taps at +-i are paired before weighting.
Plane blur_1d(const Plane& in, const std::vector<double>& k, bool along_x) {
  Plane out{in.h, in.w, std::vector<double>(in.v.size())};
  const long r = static_cast<long>(k.size()) - 1;
  for (long y = 0; y < static_cast<long>(in.h); ++y)
    for (long x = 0; x < static_cast<long>(in.w); ++x) {
      double s = k[0] * in.at(y, x);
      for (long i = 1; i <= r; ++i) {
        const double pair = along_x ? in.at(y, x - i) + in.at(y, x + i)
                                    : in.at(y - i, x) + in.at(y + i, x);
        s += k[i] * pair;
      }
      out.v[y * in.w + x] = s;
    }
  return out;
}

}  // namespace

Tensor canny(const Tensor& mask, const CannyParams& p) {
  if (!(p.sigma > 0.0)) throw ValueError("canny: sigma must be positive");
  if (!(0.0 <= p.low && p.low < p.high && p.high <= 1.0)) {
    throw ValueError("canny: thresholds must satisfy 0 <= low < high <= 1");
  }
  std::size_t h = 0, w = 0;
  if (mask.rank() == 2) {
    h = mask.dim(0);
    w = mask.dim(1);
  } else if (mask.rank() == 3 && mask.dim(0) == 1) {
    h = mask.dim(1);
    w = mask.dim(2);
  } else {
    throw ShapeError("canny: expected [1,H,W] or [H,W], got " + shape_str(mask.shape()));
  }
  const std::size_t n = h * w;
  Plane img{h, w, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) img.v[i] = 2.0 * mask[i] - 1.0;

  const auto kernel = gaussian_kernel(p.sigma);
  const Plane smooth = blur_1d(blur_1d(img, kernel, true), kernel, false);

  std::vector<double> mag(n);
  std::vector<unsigned char> bin(n);
  const double tan22 = std::tan(std::numbers::pi / 8.0);
  double max_mag = 0.0;
  for (long y = 0; y < static_cast<long>(h); ++y)
    for (long x = 0; x < static_cast<long>(w); ++x) {
      const auto s = [&](long dy, long dx) { return smooth.at(y + dy, x + dx); };
      const double gx = (s(-1, 1) - s(-1, -1)) + 2.0 * (s(0, 1) - s(0, -1)) + (s(1, 1) - s(1, -1));
      const double gy = (s(1, -1) - s(-1, -1)) + 2.0 * (s(1, 0) - s(-1, 0)) + (s(1, 1) - s(-1, 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
      mag[i] = std::hypot(gx, gy);
      max_mag = std::max(max_mag, mag[i]);
      const double ax = std::abs(gx), ay = std::abs(gy);
      if (ay <= tan22 * ax) {
        bin[i] = 0;  // horizontal gradient: compare left/right
      } else if (ax <= tan22 * ay) {
        bin[i] = 2;  // vertical gradient: compare up/down
      } else {
        bin[i] = (gx > 0) == (gy > 0) ? 1 : 3;  // main / anti diagonal (rows grow downward)
      }
    }

  Tensor edges(mask.shape(), 0.0);
  if (max_mag == 0.0) return edges;

  // Offsets (dy, dx) of the positive-side neighbour per bin.
  static constexpr long kStep[4][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}};
  const double tol = 1e-9 * max_mag;
  const auto mag_at = [&](long y, long x) {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0;
    return mag[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  const double lo = p.low * max_mag, hi = p.high * max_mag;
  std::vector<unsigned char> cls(n, 0);  // 0 none, 1 weak, 2 strong
  for (long y = 0; y < static_cast<long>(h); ++y)
    for (long x = 0; x < static_cast<long>(w); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
      const double m = mag[i];
      if (m == 0.0) continue;
      const long dy = kStep[bin[i]][0], dx = kStep[bin[i]][1];
      if (!(m > mag_at(y - dy, x - dx) + tol && m >= mag_at(y + dy, x + dx) - tol)) continue;
      if (m >= hi) {
        cls[i] = 2;
      } else if (m >= lo) {
        cls[i] = 1;
      }
    }

  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n; ++i) {
    if (cls[i] != 2) continue;
    edges[i] = 1.0;
    stack.push_back(i);
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const long y = static_cast<long>(i / w), x = static_cast<long>(i % w);
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) {
        const long yy = y + dy, xx = x + dx;
        if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
        const std::size_t j = static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx);
        if (cls[j] != 0 && edges[j] == 0.0) {
          edges[j] = 1.0;
          stack.push_back(j);
        }
      }
  }
  return edges;
}

}  // namespace ditcod
