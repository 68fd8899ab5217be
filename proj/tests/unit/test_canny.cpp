#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "ditcod/canny.hpp"
#include "canny_reference.hpp"
#include "ditcod/errors.hpp"

using namespace ditcod;
using ditcod::oracle::reference_canny;

namespace {

Tensor square_mask(int size, int side) {
  Tensor m({1, static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
  const int lo = (size - side) / 2;
  for (int y = lo; y < lo + side; ++y)
    for (int x = lo; x < lo + side; ++x) m[y * size + x] = 1.0;
  return m;
}

Tensor random_mask(std::uint64_t seed, int size) {
  // Union of a few random rectangles and discs.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pos(0, size - 1), len(2, size / 2);
  Tensor m({1, static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
  const int shapes = 1 + static_cast<int>(rng() % 4);
  for (int s = 0; s < shapes; ++s) {
    const int cy = pos(rng), cx = pos(rng), a = len(rng), b = len(rng);
    const bool disc = rng() % 2 == 0;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const bool in = disc ? (y - cy) * (y - cy) * b * b + (x - cx) * (x - cx) * a * a <= a * a * b * b
                             : std::abs(y - cy) <= a / 2 && std::abs(x - cx) <= b / 2;
        if (in) m[y * size + x] = 1.0;
      }
  }
  return m;
}

std::vector<int> as_ints(const Tensor& t) {
  std::vector<int> v(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) v[i] = static_cast<int>(t[i]);
  return v;
}

std::size_t count(const Tensor& t) {
  std::size_t c = 0;
  for (double v : t.data()) c += v != 0.0;
  return c;
}

}  // namespace

TEST(Canny, ConstantMasksHaveNoEdges) {
  EXPECT_EQ(count(canny(Tensor({1, 16, 16}, 0.0))), 0u);
  EXPECT_EQ(count(canny(Tensor({1, 16, 16}, 1.0))), 0u);
}

TEST(Canny, SquareRingMatchesReference) {
  const Tensor m = square_mask(64, 20);
  const Tensor e = canny(m);
  std::vector<double> mv(m.data().begin(), m.data().end());
  const auto ref = reference_canny(mv, 64, 64, 1.0, 0.1, 0.3);
  EXPECT_EQ(as_ints(e), ref);
  EXPECT_GT(count(e), 0u);
}

TEST(Canny, SquareRingIsClosedAndThin) {
  const Tensor e = canny(square_mask(64, 20));
  // Every edge pixel has exactly two 8-neighbours on the ring, or is a corner with
  // more; at least every pixel has one neighbour and the ring lies near the perimeter.
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (e[y * 64 + x] == 0.0) continue;
      int nb = 0;
      for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b)
          if ((a || b) && e[(y + a) * 64 + x + b] != 0.0) ++nb;
      EXPECT_GE(nb, 2) << y << "," << x;
      const int dist = std::min({std::abs(y - 21), std::abs(y - 42), std::abs(x - 21), std::abs(x - 42)});
      EXPECT_LE(dist, 2) << y << "," << x;
    }
  // The ring separates inside from outside: a 4-connected flood from the centre never
  // reaches the border.
  std::vector<int> seen(64 * 64, 0), stack{32 * 64 + 32};
  seen[32 * 64 + 32] = 1;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    const int y = i / 64, x = i % 64;
    ASSERT_TRUE(y > 0 && x > 0 && y < 63 && x < 63);
    for (int j : {i - 1, i + 1, i - 64, i + 64}) {
      if (!seen[j] && e[j] == 0.0) {
        seen[j] = 1;
        stack.push_back(j);
      }
    }
  }
}

TEST(Canny, ComplementInvariance) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Tensor m = random_mask(s, 32);
    Tensor inv(m.shape());
    for (std::size_t i = 0; i < m.numel(); ++i) inv[i] = 1.0 - m[i];
    ASSERT_EQ(as_ints(canny(m)), as_ints(canny(inv))) << "seed " << s;
  }
}

TEST(Canny, RandomMasksMatchReference) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Tensor m = random_mask(1000 + s, 32);
    std::vector<double> mv(m.data().begin(), m.data().end());
    ASSERT_EQ(as_ints(canny(m)), reference_canny(mv, 32, 32, 1.0, 0.1, 0.3)) << "seed " << s;
  }
}

TEST(Canny, EdgesAreBinaryAndDeterministic) {
  const Tensor m = random_mask(7, 48);
  const Tensor a = canny(m), b = canny(m);
  EXPECT_EQ(as_ints(a), as_ints(b));
  for (double v : a.data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Canny, EveryEdgeReachesStrongPixel) {
  // Hysteresis invariant: with high == low every kept pixel is strong, so the edge set
  // at (low, high) contains the one at (high, high+) and no more than the one at (low, low+).
  const Tensor m = random_mask(11, 48);
  const Tensor e = canny(m, {1.0, 0.1, 0.3});
  const Tensor strong = canny(m, {1.0, 0.3, 0.30001});
  const Tensor weak = canny(m, {1.0, 0.1, 0.10001});
  for (std::size_t i = 0; i < e.numel(); ++i) {
    if (strong[i] != 0.0) EXPECT_EQ(e[i], 1.0);
    if (e[i] != 0.0) EXPECT_EQ(weak[i], 1.0);
  }
}

TEST(Canny, StraightEdgeIsOnePixelWide) {
  Tensor m({1, 32, 32});
  for (int y = 0; y < 32; ++y)
    for (int x = 16; x < 32; ++x) m[y * 32 + x] = 1.0;
  const Tensor e = canny(m);
  for (int y = 0; y < 32; ++y) {
    int row = 0;
    for (int x = 0; x < 32; ++x) row += e[y * 32 + x] != 0.0;
    EXPECT_EQ(row, 1) << "row " << y;
  }
}

TEST(Canny, RejectsInvalidParameters) {
  const Tensor m({1, 8, 8});
  EXPECT_THROW(canny(m, {1.0, 0.3, 0.3}), ValueError);
  EXPECT_THROW(canny(m, {1.0, -0.1, 0.3}), ValueError);
  EXPECT_THROW(canny(m, {1.0, 0.1, 1.5}), ValueError);
  EXPECT_THROW(canny(m, {0.0, 0.1, 0.3}), ValueError);
  EXPECT_THROW(canny(Tensor({2, 8, 8}), {}), ShapeError);
}
