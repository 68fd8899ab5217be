#pragma once

// Literal, unoptimized implementations of the evaluation measures, written straight
// straight from the metric definitions. Maps are row-major vectors of size h*w.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace ditcod::oracle {

inline constexpr double kMatlabEps = 2.220446049250313e-16;

using Map = std::vector<double>;

inline double mean(const Map& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double mae(const Map& s, const Map& g) {
  Map d(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) d[i] = std::abs(s[i] - g[i]);
  return mean(d);
}

// ---- S-measure

inline double std_n1(const Map& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double object(const Map& pred, const Map& g) {
  Map sel;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i] == 1.0) sel.push_back(pred[i]);
  const double x = mean(sel);
  return 2.0 * x / (x * x + 1.0 + std_n1(sel) + kMatlabEps);
}

inline double s_object(const Map& s, const Map& g) {
  Map fg(s.size()), bg(s.size()), ng(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    fg[i] = g[i] == 1.0 ? s[i] : 0.0;
    bg[i] = g[i] == 1.0 ? 0.0 : 1.0 - s[i];
    ng[i] = 1.0 - g[i];
  }
  const double u = mean(g);
  return u * object(fg, g) + (1.0 - u) * object(bg, ng);
}

inline Map block(const Map& m, int w, int y0, int y1, int x0, int x1) {
  Map out;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) out.push_back(m[y * w + x]);
  return out;
}

inline double ssim(const Map& p, const Map& g) {
  if (p.empty()) return 0.0;
  const double n = static_cast<double>(p.size());
  const double x = mean(p), y = mean(g);
  double sx = 0, sy = 0, sxy = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sx += (p[i] - x) * (p[i] - x);
    sy += (g[i] - y) * (g[i] - y);
    sxy += (p[i] - x) * (g[i] - y);
  }
  sx /= n - 1 + kMatlabEps;
  sy /= n - 1 + kMatlabEps;
  sxy /= n - 1 + kMatlabEps;
  const double alpha = 4 * x * y * sxy;
  const double beta = (x * x + y * y) * (sx + sy);
  if (alpha != 0) return alpha / (beta + kMatlabEps);
  if (beta == 0) return 1.0;
  return 0.0;
}

inline double s_region(const Map& s, const Map& g, int h, int w) {
  double total = 0, cx = 0, cy = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      total += g[y * w + x];
      cx += g[y * w + x] * (x + 1);
      cy += g[y * w + x] * (y + 1);
    }
  const int X = static_cast<int>(std::round(cx / total));
  const int Y = static_cast<int>(std::round(cy / total));
  const double area = static_cast<double>(h * w);
  const double w1 = X * Y / area, w2 = (w - X) * Y / area, w3 = X * (h - Y) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * ssim(block(s, w, 0, Y, 0, X), block(g, w, 0, Y, 0, X)) +
         w2 * ssim(block(s, w, 0, Y, X, w), block(g, w, 0, Y, X, w)) +
         w3 * ssim(block(s, w, Y, h, 0, X), block(g, w, Y, h, 0, X)) +
         w4 * ssim(block(s, w, Y, h, X, w), block(g, w, Y, h, X, w));
}

inline double s_measure(const Map& s, const Map& g, int h, int w) {
  const double y = mean(g);
  if (y == 0) return 1.0 - mean(s);
  if (y == 1) return mean(s);
  return std::max(0.0, 0.5 * s_object(s, g) + 0.5 * s_region(s, g, h, w));
}

// ---- E-measure (mean over thresholds tau_k = (k+0.5)/256, S >= tau_k)

inline double enhanced_score(const Map& fm, const Map& g) {
  const double n = static_cast<double>(g.size());
  double sum = 0.0;
  const double gsum = mean(g) * n;
  if (gsum == 0) {
    for (double f : fm) sum += 1.0 - f;
  } else if (gsum == n) {
    for (double f : fm) sum += f;
  } else {
    const double mf = mean(fm), mg = mean(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double af = fm[i] - mf, ag = g[i] - mg;
      const double align = 2.0 * ag * af / (ag * ag + af * af + kMatlabEps);
      sum += (align + 1.0) * (align + 1.0) / 4.0;
    }
  }
  return sum / n;
}

inline Map binarize(const Map& s, int k) {
  Map fm(s.size());
  const double t = (k + 0.5) / 256.0;
  for (std::size_t i = 0; i < s.size(); ++i) fm[i] = s[i] >= t ? 1.0 : 0.0;
  return fm;
}

inline double e_measure(const Map& s, const Map& g) {
  double total = 0.0;
  for (int k = 0; k < 256; ++k) total += enhanced_score(binarize(s, k), g);
  return total / 256.0;
}

/// The distinct binarizations of s over the 256 thresholds, with multiplicities.
/// e_measure(s, g) == sum(mult * enhanced_score(fm, g)) / 256.
struct Binarizations {
  std::vector<Map> maps;
  std::vector<int> mult;
};
inline Binarizations binarizations(const Map& s) {
  Binarizations b;
  for (int k = 0; k < 256; ++k) {
    Map fm = binarize(s, k);
    if (!b.maps.empty() && b.maps.back() == fm) {
      ++b.mult.back();
    } else {
      b.maps.push_back(std::move(fm));
      b.mult.push_back(1);
    }
  }
  return b;
}
inline double e_measure(const Binarizations& b, const Map& g) {
  double total = 0.0;
  for (std::size_t i = 0; i < b.maps.size(); ++i) total += b.mult[i] * enhanced_score(b.maps[i], g);
  return total / 256.0;
}

// ---- weighted F

struct NearestFg {
  std::vector<double> dist;   // Euclidean distance to the nearest foreground pixel
  std::vector<std::size_t> idx;  // its index; ties -> smallest row-major index
};

inline NearestFg brute_force_edt(const Map& g, int h, int w) {
  NearestFg r{Map(g.size(), std::numeric_limits<double>::infinity()),
              std::vector<std::size_t>(g.size(), 0)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      long best = -1;
      std::size_t arg = 0;
      for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx) {
          if (g[yy * w + xx] != 1.0) continue;
          const long d2 = static_cast<long>(yy - y) * (yy - y) + static_cast<long>(xx - x) * (xx - x);
          if (best < 0 || d2 < best) {
            best = d2;
            arg = static_cast<std::size_t>(yy * w + xx);
          }
        }
      if (best >= 0) {
        r.dist[y * w + x] = std::sqrt(static_cast<double>(best));
        r.idx[y * w + x] = arg;
      }
    }
  return r;
}

inline double weighted_f(const Map& s, const Map& g, int h, int w, const NearestFg& nn) {
  const std::size_t n = g.size();
  if (mean(g) == 0.0) return mean(s) == 0.0 ? 1.0 : 0.0;
  Map e(n), et(n), ea(n, 0.0), ew(n);
  for (std::size_t i = 0; i < n; ++i) e[i] = std::abs(s[i] - g[i]);
  for (std::size_t i = 0; i < n; ++i) et[i] = g[i] == 1.0 ? e[i] : e[nn.idx[i]];
  double k[7][7], ks = 0;
  for (int a = 0; a < 7; ++a)
    for (int b = 0; b < 7; ++b) {
      k[a][b] = std::exp(-((a - 3) * (a - 3) + (b - 3) * (b - 3)) / 50.0);
      ks += k[a][b];
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int a = 0; a < 7; ++a)
        for (int b = 0; b < 7; ++b) {
          const int yy = y + a - 3, xx = x + b - 3;
          if (yy >= 0 && xx >= 0 && yy < h && xx < w) ea[y * w + x] += k[a][b] / ks * et[yy * w + xx];
        }
  double tp = 0, fp = 0, gsum = 0, ew_fg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double m = e[i];
    if (g[i] == 1.0 && ea[i] < e[i]) m = ea[i];
    const double b = g[i] == 1.0 ? 1.0 : 2.0 - std::exp(std::log(1.0 - 0.5) / 5.0 * nn.dist[i]);
    ew[i] = m * b;
    if (g[i] == 1.0) {
      gsum += 1;
      ew_fg += ew[i];
    } else {
      fp += ew[i];
    }
  }
  tp = gsum - ew_fg;
  const double r = 1.0 - ew_fg / gsum;
  const double p = tp / (kMatlabEps + tp + fp);
  return 2.0 * r * p / (kMatlabEps + r + p);
}

inline double weighted_f(const Map& s, const Map& g, int h, int w) {
  return weighted_f(s, g, h, w, brute_force_edt(g, h, w));
}

}  // namespace ditcod::oracle
