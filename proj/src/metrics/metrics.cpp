#include "ditcod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "ditcod/errors.hpp"

namespace ditcod::metrics {

namespace {

struct Map {
  std::size_t h, w;
  const double* s;
  const double* g;
  std::size_t n() const { return h * w; }
};

std::pair<std::size_t, std::size_t> plane_dims(const Tensor& t) {
  const auto& sh = t.shape();
  const std::size_t r = sh.size();
  if (r < 2 || r > 4) throw ShapeError("metrics: unsupported shape " + shape_str(sh));
  for (std::size_t i = 0; i + 2 < r; ++i) {
    if (sh[i] != 1) throw ShapeError("metrics: expected a single map, got " + shape_str(sh));
  }
  return {sh[r - 2], sh[r - 1]};
}

Map check(const Tensor& s, const Tensor& g) {
  const auto [h, w] = plane_dims(s);
  const auto [gh, gw] = plane_dims(g);
  if (h != gh || w != gw) {
    throw ShapeError("metrics: prediction " + shape_str(s.shape()) + " vs ground truth " +
                     shape_str(g.shape()));
  }
  for (double v : s.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValueError("metrics: prediction values must lie in [0,1]");
  }
  for (double v : g.data()) {
    if (v != 0.0 && v != 1.0) throw ValueError("metrics: ground truth must be binary");
  }
  return {h, w, s.ptr(), g.ptr()};
}

// ---- S-measure

double object_score(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double sd = 0.0;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    sd = std::sqrt(ss / (n - 1.0));
  }
  return 2.0 * mean / (mean * mean + 1.0 + sd + kEps);
}

double s_object(const Map& m) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < m.n(); ++i) {
    if (m.g[i] == 1.0) {
      fg.push_back(m.s[i]);
    } else {
      bg.push_back(1.0 - m.s[i]);
    }
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(m.n());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

// SSIM-style similarity of one block [y0,y1) x [x0,x1); an empty block scores 0.
double block_ssim(const Map& m, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1) {
  const std::size_t count = (y1 - y0) * (x1 - x0);
  if (count == 0) return 0.0;
  const double n = static_cast<double>(count);
  double mx = 0, my = 0;
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) {
      mx += m.s[y * m.w + x];
      my += m.g[y * m.w + x];
    }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) {
      const double dx = m.s[y * m.w + x] - mx, dy = m.g[y * m.w + x] - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  const double denom = n - 1.0 + kEps;
  sxx /= denom;
  syy /= denom;
  sxy /= denom;
  const double alpha = 4.0 * mx * my * sxy;
  const double beta = (mx * mx + my * my) * (sxx + syy);
  if (alpha != 0.0) return alpha / (beta + kEps);
  if (beta == 0.0) return 1.0;
  return 0.0;
}

double s_region(const Map& m) {
  // Centroid with 1-based coordinates, rounded half away from zero.
  double total = 0, sx = 0, sy = 0;
  for (std::size_t y = 0; y < m.h; ++y)
    for (std::size_t x = 0; x < m.w; ++x) {
      const double v = m.g[y * m.w + x];
      total += v;
      sx += v * static_cast<double>(x + 1);
      sy += v * static_cast<double>(y + 1);
    }
  const auto cx = static_cast<std::size_t>(std::round(sx / total));
  const auto cy = static_cast<std::size_t>(std::round(sy / total));
  // Blocks: rows [0,cy) / [cy,h), columns [0,cx) / [cx,w).
  const double area = static_cast<double>(m.n());
  const double w1 = static_cast<double>(cx * cy) / area;
  const double w2 = static_cast<double>((m.w - cx) * cy) / area;
  const double w3 = static_cast<double>(cx * (m.h - cy)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * block_ssim(m, 0, cy, 0, cx) + w2 * block_ssim(m, 0, cy, cx, m.w) +
         w3 * block_ssim(m, cy, m.h, 0, cx) + w4 * block_ssim(m, cy, m.h, cx, m.w);
}

// ---- weighted F

// 1-D squared distance transform (Felzenszwalb & Huttenlocher) of f in place.
void dt1d(std::vector<double>& f, std::vector<double>& d, std::vector<std::size_t>& v,
          std::vector<double>& z) {
  const std::size_t n = f.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  for (std::size_t q = 1; q < n; ++q) {
    if (f[q] == inf) continue;
    if (f[v[0]] == inf) {
      v[0] = q;
      continue;
    }
    double s;
    while (true) {
      const double p = static_cast<double>(v[k]), qq = static_cast<double>(q);
      s = ((f[q] + qq * qq) - (f[v[k]] + p * p)) / (2.0 * qq - 2.0 * p);
      if (s > z[k] || k == 0) break;
      --k;
    }
    if (s <= z[k]) {
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      k = 0;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (f[v[0]] == inf) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

// Squared Euclidean distance to the nearest foreground pixel.
std::vector<double> squared_edt(const Map& m) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(m.n());
  for (std::size_t i = 0; i < m.n(); ++i) grid[i] = m.g[i] == 1.0 ? 0.0 : inf;
  const std::size_t len = std::max(m.h, m.w);
  std::vector<double> f(len), d(len), z(len + 1);
  std::vector<std::size_t> v(len);
  for (std::size_t x = 0; x < m.w; ++x) {
    f.resize(m.h);
    d.resize(m.h);
    for (std::size_t y = 0; y < m.h; ++y) f[y] = grid[y * m.w + x];
    dt1d(f, d, v, z);
    for (std::size_t y = 0; y < m.h; ++y) grid[y * m.w + x] = d[y];
  }
  for (std::size_t y = 0; y < m.h; ++y) {
    f.assign(grid.begin() + static_cast<long>(y * m.w), grid.begin() + static_cast<long>((y + 1) * m.w));
    d.resize(m.w);
    dt1d(f, d, v, z);
    std::copy(d.begin(), d.end(), grid.begin() + static_cast<long>(y * m.w));
  }
  return grid;
}

// Nearest foreground pixel at exactly squared distance d2; among ties the smallest
// row-major index wins (offsets enumerated by row, then column).
std::size_t nearest_fg(const Map& m, std::size_t y, std::size_t x, double d2) {
  const long r = static_cast<long>(std::floor(std::sqrt(d2)));
  const long d2i = static_cast<long>(d2);
  for (long dy = -r; dy <= r; ++dy) {
    const long yy = static_cast<long>(y) + dy;
    if (yy < 0 || yy >= static_cast<long>(m.h)) continue;
    const long rem = d2i - dy * dy;
    if (rem < 0) continue;
    const long dx = std::lround(std::sqrt(static_cast<double>(rem)));
    if (dx * dx != rem) continue;
    for (long cx : {static_cast<long>(x) - dx, static_cast<long>(x) + dx}) {
      if (cx < 0 || cx >= static_cast<long>(m.w)) continue;
      const std::size_t j = static_cast<std::size_t>(yy) * m.w + static_cast<std::size_t>(cx);
      if (m.g[j] == 1.0) return j;
    }
  }
  throw NumericalError("weighted_f: distance transform inconsistent");
}

bool all_zero(const double* p, std::size_t n) {
  return std::all_of(p, p + n, [](double v) { return v == 0.0; });
}

}  // namespace

double threshold(std::size_t k) { return (static_cast<double>(k) + 0.5) / kThresholds; }

double mae(const Tensor& s, const Tensor& g) {
  const Map m = check(s, g);
  double acc = 0.0;
  for (std::size_t i = 0; i < m.n(); ++i) acc += std::abs(m.s[i] - m.g[i]);
  return acc / static_cast<double>(m.n());
}

double s_measure(const Tensor& s, const Tensor& g) {
  const Map m = check(s, g);
  double gm = 0.0, sm = 0.0;
  for (std::size_t i = 0; i < m.n(); ++i) {
    gm += m.g[i];
    sm += m.s[i];
  }
  gm /= static_cast<double>(m.n());
  sm /= static_cast<double>(m.n());
  if (gm == 0.0) return 1.0 - sm;
  if (gm == 1.0) return sm;
  const double q = 0.5 * s_object(m) + 0.5 * s_region(m);
  return std::max(q, 0.0);
}

double e_measure(const Tensor& s, const Tensor& g) {
  const Map m = check(s, g);
  const double n = static_cast<double>(m.n());
  // Histogram of threshold indices: pixel i is foreground for thresholds k < level(i).
  std::array<double, kThresholds + 1> fg_hist{}, bg_hist{};
  double g_count = 0.0;
  for (std::size_t i = 0; i < m.n(); ++i) {
    std::size_t level = static_cast<std::size_t>(std::floor(m.s[i] * kThresholds + 0.5));
    level = std::min(level, kThresholds);
    // level = number of thresholds tau_k <= s; correct rounding at the boundaries
    while (level > 0 && threshold(level - 1) > m.s[i]) --level;
    while (level < kThresholds && threshold(level) <= m.s[i]) ++level;
    (m.g[i] == 1.0 ? fg_hist : bg_hist)[level] += 1.0;
    g_count += m.g[i];
  }
  // Pixels predicted foreground at threshold k: those with level > k.
  double tp = 0.0, fp = 0.0;
  for (std::size_t l = 1; l <= kThresholds; ++l) {
    tp += fg_hist[l];
    fp += bg_hist[l];
  }
  double total = 0.0;
  for (std::size_t k = 0; k < kThresholds; ++k) {
    const double fn = g_count - tp, tn = n - g_count - fp;
    double score;
    if (g_count == 0.0) {
      score = tn / n;  // mean of 1 - FM
    } else if (g_count == n) {
      score = tp / n;  // mean of FM
    } else {
      const double mu_f = (tp + fp) / n, mu_g = g_count / n;
      const auto enhanced = [&](double f, double gv) {
        const double af = f - mu_f, ag = gv - mu_g;
        const double align = 2.0 * ag * af / (ag * ag + af * af + kEps);
        return (align + 1.0) * (align + 1.0) / 4.0;
      };
      score = (tp * enhanced(1, 1) + fp * enhanced(1, 0) + fn * enhanced(0, 1) +
               tn * enhanced(0, 0)) / n;
    }
    total += score;
    tp -= fg_hist[k + 1];
    fp -= bg_hist[k + 1];
  }
  return total / kThresholds;
}

double weighted_f(const Tensor& s, const Tensor& g) {
  const Map m = check(s, g);
  const std::size_t n = m.n();
  if (all_zero(m.g, n)) return all_zero(m.s, n) ? 1.0 : 0.0;

  std::vector<double> err(n);
  for (std::size_t i = 0; i < n; ++i) err[i] = std::abs(m.s[i] - m.g[i]);
  const std::vector<double> d2 = squared_edt(m);
  std::vector<double> et = err;
  for (std::size_t y = 0; y < m.h; ++y)
    for (std::size_t x = 0; x < m.w; ++x) {
      const std::size_t i = y * m.w + x;
      if (m.g[i] == 0.0) et[i] = err[nearest_fg(m, y, x, d2[i])];
    }

  // 7x7 Gaussian, sigma 5, normalized; correlation with zero padding.
  double kernel[7][7];
  double ksum = 0.0;
  for (int dy = -3; dy <= 3; ++dy)
    for (int dx = -3; dx <= 3; ++dx) {
      kernel[dy + 3][dx + 3] = std::exp(-(dy * dy + dx * dx) / (2.0 * 25.0));
      ksum += kernel[dy + 3][dx + 3];
    }
  for (auto& row : kernel)
    for (double& k : row) k /= ksum;

  double tp_w = 0.0, fp_w = 0.0, ew_fg = 0.0, g_count = 0.0;
  for (std::size_t y = 0; y < m.h; ++y)
    for (std::size_t x = 0; x < m.w; ++x) {
      const std::size_t i = y * m.w + x;
      double ew;
      if (m.g[i] == 1.0) {
        double ea = 0.0;
        for (int dy = -3; dy <= 3; ++dy)
          for (int dx = -3; dx <= 3; ++dx) {
            const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(m.h) || xx >= static_cast<long>(m.w)) continue;
            ea += kernel[dy + 3][dx + 3] * et[static_cast<std::size_t>(yy) * m.w + static_cast<std::size_t>(xx)];
          }
        ew = std::min(err[i], ea);
        ew_fg += ew;
        g_count += 1.0;
      } else {
        const double importance = 2.0 - std::exp(std::log(0.5) / 5.0 * std::sqrt(d2[i]));
        ew = err[i] * importance;
        fp_w += ew;
      }
    }
  tp_w = g_count - ew_fg;
  const double recall = 1.0 - ew_fg / g_count;
  const double precision = tp_w / (kEps + tp_w + fp_w);
  return 2.0 * recall * precision / (kEps + recall + precision);
}

PrCurve pr_curve(const Tensor& s, const Tensor& g) {
  const Map m = check(s, g);
  PrCurve c;
  double g_count = 0.0;
  for (std::size_t i = 0; i < m.n(); ++i) g_count += m.g[i];
  for (std::size_t k = 0; k < kThresholds; ++k) {
    const double t = threshold(k);
    double tp = 0, pos = 0;
    for (std::size_t i = 0; i < m.n(); ++i) {
      if (m.s[i] >= t) {
        pos += 1;
        tp += m.g[i];
      }
    }
    c.precision[k] = pos == 0 ? 1.0 : tp / pos;
    c.recall[k] = g_count == 0 ? 1.0 : tp / g_count;
  }
  return c;
}

ImageScores score_image(const std::string& id, const Tensor& s, const Tensor& g) {
  return {id, s_measure(s, g), e_measure(s, g), weighted_f(s, g), mae(s, g)};
}

MetricReport aggregate(std::vector<ImageScores> images, const std::vector<PrCurve>& curves) {
  MetricReport r;
  r.images = std::move(images);
  r.mean.id = "MEAN";
  const double n = static_cast<double>(r.images.size());
  if (!r.images.empty()) {
    for (const auto& im : r.images) {
      r.mean.s_alpha += im.s_alpha;
      r.mean.e_phi += im.e_phi;
      r.mean.f_w_beta += im.f_w_beta;
      r.mean.mae += im.mae;
    }
    r.mean.s_alpha /= n;
    r.mean.e_phi /= n;
    r.mean.f_w_beta /= n;
    r.mean.mae /= n;
  }
  if (!curves.empty()) {
    for (const auto& c : curves)
      for (std::size_t k = 0; k < kThresholds; ++k) {
        r.pr.precision[k] += c.precision[k];
        r.pr.recall[k] += c.recall[k];
      }
    const double m = static_cast<double>(curves.size());
    for (std::size_t k = 0; k < kThresholds; ++k) {
      r.pr.precision[k] /= m;
      r.pr.recall[k] /= m;
    }
  }
  return r;
}

namespace {
std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw IoError("cannot write " + p.string());
  return f;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}
}  // namespace

void emit(const MetricReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto f = open_out(dir / "metrics.csv");
    f << "id,S_alpha,E_phi,F_w_beta,MAE\n";
    for (const auto* im : [&] {
           std::vector<const ImageScores*> rows;
           for (const auto& r : report.images) rows.push_back(&r);
           rows.push_back(&report.mean);
           return rows;
         }()) {
      f << im->id << ',' << fmt(im->s_alpha) << ',' << fmt(im->e_phi) << ',' << fmt(im->f_w_beta)
        << ',' << fmt(im->mae) << '\n';
    }
  }
  {
    auto f = open_out(dir / "pr.csv");
    f << "threshold,precision,recall\n";
    for (std::size_t k = 0; k < kThresholds; ++k) {
      f << fmt(threshold(k)) << ',' << fmt(report.pr.precision[k]) << ',' << fmt(report.pr.recall[k])
        << '\n';
    }
  }
  {
    auto f = open_out(dir / "pr.svg");
    const double size = 400, pad = 40;
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\">\n"
      << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << size << "\" height=\"" << size
      << "\" fill=\"none\" stroke=\"black\"/>\n"
      << "<text x=\"240\" y=\"470\" text-anchor=\"middle\">recall</text>\n"
      << "<text x=\"12\" y=\"240\" transform=\"rotate(-90 12 240)\" text-anchor=\"middle\">precision</text>\n"
      << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < kThresholds; ++k) {
      f << fmt(pad + size * report.pr.recall[k]) << ',' << fmt(pad + size * (1.0 - report.pr.precision[k]))
        << (k + 1 < kThresholds ? " " : "");
    }
    f << "\"/>\n</svg>\n";
  }
}

}  // namespace ditcod::metrics
