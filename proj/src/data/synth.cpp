#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "ditcod/data.hpp"
#include "ditcod/errors.hpp"
#include "ditcod/image_io.hpp"
#include "ditcod/nn.hpp"

namespace ditcod {

std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::Ellipse: return "ellipse";
    case ShapeFamily::Blob: return "blob";
    case ShapeFamily::Mixed: return "mixed";
  }
  return "?";
}

ShapeFamily parse_shape_family(const std::string& s) {
  if (s == "ellipse") return ShapeFamily::Ellipse;
  if (s == "blob") return ShapeFamily::Blob;
  if (s == "mixed") return ShapeFamily::Mixed;
  throw ValueError("unknown shape family '" + s + "' (ellipse, blob, mixed)");
}

void SynthConfig::validate() const {
  if (!(delta > 0.0 && delta <= 0.2)) {
    throw ValueError("contrast delta must lie in (0, 0.2]; 0 makes the object invisible");
  }
  if (n_samples == 0) throw ValueError("n_samples must be >= 1");
  if (image_size < 8) throw ValueError("image_size must be >= 8");
  if (octaves == 0) throw ValueError("octaves must be >= 1");
  if (!(base_frequency >= 1.0)) throw ValueError("base_frequency must be >= 1");
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"n_samples", c.n_samples}, {"image_size", c.image_size},
          {"octaves", c.octaves},     {"base_frequency", c.base_frequency},
          {"delta", c.delta},         {"shapes", to_string(c.shapes)},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "n_samples") c.n_samples = v.get<std::size_t>();
    else if (k == "image_size") c.image_size = v.get<std::size_t>();
    else if (k == "octaves") c.octaves = v.get<std::size_t>();
    else if (k == "base_frequency") c.base_frequency = v.get<double>();
    else if (k == "delta") c.delta = v.get<double>();
    else if (k == "shapes") c.shapes = parse_shape_family(v.get<std::string>());
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else throw ValueError("unknown data config key '" + k + "'");
  }
  c.validate();
  return c;
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::string sample_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return buf;
}

double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

namespace {

// Value noise: random lattice values, smoothstep-interpolated.
std::vector<double> value_noise(Rng& rng, std::size_t size, double cells) {
  const std::size_t n = static_cast<std::size_t>(std::ceil(cells)) + 2;
  std::vector<double> lattice(n * n);
  for (double& v : lattice) v = uniform(rng, -1.0, 1.0);
  const double ox = uniform(rng, 0.0, 1.0), oy = uniform(rng, 0.0, 1.0);
  std::vector<double> out(size * size);
  const auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double fx = (x + 0.5) / size * cells + ox, fy = (y + 0.5) / size * cells + oy;
      const auto ix = static_cast<std::size_t>(fx), iy = static_cast<std::size_t>(fy);
      const double tx = smooth(fx - ix), ty = smooth(fy - iy);
      const double a = lattice[iy * n + ix], b = lattice[iy * n + ix + 1];
      const double c = lattice[(iy + 1) * n + ix], d = lattice[(iy + 1) * n + ix + 1];
      out[y * size + x] = (a + (b - a) * tx) * (1 - ty) + (c + (d - c) * tx) * ty;
    }
  return out;
}

// Octaves from base_frequency upward with amplitude 1/2 per octave; the coarsest
// band is excluded by construction, so the texture is band-limited on both ends.
std::vector<double> texture(Rng& rng, const SynthConfig& cfg) {
  const std::size_t s = cfg.image_size;
  std::vector<double> t(s * s, 0.0);
  double amp = 1.0, norm = 0.0, freq = cfg.base_frequency;
  for (std::size_t o = 0; o < cfg.octaves; ++o) {
    const auto layer = value_noise(rng, s, freq);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += amp * layer[i];
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  for (double& v : t) v /= norm;  // roughly [-1, 1]
  return t;
}

std::vector<double> ellipse_mask(Rng& rng, std::size_t s) {
  const double area = uniform(rng, 0.05, 0.4) * s * s;
  const double aspect = uniform(rng, 0.5, 2.0);
  const double a = std::sqrt(area * aspect / std::numbers::pi), b = area / (std::numbers::pi * a);
  const double theta = uniform(rng, 0.0, std::numbers::pi);
  const double cx = uniform(rng, 0.3, 0.7) * s, cy = uniform(rng, 0.3, 0.7) * s;
  const double ct = std::cos(theta), st = std::sin(theta);
  std::vector<double> m(s * s, 0.0);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double u = (dx * ct + dy * st) / a, v = (-dx * st + dy * ct) / b;
      if (u * u + v * v <= 1.0) m[y * s + x] = 1.0;
    }
  return m;
}

// Star-shaped polygon whose radii follow a closed log-normal random walk.
std::vector<double> blob_mask(Rng& rng, std::size_t s) {
  constexpr std::size_t kVertices = 14;
  const double r0 = uniform(rng, 0.15, 0.32) * s;
  std::vector<double> lr(kVertices);
  double acc = 0.0;
  for (double& v : lr) {
    acc += uniform(rng, -0.35, 0.35);
    v = acc;
  }
  // Remove the drift so the walk closes.
  for (std::size_t i = 0; i < kVertices; ++i) lr[i] -= acc * static_cast<double>(i + 1) / kVertices;
  const double cx = uniform(rng, 0.35, 0.65) * s, cy = uniform(rng, 0.35, 0.65) * s;
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  std::vector<double> px(kVertices), py(kVertices);
  for (std::size_t i = 0; i < kVertices; ++i) {
    const double ang = phase + 2.0 * std::numbers::pi * i / kVertices;
    const double r = std::clamp(r0 * std::exp(lr[i]), 0.05 * s, 0.48 * s);
    px[i] = cx + r * std::cos(ang);
    py[i] = cy + r * std::sin(ang);
  }
  std::vector<double> m(s * s, 0.0);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const double qx = x + 0.5, qy = y + 0.5;
      bool inside = false;
      for (std::size_t i = 0, j = kVertices - 1; i < kVertices; j = i++) {
        if ((py[i] > qy) != (py[j] > qy) &&
            qx < (px[j] - px[i]) * (qy - py[i]) / (py[j] - py[i]) + px[i]) {
          inside = !inside;
        }
      }
      if (inside) m[y * s + x] = 1.0;
    }
  return m;
}

}  // namespace

Sample synth_sample(const SynthConfig& cfg, std::size_t index) {
  cfg.validate();
  Rng rng(mix_seed(mix_seed(cfg.seed) ^ index));
  const std::size_t s = cfg.image_size, n = s * s;

  std::vector<double> mask;
  for (int attempt = 0;; ++attempt) {
    const bool blob = cfg.shapes == ShapeFamily::Blob ||
                      (cfg.shapes == ShapeFamily::Mixed && (rng() & 1u));
    mask = blob ? blob_mask(rng, s) : ellipse_mask(rng, s);
    double area = 0.0;
    for (double v : mask) area += v;
    area /= static_cast<double>(n);
    if (area >= 0.02 && area <= 0.6) break;
    if (attempt == 100) throw NumericalError("synth: no shape within the area bounds");
  }

  // One texture for the whole image; the object is the same texture shifted by +-delta.
  const auto tex = texture(rng, cfg);
  const double sign = (rng() & 1u) ? 1.0 : -1.0;
  double tint[3];
  for (double& c : tint) c = uniform(rng, 0.35, 0.65);
  const double contrast = uniform(rng, 0.18, 0.28);

  Sample out;
  out.id = sample_id(index);
  out.image = Tensor({3, s, s});
  out.gt = Tensor({1, s, s}, mask);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      const double v = tint[c] + contrast * tex[i] + sign * cfg.delta * mask[i];
      out.image[c * n + i] = std::clamp(v, 0.0, 1.0);
    }
  out.boundary = canny(out.gt);
  return out;
}

}  // namespace ditcod
