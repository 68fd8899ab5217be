#include "ditcod/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ditcod/errors.hpp"
#include "ditcod/tape.hpp"

namespace ditcod {

namespace {

struct MapDims {
  std::size_t batch, h, w;
};

MapDims map_dims(const Tensor& t, const char* op) {
  if (t.rank() == 3 && t.dim(0) == 1) return {1, t.dim(1), t.dim(2)};
  if (t.rank() == 4 && t.dim(1) == 1) return {t.dim(0), t.dim(2), t.dim(3)};
  throw ShapeError(std::string(op) + ": expected [B,1,H,W] or [1,H,W], got " +
                   shape_str(t.shape()));
}

MapDims check_pair(const Tensor& pred, const Tensor& gt, const char* op) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError(std::string(op) + ": prediction " + shape_str(pred.shape()) +
                     " vs target " + shape_str(gt.shape()));
  }
  return map_dims(pred, op);
}

void require_binary(const Tensor& gt, const char* op) {
  for (double v : gt.data()) {
    if (v != 0.0 && v != 1.0) throw ValueError(std::string(op) + ": target must be binary");
  }
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double bce(double p, double g) {
  const double pc = clamp_prob(p);
  return -(g * std::log(pc) + (1.0 - g) * std::log(1.0 - pc));
}

// d bce / d p; zero where the clamp is active.
double bce_grad(double p, double g) {
  if (p < kProbClamp || p > 1.0 - kProbClamp) return 0.0;
  return (p - g) / (p * (1.0 - p));
}

using LossGrad = std::function<void(double, std::span<double>)>;

void record_loss(const Tensor& pred, const Tensor& out, LossGrad grad) {
  Tape* tape = Tape::active();
  if (tape == nullptr || !pred.requires_grad()) return;
  Tensor o = out;
  o.set_requires_grad(true);
  tape->record({pred}, o, [pred, grad = std::move(grad)](std::span<const double> g, Tape& t) {
    grad(g[0], t.grad_buffer(pred));
  });
}

}  // namespace

Tensor ppa_weight(const Tensor& gt, std::size_t pool) {
  if (pool % 2 == 0) throw ValueError("ppa pool window must be odd");
  const MapDims d = map_dims(gt, "ppa_weight");
  const std::size_t plane = d.h * d.w;
  const long r = static_cast<long>(pool / 2);
  const long H = static_cast<long>(d.h), W = static_cast<long>(d.w);
  const double area = static_cast<double>(pool * pool);
  Tensor w(gt.shape());
  // Summed-area table per map; the pool reads zeros outside the image.
  std::vector<double> sat((d.h + 1) * (d.w + 1));
  const auto at = [&](long yy, long xx) -> double& { return sat[yy * (W + 1) + xx]; };
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* g = gt.ptr() + b * plane;
    std::fill(sat.begin(), sat.end(), 0.0);
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x)
        at(y + 1, x + 1) = g[y * W + x] + at(y, x + 1) + at(y + 1, x) - at(y, x);
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        const long y0 = std::max(0L, y - r), y1 = std::min(H, y + r + 1);
        const long x0 = std::max(0L, x - r), x1 = std::min(W, x + r + 1);
        const double s = at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0);
        w[b * plane + y * W + x] = 1.0 + 5.0 * std::abs(s / area - g[y * W + x]);
      }
  }
  return w;
}

Tensor ppa_loss(const Tensor& pred, const Tensor& gt, std::size_t pool) {
  const MapDims d = check_pair(pred, gt, "ppa_loss");
  require_binary(gt, "ppa_loss");
  const Tensor weight = ppa_weight(gt, pool);
  const std::size_t plane = d.h * d.w;
  std::vector<double> wsum(d.batch), inter(d.batch), uni(d.batch);
  double loss = 0.0;
  for (std::size_t b = 0; b < d.batch; ++b) {
    double sw = 0, swb = 0, si = 0, su = 0;
    for (std::size_t i = b * plane; i < (b + 1) * plane; ++i) {
      const double w = weight[i], p = pred[i], g = gt[i];
      sw += w;
      swb += w * bce(p, g);
      si += w * p * g;
      su += w * (p + g);
    }
    wsum[b] = sw;
    inter[b] = si + 1.0;
    uni[b] = su - si + 1.0;
    loss += swb / sw + 1.0 - inter[b] / uni[b];
  }
  const double inv_b = 1.0 / static_cast<double>(d.batch);
  Tensor out = Tensor::scalar(loss * inv_b);
  if (!std::isfinite(out[0])) throw NumericalError("ppa_loss is not finite");
  record_loss(pred, out, [=](double g0, std::span<double> gp) {
    const double s = g0 * inv_b;
    for (std::size_t b = 0; b < d.batch; ++b) {
      const double I = inter[b], U = uni[b];
      for (std::size_t i = b * plane; i < (b + 1) * plane; ++i) {
        const double w = weight[i], g = gt[i];
        const double dbce = w * bce_grad(pred[i], g) / wsum[b];
        const double diou = -(w * g * U - I * w * (1.0 - g)) / (U * U);
        gp[i] += s * (dbce + diou);
      }
    }
  });
  return out;
}

Tensor bce_loss(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt, "bce_loss");
  const std::size_t n = pred.numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += bce(pred[i], gt[i]);
  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor out = Tensor::scalar(s * inv_n);
  if (!std::isfinite(out[0])) throw NumericalError("bce_loss is not finite");
  record_loss(pred, out, [=](double g0, std::span<double> gp) {
    for (std::size_t i = 0; i < n; ++i) gp[i] += g0 * inv_n * bce_grad(pred[i], gt[i]);
  });
  return out;
}

std::string LossReport::csv_header() {
  return "step,ppa_final,ce_final,ppa_fg,ppa_bg,ce_b1,ce_b2,ce_b3,ce_b4,total";
}

std::string LossReport::csv_row(std::size_t step) const {
  std::string row = std::to_string(step);
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    row += buf;
  };
  put(ppa_final_obj);
  put(ce_final_bnd);
  put(ppa_fg_stream);
  put(ppa_bg_stream);
  for (double v : ce_bnd_levels) put(v);
  put(total);
  return row;
}

LossTerms total_loss(const ModelOutput& out, const Tensor& gt, const Tensor& boundary,
                     std::size_t pool) {
  if (out.object.empty() || out.fg.empty()) {
    throw ValueError("total_loss: model output lacks the object map or the foreground head");
  }
  for (const auto& l : out.boundary_levels) {
    if (l.empty()) throw ValueError("total_loss: missing boundary level prediction");
  }
  LossTerms t;
  LossReport& r = t.report;
  Tensor total = ppa_loss(out.object, gt, pool);
  r.ppa_final_obj = total.item();
  if (!out.boundary.empty()) {
    const Tensor l = bce_loss(out.boundary, boundary);
    r.ce_final_bnd = l.item();
    total = ops::add(total, l);
  }
  {
    const Tensor l = ppa_loss(out.fg, gt, pool);
    r.ppa_fg_stream = l.item();
    total = ops::add(total, l);
  }
  if (!out.bg.empty()) {
    Tensor inv(gt.shape());
    for (std::size_t i = 0; i < gt.numel(); ++i) inv[i] = 1.0 - gt[i];
    const Tensor l = ppa_loss(out.bg, inv, pool);
    r.ppa_bg_stream = l.item();
    total = ops::add(total, l);
  }
  for (std::size_t i = 0; i < kLevels; ++i) {
    const Tensor l = bce_loss(out.boundary_levels[i], boundary);
    r.ce_bnd_levels[i] = l.item();
    total = ops::add(total, l);
  }
  r.total = total.item();
  t.total = total;
  return t;
}

std::size_t ppa_pool_for(std::size_t image_size) {
  return image_size >= 256 ? 31 : 15;
}

}  // namespace ditcod
