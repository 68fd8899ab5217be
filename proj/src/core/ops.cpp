#include "ditcod/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ditcod/errors.hpp"
#include "ditcod/tape.hpp"
#include "gemm.hpp"

namespace ditcod::ops {

namespace {

using detail::gemm;

// Records fn on the active tape when any input needs a gradient.
void record(std::vector<Tensor> inputs, Tensor out, BackwardFn fn) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return;
  out.set_requires_grad(true);
  tape->record(std::move(inputs), out, std::move(fn));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t lo, std::size_t hi, const char* op) {
  if (t.rank() < lo || t.rank() > hi) {
    throw ShapeError(std::string(op) + ": unsupported rank for shape " + shape_str(t.shape()));
  }
}

// Views an image tensor as (batch, channels, height, width).
struct ImageDims {
  std::size_t b, c, h, w;
};

ImageDims image_dims(const Tensor& x, const char* op) {
  require_rank(x, 3, 4, op);
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
}

Shape image_shape(const Tensor& like, std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
  if (like.rank() == 3) return {c, h, w};
  return {b, c, h, w};
}

template <class Fwd, class Bwd>
Tensor unary(const Tensor& x, Fwd fwd, Bwd dfdx) {
  Tensor out(x.shape());
  const double* xp = x.ptr();
  double* op = out.mutable_ptr();
  for (std::size_t i = 0; i < x.numel(); ++i) op[i] = fwd(xp[i]);
  record({x}, out, [x, out, dfdx](std::span<const double> g, Tape& tape) {
    auto gx = tape.grad_buffer(x);
    const double* xp = x.ptr();
    const double* yp = out.ptr();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * dfdx(xp[i], yp[i]);
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  record({a, b}, out, [a, b](std::span<const double> g, Tape& tape) {
    for (const Tensor* t : {&a, &b}) {
      auto gt = tape.grad_buffer(*t);
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
    }
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] - b[i];
  record({a, b}, out, [a, b](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    auto gb = tape.grad_buffer(b);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
  });
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  record({a, b}, out, [a, b](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * b[i];
    auto gb = tape.grad_buffer(b);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a[i];
  });
  return out;
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  record({x}, out, [x](std::span<const double> g, Tape& tape) {
    auto gx = tape.grad_buffer(x);
    for (double& v : gx) v += g[0];
  });
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor weighted_sum(const Tensor& x, const Tensor& w) {
  require_same_shape(x, w, "weighted_sum");
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x[i] * w[i];
  Tensor out = Tensor::scalar(s);
  record({x}, out, [x, w](std::span<const double> g, Tape& tape) {
    auto gx = tape.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * w[i];
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  gemm(false, false, m, n, k, a.ptr(), b.ptr(), out.mutable_ptr(), false);
  record({a, b}, out, [a, b, m, n, k](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_buffer(a);
    if (!ga.empty()) gemm(false, true, m, k, n, g.data(), b.ptr(), ga.data(), true);
    auto gb = tape.grad_buffer(b);
    if (!gb.empty()) gemm(true, false, k, n, m, a.ptr(), g.data(), gb.data(), true);
  });
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != (transpose_b ? b.dim(2) : b.dim(1))) {
    throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + (transpose_b ? " (transposed)" : ""));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  Tensor out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(false, transpose_b, m, n, k, a.ptr() + i * m * k, b.ptr() + i * k * n,
         out.mutable_ptr() + i * m * n, false);
  }
  record({a, b}, out, [a, b, batch, m, n, k, transpose_b](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_buffer(a);
    auto gb = tape.grad_buffer(b);
    for (std::size_t i = 0; i < batch; ++i) {
      const double* gi = g.data() + i * m * n;
      const double* bi = b.ptr() + i * k * n;
      const double* ai = a.ptr() + i * m * k;
      if (!ga.empty()) {
        // dA = dC * op(B)^T
        gemm(false, !transpose_b, m, k, n, gi, bi, ga.data() + i * m * k, true);
      }
      if (!gb.empty()) {
        if (transpose_b) {
          // B stored [n,k]: dB = dC^T * A
          gemm(true, false, n, k, m, gi, ai, gb.data() + i * k * n, true);
        } else {
          gemm(true, false, k, n, m, ai, gi, gb.data() + i * k * n, true);
        }
      }
    }
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  }
  const bool has_bias = bias.numel() > 0;
  const std::size_t in = w.dim(0), outw = w.dim(1), rows = x.numel() / in;
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != outw)) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match width " +
                     std::to_string(outw));
  }
  Shape shape = x.shape();
  shape.back() = outw;
  Tensor out(shape);
  gemm(false, false, rows, outw, in, x.ptr(), w.ptr(), out.mutable_ptr(), false);
  if (has_bias) {
    double* op = out.mutable_ptr();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < outw; ++j) op[r * outw + j] += bias[j];
  }
  std::vector<Tensor> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  record(std::move(inputs), out,
         [x, w, bias, has_bias, rows, in, outw](std::span<const double> g, Tape& tape) {
           auto gx = tape.grad_buffer(x);
           if (!gx.empty()) gemm(false, true, rows, in, outw, g.data(), w.ptr(), gx.data(), true);
           auto gw = tape.grad_buffer(w);
           if (!gw.empty()) gemm(true, false, in, outw, rows, x.ptr(), g.data(), gw.data(), true);
           if (has_bias) {
             auto gb = tape.grad_buffer(bias);
             for (std::size_t r = 0; r < rows && !gb.empty(); ++r)
               for (std::size_t j = 0; j < outw; ++j) gb[j] += g[r * outw + j];
           }
         });
  return out;
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ValueError("conv2d: stride must be positive");
  if (in + 2 * pad < kernel) {
    throw ShapeError("conv2d: kernel " + std::to_string(kernel) + " exceeds padded extent " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace {

struct ConvGeom {
  std::size_t cin_g, h, w, k, stride, pad, ho, wo;
};

// Unrolls one group of one image into col[cin_g*k*k, ho*wo].
void im2col(const double* x, const ConvGeom& g, double* col) {
  const std::size_t hw_out = g.ho * g.wo;
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    const double* xc = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((c * g.k + ky) * g.k + kx) * hw_out;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeom& g, double* x) {
  const std::size_t hw_out = g.ho * g.wo;
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    double* xc = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((c * g.k + ky) * g.k + kx) * hw_out;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = xc + static_cast<std::size_t>(iy) * g.w;
          const double* src = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dOptions opt) {
  const auto d = image_dims(x, "conv2d");
  if (w.rank() != 4 || w.dim(2) != w.dim(3)) {
    throw ShapeError("conv2d: weight must be [C_out, C_in/groups, k, k], got " +
                     shape_str(w.shape()));
  }
  const std::size_t groups = opt.groups;
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (groups == 0 || d.c % groups != 0 || cout % groups != 0 || w.dim(1) * groups != d.c) {
    throw ShapeError("conv2d: channel mismatch, input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(w.shape()) + " with groups=" + std::to_string(groups));
  }
  const bool has_bias = bias.numel() > 0;
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match C_out " +
                     std::to_string(cout));
  }
  const ConvGeom geom{d.c / groups,
                      d.h,
                      d.w,
                      k,
                      opt.stride,
                      opt.pad,
                      conv_out_extent(d.h, k, opt.stride, opt.pad),
                      conv_out_extent(d.w, k, opt.stride, opt.pad)};
  const std::size_t cout_g = cout / groups;
  const std::size_t kk = geom.cin_g * k * k;
  const std::size_t hw_out = geom.ho * geom.wo;
  const std::size_t in_plane = d.h * d.w;

  Tensor out(image_shape(x, d.b, cout, geom.ho, geom.wo));
  std::vector<double> col(kk * hw_out);
  for (std::size_t b = 0; b < d.b; ++b) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      im2col(x.ptr() + (b * d.c + gi * geom.cin_g) * in_plane, geom, col.data());
      double* o = out.mutable_ptr() + (b * cout + gi * cout_g) * hw_out;
      gemm(false, false, cout_g, hw_out, kk, w.ptr() + gi * cout_g * kk, col.data(), o, false);
      if (has_bias) {
        for (std::size_t c = 0; c < cout_g; ++c)
          for (std::size_t p = 0; p < hw_out; ++p) o[c * hw_out + p] += bias[gi * cout_g + c];
      }
    }
  }

  std::vector<Tensor> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  record(std::move(inputs), out,
         [x, w, bias, has_bias, d, geom, groups, cout, cout_g, kk, hw_out, in_plane](
             std::span<const double> g, Tape& tape) {
           auto gx = tape.grad_buffer(x);
           auto gw = tape.grad_buffer(w);
           std::vector<double> col(kk * hw_out);
           std::vector<double> dcol(gx.empty() ? 0 : kk * hw_out);
           for (std::size_t b = 0; b < d.b; ++b) {
             for (std::size_t gi = 0; gi < groups; ++gi) {
               const double* go = g.data() + (b * cout + gi * cout_g) * hw_out;
               const double* wg = w.ptr() + gi * cout_g * kk;
               const std::size_t xoff = (b * d.c + gi * geom.cin_g) * in_plane;
               if (!gw.empty()) {
                 im2col(x.ptr() + xoff, geom, col.data());
                 gemm(false, true, cout_g, kk, hw_out, go, col.data(), gw.data() + gi * cout_g * kk,
                      true);
               }
               if (!gx.empty()) {
                 gemm(true, false, kk, hw_out, cout_g, wg, go, dcol.data(), false);
                 col2im_add(dcol.data(), geom, gx.data() + xoff);
               }
             }
           }
           if (has_bias) {
             auto gb = tape.grad_buffer(bias);
             for (std::size_t b = 0; b < d.b && !gb.empty(); ++b)
               for (std::size_t c = 0; c < cout; ++c) {
                 const double* go = g.data() + (b * cout + c) * hw_out;
                 double s = 0.0;
                 for (std::size_t p = 0; p < hw_out; ++p) s += go[p];
                 gb[c] += s;
               }
           }
         });
  return out;
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                   Tensor& running_var, bool training, double momentum, double eps) {
  const auto d = image_dims(x, "batchnorm2d");
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    if (t->rank() != 1 || t->dim(0) != d.c) {
      throw ShapeError("batchnorm2d: parameter " + shape_str(t->shape()) +
                       " does not match channels of " + shape_str(x.shape()));
    }
  }
  const std::size_t plane = d.h * d.w;
  const std::size_t count = d.b * plane;
  std::vector<double> mu(d.c), invstd(d.c);
  for (std::size_t c = 0; c < d.c; ++c) {
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < d.b; ++b) {
        const double* p = x.ptr() + (b * d.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t b = 0; b < d.b; ++b) {
        const double* p = x.ptr() + (b * d.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const double var = v / static_cast<double>(count);
      mu[c] = m;
      invstd[c] = 1.0 / std::sqrt(var + eps);
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * m;
      if (count > 1) {
        const double unbiased = v / static_cast<double>(count - 1);
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * unbiased;
      }
    } else {
      mu[c] = running_mean[c];
      invstd[c] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  }
  Tensor xhat(x.shape());
  Tensor out(x.shape());
  for (std::size_t b = 0; b < d.b; ++b)
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t off = (b * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (x[off + i] - mu[c]) * invstd[c];
        xhat[off + i] = xh;
        out[off + i] = gamma[c] * xh + beta[c];
      }
    }
  record({x, gamma, beta}, out,
         [x, gamma, beta, xhat, invstd, d, plane, count, training](std::span<const double> g,
                                                                    Tape& tape) {
           auto gx = tape.grad_buffer(x);
           auto gg = tape.grad_buffer(gamma);
           auto gbeta = tape.grad_buffer(beta);
           for (std::size_t c = 0; c < d.c; ++c) {
             double sum_g = 0.0, sum_gx = 0.0;
             for (std::size_t b = 0; b < d.b; ++b) {
               const std::size_t off = (b * d.c + c) * plane;
               for (std::size_t i = 0; i < plane; ++i) {
                 sum_g += g[off + i];
                 sum_gx += g[off + i] * xhat[off + i];
               }
             }
             if (!gg.empty()) gg[c] += sum_gx;
             if (!gbeta.empty()) gbeta[c] += sum_g;
             if (gx.empty()) continue;
             const double gm = gamma[c] * invstd[c];
             const double n = static_cast<double>(count);
             for (std::size_t b = 0; b < d.b; ++b) {
               const std::size_t off = (b * d.c + c) * plane;
               for (std::size_t i = 0; i < plane; ++i) {
                 if (training) {
                   gx[off + i] += gm * (g[off + i] - sum_g / n - xhat[off + i] * sum_gx / n);
                 } else {
                   gx[off + i] += gm * g[off + i];
                 }
               }
             }
           }
         });
  return out;
}

Tensor layernorm(const Tensor& z, const Tensor& gamma, const Tensor& beta, double eps) {
  if (z.rank() < 1) throw ShapeError("layernorm: scalar input");
  const std::size_t dim = z.shape().back();
  if (dim < 2) throw ShapeError("layernorm: normalized width must be >= 2");
  if (gamma.shape() != Shape{dim} || beta.shape() != Shape{dim}) {
    throw ShapeError("layernorm: affine parameters must be [" + std::to_string(dim) + "], got " +
                     shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  }
  const std::size_t rows = z.numel() / dim;
  Tensor xhat(z.shape());
  Tensor out(z.shape());
  std::vector<double> invstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = z.ptr() + r * dim;
    double m = 0.0;
    for (std::size_t j = 0; j < dim; ++j) m += p[j];
    m /= static_cast<double>(dim);
    double v = 0.0;
    for (std::size_t j = 0; j < dim; ++j) v += (p[j] - m) * (p[j] - m);
    v /= static_cast<double>(dim);
    invstd[r] = 1.0 / std::sqrt(v + eps);
    for (std::size_t j = 0; j < dim; ++j) {
      const double xh = (p[j] - m) * invstd[r];
      xhat[r * dim + j] = xh;
      out[r * dim + j] = gamma[j] * xh + beta[j];
    }
  }
  record({z, gamma, beta}, out,
         [z, gamma, beta, xhat, invstd, rows, dim](std::span<const double> g, Tape& tape) {
           auto gz = tape.grad_buffer(z);
           auto gg = tape.grad_buffer(gamma);
           auto gb = tape.grad_buffer(beta);
           std::vector<double> dxh(dim);
           const double n = static_cast<double>(dim);
           for (std::size_t r = 0; r < rows; ++r) {
             double s1 = 0.0, s2 = 0.0;
             for (std::size_t j = 0; j < dim; ++j) {
               const double gj = g[r * dim + j];
               if (!gg.empty()) gg[j] += gj * xhat[r * dim + j];
               if (!gb.empty()) gb[j] += gj;
               dxh[j] = gj * gamma[j];
               s1 += dxh[j];
               s2 += dxh[j] * xhat[r * dim + j];
             }
             if (gz.empty()) continue;
             for (std::size_t j = 0; j < dim; ++j) {
               gz[r * dim + j] += invstd[r] * (dxh[j] - s1 / n - xhat[r * dim + j] * s2 / n);
             }
           }
         });
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  if (a.rank() < 1) throw ShapeError("softmax_rows: scalar input");
  const std::size_t cols = a.shape().back();
  const std::size_t rows = a.numel() / cols;
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = a.ptr() + r * cols;
    double* o = out.mutable_ptr() + r * cols;
    const double mx = *std::max_element(p, p + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      o[j] = std::exp(p[j] - mx);
      s += o[j];
    }
    for (std::size_t j = 0; j < cols; ++j) o[j] /= s;
  }
  record({a}, out, [a, out, rows, cols](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_buffer(a);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = out.ptr() + r * cols;
      const double* gr = g.data() + r * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * y[j];
      for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] += y[j] * (gr[j] - dot);
    }
  });
  return out;
}

namespace {

// Source taps for one output coordinate under align_corners=false.
struct Taps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

Taps bilinear_taps(std::size_t in, std::size_t out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    t.lo[o] = i0;
    t.hi[o] = std::min(i0 + 1, in - 1);
    t.frac[o] = src - static_cast<double>(i0);
  }
  return t;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::size_t factor) {
  if (factor < 1) throw ValueError("upsample_bilinear: factor must be >= 1");
  if (x.rank() < 2) throw ShapeError("upsample_bilinear: need at least 2 axes");
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  const std::size_t ho = h * factor, wo = w * factor;
  const std::size_t planes = x.numel() / (h * w);
  Shape shape = x.shape();
  shape[shape.size() - 2] = ho;
  shape[shape.size() - 1] = wo;
  Tensor out(shape);
  if (factor == 1) {
    std::copy(x.data().begin(), x.data().end(), out.mutable_data().begin());
  } else {
    const Taps ty = bilinear_taps(h, ho), tx = bilinear_taps(w, wo);
    for (std::size_t p = 0; p < planes; ++p) {
      const double* src = x.ptr() + p * h * w;
      double* dst = out.mutable_ptr() + p * ho * wo;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const double* r0 = src + ty.lo[oy] * w;
        const double* r1 = src + ty.hi[oy] * w;
        const double fy = ty.frac[oy];
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const double fx = tx.frac[ox];
          // Difference form keeps constant inputs exactly constant.
          const double top = r0[tx.lo[ox]] + fx * (r0[tx.hi[ox]] - r0[tx.lo[ox]]);
          const double bot = r1[tx.lo[ox]] + fx * (r1[tx.hi[ox]] - r1[tx.lo[ox]]);
          dst[oy * wo + ox] = top + fy * (bot - top);
        }
      }
    }
  }
  record({x}, out, [x, h, w, ho, wo, planes, factor](std::span<const double> g, Tape& tape) {
    auto gx = tape.grad_buffer(x);
    if (factor == 1) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
      return;
    }
    const Taps ty = bilinear_taps(h, ho), tx = bilinear_taps(w, wo);
    for (std::size_t p = 0; p < planes; ++p) {
      double* dst = gx.data() + p * h * w;
      const double* gp = g.data() + p * ho * wo;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const double fy = ty.frac[oy];
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const double fx = tx.frac[ox];
          const double v = gp[oy * wo + ox];
          dst[ty.lo[oy] * w + tx.lo[ox]] += v * (1.0 - fy) * (1.0 - fx);
          dst[ty.lo[oy] * w + tx.hi[ox]] += v * (1.0 - fy) * fx;
          dst[ty.hi[oy] * w + tx.lo[ox]] += v * fy * (1.0 - fx);
          dst[ty.hi[oy] * w + tx.hi[ox]] += v * fy * fx;
        }
      }
    }
  });
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank() || axis >= a.rank()) {
    throw ShapeError("concat: cannot join " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " on axis " + std::to_string(axis));
  }
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) {
      throw ShapeError("concat: mismatched extents " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " on axis " + std::to_string(axis));
    }
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t na = a.dim(axis) * inner, nb = b.dim(axis) * inner;
  Shape shape = a.shape();
  shape[axis] += b.dim(axis);
  Tensor out(shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.ptr() + o * na, na, out.mutable_ptr() + o * (na + nb));
    std::copy_n(b.ptr() + o * nb, nb, out.mutable_ptr() + o * (na + nb) + na);
  }
  record({a, b}, out, [a, b, outer, na, nb](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_buffer(a);
    auto gb = tape.grad_buffer(b);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = g.data() + o * (na + nb);
      if (!ga.empty())
        for (std::size_t i = 0; i < na; ++i) ga[o * na + i] += src[i];
      if (!gb.empty())
        for (std::size_t i = 0; i < nb; ++i) gb[o * nb + i] += src[na + i];
    }
  });
  return out;
}

Tensor concat_channel(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, 4, "concat_channel");
  return concat(a, b, a.rank() - 3);
}

Tensor concat_patch(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, 3, "concat_patch");
  return concat(a, b, a.rank() - 2);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.rank() || begin >= end || end > a.dim(axis)) {
    throw ShapeError("slice: invalid range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  Shape shape = a.shape();
  shape[axis] = end - begin;
  std::vector<std::size_t> index;
  index.reserve(shape_numel(shape));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t s = begin; s < end; ++s)
      for (std::size_t i = 0; i < inner; ++i) index.push_back((o * a.dim(axis) + s) * inner + i);
  return gather(a, std::move(shape), std::move(index));
}

Tensor gather(const Tensor& a, Shape out_shape, std::vector<std::size_t> index) {
  if (index.size() != shape_numel(out_shape)) {
    throw ShapeError("gather: index length does not match " + shape_str(out_shape));
  }
  Tensor out(std::move(out_shape));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= a.numel()) throw ShapeError("gather: index out of range");
    out[i] = a[index[i]];
  }
  record({a}, out, [a, index = std::move(index)](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < index.size(); ++i) ga[index[i]] += g[i];
  });
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  record({a}, out, [a](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
  });
  return out;
}

Tensor tokens_from_grid(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("tokens_from_grid: expected [B,C,H,W], got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<std::size_t> index(x.numel());
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) index[(n * hw + p) * c + ch] = (n * c + ch) * hw + p;
  return gather(x, {b, hw, c}, std::move(index));
}

Tensor grid_from_tokens(const Tensor& z, std::size_t h, std::size_t w) {
  if (z.rank() != 3 || z.dim(1) != h * w) {
    throw ShapeError("grid_from_tokens: " + shape_str(z.shape()) + " is not a " +
                     std::to_string(h) + "x" + std::to_string(w) + " token grid");
  }
  const std::size_t b = z.dim(0), c = z.dim(2), hw = h * w;
  std::vector<std::size_t> index(z.numel());
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) index[(n * c + ch) * hw + p] = (n * hw + p) * c + ch;
  return gather(z, {b, c, h, w}, std::move(index));
}

Tensor patchify(const Tensor& x, std::size_t patch) {
  if (x.rank() != 4) throw ShapeError("patchify: expected [B,C,H,W], got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ShapeError("patchify: patch size " + std::to_string(patch) + " does not divide " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t gh = h / patch, gw = w / patch, n = gh * gw, pd = patch * patch * c;
  std::vector<std::size_t> index(x.numel());
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t py = 0; py < gh; ++py)
      for (std::size_t px = 0; px < gw; ++px) {
        const std::size_t tok = py * gw + px;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t dy = 0; dy < patch; ++dy)
            for (std::size_t dx = 0; dx < patch; ++dx) {
              const std::size_t dst = (bi * n + tok) * pd + (ch * patch + dy) * patch + dx;
              index[dst] = ((bi * c + ch) * h + py * patch + dy) * w + px * patch + dx;
            }
      }
  return gather(x, {b, n, pd}, std::move(index));
}

Tensor split_heads(const Tensor& z, std::size_t heads) {
  if (z.rank() != 3 || heads == 0 || z.dim(2) % heads != 0) {
    throw ShapeError("split_heads: width of " + shape_str(z.shape()) + " not divisible by " +
                     std::to_string(heads));
  }
  const std::size_t b = z.dim(0), n = z.dim(1), dm = z.dim(2), dh = dm / heads;
  std::vector<std::size_t> index(z.numel());
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t hi = 0; hi < heads; ++hi)
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < dh; ++j)
          index[((bi * heads + hi) * n + t) * dh + j] = (bi * n + t) * dm + hi * dh + j;
  return gather(z, {b * heads, n, dh}, std::move(index));
}

Tensor merge_heads(const Tensor& z, std::size_t heads) {
  if (z.rank() != 3 || heads == 0 || z.dim(0) % heads != 0) {
    throw ShapeError("merge_heads: batch of " + shape_str(z.shape()) + " not divisible by " +
                     std::to_string(heads));
  }
  const std::size_t b = z.dim(0) / heads, n = z.dim(1), dh = z.dim(2), dm = dh * heads;
  std::vector<std::size_t> index(z.numel());
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t hi = 0; hi < heads; ++hi)
        for (std::size_t j = 0; j < dh; ++j)
          index[(bi * n + t) * dm + hi * dh + j] = ((bi * heads + hi) * n + t) * dh + j;
  return gather(z, {b, n, dm}, std::move(index));
}

}  // namespace ditcod::ops
