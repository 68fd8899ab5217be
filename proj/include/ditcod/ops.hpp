#pragma once

#include <cstddef>
#include <vector>

#include "ditcod/tensor.hpp"

// Differentiable tensor operations. Each op computes its forward value eagerly
// and, when a tape is active and an input requires a gradient, records the
// matching backward rule. Image-like tensors are [C,H,W] or batched [B,C,H,W];
// token sequences are [N,D] or batched [B,N,D].
namespace ditcod::ops {

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Exact (erf) GELU.
Tensor gelu(const Tensor& x);

/// Sum of all elements, shape {1}.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum of x * w with w treated as a constant weight map, shape {1}.
Tensor weighted_sum(const Tensor& x, const Tensor& w);

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// [B,m,k] x [B,k,n] -> [B,m,n]; with transpose_b the right operand is [B,n,k].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
/// x[..., in] * w[in,out] + b[out]. bias may be an empty tensor.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t groups = 1;
};
/// Cross-correlation. w is [C_out, C_in/groups, k, k]; bias is [C_out] or empty.
/// Output extent is floor((H + 2*pad - k) / stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dOptions opt = {});
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

/// Per-channel batch normalization over all non-channel axes. In training mode
/// batch statistics are used and the running buffers are updated in place.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                   Tensor& running_var, bool training, double momentum = kBatchNormMomentum,
                   double eps = kNormEps);

/// Normalizes over the last axis, then applies gamma/beta.
Tensor layernorm(const Tensor& z, const Tensor& gamma, const Tensor& beta, double eps = kNormEps);

/// Softmax over the last axis, max-shifted.
Tensor softmax_rows(const Tensor& a);

/// Bilinear resize of the last two axes by an integer factor, align_corners=false.
Tensor upsample_bilinear(const Tensor& x, std::size_t factor);

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
/// Channel axis: 0 for [C,H,W], 1 for [B,C,H,W].
Tensor concat_channel(const Tensor& a, const Tensor& b);
/// Token axis: 0 for [N,D], 1 for [B,N,D]. Rows of a come first.
Tensor concat_patch(const Tensor& a, const Tensor& b);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);

/// out[i] = a[index[i]] for a flat index map; every layout permutation below is one of these.
Tensor gather(const Tensor& a, Shape out_shape, std::vector<std::size_t> index);
Tensor reshape(const Tensor& a, Shape shape);

/// [B,C,H,W] -> [B,H*W,C], tokens in row-major pixel order.
Tensor tokens_from_grid(const Tensor& x);
/// [B,N,C] -> [B,C,H,W] with N = H*W, inverse of tokens_from_grid.
Tensor grid_from_tokens(const Tensor& z, std::size_t h, std::size_t w);
/// [B,C,H,W] -> [B,N,P*P*C]: non-overlapping PxP patches in row-major order; a patch
/// vector is laid out channel-major, i.e. element (c, dy, dx) sits at c*P*P + dy*P + dx.
Tensor patchify(const Tensor& x, std::size_t patch);
/// [B,N,D] -> [B*h,N,D/h].
Tensor split_heads(const Tensor& z, std::size_t heads);
/// [B*h,N,d] -> [B,N,h*d].
Tensor merge_heads(const Tensor& z, std::size_t heads);

}  // namespace ditcod::ops
