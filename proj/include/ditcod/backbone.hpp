#pragma once

#include <array>
#include <string>
#include <vector>

#include "ditcod/nn.hpp"

namespace ditcod {

inline constexpr std::size_t kLevels = 4;

/// Four-level hierarchical encoder layout. Level i has spatial stride
/// prod(strides[0..i]) relative to the input.
struct BackboneConfig {
  std::array<std::size_t, kLevels> channels{16, 32, 64, 128};
  std::array<std::size_t, kLevels> depths{1, 1, 1, 1};
  std::array<std::size_t, kLevels> kernels{7, 3, 3, 3};
  std::array<std::size_t, kLevels> strides{4, 2, 2, 2};
  std::array<std::size_t, kLevels> sr_ratios{8, 4, 2, 1};
  std::array<std::size_t, kLevels> heads{1, 2, 4, 8};
  std::size_t mlp_ratio = 4;
  std::size_t in_channels = 3;

  static BackboneConfig desk() { return {}; }
  /// Widths and depths of the MiT-B5 layout (random init; not trained at desk scale).
  static BackboneConfig mit_b5();

  /// Total downsampling factor of the last level.
  std::size_t total_stride() const;
  /// Throws ValueError unless strides multiply to 32, every kernel exceeds its stride
  /// and every width is divisible by its head count.
  void validate() const;
};

/// Four feature maps, [B, channels[i], H/s_i, W/s_i].
using FeaturePyramid = std::array<Tensor, kLevels>;

/// Multi-head self-attention whose keys and values come from a token grid
/// shrunk by a strided convolution (kernel = stride = ratio) followed by LN.
/// At ratio 1 there is no reduction and this is plain self-attention.
struct EfficientAttention {
  Linear q, k, v, proj;
  Conv sr;
  LayerNorm sr_norm;
  std::size_t heads = 1;
  std::size_t ratio = 1;

  static EfficientAttention create(ParamStore& store, const std::string& name, std::size_t dim,
                                   std::size_t heads, std::size_t ratio, Rng& rng);
  /// x: [B, h*w, D] tokens of an h x w grid.
  Tensor operator()(const Tensor& x, std::size_t h, std::size_t w) const;
};

/// fc1 -> 3x3 depthwise conv on the token grid -> GELU -> fc2.
struct MixFfn {
  Linear fc1, fc2;
  Conv dw;

  static MixFfn create(ParamStore& store, const std::string& name, std::size_t dim,
                       std::size_t hidden, Rng& rng);
  Tensor operator()(const Tensor& x, std::size_t h, std::size_t w) const;
};

/// Pre-norm residual block: x + attn(LN x), then x + ffn(LN x).
struct EncoderBlock {
  LayerNorm norm1, norm2;
  EfficientAttention attn;
  MixFfn ffn;

  static EncoderBlock create(ParamStore& store, const std::string& name, std::size_t dim,
                             std::size_t heads, std::size_t ratio, std::size_t mlp_ratio, Rng& rng);
  Tensor operator()(const Tensor& x, std::size_t h, std::size_t w) const;
};

/// Overlapping patch merge (strided conv + LN), blocks, output LN.
struct EncoderStage {
  Conv patch;
  LayerNorm patch_norm;
  std::vector<EncoderBlock> blocks;
  LayerNorm norm;

  static EncoderStage create(ParamStore& store, const std::string& name, std::size_t in,
                             std::size_t out, std::size_t kernel, std::size_t stride,
                             std::size_t depth, std::size_t heads, std::size_t ratio,
                             std::size_t mlp_ratio, Rng& rng);
  /// [B, C_in, H, W] -> [B, C_out, H', W'].
  Tensor operator()(const Tensor& x) const;
};

/// One stream of the twin encoder. Uses layer normalization only, so train and
/// eval forward passes agree.
class Encoder {
 public:
  /// Registers parameters as "<prefix>.stage{i}.*" (i = 1..4).
  static Encoder create(ParamStore& store, const std::string& prefix, const BackboneConfig& cfg,
                        Rng& rng);

  /// image: [B, C_in, H, W] with H, W divisible by the total stride.
  FeaturePyramid operator()(const Tensor& image) const;
  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  std::vector<EncoderStage> stages_;
};

/// 1x1 conv to one channel, bilinear upsample to the target size, sigmoid.
struct SaliencyHead {
  Conv conv;

  static SaliencyHead create(ParamStore& store, const std::string& name, std::size_t in, Rng& rng);
  /// f: [B, C, h, w]; target extents must be integer multiples of h and w (same factor).
  Tensor operator()(const Tensor& f, std::size_t target_h, std::size_t target_w) const;
};

/// Integer factor that maps (h, w) to (target_h, target_w); throws ShapeError otherwise.
std::size_t upsample_factor(std::size_t h, std::size_t w, std::size_t target_h,
                            std::size_t target_w);

}  // namespace ditcod
