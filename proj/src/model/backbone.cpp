#include "ditcod/backbone.hpp"

#include "ditcod/errors.hpp"

namespace ditcod {

BackboneConfig BackboneConfig::mit_b5() {
  BackboneConfig c;
  c.channels = {64, 128, 320, 512};
  c.depths = {3, 6, 40, 3};
  c.heads = {1, 2, 5, 8};
  return c;
}

std::size_t BackboneConfig::total_stride() const {
  std::size_t s = 1;
  for (std::size_t v : strides) s *= v;
  return s;
}

void BackboneConfig::validate() const {
  if (total_stride() != 32) throw ValueError("backbone strides must multiply to 32");
  for (std::size_t i = 0; i < kLevels; ++i) {
    if (kernels[i] <= strides[i]) {
      throw ValueError("backbone stage " + std::to_string(i + 1) +
                       ": patch kernel must exceed stride (overlapping patches)");
    }
    if (heads[i] == 0 || channels[i] % heads[i] != 0) {
      throw ValueError("backbone stage " + std::to_string(i + 1) +
                       ": width not divisible by head count");
    }
    if (depths[i] == 0 || sr_ratios[i] == 0) {
      throw ValueError("backbone depths and reduction ratios must be >= 1");
    }
  }
  if (mlp_ratio == 0 || in_channels == 0) {
    throw ValueError("backbone mlp_ratio and in_channels must be >= 1");
  }
}

EfficientAttention EfficientAttention::create(ParamStore& store, const std::string& name,
                                              std::size_t dim, std::size_t heads,
                                              std::size_t ratio, Rng& rng) {
  EfficientAttention a;
  a.heads = heads;
  a.ratio = ratio;
  a.q = Linear::create(store, name + ".q", dim, dim, rng);
  a.k = Linear::create(store, name + ".k", dim, dim, rng);
  a.v = Linear::create(store, name + ".v", dim, dim, rng);
  if (ratio > 1) {
    a.sr = Conv::create(store, name + ".sr", dim, dim, ratio, {ratio, 0, 1}, rng);
    a.sr_norm = LayerNorm::create(store, name + ".sr_norm", dim);
  }
  a.proj = Linear::create(store, name + ".proj", dim, dim, rng);
  return a;
}

Tensor EfficientAttention::operator()(const Tensor& x, std::size_t h, std::size_t w) const {
  Tensor kv_src = x;
  if (ratio > 1) {
    if (h % ratio != 0 || w % ratio != 0) {
      throw ShapeError("attention: token grid " + std::to_string(h) + "x" + std::to_string(w) +
                       " not divisible by reduction ratio " + std::to_string(ratio));
    }
    kv_src = sr_norm(ops::tokens_from_grid(sr(ops::grid_from_tokens(x, h, w))));
  }
  return proj(multihead_attention(q(x), k(kv_src), v(kv_src), heads));
}

MixFfn MixFfn::create(ParamStore& store, const std::string& name, std::size_t dim,
                      std::size_t hidden, Rng& rng) {
  MixFfn f;
  f.fc1 = Linear::create(store, name + ".fc1", dim, hidden, rng);
  f.dw = Conv::create(store, name + ".dw", hidden, hidden, 3, {1, 1, hidden}, rng);
  f.fc2 = Linear::create(store, name + ".fc2", hidden, dim, rng);
  return f;
}

Tensor MixFfn::operator()(const Tensor& x, std::size_t h, std::size_t w) const {
  const Tensor mixed = dw(ops::grid_from_tokens(fc1(x), h, w));
  return fc2(ops::gelu(ops::tokens_from_grid(mixed)));
}

EncoderBlock EncoderBlock::create(ParamStore& store, const std::string& name, std::size_t dim,
                                  std::size_t heads, std::size_t ratio, std::size_t mlp_ratio,
                                  Rng& rng) {
  EncoderBlock b;
  b.norm1 = LayerNorm::create(store, name + ".norm1", dim);
  b.attn = EfficientAttention::create(store, name + ".attn", dim, heads, ratio, rng);
  b.norm2 = LayerNorm::create(store, name + ".norm2", dim);
  b.ffn = MixFfn::create(store, name + ".ffn", dim, dim * mlp_ratio, rng);
  return b;
}

Tensor EncoderBlock::operator()(const Tensor& x, std::size_t h, std::size_t w) const {
  const Tensor u = ops::add(x, attn(norm1(x), h, w));
  return ops::add(u, ffn(norm2(u), h, w));
}

EncoderStage EncoderStage::create(ParamStore& store, const std::string& name, std::size_t in,
                                  std::size_t out, std::size_t kernel, std::size_t stride,
                                  std::size_t depth, std::size_t heads, std::size_t ratio,
                                  std::size_t mlp_ratio, Rng& rng) {
  EncoderStage s;
  s.patch = Conv::create(store, name + ".patch", in, out, kernel, {stride, kernel / 2, 1}, rng);
  s.patch_norm = LayerNorm::create(store, name + ".patch_norm", out);
  for (std::size_t d = 0; d < depth; ++d) {
    s.blocks.push_back(EncoderBlock::create(store, name + ".block" + std::to_string(d + 1), out,
                                            heads, ratio, mlp_ratio, rng));
  }
  s.norm = LayerNorm::create(store, name + ".norm", out);
  return s;
}

Tensor EncoderStage::operator()(const Tensor& x) const {
  const Tensor grid = patch(x);
  const std::size_t h = grid.dim(grid.rank() - 2), w = grid.dim(grid.rank() - 1);
  Tensor z = patch_norm(ops::tokens_from_grid(grid));
  for (const auto& b : blocks) z = b(z, h, w);
  return ops::grid_from_tokens(norm(z), h, w);
}

Encoder Encoder::create(ParamStore& store, const std::string& prefix, const BackboneConfig& cfg,
                        Rng& rng) {
  cfg.validate();
  Encoder e;
  e.cfg_ = cfg;
  std::size_t in = cfg.in_channels;
  for (std::size_t i = 0; i < kLevels; ++i) {
    e.stages_.push_back(EncoderStage::create(
        store, prefix + ".stage" + std::to_string(i + 1), in, cfg.channels[i], cfg.kernels[i],
        cfg.strides[i], cfg.depths[i], cfg.heads[i], cfg.sr_ratios[i], cfg.mlp_ratio, rng));
    in = cfg.channels[i];
  }
  return e;
}

FeaturePyramid Encoder::operator()(const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != cfg_.in_channels) {
    throw ShapeError("encoder expects [B," + std::to_string(cfg_.in_channels) + ",H,W], got " +
                     shape_str(image.shape()));
  }
  const std::size_t s = cfg_.total_stride();
  if (image.dim(2) % s != 0 || image.dim(3) % s != 0) {
    throw ShapeError("encoder input " + shape_str(image.shape()) +
                     ": H and W must be divisible by " + std::to_string(s));
  }
  FeaturePyramid out;
  Tensor x = image;
  for (std::size_t i = 0; i < kLevels; ++i) {
    x = stages_[i](x);
    out[i] = x;
  }
  return out;
}

SaliencyHead SaliencyHead::create(ParamStore& store, const std::string& name, std::size_t in,
                                  Rng& rng) {
  return {Conv::create(store, name, in, 1, 1, {}, rng)};
}

std::size_t upsample_factor(std::size_t h, std::size_t w, std::size_t target_h,
                            std::size_t target_w) {
  if (h == 0 || w == 0 || target_h % h != 0 || target_w % w != 0 ||
      target_h / h != target_w / w) {
    throw ShapeError("cannot upsample " + std::to_string(h) + "x" + std::to_string(w) + " to " +
                     std::to_string(target_h) + "x" + std::to_string(target_w) +
                     " by one integer factor");
  }
  return target_h / h;
}

Tensor SaliencyHead::operator()(const Tensor& f, std::size_t target_h,
                                std::size_t target_w) const {
  const Tensor logits = conv(f);
  const std::size_t r = logits.rank();
  const std::size_t factor =
      upsample_factor(logits.dim(r - 2), logits.dim(r - 1), target_h, target_w);
  return ops::sigmoid(ops::upsample_bilinear(logits, factor));
}

}  // namespace ditcod
