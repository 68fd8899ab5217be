#include "ditcod/dtit.hpp"

#include <algorithm>
#include <cctype>

#include "ditcod/backbone.hpp"
#include "ditcod/errors.hpp"

namespace ditcod {

void DtitConfig::validate() const {
  if (layers == 0 || dim == 0 || heads == 0 || patch == 0 || mlp_ratio == 0 || head_width == 0) {
    throw ValueError("dtit config: all sizes must be >= 1");
  }
  if (dim % heads != 0) {
    throw ValueError("dtit config: D=" + std::to_string(dim) + " not divisible by h=" +
                     std::to_string(heads));
  }
}

const char* to_string(DecoderVariant v) {
  switch (v) {
    case DecoderVariant::Dtit: return "DTIT";
    case DecoderVariant::EarlyFuse: return "EarlyFuse";
    case DecoderVariant::LateFuse: return "LateFuse";
  }
  return "?";
}

DecoderVariant parse_decoder_variant(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "dtit") return DecoderVariant::Dtit;
  if (l == "earlyfuse") return DecoderVariant::EarlyFuse;
  if (l == "latefuse") return DecoderVariant::LateFuse;
  throw ValueError("unknown decoder variant '" + s + "' (expected DTIT, EarlyFuse or LateFuse)");
}

PatchEmbed PatchEmbed::create(ParamStore& store, const std::string& prefix, std::size_t channels,
                              std::size_t patch, std::size_t tokens, std::size_t dim, Rng& rng) {
  PatchEmbed e;
  e.patch = patch;
  e.proj = Linear::create(store, prefix + ".embed", patch * patch * channels, dim, rng);
  e.pos = store.add(prefix + ".pos", init::trunc_normal({tokens, dim}, 0.02, rng));
  return e;
}

Tensor PatchEmbed::operator()(const Tensor& f) const {
  const Tensor tokens = proj(ops::patchify(f, patch));
  const std::size_t b = tokens.dim(0), n = tokens.dim(1), d = tokens.dim(2);
  if (pos.dim(0) != n) {
    throw ShapeError("patch embed: " + std::to_string(n) + " patches but " +
                     std::to_string(pos.dim(0)) + " position rows");
  }
  // Broadcast positions over the batch through a gather of the [N,D] table.
  std::vector<std::size_t> index(b * n * d);
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = i % (n * d);
  return ops::add(tokens, ops::gather(pos, {b, n, d}, std::move(index)));
}

DtitLayer DtitLayer::create(ParamStore& store, const std::string& name, const DtitConfig& cfg,
                            Rng& rng) {
  const std::size_t d = cfg.dim;
  DtitLayer l;
  l.norm1 = LayerNorm::create(store, name + ".norm1", d);
  l.wq = Linear::create(store, name + ".wq", d, d, rng, false);
  l.wk = Linear::create(store, name + ".wk", d, d, rng, false);
  l.wv = Linear::create(store, name + ".wv", d, d, rng, false);
  l.proj = Linear::create(store, name + ".proj", d, d, rng);
  l.norm2 = LayerNorm::create(store, name + ".norm2", d);
  l.fc1 = Linear::create(store, name + ".fc1", d, d * cfg.mlp_ratio, rng);
  l.fc2 = Linear::create(store, name + ".fc2", d * cfg.mlp_ratio, d, rng);
  return l;
}

Tensor cmsa(const Tensor& z_own, const Tensor& z_other, const DtitLayer& p, std::size_t heads,
            AttentionTrace* trace) {
  const Tensor own = p.norm1(z_own);
  Tensor kv = own;
  if (!z_other.empty()) {
    if (z_other.shape() != z_own.shape()) {
      throw ShapeError("cmsa: own sequence " + shape_str(z_own.shape()) + " vs other " +
                       shape_str(z_other.shape()));
    }
    kv = ops::concat_patch(own, p.norm1(z_other));
  }
  return p.proj(multihead_attention(p.wq(own), p.wk(kv), p.wv(kv), heads, trace));
}

Tensor branch_update(const Tensor& z_own, const Tensor& z_other, const DtitLayer& p,
                     std::size_t heads, AttentionTrace* trace) {
  const Tensor u = ops::add(cmsa(z_own, z_other, p, heads, trace), z_own);
  return ops::add(p.fc2(ops::gelu(p.fc1(p.norm2(u)))), u);
}

std::pair<Tensor, Tensor> dtit_layer(const Tensor& z_o, const Tensor& z_e, const DtitLayer& p_o,
                                     const DtitLayer& p_e, std::size_t heads,
                                     AttentionTrace* trace) {
  Tensor next_o = branch_update(z_o, z_e, p_o, heads, trace);
  Tensor next_e = branch_update(z_e, z_o, p_e, heads, trace);
  return {std::move(next_o), std::move(next_e)};
}

PredictHead PredictHead::create(ParamStore& store, const std::string& prefix, std::size_t dim,
                                std::size_t width, Rng& rng) {
  PredictHead h;
  h.bconv = BConv::create(store, prefix + ".bconv", dim, width, rng);
  h.conv = Conv::create(store, prefix + ".conv", width, 1, 3, {1, 1, 1}, rng);
  return h;
}

Tensor PredictHead::operator()(const Tensor& z, std::size_t grid_h, std::size_t grid_w,
                               std::size_t target_h, std::size_t target_w, Mode mode) const {
  const Tensor logits = conv(bconv(ops::grid_from_tokens(z, grid_h, grid_w), mode));
  return ops::sigmoid(
      ops::upsample_bilinear(logits, upsample_factor(grid_h, grid_w, target_h, target_w)));
}

namespace {

DtitBranch make_branch(ParamStore& store, const std::string& prefix, const DtitConfig& cfg,
                       std::size_t channels, std::size_t tokens, Rng& rng) {
  DtitBranch b;
  b.embed = PatchEmbed::create(store, prefix, channels, cfg.patch, tokens, cfg.dim, rng);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    b.layers.push_back(DtitLayer::create(store, prefix + ".layer" + std::to_string(i + 1), cfg, rng));
  }
  b.head = PredictHead::create(store, prefix + ".head", cfg.dim, cfg.head_width, rng);
  return b;
}

}  // namespace

Decoder Decoder::create(ParamStore& store, const std::string& prefix, const DtitConfig& cfg,
                        DecoderVariant variant, std::size_t channels, std::size_t feat_h,
                        std::size_t feat_w, Rng& rng) {
  cfg.validate();
  if (feat_h % cfg.patch != 0 || feat_w % cfg.patch != 0) {
    throw ShapeError("dtit: patch size " + std::to_string(cfg.patch) + " does not divide " +
                     std::to_string(feat_h) + "x" + std::to_string(feat_w));
  }
  Decoder d;
  d.cfg_ = cfg;
  d.variant_ = variant;
  d.grid_h_ = feat_h / cfg.patch;
  d.grid_w_ = feat_w / cfg.patch;
  const std::size_t tokens = d.grid_h_ * d.grid_w_;
  d.obj_ = make_branch(store, prefix + ".obj", cfg, channels, tokens, rng);
  if (variant != DecoderVariant::EarlyFuse) {
    d.bnd_ = make_branch(store, prefix + ".bnd", cfg, channels, tokens, rng);
  }
  if (variant == DecoderVariant::LateFuse) {
    d.late_fuse_ = Conv::create(store, prefix + ".fuse", 2 * cfg.dim, cfg.dim, 1, {}, rng);
  }
  return d;
}

DecoderOutput Decoder::operator()(const Tensor& f_obj, const Tensor& f_bnd, std::size_t target_h,
                                  std::size_t target_w, Mode mode, AttentionTrace* trace) const {
  const std::size_t heads = cfg_.heads;
  DecoderOutput out;
  switch (variant_) {
    case DecoderVariant::Dtit: {
      Tensor zo = obj_.embed(f_obj), ze = bnd_.embed(f_bnd);
      for (std::size_t i = 0; i < cfg_.layers; ++i) {
        std::tie(zo, ze) = dtit_layer(zo, ze, obj_.layers[i], bnd_.layers[i], heads, trace);
      }
      out.object = obj_.head(zo, grid_h_, grid_w_, target_h, target_w, mode);
      out.boundary = bnd_.head(ze, grid_h_, grid_w_, target_h, target_w, mode);
      break;
    }
    case DecoderVariant::EarlyFuse: {
      Tensor z = obj_.embed(ops::add(f_obj, f_bnd));
      for (const auto& layer : obj_.layers) z = branch_update(z, Tensor(), layer, heads, trace);
      out.object = obj_.head(z, grid_h_, grid_w_, target_h, target_w, mode);
      break;
    }
    case DecoderVariant::LateFuse: {
      Tensor zo = obj_.embed(f_obj), ze = bnd_.embed(f_bnd);
      for (std::size_t i = 0; i < cfg_.layers; ++i) {
        zo = branch_update(zo, Tensor(), obj_.layers[i], heads, trace);
        ze = branch_update(ze, Tensor(), bnd_.layers[i], heads, trace);
      }
      const Tensor grid = ops::concat_channel(ops::grid_from_tokens(zo, grid_h_, grid_w_),
                                              ops::grid_from_tokens(ze, grid_h_, grid_w_));
      const Tensor mixed = ops::tokens_from_grid(late_fuse_(grid));
      out.object = obj_.head(mixed, grid_h_, grid_w_, target_h, target_w, mode);
      out.boundary = bnd_.head(ze, grid_h_, grid_w_, target_h, target_w, mode);
      break;
    }
  }
  return out;
}

}  // namespace ditcod
