#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ditcod/nn.hpp"

namespace ditcod {

struct DtitConfig {
  std::size_t layers = 2;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t patch = 2;
  std::size_t mlp_ratio = 4;
  std::size_t head_width = 64;  // BConv width of the prediction head

  static DtitConfig desk() { return {}; }
  /// L=6, D=768, h=12, P=2.
  static DtitConfig full() { return {6, 768, 12, 2, 4, 64}; }
  void validate() const;
};

enum class DecoderVariant { Dtit, EarlyFuse, LateFuse };

const char* to_string(DecoderVariant v);
/// Accepts "DTIT", "EarlyFuse", "LateFuse" (case-insensitive); throws ValueError otherwise.
DecoderVariant parse_decoder_variant(const std::string& s);

/// Non-overlapping PxP patches -> linear projection -> + learned positions.
struct PatchEmbed {
  Linear proj;   // [P*P*C, D]
  Tensor pos;    // [N, D]
  std::size_t patch = 1;

  static PatchEmbed create(ParamStore& store, const std::string& prefix, std::size_t channels,
                           std::size_t patch, std::size_t tokens, std::size_t dim, Rng& rng);
  /// F: [B, C, H, W] -> [B, N, D] with N = HW / P^2.
  Tensor operator()(const Tensor& f) const;
};

/// Parameters of one branch in one interactive layer.
struct DtitLayer {
  LayerNorm norm1, norm2;
  Linear wq, wk, wv;  // no bias
  Linear proj;
  Linear fc1, fc2;

  static DtitLayer create(ParamStore& store, const std::string& name, const DtitConfig& cfg,
                          Rng& rng);
};

/// Cross multi-head attention: queries from LN(z_own), keys and values from
/// concat_patch(LN(z_own), LN(z_other)), both normalized with this branch's LN.
/// An empty z_other gives plain self-attention over the own sequence.
Tensor cmsa(const Tensor& z_own, const Tensor& z_other, const DtitLayer& p, std::size_t heads,
            AttentionTrace* trace = nullptr);

/// u = cmsa + z; out = MLP(LN u) + u, MLP = fc1 -> GELU -> fc2.
Tensor branch_update(const Tensor& z_own, const Tensor& z_other, const DtitLayer& p,
                     std::size_t heads, AttentionTrace* trace = nullptr);

/// Both branches read the pre-layer states.
std::pair<Tensor, Tensor> dtit_layer(const Tensor& z_o, const Tensor& z_e, const DtitLayer& p_o,
                                     const DtitLayer& p_e, std::size_t heads,
                                     AttentionTrace* trace = nullptr);

/// Tokens -> grid -> BConv(D -> head_width) -> Conv(-> 1, 3x3) -> Up(factor) -> sigmoid.
struct PredictHead {
  BConv bconv;
  Conv conv;

  static PredictHead create(ParamStore& store, const std::string& prefix, std::size_t dim,
                            std::size_t width, Rng& rng);
  Tensor operator()(const Tensor& z, std::size_t grid_h, std::size_t grid_w,
                    std::size_t target_h, std::size_t target_w, Mode mode) const;
};

struct DtitBranch {
  PatchEmbed embed;
  std::vector<DtitLayer> layers;
  PredictHead head;
};

struct DecoderOutput {
  Tensor object;    // [B,1,H,W]
  Tensor boundary;  // [B,1,H,W]; empty for EarlyFuse
};

/// Token-level decoder over the fused object and boundary features.
///
///   Dtit:      two branches exchanging keys/values every layer.
///   EarlyFuse: F_o + F_e fed to a single self-attention branch; no boundary map.
///   LateFuse:  two independent self-attention branches; their final grids are
///              channel-concatenated and mixed by a 1x1 conv before the object head.
class Decoder {
 public:
  /// grid_h x grid_w is the spatial size of the fused features; parameters go
  /// under "<prefix>.{obj|bnd}.{embed|pos|layer{i}|head}" (+ "<prefix>.fuse").
  static Decoder create(ParamStore& store, const std::string& prefix, const DtitConfig& cfg,
                        DecoderVariant variant, std::size_t channels, std::size_t feat_h,
                        std::size_t feat_w, Rng& rng);

  DecoderOutput operator()(const Tensor& f_obj, const Tensor& f_bnd, std::size_t target_h,
                           std::size_t target_w, Mode mode, AttentionTrace* trace = nullptr) const;

  DecoderVariant variant() const { return variant_; }
  const DtitConfig& config() const { return cfg_; }
  DtitBranch& object_branch() { return obj_; }
  DtitBranch& boundary_branch() { return bnd_; }

 private:
  DtitConfig cfg_;
  DecoderVariant variant_ = DecoderVariant::Dtit;
  std::size_t grid_h_ = 0, grid_w_ = 0;
  DtitBranch obj_, bnd_;
  Conv late_fuse_;
};

}  // namespace ditcod
