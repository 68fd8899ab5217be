#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "ditcod/aggregation.hpp"
#include "ditcod/backbone.hpp"
#include "ditcod/boundary.hpp"
#include "ditcod/dtit.hpp"
#include "json.hpp"

namespace ditcod {

/// How boundary features are produced.
///   Minus:    per-level difference of the foreground and background streams.
///   Encoding: a dedicated boundary encoder; no background stream.
enum class BoundaryVariant { Minus, Encoding };

const char* to_string(BoundaryVariant v);
/// Accepts "Minus" / "BoundaryEncoding" (or "Encoding"), case-insensitive.
BoundaryVariant parse_boundary_variant(const std::string& s);

struct ModelConfig {
  std::size_t image_size = 64;
  BackboneConfig backbone;
  AggConfig agg;
  DtitConfig dtit;
  DecoderVariant decoder = DecoderVariant::Dtit;
  BoundaryVariant boundary = BoundaryVariant::Minus;
  std::uint64_t seed = 0;  // parameter initialization

  static ModelConfig desk();
  /// MiT-B5 widths, L=6 / D=768 / h=12 / P=2, 256x256 input.
  static ModelConfig full();
  void validate() const;

  /// Spatial size of the level-1 features (input of the decoder).
  std::size_t feature_size() const { return image_size / backbone.strides[0]; }
};

nlohmann::json to_json(const ModelConfig& c);
/// Missing keys keep their desk defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);

struct ModelOutput {
  Tensor object;    // S^o, [B,1,H,W]
  Tensor boundary;  // S^e, [B,1,H,W]; empty for EarlyFuse
  Tensor fg;        // foreground stream head
  Tensor bg;        // background stream head; empty for the Encoding variant
  std::array<Tensor, kLevels> boundary_levels;
};

/// The full detector: twin encoders, boundary generation, per-branch feature
/// aggregation and the token decoder.
class CodNet {
 public:
  /// Builds and initializes every parameter from cfg.seed.
  explicit CodNet(const ModelConfig& cfg);

  /// images: [B,3,S,S] with S = config().image_size.
  ModelOutput forward(const Tensor& images, Mode mode, AttentionTrace* trace = nullptr) const;

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }

  /// Writes "manifest.json" and one DTZ file per parameter/buffer under dir.
  void save(const std::filesystem::path& dir) const;
  static CodNet load(const std::filesystem::path& dir);

 private:
  ModelConfig cfg_;
  ParamStore store_;
  Encoder fg_, bg_;
  BoundaryEncoder benc_;
  SaliencyHead fg_head_, bg_head_;
  BoundaryGenerator bgen_;
  BoundaryHeads bnd_heads_;
  FeatureAggregator agg_obj_, agg_bnd_;
  Decoder decoder_;
};

}  // namespace ditcod
