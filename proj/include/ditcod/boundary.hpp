#pragma once

#include <array>
#include <string>

#include "ditcod/backbone.hpp"

namespace ditcod {

/// Per-level boundary features, each [B, C_f, h_i, w_i].
using BoundaryPyramid = std::array<Tensor, kLevels>;

/// f_e = BConv_c(BConv_a(f_o) - BConv_b(f_b)) for one level.
struct BoundaryLevel {
  BConv a, b, c;

  Tensor operator()(const Tensor& fo, const Tensor& fb, Mode mode) const;
};

/// Boundary features by subtracting the background pyramid from the foreground one.
class BoundaryGenerator {
 public:
  /// Registers "<prefix>.level{i}.{a|b|c}.*"; a and b map channels[i] to cf, c keeps cf.
  static BoundaryGenerator create(ParamStore& store, const std::string& prefix,
                                  const std::array<std::size_t, kLevels>& channels, std::size_t cf,
                                  Rng& rng);

  BoundaryPyramid operator()(const FeaturePyramid& fo, const FeaturePyramid& fb, Mode mode) const;

  /// Replaces every BConv by the identity (wiring tests).
  void set_identity(bool on);
  std::array<BoundaryLevel, kLevels>& levels() { return levels_; }

 private:
  std::array<BoundaryLevel, kLevels> levels_;
};

/// Ablation alternative: a dedicated encoder whose levels are projected to cf
/// by one BConv each, supervised directly by boundary ground truth.
class BoundaryEncoder {
 public:
  /// Encoder under "<encoder_prefix>", projections under "<prefix>.level{i}.proj".
  static BoundaryEncoder create(ParamStore& store, const std::string& encoder_prefix,
                                const std::string& prefix, const BackboneConfig& cfg,
                                std::size_t cf, Rng& rng);

  BoundaryPyramid operator()(const Tensor& image, Mode mode) const;

 private:
  Encoder encoder_;
  std::array<BConv, kLevels> proj_;
};

/// One saliency head per boundary level ("<prefix>.level{i}.head"), used only for
/// the per-level boundary losses.
struct BoundaryHeads {
  std::array<SaliencyHead, kLevels> heads;

  static BoundaryHeads create(ParamStore& store, const std::string& prefix, std::size_t cf,
                              Rng& rng);
  std::array<Tensor, kLevels> operator()(const BoundaryPyramid& fe, std::size_t target_h,
                                         std::size_t target_w) const;
};

}  // namespace ditcod
