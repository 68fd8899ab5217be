#pragma once

#include <array>
#include <string>

#include "ditcod/model.hpp"

namespace ditcod {

inline constexpr double kProbClamp = 1e-7;

/// 1 + 5 |avgpool_k(gt) - gt|, zero-padded pool that counts padding (k odd).
Tensor ppa_weight(const Tensor& gt, std::size_t pool);

/// Pixel position aware loss: weighted BCE + weighted IoU, averaged over the batch.
/// pred/gt are [B,1,H,W] or [1,H,W]; gt must be binary.
Tensor ppa_loss(const Tensor& pred, const Tensor& gt, std::size_t pool);

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
Tensor bce_loss(const Tensor& pred, const Tensor& gt);

struct LossReport {
  double ppa_final_obj = 0.0;
  double ce_final_bnd = 0.0;
  double ppa_fg_stream = 0.0;
  double ppa_bg_stream = 0.0;
  std::array<double, kLevels> ce_bnd_levels{};
  double total = 0.0;

  static std::string csv_header();
  std::string csv_row(std::size_t step) const;
};

struct LossTerms {
  Tensor total;  // differentiable scalar
  LossReport report;
};

/// ppa(S^o, GT) + bce(S^e, B) + ppa(fg, GT) + ppa(bg, 1-GT) + sum_i bce(level_i, B).
/// Terms whose prediction the model variant does not produce (S^e for EarlyFuse,
/// bg for BoundaryEncoding) contribute 0. The total is accumulated in that order.
LossTerms total_loss(const ModelOutput& out, const Tensor& gt, const Tensor& boundary,
                     std::size_t pool);

/// Meanpool window for the PPA weight: 31 at full scale (>= 256 px), 15 at desk scale.
std::size_t ppa_pool_for(std::size_t image_size);

}  // namespace ditcod
