#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "ditcod/tensor.hpp"

// Saliency-style evaluation measures. Inputs are a prediction S with values in
// [0,1] and a binary ground truth G of the same shape ([H,W], [1,H,W] or
// [1,1,H,W]). Every constant and degenerate-case convention is listed in METRICS.md.
namespace ditcod::metrics {

inline constexpr std::size_t kThresholds = 256;
/// MATLAB eps, used wherever the reference definitions add eps.
inline constexpr double kEps = 2.220446049250313e-16;

/// tau_k = (k + 0.5) / 256; a pixel is foreground iff S >= tau_k.
double threshold(std::size_t k);

double mae(const Tensor& s, const Tensor& g);
/// Structure measure, alpha = 0.5.
double s_measure(const Tensor& s, const Tensor& g);
/// Enhanced-alignment measure averaged over the 256 thresholds.
double e_measure(const Tensor& s, const Tensor& g);
/// Weighted F-measure, beta^2 = 1.
double weighted_f(const Tensor& s, const Tensor& g);

struct PrCurve {
  std::array<double, kThresholds> precision{};
  std::array<double, kThresholds> recall{};
};
/// precision = TP/(TP+FP), 1 when nothing is predicted; recall = TP/(TP+FN), 1 when G is empty.
PrCurve pr_curve(const Tensor& s, const Tensor& g);

struct ImageScores {
  std::string id;
  double s_alpha = 0, e_phi = 0, f_w_beta = 0, mae = 0;
};

struct MetricReport {
  std::vector<ImageScores> images;
  ImageScores mean;  // id "MEAN"
  PrCurve pr;        // per-threshold mean over images
};

ImageScores score_image(const std::string& id, const Tensor& s, const Tensor& g);

/// Folds per-image results in the given order.
MetricReport aggregate(std::vector<ImageScores> images, const std::vector<PrCurve>& curves);

/// metrics.csv (id,S_alpha,E_phi,F_w_beta,MAE + MEAN row), pr.csv
/// (threshold,precision,recall) and pr.svg.
void emit(const MetricReport& report, const std::filesystem::path& dir);

}  // namespace ditcod::metrics
