#pragma once

#include <array>
#include <string>

#include "ditcod/backbone.hpp"

namespace ditcod {

struct AggConfig {
  std::size_t cf = 32;  // common width of every level after pre-projection
  std::size_t cF = 32;  // width of the fused output
};

using LevelStack = std::array<Tensor, kLevels>;

/// Enhancement by products of upsampled higher levels, top-down aggregation by
/// channel concatenation, then one fusing BConv. One instance per branch.
///
/// Parameter names under `prefix`:
///   pre.level{i}           raw level -> cf
///   enh.level{i}.from{j}   Up(f_j) -> cf, one per pair i < j
///   agg.level{i}           Up(q_{i+1}) -> same width, i = 1..3
///   fuse                   4cf -> cF
class FeatureAggregator {
 public:
  static FeatureAggregator create(ParamStore& store, const std::string& prefix,
                                  const std::array<std::size_t, kLevels>& in_channels,
                                  const AggConfig& cfg, Rng& rng);

  LevelStack project(const LevelStack& levels, Mode mode) const;
  /// g_4 = f_4; g_i = f_i * prod_{j>i} BConv_ij(Up(f_j, 2^(j-i))), j ascending.
  LevelStack enhance(const LevelStack& f, Mode mode) const;
  /// q_4 = g_4; q_i = concat(g_i, BConv_i(Up(q_{i+1}, 2))). Widths cf * (5 - i).
  LevelStack aggregate(const LevelStack& g, Mode mode) const;
  Tensor fuse(const Tensor& q1, Mode mode) const;

  /// project -> enhance -> aggregate -> fuse.
  Tensor operator()(const LevelStack& levels, Mode mode) const;

  void set_identity(bool on);
  const AggConfig& config() const { return cfg_; }

 private:
  AggConfig cfg_;
  std::array<BConv, kLevels> pre_;
  // enh_[i][j] is used for i < j only.
  std::array<std::array<BConv, kLevels>, kLevels> enh_;
  std::array<BConv, kLevels - 1> agg_;
  BConv fuse_;
};

}  // namespace ditcod
