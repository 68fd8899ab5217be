#include "ditcod/aggregation.hpp"

#include "ditcod/errors.hpp"

namespace ditcod {

namespace {
std::string level(std::size_t i) { return ".level" + std::to_string(i + 1); }

void require_nested(const LevelStack& f) {
  for (std::size_t i = 0; i + 1 < kLevels; ++i) {
    const Tensor& lo = f[i];
    const Tensor& hi = f[i + 1];
    const std::size_t r = lo.rank();
    if (hi.rank() != r || lo.dim(r - 2) != 2 * hi.dim(r - 2) || lo.dim(r - 1) != 2 * hi.dim(r - 1)) {
      throw ShapeError("feature aggregation: levels " + shape_str(lo.shape()) + " and " +
                       shape_str(hi.shape()) + " are not nested by a factor of 2");
    }
  }
}
}  // namespace

FeatureAggregator FeatureAggregator::create(ParamStore& store, const std::string& prefix,
                                            const std::array<std::size_t, kLevels>& in_channels,
                                            const AggConfig& cfg, Rng& rng) {
  if (cfg.cf == 0 || cfg.cF == 0) throw ValueError("aggregation widths must be >= 1");
  FeatureAggregator a;
  a.cfg_ = cfg;
  for (std::size_t i = 0; i < kLevels; ++i) {
    a.pre_[i] = BConv::create(store, prefix + ".pre" + level(i), in_channels[i], cfg.cf, rng);
  }
  for (std::size_t i = 0; i + 1 < kLevels; ++i) {
    for (std::size_t j = i + 1; j < kLevels; ++j) {
      a.enh_[i][j] = BConv::create(store, prefix + ".enh" + level(i) + ".from" + std::to_string(j + 1),
                                   cfg.cf, cfg.cf, rng);
    }
  }
  for (std::size_t i = 0; i + 1 < kLevels; ++i) {
    const std::size_t width = cfg.cf * (kLevels - 1 - i);  // channels of q_{i+1}
    a.agg_[i] = BConv::create(store, prefix + ".agg" + level(i), width, width, rng);
  }
  a.fuse_ = BConv::create(store, prefix + ".fuse", cfg.cf * kLevels, cfg.cF, rng);
  return a;
}

LevelStack FeatureAggregator::project(const LevelStack& levels, Mode mode) const {
  LevelStack out;
  for (std::size_t i = 0; i < kLevels; ++i) out[i] = pre_[i](levels[i], mode);
  return out;
}

LevelStack FeatureAggregator::enhance(const LevelStack& f, Mode mode) const {
  require_nested(f);
  LevelStack g;
  g[kLevels - 1] = f[kLevels - 1];
  for (std::size_t i = 0; i + 1 < kLevels; ++i) {
    Tensor acc = f[i];
    for (std::size_t j = i + 1; j < kLevels; ++j) {
      const Tensor up = ops::upsample_bilinear(f[j], std::size_t{1} << (j - i));
      acc = ops::hadamard(acc, enh_[i][j](up, mode));
    }
    g[i] = acc;
  }
  return g;
}

LevelStack FeatureAggregator::aggregate(const LevelStack& g, Mode mode) const {
  require_nested(g);
  LevelStack q;
  q[kLevels - 1] = g[kLevels - 1];
  for (std::size_t i = kLevels - 1; i-- > 0;) {
    q[i] = ops::concat_channel(g[i], agg_[i](ops::upsample_bilinear(q[i + 1], 2), mode));
  }
  return q;
}

Tensor FeatureAggregator::fuse(const Tensor& q1, Mode mode) const { return fuse_(q1, mode); }

Tensor FeatureAggregator::operator()(const LevelStack& levels, Mode mode) const {
  return fuse(aggregate(enhance(project(levels, mode), mode), mode)[0], mode);
}

void FeatureAggregator::set_identity(bool on) {
  for (auto& b : pre_) b.identity = on;
  for (auto& row : enh_)
    for (auto& b : row) b.identity = on;
  for (auto& b : agg_) b.identity = on;
  fuse_.identity = on;
}

}  // namespace ditcod
