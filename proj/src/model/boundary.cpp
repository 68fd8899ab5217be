#include "ditcod/boundary.hpp"

#include "ditcod/errors.hpp"

namespace ditcod {

namespace {
std::string level_name(const std::string& prefix, std::size_t i) {
  return prefix + ".level" + std::to_string(i + 1);
}
}  // namespace

Tensor BoundaryLevel::operator()(const Tensor& fo, const Tensor& fb, Mode mode) const {
  if (fo.shape() != fb.shape()) {
    throw ShapeError("boundary level: foreground " + shape_str(fo.shape()) +
                     " vs background " + shape_str(fb.shape()));
  }
  return c(ops::sub(a(fo, mode), b(fb, mode)), mode);
}

BoundaryGenerator BoundaryGenerator::create(ParamStore& store, const std::string& prefix,
                                            const std::array<std::size_t, kLevels>& channels,
                                            std::size_t cf, Rng& rng) {
  BoundaryGenerator g;
  for (std::size_t i = 0; i < kLevels; ++i) {
    const std::string n = level_name(prefix, i);
    g.levels_[i].a = BConv::create(store, n + ".a", channels[i], cf, rng);
    g.levels_[i].b = BConv::create(store, n + ".b", channels[i], cf, rng);
    g.levels_[i].c = BConv::create(store, n + ".c", cf, cf, rng);
  }
  return g;
}

BoundaryPyramid BoundaryGenerator::operator()(const FeaturePyramid& fo, const FeaturePyramid& fb,
                                              Mode mode) const {
  BoundaryPyramid out;
  for (std::size_t i = 0; i < kLevels; ++i) out[i] = levels_[i](fo[i], fb[i], mode);
  return out;
}

void BoundaryGenerator::set_identity(bool on) {
  for (auto& l : levels_) l.a.identity = l.b.identity = l.c.identity = on;
}

BoundaryEncoder BoundaryEncoder::create(ParamStore& store, const std::string& encoder_prefix,
                                        const std::string& prefix, const BackboneConfig& cfg,
                                        std::size_t cf, Rng& rng) {
  BoundaryEncoder e;
  e.encoder_ = Encoder::create(store, encoder_prefix, cfg, rng);
  for (std::size_t i = 0; i < kLevels; ++i) {
    e.proj_[i] = BConv::create(store, level_name(prefix, i) + ".proj", cfg.channels[i], cf, rng);
  }
  return e;
}

BoundaryPyramid BoundaryEncoder::operator()(const Tensor& image, Mode mode) const {
  const FeaturePyramid f = encoder_(image);
  BoundaryPyramid out;
  for (std::size_t i = 0; i < kLevels; ++i) out[i] = proj_[i](f[i], mode);
  return out;
}

BoundaryHeads BoundaryHeads::create(ParamStore& store, const std::string& prefix, std::size_t cf,
                                    Rng& rng) {
  BoundaryHeads h;
  for (std::size_t i = 0; i < kLevels; ++i) {
    h.heads[i] = SaliencyHead::create(store, level_name(prefix, i) + ".head", cf, rng);
  }
  return h;
}

std::array<Tensor, kLevels> BoundaryHeads::operator()(const BoundaryPyramid& fe,
                                                      std::size_t target_h,
                                                      std::size_t target_w) const {
  std::array<Tensor, kLevels> out;
  for (std::size_t i = 0; i < kLevels; ++i) out[i] = heads[i](fe[i], target_h, target_w);
  return out;
}

}  // namespace ditcod
