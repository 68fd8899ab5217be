#include "ditcod/model.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "ditcod/errors.hpp"

namespace ditcod {

const char* to_string(BoundaryVariant v) {
  return v == BoundaryVariant::Minus ? "Minus" : "BoundaryEncoding";
}

BoundaryVariant parse_boundary_variant(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "minus") return BoundaryVariant::Minus;
  if (l == "boundaryencoding" || l == "encoding") return BoundaryVariant::Encoding;
  throw ValueError("unknown boundary variant '" + s + "' (expected Minus or BoundaryEncoding)");
}

ModelConfig ModelConfig::desk() { return {}; }

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.image_size = 256;
  c.backbone = BackboneConfig::mit_b5();
  c.dtit = DtitConfig::full();
  return c;
}

void ModelConfig::validate() const {
  backbone.validate();
  dtit.validate();
  if (agg.cf == 0 || agg.cF == 0) throw ValueError("aggregation widths must be >= 1");
  if (image_size == 0 || image_size % backbone.total_stride() != 0) {
    throw ValueError("image_size " + std::to_string(image_size) + " must be a positive multiple of " +
                     std::to_string(backbone.total_stride()));
  }
  if (feature_size() % dtit.patch != 0) {
    throw ValueError("patch size " + std::to_string(dtit.patch) + " does not divide the " +
                     std::to_string(feature_size()) + "px fused feature");
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  const auto& b = c.backbone;
  return {
      {"image_size", c.image_size},
      {"backbone",
       {{"channels", b.channels},
        {"depths", b.depths},
        {"kernels", b.kernels},
        {"strides", b.strides},
        {"sr_ratios", b.sr_ratios},
        {"heads", b.heads},
        {"mlp_ratio", b.mlp_ratio},
        {"in_channels", b.in_channels}}},
      {"agg", {{"cf", c.agg.cf}, {"cF", c.agg.cF}}},
      {"dtit",
       {{"layers", c.dtit.layers},
        {"dim", c.dtit.dim},
        {"heads", c.dtit.heads},
        {"patch", c.dtit.patch},
        {"mlp_ratio", c.dtit.mlp_ratio},
        {"head_width", c.dtit.head_width}}},
      {"decoder_variant", to_string(c.decoder)},
      {"boundary_variant", to_string(c.boundary)},
      {"seed", c.seed},
  };
}

namespace {
template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    read_key(j, "image_size", c.image_size);
    read_key(j, "seed", c.seed);
    if (j.contains("backbone")) {
      const auto& b = j.at("backbone");
      read_key(b, "channels", c.backbone.channels);
      read_key(b, "depths", c.backbone.depths);
      read_key(b, "kernels", c.backbone.kernels);
      read_key(b, "strides", c.backbone.strides);
      read_key(b, "sr_ratios", c.backbone.sr_ratios);
      read_key(b, "heads", c.backbone.heads);
      read_key(b, "mlp_ratio", c.backbone.mlp_ratio);
      read_key(b, "in_channels", c.backbone.in_channels);
    }
    if (j.contains("agg")) {
      read_key(j.at("agg"), "cf", c.agg.cf);
      read_key(j.at("agg"), "cF", c.agg.cF);
    }
    if (j.contains("dtit")) {
      const auto& d = j.at("dtit");
      read_key(d, "layers", c.dtit.layers);
      read_key(d, "dim", c.dtit.dim);
      read_key(d, "heads", c.dtit.heads);
      read_key(d, "patch", c.dtit.patch);
      read_key(d, "mlp_ratio", c.dtit.mlp_ratio);
      read_key(d, "head_width", c.dtit.head_width);
    }
    if (j.contains("decoder_variant")) {
      c.decoder = parse_decoder_variant(j.at("decoder_variant").get<std::string>());
    }
    if (j.contains("boundary_variant")) {
      c.boundary = parse_boundary_variant(j.at("boundary_variant").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("model config: ") + e.what());
  }
  return c;
}

CodNet::CodNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const auto& bb = cfg_.backbone;
  const std::size_t cf = cfg_.agg.cf;
  fg_ = Encoder::create(store_, "fg", bb, rng);
  fg_head_ = SaliencyHead::create(store_, "fg.head", bb.channels[kLevels - 1], rng);
  if (cfg_.boundary == BoundaryVariant::Minus) {
    bg_ = Encoder::create(store_, "bg", bb, rng);
    bg_head_ = SaliencyHead::create(store_, "bg.head", bb.channels[kLevels - 1], rng);
    bgen_ = BoundaryGenerator::create(store_, "bnd", bb.channels, cf, rng);
  } else {
    benc_ = BoundaryEncoder::create(store_, "benc", "bnd", bb, cf, rng);
  }
  bnd_heads_ = BoundaryHeads::create(store_, "bnd", cf, rng);
  agg_obj_ = FeatureAggregator::create(store_, "agg.obj", bb.channels, cfg_.agg, rng);
  agg_bnd_ = FeatureAggregator::create(store_, "agg.bnd", {cf, cf, cf, cf}, cfg_.agg, rng);
  const std::size_t fs = cfg_.feature_size();
  decoder_ = Decoder::create(store_, "dtit", cfg_.dtit, cfg_.decoder, cfg_.agg.cF, fs, fs, rng);
}

ModelOutput CodNet::forward(const Tensor& images, Mode mode, AttentionTrace* trace) const {
  const std::size_t s = cfg_.image_size;
  if (images.rank() != 4 || images.dim(1) != cfg_.backbone.in_channels || images.dim(2) != s ||
      images.dim(3) != s) {
    throw ShapeError("model expects [B," + std::to_string(cfg_.backbone.in_channels) + "," +
                     std::to_string(s) + "," + std::to_string(s) + "] images, got " +
                     shape_str(images.shape()));
  }
  ModelOutput out;
  const FeaturePyramid fo = fg_(images);
  out.fg = fg_head_(fo[kLevels - 1], s, s);
  BoundaryPyramid fe;
  if (cfg_.boundary == BoundaryVariant::Minus) {
    const FeaturePyramid fb = bg_(images);
    out.bg = bg_head_(fb[kLevels - 1], s, s);
    fe = bgen_(fo, fb, mode);
  } else {
    fe = benc_(images, mode);
  }
  out.boundary_levels = bnd_heads_(fe, s, s);
  const Tensor f_obj = agg_obj_(fo, mode);
  const Tensor f_bnd = agg_bnd_(fe, mode);
  DecoderOutput d = decoder_(f_obj, f_bnd, s, s, mode, trace);
  out.object = std::move(d.object);
  out.boundary = std::move(d.boundary);
  return out;
}

void CodNet::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  store_.save(dir);
  std::ofstream f(dir / "manifest.json");
  if (!f) throw IoError("cannot write " + (dir / "manifest.json").string());
  nlohmann::json manifest = {{"format", "ditcod-checkpoint"},
                             {"version", 1},
                             {"config", to_json(cfg_)},
                             {"tensors", store_.names()}};
  f << manifest.dump(2) << "\n";
  if (!f) throw IoError("failed writing " + (dir / "manifest.json").string());
}

CodNet CodNet::load(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw IoError("cannot open " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("checkpoint manifest: " + std::string(e.what()), e.byte);
  }
  if (!manifest.contains("config")) throw ValueError("checkpoint manifest has no config");
  CodNet net(model_config_from_json(manifest.at("config")));
  net.store_.load(dir);
  return net;
}

}  // namespace ditcod
