#include "ditcod/train.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "ditcod/dtz.hpp"
#include "ditcod/errors.hpp"
#include "ditcod/image_io.hpp"

namespace ditcod {

namespace fs = std::filesystem;

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step(const Tape& tape) {
  std::vector<Tensor> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) {
    grads.push_back(tape.has_grad(p) ? tape.grad(p) : Tensor(p.shape(), 0.0));
  }
  step(grads);
}

void Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw ValueError("adam: gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    const Tensor& g = grads[k];
    if (!g.same_shape(p)) throw ShapeError("adam: gradient shape " + shape_str(g.shape()));
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      p[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

// ---- configuration

TrainConfig TrainConfig::desk() { return {}; }

TrainConfig TrainConfig::full() {
  TrainConfig c;
  c.preset = "full";
  c.image_size = 256;
  c.batch_size = 4;
  c.epochs = 100;
  c.lr = 6e-5;
  return c;
}

void TrainConfig::validate() const {
  if (preset != "desk" && preset != "full") throw ValueError("preset must be desk or full");
  if (batch_size == 0) throw ValueError("batch_size must be >= 1");
  if (epochs == 0) throw ValueError("epochs must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValueError("lr must be positive");
  model_config().validate();
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m = preset == "full" ? ModelConfig::full() : ModelConfig::desk();
  m.image_size = image_size;
  m.decoder = decoder_variant;
  m.boundary = boundary_variant;
  m.seed = seed;
  return m;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"preset", c.preset},
          {"image_size", c.image_size},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"seed", c.seed},
          {"data_dir", c.data_dir},
          {"out_dir", c.out_dir},
          {"decoder_variant", to_string(c.decoder_variant)},
          {"boundary_variant", to_string(c.boundary_variant)},
          {"max_steps", c.max_steps},
          {"augment", c.augment}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValueError("training config must be a JSON object");
  TrainConfig c = TrainConfig::desk();
  if (j.contains("preset")) {
    const auto p = j.at("preset").get<std::string>();
    if (p == "full") c = TrainConfig::full();
    else if (p != "desk") throw ValueError("preset must be desk or full, got '" + p + "'");
  }
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "preset") continue;
      if (k == "image_size") c.image_size = v.get<std::size_t>();
      else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (k == "epochs") c.epochs = v.get<std::size_t>();
      else if (k == "lr") c.lr = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "data_dir") c.data_dir = v.get<std::string>();
      else if (k == "out_dir") c.out_dir = v.get<std::string>();
      else if (k == "decoder_variant") c.decoder_variant = parse_decoder_variant(v.get<std::string>());
      else if (k == "boundary_variant") c.boundary_variant = parse_boundary_variant(v.get<std::string>());
      else if (k == "max_steps") c.max_steps = v.get<std::size_t>();
      else if (k == "augment") c.augment = v.get<bool>();
      else throw ValueError("unknown training config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- augmentation

namespace {

using Coord = std::pair<double, double>;  // source (y, x) in pixel-centre coordinates

double bilinear(const double* plane, long h, long w, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const long y0 = static_cast<long>(y), x0 = static_cast<long>(x);
  const long y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double ty = y - y0, tx = x - x0;
  return (plane[y0 * w + x0] * (1 - tx) + plane[y0 * w + x1] * tx) * (1 - ty) +
         (plane[y1 * w + x0] * (1 - tx) + plane[y1 * w + x1] * tx) * ty;
}

// Resamples every channel of t through the inverse map `src`.
template <class Map>
Tensor warp(const Tensor& t, bool nearest, Map src) {
  const long c = static_cast<long>(t.dim(0)), h = static_cast<long>(t.dim(1)),
             w = static_cast<long>(t.dim(2));
  Tensor out(t.shape());
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const auto [sy, sx] = src(static_cast<double>(y), static_cast<double>(x));
      for (long k = 0; k < c; ++k) {
        const double* plane = t.ptr() + k * h * w;
        double v;
        if (nearest) {
          const long iy = std::lround(sy), ix = std::lround(sx);
          v = iy < 0 || ix < 0 || iy >= h || ix >= w ? 0.0 : plane[iy * w + ix];
        } else {
          v = bilinear(plane, h, w, sy, sx);
        }
        out[(k * h + y) * w + x] = v;
      }
    }
  return out;
}

template <class Map>
void warp_sample(Sample& s, Map src) {
  s.image = warp(s.image, false, src);
  s.gt = warp(s.gt, true, src);
}

}  // namespace

Sample augment(const Sample& in, Rng& rng) {
  Sample s{in.id, in.image.clone(), in.gt.clone(), Tensor()};
  const double h = static_cast<double>(s.image.dim(1)), w = static_cast<double>(s.image.dim(2));
  if (uniform(rng, 0.0, 1.0) < 0.5) {
    warp_sample(s, [&](double y, double x) { return Coord{y, w - 1 - x}; });
  }
  if (uniform(rng, 0.0, 1.0) < 0.5) {
    const double scale = std::sqrt(0.9);
    const double ch = h * scale, cw = w * scale;
    const double oy = uniform(rng, 0.0, h - ch), ox = uniform(rng, 0.0, w - cw);
    warp_sample(s, [&](double y, double x) {
      return Coord{oy + (y + 0.5) * scale - 0.5, ox + (x + 0.5) * scale - 0.5};
    });
  }
  if (uniform(rng, 0.0, 1.0) < 0.5) {
    const double a = uniform(rng, -15.0, 15.0) * std::numbers::pi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    warp_sample(s, [&](double y, double x) {
      const double dy = y - cy, dx = x - cx;
      return Coord{cy + dx * sa + dy * ca, cx + dx * ca - dy * sa};
    });
  }
  s.boundary = canny(s.gt);
  return s;
}

Batch make_batch(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw ValueError("empty batch");
  const Shape& is = samples[0]->image.shape();
  const std::size_t b = samples.size(), h = is[1], w = is[2], plane = h * w;
  Batch out{Tensor({b, 3, h, w}), Tensor({b, 1, h, w}), Tensor({b, 1, h, w}), {}};
  for (std::size_t i = 0; i < b; ++i) {
    const Sample& s = *samples[i];
    if (s.image.shape() != is || s.gt.shape() != Shape{1, h, w} || s.boundary.shape() != Shape{1, h, w}) {
      throw ShapeError("batch: sample " + s.id + " has inconsistent shapes");
    }
    std::copy(s.image.data().begin(), s.image.data().end(), out.images.mutable_ptr() + i * 3 * plane);
    std::copy(s.gt.data().begin(), s.gt.data().end(), out.gt.mutable_ptr() + i * plane);
    std::copy(s.boundary.data().begin(), s.boundary.data().end(), out.boundary.mutable_ptr() + i * plane);
    out.ids.push_back(s.id);
  }
  return out;
}

// ---- training loop

namespace {

void dump_batch(const fs::path& dir, const std::vector<Sample>& batch, std::size_t step,
                const std::string& what) {
  fs::create_directories(dir);
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& s : batch) {
    // Raw f64 so that the offending values survive.
    dtz::save(dir / (s.id + "_img.dtz"), s.image);
    dtz::save(dir / (s.id + "_gt.dtz"), s.gt);
    ids.push_back(s.id);
  }
  std::ofstream f(dir / "info.json");
  f << nlohmann::json{{"step", step}, {"error", what}, {"ids", ids}}.dump(2) << '\n';
}

}  // namespace

TrainResult train(CodNet& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                  const StepCallback& on_step) {
  cfg.validate();
  if (data.empty()) throw ValueError("train: empty dataset");
  for (const auto& s : data) {
    if (s.image.dim(1) != cfg.image_size || s.image.dim(2) != cfg.image_size) {
      throw ShapeError("train: sample " + s.id + " is " + shape_str(s.image.shape()) +
                       ", config expects " + std::to_string(cfg.image_size) + " px");
    }
  }
  const std::size_t pool = ppa_pool_for(cfg.image_size);
  Adam adam(model.params().trainable(), {cfg.lr});
  Rng rng(mix_seed(cfg.seed ^ 0x747261696E696E67ull));

  std::ofstream csv;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    csv.open(fs::path(cfg.out_dir) / "loss.csv");
    if (!csv) throw IoError("cannot write loss.csv in " + cfg.out_dir);
    csv << LossReport::csv_header() << '\n';
  }

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      if (cfg.max_steps != 0 && result.steps >= cfg.max_steps) return result;
      std::vector<Sample> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) {
        batch.push_back(cfg.augment ? augment(data[order[k]], rng) : data[order[k]]);
      }
      std::vector<const Sample*> ptrs;
      for (const auto& s : batch) ptrs.push_back(&s);
      const Batch b = make_batch(ptrs);

      const std::size_t step = result.steps + 1;
      try {
        Tape tape;
        TapeScope scope(tape);
        const ModelOutput out = model.forward(b.images, Mode::Train);
        LossTerms terms = total_loss(out, b.gt, b.boundary, pool);
        tape.backward(terms.total);
        for (const auto& p : model.params().trainable()) {
          if (tape.has_grad(p) && !tape.grad(p).all_finite()) {
            throw NumericalError("non-finite gradient at step " + std::to_string(step));
          }
        }
        adam.step(tape);
        result.losses.push_back(terms.report);
      } catch (const NumericalError& e) {
        if (!cfg.out_dir.empty()) dump_batch(fs::path(cfg.out_dir) / "nonfinite_dump", batch, step, e.what());
        throw;
      }
      ++result.steps;
      if (csv.is_open()) csv << result.losses.back().csv_row(step) << '\n';
      if (on_step) on_step(step, result.losses.back());
    }
  }
  return result;
}

TrainResult train_from_config(const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (cfg.data_dir.empty() || cfg.out_dir.empty()) {
    throw ValueError("train: data_dir and out_dir are required");
  }
  const auto data = load_dataset(cfg.data_dir);
  CodNet model(cfg.model_config());
  const TrainResult r = train(model, data, cfg, on_step);
  const fs::path out(cfg.out_dir);
  model.save(out / "checkpoint");
  std::ofstream f(out / "train_config.json");
  f << to_json(cfg).dump(2) << '\n';
  return r;
}

std::pair<Tensor, Tensor> predict_maps(const CodNet& model, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("predict: expected [3,H,W], got " + shape_str(image.shape()));
  }
  NoGradScope no_grad;
  const std::size_t h = image.dim(1), w = image.dim(2);
  const ModelOutput out = model.forward(image.reshaped({1, 3, h, w}), Mode::Eval);
  Tensor obj = out.object.reshaped({1, h, w});
  Tensor bnd = out.boundary.empty() ? Tensor() : out.boundary.reshaped({1, h, w});
  return {obj, bnd};
}

}  // namespace ditcod
