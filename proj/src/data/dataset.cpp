#include <algorithm>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "ditcod/data.hpp"
#include "ditcod/errors.hpp"
#include "ditcod/image_io.hpp"

namespace ditcod {

namespace fs = std::filesystem;

std::size_t worker_count() {
  if (const char* env = std::getenv("DITCOD_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ValueError("DITCOD_THREADS must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {
void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw IoError("cannot create directory " + p.string());
}
}  // namespace

nlohmann::json gen_dataset(const SynthConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  for (const char* sub : {"img", "gt", "bnd"}) make_dir(out_dir / sub);
  std::vector<double> fractions(cfg.n_samples);
  parallel_for(cfg.n_samples, [&](std::size_t i) {
    const Sample s = synth_sample(cfg, i);
    save_pnm(out_dir / "img" / (s.id + ".ppm"), s.image);
    save_pnm(out_dir / "gt" / (s.id + ".pgm"), s.gt);
    save_pnm(out_dir / "bnd" / (s.id + ".pgm"), s.boundary);
    double a = 0.0;
    for (double v : s.gt.data()) a += v;
    fractions[i] = a / static_cast<double>(s.gt.numel());
  });
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    samples.push_back({{"id", sample_id(i)}, {"fg_fraction", fractions[i]}});
  }
  const CannyParams cp;
  nlohmann::json manifest = {{"format", "ditcod-dataset"},
                             {"version", 1},
                             {"generator", to_json(cfg)},
                             {"canny", {{"sigma", cp.sigma}, {"low", cp.low}, {"high", cp.high}}},
                             {"samples", samples}};
  std::ofstream f(out_dir / "manifest.json");
  if (!f) throw IoError("cannot write " + (out_dir / "manifest.json").string());
  f << manifest.dump(2) << '\n';
  return manifest;
}

std::vector<std::string> list_ids(const fs::path& dir) {
  const fs::path img = dir / "img";
  if (!fs::is_directory(img)) throw IoError("no img/ directory in " + dir.string());
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(img)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw IoError("no .ppm images in " + img.string());
  return ids;
}

Sample load_sample(const fs::path& dir, const std::string& id, const CannyParams& canny_params) {
  Sample s;
  s.id = id;
  s.image = load_pnm(dir / "img" / (id + ".ppm"));
  Tensor mask = load_pnm(dir / "gt" / (id + ".pgm"));
  if (mask.dim(0) != 1 || mask.dim(1) != s.image.dim(1) || mask.dim(2) != s.image.dim(2)) {
    throw ShapeError("sample " + id + ": mask " + shape_str(mask.shape()) + " does not match image " +
                     shape_str(s.image.shape()));
  }
  for (double& v : mask.mutable_data()) v = v >= 0.5 ? 1.0 : 0.0;
  s.gt = mask;
  const fs::path bnd = dir / "bnd" / (id + ".pgm");
  if (fs::exists(bnd)) {
    s.boundary = load_pnm(bnd);
    if (!s.boundary.same_shape(s.gt)) throw ShapeError("sample " + id + ": boundary map shape");
    for (double& v : s.boundary.mutable_data()) v = v >= 0.5 ? 1.0 : 0.0;
  } else {
    s.boundary = canny(s.gt, canny_params);
  }
  return s;
}

std::vector<Sample> load_dataset(const fs::path& dir) {
  const auto ids = list_ids(dir);
  std::vector<Sample> out(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) { out[i] = load_sample(dir, ids[i]); });
  return out;
}

}  // namespace ditcod
