#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ditcod/canny.hpp"
#include "ditcod/tensor.hpp"

namespace ditcod {

enum class ShapeFamily { Ellipse, Blob, Mixed };
std::string to_string(ShapeFamily f);
ShapeFamily parse_shape_family(const std::string& s);

struct SynthConfig {
  std::size_t n_samples = 64;
  std::size_t image_size = 64;
  std::size_t octaves = 3;
  double base_frequency = 4.0;  // lattice cells across the image at the coarsest octave
  double delta = 0.12;          // luminance shift of the object, in (0, 0.2]
  ShapeFamily shapes = ShapeFamily::Mixed;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct Sample {
  std::string id;
  Tensor image;     // [3,H,W] in [0,1]
  Tensor gt;        // [1,H,W] binary
  Tensor boundary;  // [1,H,W] binary, canny(gt)
};

/// lo + (hi - lo) * u with u from the top 53 bits of one draw. Used instead of
/// std::uniform_real_distribution, whose algorithm differs between standard libraries.
double uniform(std::mt19937_64& rng, double lo, double hi);

/// splitmix64 finalizer; per-sample seeds are mix(mix(seed) ^ index).
std::uint64_t mix_seed(std::uint64_t x);

/// Generates sample `index` of the dataset described by cfg (pure function).
Sample synth_sample(const SynthConfig& cfg, std::size_t index);

/// Writes img/{id}.ppm, gt/{id}.pgm, bnd/{id}.pgm and manifest.json; returns the manifest.
nlohmann::json gen_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir);

std::string sample_id(std::size_t index);

/// Stems of img/*.ppm, sorted.
std::vector<std::string> list_ids(const std::filesystem::path& dir);

/// Reads one sample. The mask is binarized at 0.5; a missing bnd/{id}.pgm is
/// recomputed from the mask.
Sample load_sample(const std::filesystem::path& dir, const std::string& id,
                   const CannyParams& canny_params = {});
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

/// Worker count: DITCOD_THREADS if set (>= 1), else hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. fn must only write
/// state owned by index i. The first exception (lowest index) is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ditcod
