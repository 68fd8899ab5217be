#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ditcod/data.hpp"
#include "ditcod/loss.hpp"
#include "ditcod/model.hpp"
#include "ditcod/tape.hpp"

namespace ditcod {

struct AdamConfig {
  double lr = 6e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  /// Applies one update with the gradients recorded on tape; parameters the tape
  /// never reached get a zero gradient.
  void step(const Tape& tape);
  void step(const std::vector<Tensor>& grads);

  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  std::string preset = "desk";
  std::size_t image_size = 64;
  std::size_t batch_size = 4;
  std::size_t epochs = 100;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::string data_dir;
  std::string out_dir;
  DecoderVariant decoder_variant = DecoderVariant::Dtit;
  BoundaryVariant boundary_variant = BoundaryVariant::Minus;
  std::size_t max_steps = 0;  // 0: run all epochs
  bool augment = true;

  static TrainConfig desk();
  /// 256 px, batch 4, 100 epochs, lr 6e-5.
  static TrainConfig full();
  void validate() const;
  /// The model configuration implied by preset, image size, variants and seed.
  ModelConfig model_config() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Keys not present keep the preset's defaults ("preset" is applied first).
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Flip (p 0.5), crop to 0.9 of the area then resize (p 0.5), rotation in
/// [-15, 15] degrees (p 0.5). Images are resampled bilinearly, masks by nearest
/// neighbour; the boundary is recomputed from the transformed mask.
Sample augment(const Sample& s, Rng& rng);

/// Stacks samples into [B,3,S,S], [B,1,S,S], [B,1,S,S].
struct Batch {
  Tensor images, gt, boundary;
  std::vector<std::string> ids;
};
Batch make_batch(const std::vector<const Sample*>& samples);

struct TrainResult {
  std::vector<LossReport> losses;  // one per step
  std::size_t steps = 0;
};

/// Called after every optimizer step with the 1-based step index.
using StepCallback = std::function<void(std::size_t, const LossReport&)>;

/// Runs the Adam loop on model. Writes loss.csv (and nothing else) to out_dir when
/// it is non-empty. Non-finite losses or gradients abort with NumericalError after
/// dumping the offending batch to out_dir/nonfinite_dump.
TrainResult train(CodNet& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                  const StepCallback& on_step = {});

/// Loads data_dir, trains a fresh model, writes loss.csv, train_config.json and
/// checkpoint/ under out_dir.
TrainResult train_from_config(const TrainConfig& cfg, const StepCallback& on_step = {});

/// Eval-mode forward of one image [3,S,S] without recording; returns S^o, S^e as
/// [1,S,S] (S^e empty for EarlyFuse).
std::pair<Tensor, Tensor> predict_maps(const CodNet& model, const Tensor& image);

}  // namespace ditcod
