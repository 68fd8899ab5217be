#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ditcod/ops.hpp"
#include "ditcod/tensor.hpp"

namespace ditcod {

using Rng = std::mt19937_64;

enum class Mode { Train, Eval };

/// Named parameters and buffers in registration order.
class ParamStore {
 public:
  /// Registers a trainable tensor; names must be unique.
  Tensor add(const std::string& name, Tensor value);
  /// Registers non-trainable state (batch-norm running statistics).
  Tensor add_buffer(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor get(const std::string& name) const;

  std::vector<std::string> names() const;
  std::vector<Tensor> trainable() const;
  std::vector<std::string> trainable_names() const;
  /// Total number of trainable scalars, optionally restricted to a name prefix.
  std::size_t scalar_count(const std::string& prefix = "") const;

  /// One DTZ file per tensor, named "<name>.dtz".
  void save(const std::filesystem::path& dir) const;
  /// Overwrites every registered tensor from dir; shapes must match.
  void load(const std::filesystem::path& dir);

 private:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable;
  };
  Tensor insert(const std::string& name, Tensor value, bool trainable);

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace init {
/// Normal(0, std) resampled outside +-2 std.
Tensor trunc_normal(Shape shape, double std, Rng& rng);
/// U(-b, b) with b = sqrt(6 / fan_in).
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);
}  // namespace init

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out] or empty

  static Linear create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                       Rng& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }
};

struct Conv {
  Tensor weight;  // [out, in/groups, k, k]
  Tensor bias;    // [out] or empty
  ops::Conv2dOptions opt;

  static Conv create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                     std::size_t kernel, ops::Conv2dOptions opt, Rng& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return ops::conv2d(x, weight, bias, opt); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(ParamStore& store, const std::string& name, std::size_t dim);
  Tensor operator()(const Tensor& z) const { return ops::layernorm(z, gamma, beta); }
};

/// Convolution -> batch normalization -> ReLU.
///
/// With `identity` set the block passes its input through unchanged, which lets
/// wiring tests check closed-form outputs independent of learned weights.
struct BConv {
  Conv conv;
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  bool identity = false;

  /// 3x3 (or `kernel`) same-padded conv without bias, followed by BN and ReLU.
  static BConv create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                      Rng& rng, std::size_t kernel = 3);
  Tensor operator()(const Tensor& x, Mode mode) const;
};

/// Attention probabilities captured for inspection; one [B*h, N, M] tensor per call.
struct AttentionTrace {
  std::vector<Tensor> probabilities;
  std::vector<std::size_t> kv_lengths;
};

/// Scaled dot-product attention over `heads` heads: q is [B,N,D], k and v are [B,M,D].
/// Returns the merged heads, [B,N,D], before any output projection.
Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                           AttentionTrace* trace = nullptr);

}  // namespace ditcod
