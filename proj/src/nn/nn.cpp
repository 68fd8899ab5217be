#include "ditcod/nn.hpp"

#include <cmath>

#include "ditcod/dtz.hpp"
#include "ditcod/errors.hpp"

namespace ditcod {

Tensor ParamStore::insert(const std::string& name, Tensor value, bool trainable) {
  if (contains(name)) throw ValueError("duplicate parameter name " + name);
  index_.emplace(name, entries_.size());
  value.set_requires_grad(trainable);
  entries_.push_back({name, value, trainable});
  return value;
}

Tensor ParamStore::add(const std::string& name, Tensor value) {
  return insert(name, std::move(value), true);
}

Tensor ParamStore::add_buffer(const std::string& name, Tensor value) {
  return insert(name, std::move(value), false);
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("unknown parameter " + name);
  return entries_[it->second].value;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::vector<Tensor> ParamStore::trainable() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.value);
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.name);
  return out;
}

std::size_t ParamStore::scalar_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable && e.name.rfind(prefix, 0) == 0) n += e.value.numel();
  return n;
}

void ParamStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& e : entries_) dtz::save(dir / (e.name + ".dtz"), e.value);
}

void ParamStore::load(const std::filesystem::path& dir) {
  for (auto& e : entries_) {
    const Tensor t = dtz::load(dir / (e.name + ".dtz"));
    if (t.shape() != e.value.shape()) {
      throw ShapeError("checkpoint tensor " + e.name + " has shape " + shape_str(t.shape()) +
                       ", model expects " + shape_str(e.value.shape()));
    }
    std::copy(t.data().begin(), t.data().end(), e.value.mutable_data().begin());
  }
}

namespace init {

Tensor trunc_normal(Shape shape, double std, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : t.mutable_data()) {
    double s = dist(rng);
    while (std::abs(s) > 2.0) s = dist(rng);
    v = s * std;
  }
  return t;
}

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.mutable_data()) v = dist(rng);
  return t;
}

}  // namespace init

Linear Linear::create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                      Rng& rng, bool with_bias) {
  Linear l;
  l.weight = store.add(name + ".weight", init::trunc_normal({in, out}, 0.02, rng));
  if (with_bias) l.bias = store.add(name + ".bias", Tensor::zeros({out}));
  return l;
}

Conv Conv::create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                  std::size_t kernel, ops::Conv2dOptions opt, Rng& rng, bool with_bias) {
  if (opt.groups == 0 || in % opt.groups != 0) throw ShapeError("conv: groups must divide C_in");
  Conv c;
  c.opt = opt;
  const std::size_t fan_in = in / opt.groups * kernel * kernel;
  c.weight = store.add(name + ".weight",
                       init::kaiming_uniform({out, in / opt.groups, kernel, kernel}, fan_in, rng));
  if (with_bias) c.bias = store.add(name + ".bias", Tensor::zeros({out}));
  return c;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, std::size_t dim) {
  return {store.add(name + ".gamma", Tensor::ones({dim})),
          store.add(name + ".beta", Tensor::zeros({dim}))};
}

BConv BConv::create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                    Rng& rng, std::size_t kernel) {
  if (kernel % 2 == 0) throw ValueError("BConv kernel must be odd");
  BConv b;
  b.conv = Conv::create(store, name + ".conv", in, out, kernel, {1, (kernel - 1) / 2, 1}, rng,
                        false);
  b.gamma = store.add(name + ".bn.gamma", Tensor::ones({out}));
  b.beta = store.add(name + ".bn.beta", Tensor::zeros({out}));
  b.running_mean = store.add_buffer(name + ".bn.running_mean", Tensor::zeros({out}));
  b.running_var = store.add_buffer(name + ".bn.running_var", Tensor::ones({out}));
  return b;
}

Tensor BConv::operator()(const Tensor& x, Mode mode) const {
  if (identity) return x;
  Tensor rm = running_mean, rv = running_var;
  return ops::relu(
      ops::batchnorm2d(conv(x), gamma, beta, rm, rv, mode == Mode::Train));
}

Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                           AttentionTrace* trace) {
  if (q.rank() != 3 || k.shape() != v.shape() || k.rank() != 3 || q.dim(0) != k.dim(0) ||
      q.dim(2) != k.dim(2)) {
    throw ShapeError("attention: incompatible q " + shape_str(q.shape()) + ", k " +
                     shape_str(k.shape()) + ", v " + shape_str(v.shape()));
  }
  const std::size_t width = q.dim(2);
  if (heads == 0 || width % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(width / heads));
  const Tensor qh = ops::split_heads(q, heads);
  const Tensor kh = ops::split_heads(k, heads);
  const Tensor vh = ops::split_heads(v, heads);
  const Tensor probs = ops::softmax_rows(ops::scale(ops::bmm(qh, kh, true), scale));
  if (trace != nullptr) {
    trace->probabilities.push_back(probs);
    trace->kv_lengths.push_back(k.dim(1));
  }
  return ops::merge_heads(ops::bmm(probs, vh), heads);
}

}  // namespace ditcod
