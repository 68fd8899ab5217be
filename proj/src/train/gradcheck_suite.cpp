#include "ditcod/gradcheck_suite.hpp"

#include "ditcod/aggregation.hpp"
#include "ditcod/backbone.hpp"
#include "ditcod/boundary.hpp"
#include "ditcod/data.hpp"
#include "ditcod/dtit.hpp"
#include "ditcod/loss.hpp"
#include "ditcod/ops.hpp"
#include "ditcod/tape.hpp"

namespace ditcod {

namespace {

Tensor rand_t(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(mix_seed(seed));
  Tensor t(std::move(shape));
  for (double& v : t.mutable_data()) v = uniform(rng, lo, hi);
  return t;
}

// Values in [-1,-0.1] u [0.1,1], away from the ReLU kink.
Tensor rand_away_from_zero(Shape shape, std::uint64_t seed) {
  Tensor t = rand_t(std::move(shape), seed, 0.1, 1.0);
  Rng rng(mix_seed(seed + 17));
  for (double& v : t.mutable_data())
    if (rng() & 1u) v = -v;
  return t;
}

Tensor rand_mask(Shape shape, std::uint64_t seed) {
  Tensor t = rand_t(std::move(shape), seed, 0.0, 1.0);
  for (double& v : t.mutable_data()) v = v < 0.4 ? 1.0 : 0.0;
  return t;
}

// <f(), w> for a fixed random w, so every output coordinate matters.
GradcheckResult projected(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                          std::uint64_t seed, std::size_t max_coords = 0) {
  Shape shape;
  {
    NoGradScope no_grad;
    shape = f().shape();
  }
  const Tensor w = rand_t(shape, seed ^ 0x5151);
  GradcheckOptions opt;
  opt.seed = seed;
  opt.max_coords = max_coords;
  return gradcheck([&] { return ops::weighted_sum(f(), w); }, inputs, opt);
}

void perturb_bn(BConv& b, std::uint64_t seed) {
  const std::size_t c = b.gamma.numel();
  const Tensor g = rand_t({c}, seed, 0.5, 1.5), be = rand_t({c}, seed + 1, -0.2, 0.2),
               m = rand_t({c}, seed + 2, -0.3, 0.3), v = rand_t({c}, seed + 3, 0.5, 2.0);
  for (std::size_t i = 0; i < c; ++i) {
    b.gamma[i] = g[i];
    b.beta[i] = be[i];
    b.running_mean[i] = m[i];
    b.running_var[i] = v[i];
  }
}

void perturb_all_bn(ParamStore& store, std::uint64_t seed) {
  std::uint64_t k = seed;
  for (const auto& name : store.names()) {
    if (!name.ends_with(".bn.gamma")) continue;
    const std::string base = name.substr(0, name.size() - 6);
    Tensor g = store.get(base + ".gamma"), b = store.get(base + ".beta"),
           m = store.get(base + ".running_mean"), v = store.get(base + ".running_var");
    const Tensor rg = rand_t(g.shape(), ++k, 0.6, 1.4), rb = rand_t(g.shape(), ++k, -0.2, 0.2),
                 rm = rand_t(g.shape(), ++k, -0.3, 0.3), rv = rand_t(g.shape(), ++k, 0.6, 1.8);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      g[i] = rg[i];
      b[i] = rb[i];
      m[i] = rm[i];
      v[i] = rv[i];
    }
  }
}

}  // namespace

std::vector<SuiteCase> gradcheck_suite() {
  std::vector<SuiteCase> c;
  const auto add = [&](std::string name, std::function<GradcheckResult(std::uint64_t)> f) {
    c.push_back({std::move(name), std::move(f)});
  };

  // ---- tensor ops
  add("matmul", [](std::uint64_t s) {
    Tensor a = rand_t({3, 4}, s), b = rand_t({4, 2}, s + 1);
    return projected([&] { return ops::matmul(a, b); }, {a, b}, s);
  });
  add("bmm", [](std::uint64_t s) {
    Tensor a = rand_t({2, 3, 4}, s), b = rand_t({2, 4, 2}, s + 1), bt = rand_t({2, 2, 4}, s + 2);
    return projected([&] { return ops::concat_channel(ops::bmm(a, b), ops::bmm(a, bt, true)); },
                     {a, b, bt}, s);
  });
  add("linear", [](std::uint64_t s) {
    Tensor x = rand_t({2, 3, 4}, s), w = rand_t({4, 5}, s + 1), b = rand_t({5}, s + 2);
    return projected([&] { return ops::linear(x, w, b); }, {x, w, b}, s);
  });
  add("conv2d", [](std::uint64_t s) {
    Tensor x = rand_t({2, 5, 5}, s), w = rand_t({3, 2, 3, 3}, s + 1), b = rand_t({3}, s + 2);
    return projected([&] { return ops::conv2d(x, w, b, {1, 1, 1}); }, {x, w, b}, s);
  });
  add("conv2d_strided_grouped", [](std::uint64_t s) {
    Tensor x = rand_t({1, 4, 7, 7}, s), w = rand_t({4, 2, 3, 3}, s + 1), b = rand_t({4}, s + 2);
    return projected([&] { return ops::conv2d(x, w, b, {2, 1, 2}); }, {x, w, b}, s);
  });
  add("batchnorm2d_train", [](std::uint64_t s) {
    Tensor x = rand_t({2, 3, 3, 3}, s), g = rand_t({3}, s + 1, 0.5, 1.5), b = rand_t({3}, s + 2);
    Tensor rm({3}, 0.0), rv({3}, 1.0);
    return projected([&] { return ops::batchnorm2d(x, g, b, rm, rv, true); }, {x, g, b}, s);
  });
  add("batchnorm2d_eval", [](std::uint64_t s) {
    Tensor x = rand_t({2, 3, 3, 3}, s), g = rand_t({3}, s + 1, 0.5, 1.5), b = rand_t({3}, s + 2);
    Tensor rm = rand_t({3}, s + 3), rv = rand_t({3}, s + 4, 0.5, 2.0);
    return projected([&] { return ops::batchnorm2d(x, g, b, rm, rv, false); }, {x, g, b}, s);
  });
  add("layernorm", [](std::uint64_t s) {
    Tensor z = rand_t({4, 6}, s), g = rand_t({6}, s + 1), b = rand_t({6}, s + 2);
    return projected([&] { return ops::layernorm(z, g, b); }, {z, g, b}, s);
  });
  add("softmax_rows", [](std::uint64_t s) {
    Tensor a = rand_t({3, 5}, s, -3, 3);
    return projected([&] { return ops::softmax_rows(a); }, {a}, s);
  });
  add("relu", [](std::uint64_t s) {
    Tensor x = rand_away_from_zero({4, 5}, s);
    return projected([&] { return ops::relu(x); }, {x}, s);
  });
  add("sigmoid", [](std::uint64_t s) {
    Tensor x = rand_t({4, 5}, s, -4, 4);
    return projected([&] { return ops::sigmoid(x); }, {x}, s);
  });
  add("gelu", [](std::uint64_t s) {
    Tensor x = rand_t({4, 5}, s, -3, 3);
    return projected([&] { return ops::gelu(x); }, {x}, s);
  });
  add("elementwise", [](std::uint64_t s) {
    Tensor a = rand_t({3, 4}, s), b = rand_t({3, 4}, s + 1);
    return projected(
        [&] {
          return ops::add_scalar(
              ops::scale(ops::hadamard(ops::add(a, b), ops::sub(a, b)), 0.7), 0.3);
        },
        {a, b}, s);
  });
  add("reductions", [](std::uint64_t s) {
    Tensor a = rand_t({3, 4}, s);
    return projected([&] { return ops::concat(ops::sum(a), ops::mean(a), 0); }, {a}, s);
  });
  add("upsample_bilinear", [](std::uint64_t s) {
    Tensor x = rand_t({1, 2, 3, 4}, s);
    return projected([&] { return ops::upsample_bilinear(x, 3); }, {x}, s);
  });
  add("concat_slice", [](std::uint64_t s) {
    Tensor a = rand_t({1, 2, 3, 3}, s), b = rand_t({1, 3, 3, 3}, s + 1);
    Tensor p = rand_t({1, 4, 5}, s + 2), q = rand_t({1, 3, 5}, s + 3);
    return projected(
        [&] {
          const Tensor ch = ops::tokens_from_grid(ops::concat_channel(a, b));  // [1,9,5]
          return ops::concat_patch(ops::concat_patch(p, q), ops::slice(ch, 1, 2, 7));
        },
        {a, b, p, q}, s);
  });
  add("layout", [](std::uint64_t s) {
    Tensor x = rand_t({1, 2, 4, 4}, s), z = rand_t({1, 4, 6}, s + 1);
    return projected(
        [&] {
          const Tensor pt = ops::patchify(x, 2);  // [1,4,8]
          const Tensor heads = ops::merge_heads(ops::split_heads(z, 2), 2);
          return ops::concat(ops::reshape(pt, {1, 32}),
                             ops::reshape(ops::grid_from_tokens(heads, 2, 2), {1, 24}), 1);
        },
        {x, z}, s);
  });

  // ---- model composites
  add("bconv", [](std::uint64_t s) {
    ParamStore store;
    Rng rng(mix_seed(s));
    BConv b = BConv::create(store, "b", 2, 3, rng);
    perturb_bn(b, s);
    Tensor x = rand_t({1, 2, 5, 5}, s + 1);
    return projected([&] { return b(x, Mode::Eval); }, {x, b.conv.weight, b.gamma, b.beta}, s);
  });
  add("backbone_block", [](std::uint64_t s) {
    ParamStore store;
    Rng rng(mix_seed(s));
    EncoderStage st = EncoderStage::create(store, "s", 3, 8, 3, 2, 1, 2, 2, 2, rng);
    Tensor x = rand_t({1, 3, 8, 8}, s + 1);
    auto& blk = st.blocks[0];
    return projected([&] { return st(x); },
                     {x, st.patch.weight, st.patch_norm.gamma, blk.attn.q.weight, blk.attn.k.weight,
                      blk.attn.v.weight, blk.attn.sr.weight, blk.attn.proj.bias, blk.ffn.fc1.weight,
                      blk.ffn.dw.weight, blk.ffn.fc2.weight, st.norm.beta},
                     s, 40);
  });
  add("stream_head", [](std::uint64_t s) {
    ParamStore store;
    Rng rng(mix_seed(s));
    const SaliencyHead h = SaliencyHead::create(store, "h", 4, rng);
    Tensor f = rand_t({1, 4, 2, 2}, s + 1);
    return projected([&] { return h(f, 8, 8); }, {f, h.conv.weight, h.conv.bias}, s);
  });
  add("boundary_level", [](std::uint64_t s) {
    ParamStore store;
    Rng rng(mix_seed(s));
    BoundaryGenerator gen = BoundaryGenerator::create(store, "bnd", {3, 3, 3, 3}, 2, rng);
    BoundaryLevel& l = gen.levels()[0];
    perturb_bn(l.a, s + 1);
    perturb_bn(l.b, s + 2);
    perturb_bn(l.c, s + 3);
    Tensor fo = rand_t({1, 3, 5, 5}, s + 4), fb = rand_t({1, 3, 5, 5}, s + 5);
    return projected([&] { return l(fo, fb, Mode::Eval); },
                     {fo, fb, l.a.conv.weight, l.b.conv.weight, l.b.gamma, l.c.conv.weight, l.c.beta}, s);
  });
  add("boundary_head", [](std::uint64_t s) {
    ParamStore store;
    Rng rng(mix_seed(s));
    const BoundaryHeads heads = BoundaryHeads::create(store, "bnd", 2, rng);
    Tensor fe = rand_t({1, 2, 4, 4}, s + 1);
    return projected([&] { return heads.heads[1](fe, 16, 16); },
                     {fe, heads.heads[1].conv.weight, heads.heads[1].conv.bias}, s);
  });
  add("enhance_aggregate_fuse", [](std::uint64_t s) {
    ParamStore store;
    Rng rng(mix_seed(s));
    FeatureAggregator agg = FeatureAggregator::create(store, "a", {2, 2, 2, 2}, {2, 3}, rng);
    perturb_all_bn(store, s);
    LevelStack f;
    for (std::size_t i = 0; i < kLevels; ++i) f[i] = rand_t({1, 2, 8u >> i, 8u >> i}, s + 10 + i);
    return projected(
        [&] { return agg.fuse(agg.aggregate(agg.enhance(f, Mode::Eval), Mode::Eval)[0], Mode::Eval); },
        {f[0], f[1], f[2], f[3], store.get("a.pre.level1.conv.weight"),
         store.get("a.enh.level1.from3.conv.weight"), store.get("a.agg.level2.conv.weight"),
         store.get("a.fuse.conv.weight"), store.get("a.fuse.bn.beta")},
        s, 30);
  });
  add("dtit_layer", [](std::uint64_t s) {
    ParamStore store;
    Rng rng(mix_seed(s));
    const DtitConfig cfg{1, 8, 2, 2, 2, 4};
    const DtitLayer po = DtitLayer::create(store, "o", cfg, rng);
    const DtitLayer pe = DtitLayer::create(store, "e", cfg, rng);
    Tensor zo = rand_t({1, 4, 8}, s + 1), ze = rand_t({1, 4, 8}, s + 2);
    return projected(
        [&] {
          auto [a, b] = dtit_layer(zo, ze, po, pe, 2);
          return ops::concat_patch(a, b);
        },
        {zo, ze, po.wq.weight, po.wk.weight, po.wv.weight, po.proj.bias, po.norm1.gamma,
         pe.norm2.beta, pe.fc1.weight, pe.fc2.bias},
        s, 40);
  });
  add("predict_head", [](std::uint64_t s) {
    ParamStore store;
    Rng rng(mix_seed(s));
    PredictHead h = PredictHead::create(store, "h", 4, 3, rng);
    perturb_bn(h.bconv, s + 1);
    Tensor z = rand_t({1, 9, 4}, s + 2);
    return projected([&] { return h(z, 3, 3, 12, 12, Mode::Eval); },
                     {z, h.bconv.conv.weight, h.bconv.gamma, h.conv.weight, h.conv.bias}, s);
  });
  add("dtit_decoder", [](std::uint64_t s) {
    ParamStore store;
    Rng rng(mix_seed(s));
    Decoder dec = Decoder::create(store, "dtit", {2, 8, 2, 2, 2, 3}, DecoderVariant::Dtit, 2, 4, 4, rng);
    perturb_all_bn(store, s);
    Tensor fo = rand_t({1, 2, 4, 4}, s + 1), fe = rand_t({1, 2, 4, 4}, s + 2);
    const auto& ob = dec.object_branch();
    const auto& bb = dec.boundary_branch();
    return projected(
        [&] {
          const DecoderOutput o = dec(fo, fe, 8, 8, Mode::Eval);
          return ops::concat_channel(o.object, o.boundary);
        },
        {fo, fe, ob.embed.proj.weight, ob.embed.pos, ob.layers[0].wk.weight, bb.layers[1].wq.weight,
         ob.layers[1].fc2.weight, bb.head.conv.weight},
        s, 30);
  });
  add("ppa_loss", [](std::uint64_t s) {
    Tensor p = rand_t({2, 1, 7, 7}, s, 0.05, 0.95);
    const Tensor g = rand_mask({2, 1, 7, 7}, s + 1);
    GradcheckOptions opt;
    opt.seed = s;
    return gradcheck([&] { return ppa_loss(p, g, 5); }, {p}, opt);
  });
  add("bce_loss", [](std::uint64_t s) {
    Tensor p = rand_t({2, 1, 5, 6}, s, 0.05, 0.95);
    const Tensor g = rand_mask({2, 1, 5, 6}, s + 1);
    GradcheckOptions opt;
    opt.seed = s;
    return gradcheck([&] { return bce_loss(p, g); }, {p}, opt);
  });
  return c;
}

std::vector<SuiteOutcome> run_gradcheck_suite(std::size_t n_seeds,
                                              const std::function<void(const SuiteOutcome&)>& report) {
  std::vector<SuiteOutcome> out;
  for (const auto& c : gradcheck_suite()) {
    for (std::uint64_t seed = 1; seed <= n_seeds; ++seed) {
      out.push_back({c.name, seed, c.run(seed)});
      if (report) report(out.back());
    }
  }
  return out;
}

}  // namespace ditcod
