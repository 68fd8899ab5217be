#include "ditcod/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "ditcod/canny.hpp"
#include "ditcod/data.hpp"
#include "ditcod/errors.hpp"
#include "ditcod/gradcheck_suite.hpp"
#include "ditcod/image_io.hpp"
#include "ditcod/metrics.hpp"
#include "ditcod/train.hpp"

namespace fs = std::filesystem;

namespace ditcod {

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string stem_of(const fs::path& p) { return p.stem().string(); }

std::vector<fs::path> files_with_ext(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string out, config, shapes;
  std::size_t n = 0, size = 0;
  double delta = 0;
  std::uint64_t seed = 0;
};

int cmd_gen_data(const GenDataArgs& a, const CLI::App& sub, std::ostream& out) {
  SynthConfig cfg;
  if (!a.config.empty()) cfg = synth_config_from_json(read_json(a.config));
  if (sub.count("--n")) cfg.n_samples = a.n;
  if (sub.count("--size")) cfg.image_size = a.size;
  if (sub.count("--delta")) cfg.delta = a.delta;
  if (sub.count("--shapes")) cfg.shapes = parse_shape_family(a.shapes);
  if (sub.count("--seed")) cfg.seed = a.seed;
  cfg.validate();
  gen_dataset(cfg, a.out);
  out << "wrote " << cfg.n_samples << " samples to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- gen-boundary

struct GenBoundaryArgs {
  std::string masks, out;
  CannyParams canny;
};

int cmd_gen_boundary(const GenBoundaryArgs& a, std::ostream& out) {
  const auto files = files_with_ext(a.masks, ".pgm");
  fs::create_directories(a.out);
  for (const auto& f : files) {
    Tensor m = load_pnm(f);
    for (double& v : m.mutable_data()) v = v >= 0.5 ? 1.0 : 0.0;
    save_pnm(fs::path(a.out) / f.filename(), canny(m, a.canny));
  }
  out << "wrote " << files.size() << " edge maps to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config, data, out, preset, decoder, boundary;
  std::uint64_t seed = 0;
  std::size_t steps = 0, epochs = 0, batch = 0, log_every = 10;
  double lr = 0;
  bool no_augment = false;
};

TrainConfig train_config_from_args(const TrainArgs& a, const CLI::App& sub) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = train_config_from_json(read_json(a.config));
  if (sub.count("--preset")) {
    if (a.preset == "desk") cfg = TrainConfig::desk();
    else if (a.preset == "full") cfg = TrainConfig::full();
    else throw ValueError("unknown preset '" + a.preset + "'");
  }
  if (sub.count("--data")) cfg.data_dir = a.data;
  if (sub.count("--out")) cfg.out_dir = a.out;
  if (sub.count("--seed")) cfg.seed = a.seed;
  if (sub.count("--steps")) cfg.max_steps = a.steps;
  if (sub.count("--epochs")) cfg.epochs = a.epochs;
  if (sub.count("--batch-size")) cfg.batch_size = a.batch;
  if (sub.count("--lr")) cfg.lr = a.lr;
  if (sub.count("--decoder-variant")) cfg.decoder_variant = parse_decoder_variant(a.decoder);
  if (sub.count("--boundary-variant")) cfg.boundary_variant = parse_boundary_variant(a.boundary);
  if (a.no_augment) cfg.augment = false;
  return cfg;
}

StepCallback progress(std::ostream& out, std::size_t every) {
  return [&out, every](std::size_t step, const LossReport& l) {
    if (every != 0 && step % every == 0) out << "step " << step << " loss " << fmt6(l.total) << "\n";
  };
}

int cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out) {
  TrainConfig cfg = train_config_from_args(a, sub);
  if (cfg.data_dir.empty()) throw ValueError("train: --data (or data_dir in the config) is required");
  if (cfg.out_dir.empty()) throw ValueError("train: --out (or out_dir in the config) is required");
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train_from_config(cfg, progress(out, a.log_every));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << "trained " << r.steps << " steps in " << fmt6(secs) << " s; final loss "
      << fmt6(r.losses.empty() ? 0.0 : r.losses.back().total) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- predict

fs::path checkpoint_dir(const fs::path& p) {
  if (fs::exists(p / "checkpoint" / "manifest.json")) return p / "checkpoint";
  return p;
}

int cmd_predict(const std::string& checkpoint, const std::string& input, const std::string& out_dir,
                std::ostream& out) {
  const CodNet model = CodNet::load(checkpoint_dir(checkpoint));
  std::vector<fs::path> images;
  if (fs::is_directory(input)) {
    const fs::path dir = fs::is_directory(fs::path(input) / "img") ? fs::path(input) / "img" : fs::path(input);
    images = files_with_ext(dir, ".ppm");
  } else {
    images.push_back(input);
  }
  fs::create_directories(out_dir);
  const std::size_t s = model.config().image_size;
  for (const auto& path : images) {
    const Tensor img = load_pnm(path);
    if (img.shape() != Shape{3, s, s})
      throw ShapeError("predict: " + path.string() + " is " + shape_str(img.shape()) + ", the model expects [3x" +
                       std::to_string(s) + "x" + std::to_string(s) + "]");
    const auto [obj, bnd] = predict_maps(model, img);
    const std::string id = stem_of(path);
    save_pnm(fs::path(out_dir) / (id + "_obj.pgm"), obj);
    if (!bnd.empty()) save_pnm(fs::path(out_dir) / (id + "_bnd.pgm"), bnd);
  }
  out << "wrote predictions for " << images.size() << " images to " << out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

metrics::MetricReport evaluate_dirs(const fs::path& pred_dir, const fs::path& gt_root) {
  const fs::path gt_dir = fs::is_directory(gt_root / "gt") ? gt_root / "gt" : gt_root;
  std::map<std::string, fs::path> preds;
  for (const auto& p : files_with_ext(pred_dir, ".pgm")) {
    std::string id = stem_of(p);
    if (id.ends_with("_bnd")) continue;
    if (id.ends_with("_obj")) id.resize(id.size() - 4);
    preds[id] = p;
  }
  if (preds.empty()) throw ValueError("eval: no predictions in " + pred_dir.string());
  std::vector<metrics::ImageScores> scores;
  std::vector<metrics::PrCurve> curves;
  for (const auto& [id, path] : preds) {
    const fs::path gpath = gt_dir / (id + ".pgm");
    if (!fs::exists(gpath)) throw IoError("eval: no ground truth for '" + id + "' at " + gpath.string());
    const Tensor s = load_pnm(path);
    Tensor g = load_pnm(gpath);
    for (double& v : g.mutable_data()) v = v >= 0.5 ? 1.0 : 0.0;
    scores.push_back(metrics::score_image(id, s, g));
    curves.push_back(metrics::pr_curve(s, g));
  }
  return metrics::aggregate(std::move(scores), curves);
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& out_dir, std::ostream& out) {
  const metrics::MetricReport r = evaluate_dirs(pred, gt);
  metrics::emit(r, out_dir);
  out << "S_alpha " << fmt6(r.mean.s_alpha) << " E_phi " << fmt6(r.mean.e_phi) << " F_w_beta "
      << fmt6(r.mean.f_w_beta) << " MAE " << fmt6(r.mean.mae) << " over " << r.images.size() << " images\n";
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const std::string& preset, std::size_t seeds, std::ostream& out) {
  if (preset != "desk") throw ValueError("gradcheck: only the desk preset is defined");
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t failed = 0;
  const auto results = run_gradcheck_suite(seeds, [&](const SuiteOutcome& o) {
    char line[160];
    std::snprintf(line, sizeof line, "%-24s seed %llu  rel %.3e  coords %zu  skipped %zu  %s\n", o.name.c_str(),
                  static_cast<unsigned long long>(o.seed), o.result.max_rel_error, o.result.coords_checked,
                  o.result.coords_skipped, o.result.passed ? "ok" : "FAIL");
    out << line;
    if (!o.result.passed) ++failed;
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << results.size() - failed << "/" << results.size() << " checks passed in " << fmt6(secs) << " s\n";
  return failed == 0 ? kExitOk : kExitNumerical;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  std::string config, data, test, out, seeds = "0,1,2", variants;
  std::size_t steps = 0, batch = 0;
  double lr = 0;
  bool no_augment = false, boundary = false;
};

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw ValueError("ablate: bad seed '" + tok + "' in --seeds");
    }
  }
  if (out.empty()) throw ValueError("ablate: --seeds is empty");
  return out;
}

metrics::ImageScores evaluate_model(const CodNet& model, const std::vector<Sample>& test) {
  std::vector<metrics::ImageScores> scores(test.size());
  std::vector<metrics::PrCurve> curves(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Tensor s = predict_maps(model, test[i].image).first;
    scores[i] = metrics::score_image(test[i].id, s, test[i].gt);
    curves[i] = metrics::pr_curve(s, test[i].gt);
  }
  return metrics::aggregate(std::move(scores), curves).mean;
}

std::string metric_cols(const metrics::ImageScores& m) {
  return fmt6(m.s_alpha) + "," + fmt6(m.e_phi) + "," + fmt6(m.f_w_beta) + "," + fmt6(m.mae);
}

int cmd_ablate(const AblateArgs& a, const CLI::App& sub, std::ostream& out) {
  TrainConfig base;
  if (!a.config.empty()) base = train_config_from_json(read_json(a.config));
  if (sub.count("--steps")) {
    // An exact budget: enough epochs that max_steps is always reached.
    base.max_steps = a.steps;
    base.epochs = std::max(base.epochs, a.steps);
  }
  if (sub.count("--batch-size")) base.batch_size = a.batch;
  if (sub.count("--lr")) base.lr = a.lr;
  if (a.no_augment) base.augment = false;
  base.data_dir.clear();
  base.out_dir.clear();
  base.validate();
  const auto seeds = parse_seed_list(a.seeds);
  std::set<std::string> wanted;
  {
    std::stringstream ss(a.variants);
    for (std::string tok; std::getline(ss, tok, ',');) {
      if (tok != "DTIT" && tok != "EarlyFuse" && tok != "LateFuse" && tok != "Minus" && tok != "BoundaryEncoding")
        throw ValueError("ablate: unknown variant '" + tok + "' in --variants");
      wanted.insert(tok);
    }
  }
  const std::vector<Sample> train_set = load_dataset(a.data);
  const std::vector<Sample> test_set = load_dataset(a.test);
  if (train_set.empty() || test_set.empty()) throw ValueError("ablate: empty training or test set");
  fs::create_directories(a.out);

  struct Row {
    std::string name;
    DecoderVariant decoder;
    BoundaryVariant boundary;
  };
  const auto run_table = [&](std::vector<Row> rows, const std::string& file) {
    if (!wanted.empty()) {
      std::erase_if(rows, [&](const Row& r) { return !wanted.count(r.name); });
      if (rows.empty()) return;
    }
    std::string table = "variant,S_alpha,E_phi,F_w_beta,MAE\n";
    std::string per_seed = "variant,seed,S_alpha,E_phi,F_w_beta,MAE\n";
    for (const Row& row : rows) {
      metrics::ImageScores sum;
      for (const std::uint64_t seed : seeds) {
        TrainConfig cfg = base;
        cfg.seed = seed;
        cfg.decoder_variant = row.decoder;
        cfg.boundary_variant = row.boundary;
        cfg.out_dir = (fs::path(a.out) / "runs" / (row.name + "_seed" + std::to_string(seed))).string();
        fs::create_directories(cfg.out_dir);
        CodNet model(cfg.model_config());
        train(model, train_set, cfg);
        const metrics::ImageScores m = evaluate_model(model, test_set);
        out << row.name << " seed " << seed << " " << metric_cols(m) << "\n";
        per_seed += row.name + "," + std::to_string(seed) + "," + metric_cols(m) + "\n";
        sum.s_alpha += m.s_alpha;
        sum.e_phi += m.e_phi;
        sum.f_w_beta += m.f_w_beta;
        sum.mae += m.mae;
      }
      const double n = static_cast<double>(seeds.size());
      sum.s_alpha /= n;
      sum.e_phi /= n;
      sum.f_w_beta /= n;
      sum.mae /= n;
      table += row.name + "," + metric_cols(sum) + "\n";
    }
    write_text(fs::path(a.out) / (file + ".csv"), table);
    write_text(fs::path(a.out) / (file + "_seeds.csv"), per_seed);
  };

  run_table({{"DTIT", DecoderVariant::Dtit, BoundaryVariant::Minus},
             {"EarlyFuse", DecoderVariant::EarlyFuse, BoundaryVariant::Minus},
             {"LateFuse", DecoderVariant::LateFuse, BoundaryVariant::Minus}},
            "ablation");
  if (a.boundary)
    run_table({{"Minus", DecoderVariant::Dtit, BoundaryVariant::Minus},
               {"BoundaryEncoding", DecoderVariant::Dtit, BoundaryVariant::Encoding}},
              "ablation_boundary");
  out << "wrote ablation tables to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-task interactive transformer for camouflaged object detection (desk scale)", "ditcod"};
  app.require_subcommand(1);
  app.fallthrough(false);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic camouflage dataset");
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--config", gd.config, "SynthConfig JSON");
  gen->add_option("--n", gd.n, "Number of samples");
  gen->add_option("--size", gd.size, "Image side in pixels");
  gen->add_option("--delta", gd.delta, "Object luminance shift, in (0, 0.2]");
  gen->add_option("--shapes", gd.shapes, "ellipse, blob or mixed");
  gen->add_option("--seed", gd.seed, "Dataset seed");

  GenBoundaryArgs gb;
  auto* gbnd = app.add_subcommand("gen-boundary", "Boundary ground truth (Canny) for a directory of PGM masks");
  gbnd->add_option("--masks", gb.masks, "Directory of *.pgm masks")->required();
  gbnd->add_option("--out", gb.out, "Output directory")->required();
  gbnd->add_option("--sigma", gb.canny.sigma, "Gaussian sigma")->capture_default_str();
  gbnd->add_option("--low", gb.canny.low, "Low hysteresis threshold (fraction of max)")->capture_default_str();
  gbnd->add_option("--high", gb.canny.high, "High hysteresis threshold (fraction of max)")->capture_default_str();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", ta.config, "TrainConfig JSON");
  tr->add_option("--preset", ta.preset, "desk or full");
  tr->add_option("--data", ta.data, "Dataset directory");
  tr->add_option("--out", ta.out, "Output directory (loss.csv, checkpoint/)");
  tr->add_option("--seed", ta.seed, "Seed for initialization and shuffling");
  tr->add_option("--steps", ta.steps, "Stop after this many optimizer steps");
  tr->add_option("--epochs", ta.epochs, "Epochs");
  tr->add_option("--lr", ta.lr, "Adam learning rate");
  tr->add_option("--batch-size", ta.batch, "Batch size");
  tr->add_option("--decoder-variant", ta.decoder, "DTIT, EarlyFuse or LateFuse");
  tr->add_option("--boundary-variant", ta.boundary, "Minus or BoundaryEncoding");
  tr->add_flag("--no-augment", ta.no_augment, "Disable data augmentation");
  tr->add_option("--log-every", ta.log_every, "Print the loss every N steps (0: never)")->capture_default_str();

  std::string pr_ckpt, pr_in, pr_out;
  auto* pred = app.add_subcommand("predict", "Write S^o and S^e maps as PGM");
  pred->add_option("--checkpoint", pr_ckpt, "Checkpoint directory or training output directory")->required();
  pred->add_option("--input", pr_in, "A .ppm image or a directory of them (img/ is used if present)")->required();
  pred->add_option("--out", pr_out, "Output directory")->required();

  std::string ev_pred, ev_gt, ev_out;
  auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
  ev->add_option("--pred", ev_pred, "Directory of {id}.pgm or {id}_obj.pgm maps")->required();
  ev->add_option("--gt", ev_gt, "Directory of {id}.pgm masks (gt/ is used if present)")->required();
  ev->add_option("--out", ev_out, "Output directory for metrics.csv, pr.csv, pr.svg")->required();

  std::string gc_preset = "desk";
  std::size_t gc_seeds = 3;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every op and composite");
  gc->add_option("--preset", gc_preset, "Model preset")->capture_default_str();
  gc->add_option("--seeds", gc_seeds, "Random seeds per check")->capture_default_str()->check(CLI::PositiveNumber);

  AblateArgs ab;
  auto* abl = app.add_subcommand("ablate", "Compare decoder (and optionally boundary) variants");
  abl->add_option("--data", ab.data, "Training dataset directory")->required();
  abl->add_option("--test", ab.test, "Held-out dataset directory")->required();
  abl->add_option("--out", ab.out, "Output directory")->required();
  abl->add_option("--config", ab.config, "TrainConfig JSON shared by every run");
  abl->add_option("--seeds", ab.seeds, "Comma-separated training seeds")->capture_default_str();
  abl->add_option("--steps", ab.steps, "Optimizer steps per run (exact; epochs are extended as needed)");
  abl->add_option("--lr", ab.lr, "Adam learning rate");
  abl->add_option("--batch-size", ab.batch, "Batch size");
  abl->add_flag("--no-augment", ab.no_augment, "Disable data augmentation");
  abl->add_option("--variants", ab.variants, "Comma-separated subset of rows to run (default: all)");
  abl->add_flag("--boundary", ab.boundary, "Also compare Minus against BoundaryEncoding");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(gd, *gen, out);
    if (*gbnd) return cmd_gen_boundary(gb, out);
    if (*tr) return cmd_train(ta, *tr, out);
    if (*pred) return cmd_predict(pr_ckpt, pr_in, pr_out, out);
    if (*ev) return cmd_eval(ev_pred, ev_gt, ev_out, out);
    if (*gc) return cmd_gradcheck(gc_preset, gc_seeds, out);
    if (*abl) return cmd_ablate(ab, *abl, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace ditcod
