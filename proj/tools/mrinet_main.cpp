// mrinet command-line driver.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mrinet/augment.hpp"
#include "mrinet/dataset.hpp"
#include "mrinet/error.hpp"
#include "mrinet/gradcheck.hpp"
#include "mrinet/model_zoo.hpp"
#include "mrinet/phantom.hpp"
#include "mrinet/trainer.hpp"
#include "mrinet/weights_io.hpp"

namespace fs = std::filesystem;
using namespace mrinet;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool deterministic = true;
  bool quiet = false;
};

void show_config(const Globals& g, const std::string& command,
                 const std::vector<std::pair<std::string, std::string>>& items) {
  if (g.quiet) return;
  std::cerr << "mrinet " << command << ":";
  std::cerr << " seed=" << g.seed << " deterministic=" << (g.deterministic ? "on" : "on (forced)");
  for (const auto& [k, v] : items) std::cerr << ' ' << k << '=' << v;
  std::cerr << '\n';
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int gen_data(const Globals& g, const std::string& out, std::size_t per_class, std::size_t size,
             double noise, const std::string& split) {
  show_config(g, "gen-data",
              {{"out", out}, {"per_class", std::to_string(per_class)},
               {"size", std::to_string(size)}, {"noise", num(noise)}, {"split", split}});
  DatasetManifest m = generate_dataset(per_class, out, g.seed, size, noise);
  if (split == "counts") m = split_dataset(m, SplitRatios{}, g.seed);
  if (split == "percent") m = split_dataset(m, SplitRatios::percent(), g.seed);
  save_manifest(m, fs::path(out) / "manifest.csv");
  if (!g.quiet) {
    std::cerr << "wrote " << m.rows.size() << " images; train=" << m.count(Split::train)
              << " val=" << m.count(Split::val) << " test=" << m.count(Split::test) << '\n';
  }
  return 0;
}

int augment(const Globals& g, const std::string& manifest_path, const std::string& out,
            const std::vector<double>& angles, const std::string& mirror) {
  std::vector<AugmentOp> plan;
  std::string angle_list;
  for (double a : angles) {
    const Angle angle(a);
    plan.push_back(RotateOp{angle});
    angle_list += (angle_list.empty() ? "" : ",") + num(angle.degrees());
    if (!g.quiet && angle.degrees() != a) {
      std::cerr << "rotation " << num(a) << " normalized to " << num(angle.degrees()) << '\n';
    }
  }
  if (mirror == "vertical" || mirror == "both") plan.push_back(MirrorOp{MirrorAxis::vertical});
  if (mirror == "horizontal" || mirror == "both") plan.push_back(MirrorOp{MirrorAxis::horizontal});
  show_config(g, "augment",
              {{"manifest", manifest_path}, {"out", out},
               {"rotate", angle_list.empty() ? "-" : angle_list},
               {"mirror", mirror.empty() ? "-" : mirror}});
  const DatasetManifest in = load_manifest(manifest_path);
  validate_manifest_files(in);
  const DatasetManifest result = augment_dataset(in, plan, out);
  save_manifest(result, fs::path(out) / "manifest.csv");
  if (!g.quiet) std::cerr << "manifest has " << result.rows.size() << " rows\n";
  return 0;
}

struct TrainArgs {
  std::string manifest, arm = "PMN", model = "alexnet", scale = "mini";
  std::string metrics, checkpoint, last_checkpoint, resume;
  int epochs = TrainConfig{}.epochs;
  int batch = TrainConfig{}.batch_size;
  double lr = TrainConfig{}.learning_rate, momentum = TrainConfig{}.momentum,
         weight_decay = TrainConfig{}.weight_decay;
};

TrainConfig to_config(const Globals& g, const TrainArgs& a) {
  TrainConfig c;
  c.learning_rate = a.lr;
  c.momentum = a.momentum;
  c.weight_decay = a.weight_decay;
  c.batch_size = a.batch;
  c.epochs = a.epochs;
  c.seed = g.seed;
  c.arm = *parse_arm(a.arm);
  c.model = *parse_model(a.model);
  c.scale = a.scale == "full" ? Scale::full : Scale::mini;
  c.check();
  return c;
}

int train(const Globals& g, const TrainArgs& a) {
  const TrainConfig cfg = to_config(g, a);
  std::vector<std::pair<std::string, std::string>> items{{"manifest", a.manifest}};
  std::istringstream desc(describe(cfg));
  for (std::string line; std::getline(desc, line);) {
    const auto eq = line.find('=');
    items.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  show_config(g, "train", items);

  const DatasetManifest m = load_manifest(a.manifest);
  FitOptions opts;
  Checkpoint resume;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    opts.resume = &resume;
  }
  if (!g.quiet) {
    opts.on_epoch = [](const MetricsRecord& r) {
      std::fprintf(stderr, "epoch %d train_loss=%.6g val_loss=%.6g val_acc=%.2f\n", r.epoch,
                   r.train_loss, r.val_loss, r.val_acc);
    };
  }
  const FitResult result = fit(cfg, m, opts);
  if (!a.metrics.empty()) export_metrics_csv(result.history, a.metrics);
  if (!a.checkpoint.empty()) save_checkpoint(result.best, a.checkpoint);
  if (!a.last_checkpoint.empty()) save_checkpoint(result.last, a.last_checkpoint);
  if (const auto b = best_index(result.history)) {
    const MetricsRecord& r = result.history[*b];
    std::printf("best_epoch=%d train_loss=%.6g val_loss=%.6g val_acc=%.2f\n", r.epoch,
                r.train_loss, r.val_loss, r.val_acc);
  } else {
    std::printf("best_epoch=0\n");
  }
  return 0;
}

int eval(const Globals& g, const std::string& manifest_path, const std::string& split_name,
         const std::string& ckpt_path) {
  show_config(g, "eval", {{"manifest", manifest_path}, {"split", split_name},
                          {"checkpoint", ckpt_path}});
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const NetworkSpec spec = build_model(ckpt.config);
  const DatasetManifest m = load_manifest(manifest_path);
  const LabeledSet data = load_split(m, *parse_split(split_name), ckpt.config.arm, spec.input_shape);
  const EvalResult r = evaluate(spec, ckpt.weights, data);
  std::printf("loss=%.6g acc=%.2f\n", r.loss, r.accuracy);
  return 0;
}

int gradcheck(const Globals& g, const std::string& layer, int trials, double tol) {
  show_config(g, "gradcheck",
              {{"layer", layer}, {"trials", std::to_string(trials)}, {"tol", num(tol)}});
  const auto reports = run_gradcheck_suite(layer, trials, tol, g.seed);
  bool ok = true;
  std::printf("%-10s %-6s %-14s %s\n", "variant", "result", "max_rel_error", "derivatives");
  for (const GradReport& r : reports) {
    std::printf("%-10s %-6s %-14.3e %zu\n", r.label.c_str(), r.pass ? "PASS" : "FAIL",
                r.max_rel_error, r.checked);
    ok = ok && r.pass;
  }
  return ok ? 0 : 2;
}

int model(const Globals& g, const std::string& name, const std::string& scale, int classes,
          bool prototxt) {
  show_config(g, "model", {{"model", name}, {"scale", scale}, {"classes", std::to_string(classes)}});
  NetworkSpec spec;
  if (name == "dense-rf") {
    spec = receptive_field_dense_spec();
  } else if (name == "local-rf") {
    spec = receptive_field_local_spec();
  } else {
    const Scale s = scale == "full" ? Scale::full : Scale::mini;
    const ModelKind kind = *parse_model(name);
    spec = kind == ModelKind::alexnet ? build_alexnet(classes, s)
           : kind == ModelKind::alexnet_opt_lrn
               ? build_alexnet_optimized(classes, s, NormKind::lrn)
               : build_alexnet_optimized(classes, s, NormKind::batchnorm);
  }
  if (prototxt) std::cout << to_prototxt(spec);
  std::printf("params=%lld\n", static_cast<long long>(param_count(spec)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mrinet: CNN training pipeline for synthetic brain phantoms"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random stream")->capture_default_str();
  app.add_flag("--deterministic,!--no-deterministic", g.deterministic,
               "Fixed accumulation order (always on; kernels are thread-count invariant)");
  app.add_flag("-q,--quiet", g.quiet, "Do not print the resolved configuration or progress");

  auto* gen = app.add_subcommand("gen-data", "Generate phantom images and a split manifest");
  std::string gen_out, gen_split = "counts";
  std::size_t per_class = 100, size = 64;
  double noise = kDefaultPhantomNoise;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--per-class", per_class, "Images per class")->capture_default_str();
  gen->add_option("--size", size, "Pixels per side")->capture_default_str();
  gen->add_option("--noise", noise, "Gaussian noise standard deviation")->capture_default_str();
  gen->add_option("--split", gen_split, "Split ratios: counts, percent or none")
      ->check(CLI::IsMember({"counts", "percent", "none"}))
      ->capture_default_str();

  auto* aug = app.add_subcommand("augment", "Rotate and mirror every image of a manifest");
  std::string aug_manifest, aug_out, mirror;
  std::vector<double> angles;
  aug->add_option("--manifest", aug_manifest, "Input manifest")->required();
  aug->add_option("--out", aug_out, "Output directory")->required();
  aug->add_option("--rotate", angles, "Rotation angles in degrees")->delimiter(',');
  aug->add_option("--mirror", mirror, "vertical, horizontal or both")
      ->check(CLI::IsMember({"vertical", "horizontal", "both"}));

  auto* tr = app.add_subcommand("train", "Train one model on one arm");
  TrainArgs ta;
  tr->add_option("--manifest", ta.manifest, "Split manifest")->required();
  tr->add_option("--arm", ta.arm)->check(CLI::IsMember({"PN", "PM", "MN", "PMN"}))->capture_default_str();
  tr->add_option("--model", ta.model)
      ->check(CLI::IsMember({"alexnet", "alexnet-opt-lrn", "alexnet-opt-bn"}))
      ->capture_default_str();
  tr->add_option("--scale", ta.scale)->check(CLI::IsMember({"mini", "full"}))->capture_default_str();
  tr->add_option("--epochs", ta.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
  tr->add_option("--lr", ta.lr)->check(CLI::NonNegativeNumber)->capture_default_str();
  tr->add_option("--batch", ta.batch)->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_option("--momentum", ta.momentum)->check(CLI::Range(0.0, 0.999999))->capture_default_str();
  tr->add_option("--weight-decay", ta.weight_decay)->check(CLI::NonNegativeNumber)->capture_default_str();
  tr->add_option("--metrics", ta.metrics, "Metrics CSV output");
  tr->add_option("--checkpoint", ta.checkpoint, "Best-epoch checkpoint output");
  tr->add_option("--last-checkpoint", ta.last_checkpoint, "Final-state checkpoint output");
  tr->add_option("--resume", ta.resume, "Continue from a final-state checkpoint");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  std::string ev_manifest, ev_split = "test", ev_ckpt;
  ev->add_option("--manifest", ev_manifest)->required();
  ev->add_option("--split", ev_split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  ev->add_option("--checkpoint", ev_ckpt)->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks per layer");
  std::string gc_layer = "all";
  int trials = 10;
  double tol = 1e-4;
  gc->add_option("--layer", gc_layer)
      ->check(CLI::IsMember({"all", "conv", "local", "pool", "maxpool", "meanpool", "act", "sigmoid",
                             "tanh", "relu", "lrn", "bn", "fc", "softmax"}))
      ->capture_default_str();
  gc->add_option("--trials", trials)->check(CLI::PositiveNumber)->capture_default_str();
  gc->add_option("--tol", tol)->check(CLI::PositiveNumber)->capture_default_str();

  auto* md = app.add_subcommand("model", "Print a network definition and its parameter count");
  std::string md_name = "alexnet-opt-lrn", md_scale = "mini";
  int classes = 3;
  bool prototxt = false;
  md->add_option("--model", md_name)
      ->check(CLI::IsMember({"alexnet", "alexnet-opt-lrn", "alexnet-opt-bn", "dense-rf", "local-rf"}))
      ->capture_default_str();
  md->add_option("--scale", md_scale)->check(CLI::IsMember({"mini", "full"}))->capture_default_str();
  md->add_option("--classes", classes)->capture_default_str();
  md->add_flag("--prototxt", prototxt, "Print the layer definitions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return gen_data(g, gen_out, per_class, size, noise, gen_split);
    if (*aug) return augment(g, aug_manifest, aug_out, angles, mirror);
    if (*tr) return train(g, ta);
    if (*ev) return eval(g, ev_manifest, ev_split, ev_ckpt);
    if (*gc) return gradcheck(g, gc_layer, trials, tol);
    if (*md) return model(g, md_name, md_scale, classes, prototxt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
