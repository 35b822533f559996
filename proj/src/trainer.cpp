#include "mrinet/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "mrinet/error.hpp"
#include "mrinet/image.hpp"
#include "mrinet/rng.hpp"
#include "mrinet/weights_io.hpp"

namespace mrinet {

namespace fs = std::filesystem;

std::string_view to_string(Arm arm) {
  switch (arm) {
    case Arm::PN: return "PN";
    case Arm::PM: return "PM";
    case Arm::MN: return "MN";
    case Arm::PMN: return "PMN";
  }
  return "?";
}

std::string_view to_string(ModelKind model) {
  switch (model) {
    case ModelKind::alexnet: return "alexnet";
    case ModelKind::alexnet_opt_lrn: return "alexnet-opt-lrn";
    case ModelKind::alexnet_opt_bn: return "alexnet-opt-bn";
  }
  return "?";
}

std::optional<Arm> parse_arm(std::string_view s) {
  for (Arm a : {Arm::PN, Arm::PM, Arm::MN, Arm::PMN}) {
    if (s == to_string(a)) return a;
  }
  return std::nullopt;
}

std::optional<ModelKind> parse_model(std::string_view s) {
  for (ModelKind m : {ModelKind::alexnet, ModelKind::alexnet_opt_lrn, ModelKind::alexnet_opt_bn}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

std::vector<ClassLabel> arm_classes(Arm arm) {
  switch (arm) {
    case Arm::PN: return {ClassLabel::PD, ClassLabel::Normal};
    case Arm::PM: return {ClassLabel::PD, ClassLabel::MSA};
    case Arm::MN: return {ClassLabel::MSA, ClassLabel::Normal};
    case Arm::PMN: return {ClassLabel::PD, ClassLabel::MSA, ClassLabel::Normal};
  }
  return {};
}

void TrainConfig::check() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw std::invalid_argument("weight decay must be finite and >= 0");
  }
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string describe_without_epochs(const TrainConfig& c) {
  std::ostringstream os;
  os << "lr=" << fmt17(c.learning_rate) << "\nmomentum=" << fmt17(c.momentum)
     << "\nweight_decay=" << fmt17(c.weight_decay) << "\nbatch=" << c.batch_size
     << "\nseed=" << c.seed << "\narm=" << to_string(c.arm) << "\nmodel=" << to_string(c.model)
     << "\nscale=" << (c.scale == Scale::full ? "full" : "mini") << "\n";
  return os.str();
}

TrainConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("config is missing '") + key + "'");
    return it->second;
  };
  TrainConfig c;
  try {
    c.learning_rate = std::stod(get("lr"));
    c.momentum = std::stod(get("momentum"));
    c.weight_decay = std::stod(get("weight_decay"));
    c.batch_size = std::stoi(get("batch"));
    c.epochs = std::stoi(get("epochs"));
    c.seed = std::stoull(get("seed"));
  } catch (const std::logic_error&) {
    throw FormatError("malformed number in stored config");
  }
  const auto arm = parse_arm(get("arm"));
  const auto model = parse_model(get("model"));
  const std::string scale = get("scale");
  if (!arm || !model || (scale != "full" && scale != "mini")) {
    throw FormatError("unknown arm, model or scale in stored config");
  }
  c.arm = *arm;
  c.model = *model;
  c.scale = scale == "full" ? Scale::full : Scale::mini;
  return c;
}

}  // namespace

std::string describe(const TrainConfig& cfg) {
  return describe_without_epochs(cfg) + "epochs=" + std::to_string(cfg.epochs) + "\n";
}

std::uint64_t config_hash(const TrainConfig& cfg) { return fnv1a64(describe_without_epochs(cfg)); }

NetworkSpec build_model(const TrainConfig& cfg) {
  const int k = static_cast<int>(arm_classes(cfg.arm).size());
  switch (cfg.model) {
    case ModelKind::alexnet: return build_alexnet(k, cfg.scale);
    case ModelKind::alexnet_opt_lrn: return build_alexnet_optimized(k, cfg.scale, NormKind::lrn);
    case ModelKind::alexnet_opt_bn:
      return build_alexnet_optimized(k, cfg.scale, NormKind::batchnorm);
  }
  throw std::invalid_argument("unknown model");
}

std::optional<std::size_t> best_index(const std::vector<MetricsRecord>& history) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (!best) {
      best = i;
      continue;
    }
    const MetricsRecord& a = history[i];
    const MetricsRecord& b = history[*best];
    if (a.val_acc > b.val_acc || (a.val_acc == b.val_acc && a.val_loss < b.val_loss)) best = i;
  }
  return best;
}

namespace {

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

void export_metrics_csv(const std::vector<MetricsRecord>& history, const fs::path& path) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_acc\n";
  for (const MetricsRecord& r : history) {
    os << r.epoch << ',' << g6(r.train_loss) << ',' << g6(r.val_loss) << ',' << g6(r.val_acc)
       << '\n';
  }
  if (const auto b = best_index(history)) {
    const MetricsRecord& r = history[*b];
    os << "best," << g6(r.train_loss) << ',' << g6(r.val_loss) << ',' << g6(r.val_acc) << '\n';
  } else {
    os << "best,,,\n";
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << os.str();
  if (!out.flush()) throw std::runtime_error("write to '" + path.string() + "' failed");
}

MetricsCsv read_metrics_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(is, line) || line != "epoch,train_loss,val_loss,val_acc") {
    throw FormatError(path.string() + ": bad metrics header");
  }
  MetricsCsv out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) f.push_back(field);
    while (f.size() < 4 && !line.empty() && line.back() == ',') f.emplace_back();
    const std::string at = path.string() + ":" + std::to_string(lineno) + ": ";
    if (f.size() != 4) throw FormatError(at + "expected 4 fields");
    try {
      if (f[0] == "best") {
        if (!f[1].empty()) {
          out.best = MetricsRecord{-1, std::stod(f[1]), std::stod(f[2]), std::stod(f[3])};
        }
      } else {
        out.history.push_back({std::stoi(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
      }
    } catch (const std::logic_error&) {
      throw FormatError(at + "malformed number");
    }
  }
  return out;
}

void check_arm_closure(const DatasetManifest& manifest, Arm arm) {
  const auto classes = arm_classes(arm);
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const ManifestRow& r = manifest.rows[i];
    if (std::find(classes.begin(), classes.end(), r.label) == classes.end()) {
      throw DataError("manifest row " + std::to_string(i + 1) + " ('" + r.path + "'): label " +
                      std::string(to_string(r.label)) + " is not part of arm " +
                      std::string(to_string(arm)));
    }
  }
}

LabeledSet load_split(const DatasetManifest& manifest, Split split, Arm arm,
                      const Shape& input_shape) {
  check_arm_closure(manifest, arm);
  const auto classes = arm_classes(arm);
  if (input_shape.rank() != 3 || input_shape[0] != 1) {
    throw ShapeError("load_split: expected a [1, H, W] input shape, got " + input_shape.str());
  }
  const std::size_t h = input_shape[1], w = input_shape[2];
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    if (manifest.rows[i].split == split) rows.push_back(i);
  }
  if (rows.empty()) {
    throw DataError("manifest has no rows in split '" + std::string(to_string(split)) + "'");
  }
  LabeledSet set;
  set.images = Tensor(Shape{static_cast<std::int64_t>(rows.size()), 1,
                            static_cast<std::int64_t>(h), static_cast<std::int64_t>(w)});
  double* dst = set.images.raw();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const ManifestRow& r = manifest.rows[rows[k]];
    const Image img = read_pgm(manifest.resolve(r));
    if (img.width() != w || img.height() != h) {
      throw DataError("manifest row " + std::to_string(rows[k] + 1) + " ('" + r.path + "'): image is " +
                      std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                      ", model expects " + std::to_string(w) + "x" + std::to_string(h));
    }
    for (std::size_t p = 0; p < h * w; ++p) dst[k * h * w + p] = img.pixels[p] / 255.0;
    set.labels.push_back(static_cast<int>(
        std::find(classes.begin(), classes.end(), r.label) - classes.begin()));
    set.paths.push_back(r.path);
  }
  return set;
}

WeightStore zero_velocity(const NetworkSpec& spec) {
  WeightStore v;
  const std::vector<Shape> outs = infer_shapes(spec);
  for (std::size_t k = 0; k < spec.nodes.size(); ++k) {
    const LayerNode& node = spec.nodes[k];
    const auto shapes = param_shapes(node.config, k == 0 ? spec.input_shape : outs[k - 1]);
    const std::size_t n = trainable_count(node.config);
    if (n == 0) continue;
    auto& tensors = v.layers[node.name];
    for (std::size_t i = 0; i < n; ++i) tensors.push_back(tensor_new(shapes[i], 0.0));
  }
  return v;
}

void sgd_step(WeightStore& params, const GradStore& grads, WeightStore& velocity,
              const TrainConfig& cfg) {
  // Validate everything before touching any tensor.
  for (const auto& [name, gs] : grads.layers) {
    auto p = params.layers.find(name);
    auto v = velocity.layers.find(name);
    if (p == params.layers.end() || v == velocity.layers.end() || p->second.size() < gs.size() ||
        v->second.size() != gs.size()) {
      throw ShapeError("sgd_step: layer '" + name + "' missing from params or velocity");
    }
    for (std::size_t i = 0; i < gs.size(); ++i) {
      if (gs[i].shape() != p->second[i].shape() || gs[i].shape() != v->second[i].shape()) {
        throw ShapeError("sgd_step: shape mismatch in layer '" + name + "' tensor " +
                         std::to_string(i));
      }
    }
  }
  const double mu = cfg.momentum, lr = cfg.learning_rate, wd = cfg.weight_decay;
  for (const auto& [name, gs] : grads.layers) {
    auto& ps = params.layers.at(name);
    auto& vs = velocity.layers.at(name);
    for (std::size_t i = 0; i < gs.size(); ++i) {
      double* w = ps[i].raw();
      double* v = vs[i].raw();
      const double* g = gs[i].raw();
      const auto n = static_cast<std::int64_t>(gs[i].numel());
#pragma omp parallel for schedule(static) if (n > 65536)
      for (std::int64_t j = 0; j < n; ++j) {
        v[j] = mu * v[j] - lr * (g[j] + wd * w[j]);
        w[j] = w[j] + v[j];
      }
    }
  }
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size,
                                                    std::uint64_t seed, int epoch) {
  if (n == 0) throw DataError("training split is empty");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SeededRng rng(mix_seed(seed, 0x100000000ULL + static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  std::vector<std::vector<std::size_t>> batches;
  const auto b = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < n; start += b) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + b)));
  }
  // Batch statistics need at least two samples.
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

Tensor gather(const Tensor& images, const std::vector<std::size_t>& idx) {
  const Shape sample = images.shape().drop(0);
  std::vector<std::int64_t> dims{static_cast<std::int64_t>(idx.size())};
  for (std::size_t d : sample.dims()) dims.push_back(static_cast<std::int64_t>(d));
  Tensor out{Shape(dims)};
  const std::size_t stride = sample.numel();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::memcpy(out.raw() + k * stride, images.raw() + idx[k] * stride, stride * sizeof(double));
  }
  return out;
}

double train_epoch(const NetworkSpec& spec, WeightStore& weights, WeightStore& velocity,
                   const LabeledSet& train, const TrainConfig& cfg, int epoch) {
  const auto batches = epoch_batches(train.size(), cfg.batch_size, cfg.seed, epoch);
  double total = 0.0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const Tensor x = gather(train.images, batches[b]);
    std::vector<int> y;
    y.reserve(batches[b].size());
    for (std::size_t i : batches[b]) y.push_back(train.labels[i]);
    NetworkOutput out;
    try {
      out = network_forward(spec, weights, x, y, Mode::train);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1) +
                         ": " + e.what());
    }
    if (!out.loss || !std::isfinite(*out.loss)) {
      throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1) +
                         ": training loss is not finite");
    }
    const GradStore grads = network_backward(spec, weights, out, y);
    apply_running_stats(spec, weights, out);
    sgd_step(weights, grads, velocity, cfg);
    total += *out.loss;
  }
  return total / static_cast<double>(batches.size());
}

EvalResult evaluate(const NetworkSpec& spec, const WeightStore& weights, const LabeledSet& data) {
  if (data.size() == 0) throw DataError("evaluate: split is empty");
  constexpr std::size_t kChunk = 64;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + kChunk); ++i) idx.push_back(i);
    const std::vector<int> y(data.labels.begin() + static_cast<std::ptrdiff_t>(start),
                             data.labels.begin() + static_cast<std::ptrdiff_t>(start + idx.size()));
    const NetworkOutput out = network_forward(spec, weights, gather(data.images, idx), y, Mode::infer);
    loss_sum += *out.loss * static_cast<double>(idx.size());
    const auto pred = predict(out.logits);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == y[i];
  }
  const auto n = static_cast<double>(data.size());
  return EvalResult{loss_sum / n, 100.0 * static_cast<double>(correct) / n};
}

namespace {

constexpr char kCkptMagic[4] = {'M', 'R', 'I', 'C'};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  std::ostringstream os(std::ios::binary);
  os.write(kCkptMagic, 4);
  binio::put_u32(os, kCheckpointVersion);
  binio::put_string(os, describe(ckpt.config));
  binio::put_u64(os, ckpt.hash);
  binio::put_u32(os, static_cast<std::uint32_t>(ckpt.epoch));
  binio::put_u32(os, static_cast<std::uint32_t>(ckpt.history.size()));
  for (const MetricsRecord& r : ckpt.history) {
    binio::put_u32(os, static_cast<std::uint32_t>(r.epoch));
    binio::put_f64(os, r.train_loss);
    binio::put_f64(os, r.val_loss);
    binio::put_f64(os, r.val_acc);
  }
  write_weight_store(os, ckpt.weights);
  write_weight_store(os, ckpt.velocity);
  write_weight_store(os, ckpt.best_weights);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << os.str();
  if (!out.flush()) throw std::runtime_error("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  try {
    char magic[4] = {};
    if (!is.read(magic, 4) || std::memcmp(magic, kCkptMagic, 4) != 0) {
      throw FormatError("not a checkpoint (bad magic)");
    }
    const std::uint32_t version = binio::get_u32(is);
    if (version != kCheckpointVersion) {
      throw FormatError("checkpoint version " + std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointVersion));
    }
    Checkpoint c;
    c.config = parse_config(binio::get_string(is, 4096));
    c.hash = binio::get_u64(is);
    if (c.hash != config_hash(c.config)) throw FormatError("config hash mismatch");
    c.epoch = static_cast<int>(binio::get_u32(is));
    const std::uint32_t n = binio::get_u32(is);
    for (std::uint32_t i = 0; i < n; ++i) {
      MetricsRecord r;
      r.epoch = static_cast<int>(binio::get_u32(is));
      r.train_loss = binio::get_f64(is);
      r.val_loss = binio::get_f64(is);
      r.val_acc = binio::get_f64(is);
      c.history.push_back(r);
    }
    c.weights = read_weight_store(is);
    c.velocity = read_weight_store(is);
    c.best_weights = read_weight_store(is);
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes");
    const NetworkSpec spec = build_model(c.config);
    check_weights(spec, c.weights);
    return c;
  } catch (const FormatError& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

FitResult fit(const TrainConfig& cfg, const LabeledSet& train, const LabeledSet& val,
              const FitOptions& options) {
  cfg.check();
  if (train.size() == 0 || val.size() == 0) {
    throw DataError("fit: train and val splits need at least one sample each");
  }
  const NetworkSpec spec = build_model(cfg);
  const std::uint64_t hash = config_hash(cfg);

  Checkpoint state;
  state.config = cfg;
  state.hash = hash;
  if (options.resume != nullptr) {
    const Checkpoint& r = *options.resume;
    if (r.hash != hash) {
      throw std::invalid_argument("resume: checkpoint was written by a different configuration");
    }
    check_weights(spec, r.weights);
    state.epoch = r.epoch;
    state.weights = r.weights;
    state.velocity = r.velocity;
    state.history = r.history;
    state.best_weights = r.best_weights;
  } else {
    SeededRng rng(mix_seed(cfg.seed, 0));
    state.weights = init_weights(spec, rng);
    state.velocity = zero_velocity(spec);
    state.best_weights = state.weights;
  }

  const int last_epoch = options.stop_after > 0 ? std::min(cfg.epochs, options.stop_after) : cfg.epochs;
  for (int epoch = state.epoch + 1; epoch <= last_epoch; ++epoch) {
    const double train_loss = train_epoch(spec, state.weights, state.velocity, train, cfg, epoch);
    const EvalResult ev = evaluate(spec, state.weights, val);
    if (!std::isfinite(ev.loss)) {
      throw NumericError("epoch " + std::to_string(epoch) + ": validation loss is not finite");
    }
    state.history.push_back({epoch, train_loss, ev.loss, ev.accuracy});
    state.epoch = epoch;
    if (*best_index(state.history) == state.history.size() - 1) state.best_weights = state.weights;
    if (options.on_epoch) options.on_epoch(state.history.back());
  }

  FitResult result;
  result.history = state.history;
  result.last = state;
  result.best = state;
  result.best.weights = state.best_weights;
  result.best.velocity = WeightStore{};
  if (const auto b = best_index(state.history)) {
    result.best.epoch = state.history[*b].epoch;
  } else {
    result.best.epoch = 0;
  }
  return result;
}

FitResult fit(const TrainConfig& cfg, const DatasetManifest& manifest, const FitOptions& options) {
  cfg.check();
  check_arm_closure(manifest, cfg.arm);
  const NetworkSpec spec = build_model(cfg);
  const LabeledSet train = load_split(manifest, Split::train, cfg.arm, spec.input_shape);
  const LabeledSet val = load_split(manifest, Split::val, cfg.arm, spec.input_shape);
  return fit(cfg, train, val, options);
}

}  // namespace mrinet
