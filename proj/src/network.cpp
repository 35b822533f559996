#include "mrinet/network.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace mrinet {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string node_error(const LayerNode& node, const std::string& what) {
  return "node '" + node.name + "': " + what;
}

Shape batched(std::size_t n, const Shape& sample) {
  std::vector<std::int64_t> d{static_cast<std::int64_t>(n)};
  for (std::size_t v : sample.dims()) d.push_back(static_cast<std::int64_t>(v));
  return Shape(d);
}

std::span<const Tensor> params_of(const WeightStore& weights, const LayerNode& node) {
  auto it = weights.layers.find(node.name);
  if (it == weights.layers.end()) return {};
  return it->second;
}

std::size_t fan_in(const LayerConfig& config) {
  return std::visit(Overloaded{
                        [](const Conv2d& c) {
                          return static_cast<std::size_t>(c.in_channels * c.kernel_h * c.kernel_w);
                        },
                        [](const LocallyConnected& l) {
                          return static_cast<std::size_t>(l.in_channels * l.kernel_h * l.kernel_w);
                        },
                        [](const Linear& l) { return static_cast<std::size_t>(l.in_features); },
                        [](const auto&) { return std::size_t{1}; },
                    },
                    config);
}

}  // namespace

LayerKind kind_of(const LayerConfig& config) {
  return std::visit(Overloaded{
                        [](const Conv2d&) { return LayerKind::conv; },
                        [](const LocallyConnected&) { return LayerKind::local; },
                        [](const Pool2d& p) {
                          return p.kind == PoolKind::max ? LayerKind::maxpool : LayerKind::avgpool;
                        },
                        [](const Activation&) { return LayerKind::activation; },
                        [](const Lrn&) { return LayerKind::lrn; },
                        [](const BatchNorm&) { return LayerKind::batchnorm; },
                        [](const Linear&) { return LayerKind::fc; },
                        [](const SoftmaxCrossEntropy&) { return LayerKind::softmax_ce; },
                    },
                    config);
}

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::local: return "local";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::activation: return "activation";
    case LayerKind::lrn: return "lrn";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::fc: return "fc";
    case LayerKind::softmax_ce: return "softmax_ce";
  }
  return "?";
}

std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
  std::vector<Shape> shapes;
  Shape current = spec.input_shape;
  std::set<std::string> names;
  std::string previous_top = "data";
  for (const LayerNode& node : spec.nodes) {
    if (!names.insert(node.name).second) {
      throw std::invalid_argument(node_error(node, "duplicate layer name"));
    }
    if (node.bottom != previous_top) {
      throw std::invalid_argument(node_error(
          node, "bottom '" + node.bottom + "' is not the previous top '" + previous_top + "'"));
    }
    try {
      validate(node.config);
      current = output_shape(node.config, current);
    } catch (const ShapeError& e) {
      throw ShapeError(node_error(node, e.what()));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(node_error(node, e.what()));
    }
    shapes.push_back(current);
    previous_top = node.top;
  }
  return shapes;
}

void validate(const NetworkSpec& spec) {
  if (spec.num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (spec.nodes.empty()) throw std::invalid_argument("network has no layers");
  const auto shapes = infer_shapes(spec);
  for (std::size_t i = 0; i + 1 < spec.nodes.size(); ++i) {
    if (kind_of(spec.nodes[i].config) == LayerKind::softmax_ce) {
      throw std::invalid_argument(node_error(spec.nodes[i], "loss node must be last"));
    }
  }
  const LayerNode& last = spec.nodes.back();
  if (kind_of(last.config) != LayerKind::softmax_ce) {
    throw std::invalid_argument("last node '" + last.name + "' is not a loss node");
  }
  const Shape logits = spec.nodes.size() >= 2 ? shapes[shapes.size() - 2] : spec.input_shape;
  if (logits != Shape{spec.num_classes}) {
    throw ShapeError("loss node receives " + logits.str() + ", expected [" +
                     std::to_string(spec.num_classes) + "]");
  }
}

std::int64_t param_count(const NetworkSpec& spec) {
  infer_shapes(spec);
  std::int64_t total = 0;
  Shape current = spec.input_shape;
  for (const LayerNode& node : spec.nodes) {
    const auto shapes = param_shapes(node.config, current);
    const std::size_t trainable = trainable_count(node.config);
    for (std::size_t i = 0; i < trainable; ++i) total += static_cast<std::int64_t>(shapes[i].numel());
    current = output_shape(node.config, current);
  }
  return total;
}

WeightStore init_weights(const NetworkSpec& spec, SeededRng& rng) {
  WeightStore store;
  Shape current = spec.input_shape;
  for (const LayerNode& node : spec.nodes) {
    const auto shapes = param_shapes(node.config, current);
    if (!shapes.empty()) {
      std::vector<Tensor> tensors;
      if (kind_of(node.config) == LayerKind::batchnorm) {
        tensors = {Tensor(shapes[0], 1.0), Tensor(shapes[1], 0.0), Tensor(shapes[2], 0.0),
                   Tensor(shapes[3], 1.0)};
      } else {
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in(node.config)));
        tensors.push_back(tensor_random(shapes[0], Gaussian{0.0, stddev}, rng));
        for (std::size_t i = 1; i < shapes.size(); ++i) tensors.emplace_back(shapes[i], 0.0);
      }
      store.layers.emplace(node.name, std::move(tensors));
    }
    current = output_shape(node.config, current);
  }
  return store;
}

void check_weights(const NetworkSpec& spec, const WeightStore& weights) {
  Shape current = spec.input_shape;
  std::set<std::string> expected;
  for (const LayerNode& node : spec.nodes) {
    const auto shapes = param_shapes(node.config, current);
    current = output_shape(node.config, current);
    if (shapes.empty()) continue;
    expected.insert(node.name);
    auto it = weights.layers.find(node.name);
    if (it == weights.layers.end()) {
      throw ShapeError(node_error(node, "no weights in store"));
    }
    if (it->second.size() != shapes.size()) {
      throw ShapeError(node_error(node, "expected " + std::to_string(shapes.size()) +
                                            " tensors, store has " +
                                            std::to_string(it->second.size())));
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if (it->second[i].shape() != shapes[i]) {
        throw ShapeError(node_error(node, "tensor " + std::to_string(i) + " has shape " +
                                              it->second[i].shape().str() + ", expected " +
                                              shapes[i].str()));
      }
    }
  }
  for (const auto& [name, tensors] : weights.layers) {
    if (!expected.contains(name)) {
      throw ShapeError("weight store has entry '" + name + "' with no matching layer");
    }
  }
}

NetworkOutput network_forward(const NetworkSpec& spec, const WeightStore& weights,
                              const Tensor& batch, std::span<const int> labels, Mode mode) {
  if (batch.rank() < 1 || batch.shape().drop(0) != spec.input_shape) {
    throw ShapeError("batch shape " + batch.shape().str() + " does not match input " +
                     batched(1, spec.input_shape).str() + " (batched)");
  }
  NetworkOutput out;
  out.mode = mode;
  out.caches.reserve(spec.nodes.size());
  Tensor current = batch;
  for (const LayerNode& node : spec.nodes) {
    const bool is_loss = kind_of(node.config) == LayerKind::softmax_ce;
    if (is_loss) {
      out.logits = current;
      if (labels.empty()) break;
    }
    try {
      ForwardOut f = layer_forward(node.config, current, params_of(weights, node), mode, labels);
      if (is_loss) {
        out.loss = f.y[0];
        out.probs = std::get<SoftmaxCache>(f.cache).probs;
      }
      current = std::move(f.y);
      out.caches.push_back(std::move(f.cache));
    } catch (const ShapeError& e) {
      throw ShapeError(node_error(node, e.what()));
    } catch (const std::out_of_range& e) {
      throw std::out_of_range(node_error(node, e.what()));
    }
  }
  if (!out.loss && out.caches.size() == spec.nodes.size()) {
    out.logits = current;
  }
  return out;
}

GradStore network_backward(const NetworkSpec& spec, const WeightStore& weights,
                           const NetworkOutput& forward, std::span<const int> labels,
                           double loss_scale) {
  if (forward.caches.size() != spec.nodes.size() || !forward.loss) {
    throw std::logic_error("network_backward: forward caches are missing or incomplete");
  }
  const auto* loss_cache = std::get_if<SoftmaxCache>(&forward.caches.back());
  if (loss_cache == nullptr ||
      !std::equal(labels.begin(), labels.end(), loss_cache->labels.begin(),
                  loss_cache->labels.end())) {
    throw std::logic_error("network_backward: labels differ from the forward pass (stale cache)");
  }
  GradStore grads;
  Tensor grad(Shape{}, loss_scale);
  for (std::size_t i = spec.nodes.size(); i-- > 0;) {
    const LayerNode& node = spec.nodes[i];
    try {
      BackwardOut b = layer_backward(node.config, params_of(weights, node), forward.caches[i], grad);
      if (!b.grad_params.empty()) grads.layers.emplace(node.name, std::move(b.grad_params));
      grad = std::move(b.grad_in);
    } catch (const ShapeError& e) {
      throw ShapeError(node_error(node, e.what()));
    }
  }
  return grads;
}

void apply_running_stats(const NetworkSpec& spec, WeightStore& weights,
                         const NetworkOutput& forward) {
  if (forward.mode != Mode::train) return;
  for (std::size_t i = 0; i < spec.nodes.size() && i < forward.caches.size(); ++i) {
    const auto* bn = std::get_if<BatchNorm>(&spec.nodes[i].config);
    if (bn == nullptr) continue;
    auto& t = weights.layers.at(spec.nodes[i].name);
    batchnorm_update_running(std::get<BnCache>(forward.caches[i]), *bn, t[2], t[3]);
  }
}

std::vector<int> predict(const Tensor& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits[i * k + j] > logits[i * k + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace mrinet
