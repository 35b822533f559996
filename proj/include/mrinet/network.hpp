#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrinet/layers.hpp"
#include "mrinet/rng.hpp"

namespace mrinet {

enum class LayerKind { conv, local, maxpool, avgpool, activation, lrn, batchnorm, fc, softmax_ce };

LayerKind kind_of(const LayerConfig& config);
std::string_view kind_name(LayerKind kind);

struct LayerNode {
  std::string name;
  LayerConfig config;
  std::string bottom;
  std::string top;
  bool operator==(const LayerNode&) const = default;
};

// A chain of layers. input_shape is per sample ([C, H, W]); node i reads the
// top of node i - 1 (or "data" for the first node).
struct NetworkSpec {
  std::string name;
  std::vector<LayerNode> nodes;
  int num_classes = 0;
  Shape input_shape;
  bool operator==(const NetworkSpec&) const = default;
};

// Layer name -> parameter tensors, in param_shapes() order. Also used for
// gradients and optimizer velocity (trainable tensors only).
struct WeightStore {
  std::map<std::string, std::vector<Tensor>> layers;
  bool operator==(const WeightStore&) const = default;
};
using GradStore = WeightStore;

// Per-node output shapes (per sample). Errors name the node.
std::vector<Shape> infer_shapes(const NetworkSpec& spec);

// Chain wiring, unique names, shape propagation, exactly one loss node (last)
// fed [num_classes]. Throws ShapeError / std::invalid_argument.
void validate(const NetworkSpec& spec);

// Element count of trainable weights and biases. Does not allocate parameters.
std::int64_t param_count(const NetworkSpec& spec);

// Zero-mean gaussian with stddev sqrt(2 / fan_in) for conv/local/fc weights,
// zero biases, gamma = 1, beta = 0, running mean 0 and variance 1.
WeightStore init_weights(const NetworkSpec& spec, SeededRng& rng);

// Every parameterized node has an entry with matching shapes and nothing else is present.
void check_weights(const NetworkSpec& spec, const WeightStore& weights);

struct NetworkOutput {
  Mode mode = Mode::train;
  Tensor logits;                // [N, num_classes]
  std::optional<double> loss;   // set when labels were given
  Tensor probs;                 // softmax of logits, set with loss
  std::vector<LayerCache> caches;  // one per node that ran
};

// Runs every node. With empty labels the loss node is skipped.
NetworkOutput network_forward(const NetworkSpec& spec, const WeightStore& weights,
                              const Tensor& batch, std::span<const int> labels, Mode mode);

// Gradients of loss_scale * loss for every trainable tensor.
GradStore network_backward(const NetworkSpec& spec, const WeightStore& weights,
                           const NetworkOutput& forward, std::span<const int> labels,
                           double loss_scale = 1.0);

// Folds train-mode batch statistics into batch-norm running averages.
void apply_running_stats(const NetworkSpec& spec, WeightStore& weights,
                         const NetworkOutput& forward);

// Argmax per row; ties go to the lowest class index.
std::vector<int> predict(const Tensor& logits);

}  // namespace mrinet
