#pragma once

// Forward and backward passes for every layer type used by the models.
// Layers are pure: they read their inputs and parameters and return outputs
// plus a cache for the matching backward call. Nothing here mutates
// parameters; running statistics for batch norm are folded in by the caller
// through batchnorm_update_running().

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "mrinet/tensor.hpp"

namespace mrinet {

enum class Mode { train, infer };
enum class PoolKind { max, mean };
enum class ActKind { sigmoid, tanh, relu };

// Cross-correlation (no kernel flip) with shared weights [out, in, kh, kw] and bias [out].
struct Conv2d {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel_h = 1, kernel_w = 1;
  std::int64_t stride_h = 1, stride_w = 1;
  std::int64_t pad_h = 0, pad_w = 0;
  bool operator==(const Conv2d&) const = default;
};

// Convolution without weight sharing: every output position owns its own
// filter bank. Output grid is ceil(in / stride) with "same" zero padding
// (pad_total = (out - 1) * stride + kernel - in, split with the smaller half first).
// Weights [out_h * out_w, out, in * kh * kw], optional bias [out, out_h, out_w].
struct LocallyConnected {
  std::int64_t in_channels = 1;
  std::int64_t in_h = 1, in_w = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel_h = 1, kernel_w = 1;
  std::int64_t stride = 1;
  bool bias = true;
  bool operator==(const LocallyConnected&) const = default;
};

// Windows tile the input with the floor rule; no padding.
struct Pool2d {
  PoolKind kind = PoolKind::max;
  std::int64_t window_h = 2, window_w = 2;
  std::int64_t stride_h = 2, stride_w = 2;
  bool operator==(const Pool2d&) const = default;
};

struct Activation {
  ActKind kind = ActKind::relu;
  bool operator==(const Activation&) const = default;
};

// Cross-channel local response normalization:
//   y = x / (k + alpha / local_size * sum_{c' in window(c)} x_{c'}^2)^beta
// window(c) = channels within local_size / 2 of c, clipped at the ends.
struct Lrn {
  std::int64_t local_size = 5;
  double alpha = 0.0001;
  double beta = 0.75;
  double k = 1.0;
  bool operator==(const Lrn&) const = default;
};

// Per-channel normalization over (N, spatial). Params: gamma, beta,
// running_mean, running_var (the first two trainable). Variance is biased.
struct BatchNorm {
  std::int64_t channels = 1;
  double epsilon = 1e-5;
  double momentum = 0.9;
  bool operator==(const BatchNorm&) const = default;
};

// y = x W^T + b. Inputs of rank > 2 are flattened per sample.
struct Linear {
  std::int64_t in_features = 1;
  std::int64_t out_features = 1;
  bool bias = true;
  bool operator==(const Linear&) const = default;
};

struct SoftmaxCrossEntropy {
  bool operator==(const SoftmaxCrossEntropy&) const = default;
};

using LayerConfig =
    std::variant<Conv2d, LocallyConnected, Pool2d, Activation, Lrn, BatchNorm, Linear,
                 SoftmaxCrossEntropy>;

// Parameter validation (odd local_size, epsilon > 0, ...). Throws std::invalid_argument.
void validate(const LayerConfig& config);

// Per-sample output shape (no batch axis). Throws ShapeError on mismatch.
Shape output_shape(const LayerConfig& config, const Shape& input);

// Shapes of all parameter tensors for a given per-sample input shape.
std::vector<Shape> param_shapes(const LayerConfig& config, const Shape& input);

// How many of the leading parameter tensors are trained.
std::size_t trainable_count(const LayerConfig& config);

// ---------------------------------------------------------------- caches

struct ConvCache {
  Tensor input;
};
struct LocalCache {
  Tensor input;
};
struct PoolCache {
  Shape input_shape;
  std::vector<std::size_t> argmax;  // max pooling only; flat input index per output
};
struct ActCache {
  Tensor input;
  Tensor output;
};
struct LrnCache {
  Tensor input;
  Tensor scale;  // k + alpha / n * window sum of squares
};
struct BnCache {
  Mode mode = Mode::train;
  Tensor xhat;
  std::vector<double> mean, var, inv_std;
};
struct LinearCache {
  Tensor input;
};
struct SoftmaxCache {
  Tensor probs;
  std::vector<int> labels;
};

using LayerCache = std::variant<ConvCache, LocalCache, PoolCache, ActCache, LrnCache, BnCache,
                                LinearCache, SoftmaxCache>;

// ---------------------------------------------------------- layer kernels

Tensor conv2d_forward(const Tensor& x, const Conv2d& spec, const Tensor& weights,
                      const Tensor& bias);
struct ConvGrads {
  Tensor dx, dw, db;
};
ConvGrads conv2d_backward(const Tensor& x, const Conv2d& spec, const Tensor& weights,
                          const Tensor& dy);

Tensor local_forward(const Tensor& x, const LocallyConnected& spec, const Tensor& weights,
                     const Tensor* bias);
struct LocalGrads {
  Tensor dx, dw, db;
};
LocalGrads local_backward(const Tensor& x, const LocallyConnected& spec, const Tensor& weights,
                          const Tensor& dy);

struct PoolResult {
  Tensor y;
  PoolCache cache;
};
PoolResult pool_forward(const Tensor& x, const Pool2d& spec);
Tensor pool_backward(const PoolCache& cache, const Pool2d& spec, const Tensor& dy);

Tensor activation_forward(const Tensor& x, ActKind kind);
Tensor activation_backward(const Tensor& x, const Tensor& y, ActKind kind, const Tensor& dy);

struct LrnResult {
  Tensor y;
  LrnCache cache;
};
LrnResult lrn_forward(const Tensor& x, const Lrn& params);
Tensor lrn_backward(const LrnCache& cache, const Lrn& params, const Tensor& dy);

struct BnResult {
  Tensor y;
  BnCache cache;
};
BnResult batchnorm_forward(const Tensor& x, const BatchNorm& spec, const Tensor& gamma,
                           const Tensor& beta, const Tensor& running_mean,
                           const Tensor& running_var, Mode mode);
struct BnGrads {
  Tensor dx, dgamma, dbeta;
};
BnGrads batchnorm_backward(const BnCache& cache, const Tensor& gamma, const Tensor& dy);
// running = momentum * running + (1 - momentum) * batch statistic.
void batchnorm_update_running(const BnCache& cache, const BatchNorm& spec, Tensor& running_mean,
                              Tensor& running_var);

Tensor linear_forward(const Tensor& x, const Linear& spec, const Tensor& weights,
                      const Tensor* bias);
struct LinearGrads {
  Tensor dx, dw, db;
};
LinearGrads linear_backward(const Tensor& x, const Linear& spec, const Tensor& weights,
                            const Tensor& dy);

struct SoftmaxResult {
  double loss = 0.0;
  Tensor probs;
};
// Mean over the batch of -log softmax(logits)[label], computed with the row max subtracted.
SoftmaxResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
// (probs - onehot) / N * scale
Tensor softmax_cross_entropy_backward(const Tensor& probs, std::span<const int> labels,
                                      double scale);

// ------------------------------------------------------ uniform dispatch

struct ForwardOut {
  Tensor y;  // rank-0 loss for SoftmaxCrossEntropy
  LayerCache cache;
};
ForwardOut layer_forward(const LayerConfig& config, const Tensor& x,
                         std::span<const Tensor> params, Mode mode,
                         std::span<const int> labels = {});

struct BackwardOut {
  Tensor grad_in;
  std::vector<Tensor> grad_params;  // trainable parameters only
};
BackwardOut layer_backward(const LayerConfig& config, std::span<const Tensor> params,
                           const LayerCache& cache, const Tensor& grad_out);

}  // namespace mrinet
