#include "mrinet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mrinet/kernels.hpp"

namespace mrinet {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

using Index = std::int64_t;

std::int64_t as_i64(std::size_t v) { return static_cast<std::int64_t>(v); }

Shape batched(std::size_t n, const Shape& sample) {
  std::vector<std::int64_t> d{as_i64(n)};
  for (std::size_t v : sample.dims()) d.push_back(as_i64(v));
  return Shape(d);
}

Shape sample_shape(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("expected a batched tensor, got a scalar");
  return x.shape().drop(0);
}

std::int64_t floor_out(std::int64_t in, std::int64_t pad, std::int64_t kernel,
                       std::int64_t stride, const char* what) {
  const std::int64_t span = in + 2 * pad - kernel;
  if (span < 0) {
    throw ShapeError(std::string(what) + ": window " + std::to_string(kernel) +
                     " larger than padded input " + std::to_string(in + 2 * pad));
  }
  return span / stride + 1;
}

kernels::ConvGeom conv_geom(const Conv2d& c, const Shape& s) {
  const auto oh = floor_out(as_i64(s[1]), c.pad_h, c.kernel_h, c.stride_h, "conv");
  const auto ow = floor_out(as_i64(s[2]), c.pad_w, c.kernel_w, c.stride_w, "conv");
  return {s[0],
          s[1],
          s[2],
          static_cast<std::size_t>(c.kernel_h),
          static_cast<std::size_t>(c.kernel_w),
          static_cast<std::size_t>(c.stride_h),
          static_cast<std::size_t>(c.stride_w),
          static_cast<std::size_t>(c.pad_h),
          static_cast<std::size_t>(c.pad_w),
          static_cast<std::size_t>(oh),
          static_cast<std::size_t>(ow)};
}

struct LocalGeom {
  std::int64_t out_h, out_w, pad_top, pad_left;
};

LocalGeom local_geom(const LocallyConnected& l) {
  auto one = [&](std::int64_t in, std::int64_t k) {
    const std::int64_t out = (in + l.stride - 1) / l.stride;
    const std::int64_t pad_total = std::max<std::int64_t>((out - 1) * l.stride + k - in, 0);
    return std::pair{out, pad_total / 2};
  };
  auto [oh, pt] = one(l.in_h, l.kernel_h);
  auto [ow, pl] = one(l.in_w, l.kernel_w);
  return {oh, ow, pt, pl};
}

void require_rank(const Tensor& x, std::size_t rank, const char* what) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     " input, got " + x.shape().str());
  }
}

void require_shape(const Tensor& t, const Shape& s, const char* what) {
  if (t.shape() != s) {
    throw ShapeError(std::string(what) + ": expected shape " + s.str() + ", got " +
                     t.shape().str());
  }
}

// Views a batched tensor as [N, C, S] with S the product of the trailing axes.
struct ChannelView {
  std::size_t n, c, s;
};

ChannelView channel_view(const Tensor& x, const char* what) {
  if (x.rank() < 2) {
    throw ShapeError(std::string(what) + ": expected [N, C, ...], got " + x.shape().str());
  }
  return {x.dim(0), x.dim(1), x.numel() / (x.dim(0) * x.dim(1))};
}

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

// ------------------------------------------------------------- metadata

void validate(const LayerConfig& config) {
  auto positive = [](std::int64_t v, const char* what) {
    if (v < 1) throw std::invalid_argument(std::string(what) + " must be >= 1");
  };
  std::visit(Overloaded{
                 [&](const Conv2d& c) {
                   positive(c.in_channels, "conv in_channels");
                   positive(c.out_channels, "conv out_channels");
                   positive(c.kernel_h, "conv kernel");
                   positive(c.kernel_w, "conv kernel");
                   positive(c.stride_h, "conv stride");
                   positive(c.stride_w, "conv stride");
                   if (c.pad_h < 0 || c.pad_w < 0)
                     throw std::invalid_argument("conv pad must be >= 0");
                 },
                 [&](const LocallyConnected& l) {
                   positive(l.in_channels, "local in_channels");
                   positive(l.in_h, "local in_h");
                   positive(l.in_w, "local in_w");
                   positive(l.out_channels, "local out_channels");
                   positive(l.kernel_h, "local kernel");
                   positive(l.kernel_w, "local kernel");
                   positive(l.stride, "local stride");
                 },
                 [&](const Pool2d& p) {
                   positive(p.window_h, "pool window");
                   positive(p.window_w, "pool window");
                   positive(p.stride_h, "pool stride");
                   positive(p.stride_w, "pool stride");
                 },
                 [](const Activation&) {},
                 [&](const Lrn& l) {
                   positive(l.local_size, "lrn local_size");
                   if (l.local_size % 2 == 0)
                     throw std::invalid_argument("lrn local_size must be odd");
                   if (!(l.alpha >= 0.0)) throw std::invalid_argument("lrn alpha must be >= 0");
                   if (!(l.beta > 0.0)) throw std::invalid_argument("lrn beta must be > 0");
                   if (!(l.k > 0.0)) throw std::invalid_argument("lrn k must be > 0");
                 },
                 [&](const BatchNorm& b) {
                   positive(b.channels, "batchnorm channels");
                   if (!(b.epsilon > 0.0))
                     throw std::invalid_argument("batchnorm epsilon must be > 0");
                   if (!(b.momentum > 0.0 && b.momentum < 1.0))
                     throw std::invalid_argument("batchnorm momentum must be in (0, 1)");
                 },
                 [&](const Linear& l) {
                   positive(l.in_features, "fc in_features");
                   positive(l.out_features, "fc out_features");
                 },
                 [](const SoftmaxCrossEntropy&) {},
             },
             config);
}

Shape output_shape(const LayerConfig& config, const Shape& in) {
  return std::visit(
      Overloaded{
          [&](const Conv2d& c) -> Shape {
            if (in.rank() != 3 || as_i64(in[0]) != c.in_channels) {
              throw ShapeError("conv: expected input [" + std::to_string(c.in_channels) +
                               ",H,W], got " + in.str());
            }
            const auto g = conv_geom(c, in);
            return Shape{c.out_channels, as_i64(g.out_h), as_i64(g.out_w)};
          },
          [&](const LocallyConnected& l) -> Shape {
            if (in != Shape{l.in_channels, l.in_h, l.in_w}) {
              throw ShapeError("local: expected input [" + std::to_string(l.in_channels) + "," +
                               std::to_string(l.in_h) + "," + std::to_string(l.in_w) +
                               "], got " + in.str());
            }
            const auto g = local_geom(l);
            return Shape{l.out_channels, g.out_h, g.out_w};
          },
          [&](const Pool2d& p) -> Shape {
            if (in.rank() != 3) throw ShapeError("pool: expected [C,H,W], got " + in.str());
            return Shape{as_i64(in[0]), floor_out(as_i64(in[1]), 0, p.window_h, p.stride_h, "pool"),
                         floor_out(as_i64(in[2]), 0, p.window_w, p.stride_w, "pool")};
          },
          [&](const Activation&) -> Shape { return in; },
          [&](const Lrn&) -> Shape {
            if (in.rank() < 1) throw ShapeError("lrn: expected [C,...]");
            return in;
          },
          [&](const BatchNorm& b) -> Shape {
            if (in.rank() < 1 || as_i64(in[0]) != b.channels) {
              throw ShapeError("batchnorm: expected " + std::to_string(b.channels) +
                               " channels, got " + in.str());
            }
            return in;
          },
          [&](const Linear& l) -> Shape {
            if (as_i64(in.numel()) != l.in_features) {
              throw ShapeError("fc: expected " + std::to_string(l.in_features) +
                               " input features, got " + in.str());
            }
            return Shape{l.out_features};
          },
          [&](const SoftmaxCrossEntropy&) -> Shape {
            if (in.rank() != 1) throw ShapeError("softmax_ce: expected [K], got " + in.str());
            return Shape{};
          },
      },
      config);
}

std::vector<Shape> param_shapes(const LayerConfig& config, const Shape& in) {
  output_shape(config, in);
  return std::visit(
      Overloaded{
          [](const Conv2d& c) -> std::vector<Shape> {
            return {Shape{c.out_channels, c.in_channels, c.kernel_h, c.kernel_w},
                    Shape{c.out_channels}};
          },
          [](const LocallyConnected& l) -> std::vector<Shape> {
            const auto g = local_geom(l);
            std::vector<Shape> s{Shape{g.out_h * g.out_w, l.out_channels,
                                       l.in_channels * l.kernel_h * l.kernel_w}};
            if (l.bias) s.push_back(Shape{l.out_channels, g.out_h, g.out_w});
            return s;
          },
          [](const Pool2d&) -> std::vector<Shape> { return {}; },
          [](const Activation&) -> std::vector<Shape> { return {}; },
          [](const Lrn&) -> std::vector<Shape> { return {}; },
          [](const BatchNorm& b) -> std::vector<Shape> {
            return {Shape{b.channels}, Shape{b.channels}, Shape{b.channels}, Shape{b.channels}};
          },
          [](const Linear& l) -> std::vector<Shape> {
            std::vector<Shape> s{Shape{l.out_features, l.in_features}};
            if (l.bias) s.push_back(Shape{l.out_features});
            return s;
          },
          [](const SoftmaxCrossEntropy&) -> std::vector<Shape> { return {}; },
      },
      config);
}

std::size_t trainable_count(const LayerConfig& config) {
  return std::visit(Overloaded{
                        [](const Conv2d&) -> std::size_t { return 2; },
                        [](const LocallyConnected& l) -> std::size_t { return l.bias ? 2 : 1; },
                        [](const BatchNorm&) -> std::size_t { return 2; },
                        [](const Linear& l) -> std::size_t { return l.bias ? 2 : 1; },
                        [](const auto&) -> std::size_t { return 0; },
                    },
                    config);
}

// ----------------------------------------------------------------- conv

Tensor conv2d_forward(const Tensor& x, const Conv2d& spec, const Tensor& weights,
                      const Tensor& bias) {
  require_rank(x, 4, "conv");
  const Shape in = sample_shape(x);
  const Shape out = output_shape(spec, in);
  const auto ps = param_shapes(spec, in);
  require_shape(weights, ps[0], "conv weights");
  require_shape(bias, ps[1], "conv bias");
  const auto g = conv_geom(spec, in);
  Tensor y(batched(x.dim(0), out));
  kernels::conv2d_forward(x.dim(0), static_cast<std::size_t>(spec.out_channels), g, x.raw(),
                          weights.raw(), bias.raw(), y.raw());
  return y;
}

ConvGrads conv2d_backward(const Tensor& x, const Conv2d& spec, const Tensor& weights,
                          const Tensor& dy) {
  require_rank(x, 4, "conv backward");
  const Shape in = sample_shape(x);
  const Shape out = output_shape(spec, in);
  require_shape(dy, batched(x.dim(0), out), "conv grad_out");
  const auto ps = param_shapes(spec, in);
  require_shape(weights, ps[0], "conv weights");
  const auto g = conv_geom(spec, in);
  ConvGrads grads{Tensor(x.shape()), Tensor(ps[0]), Tensor(ps[1])};
  kernels::conv2d_backward(x.dim(0), static_cast<std::size_t>(spec.out_channels), g, x.raw(),
                           weights.raw(), dy.raw(), grads.dx.raw(), grads.dw.raw(),
                           grads.db.raw());
  return grads;
}

// ------------------------------------------------------ locally connected

Tensor local_forward(const Tensor& x, const LocallyConnected& spec, const Tensor& weights,
                     const Tensor* bias) {
  require_rank(x, 4, "local");
  const Shape in = sample_shape(x);
  const Shape out = output_shape(spec, in);
  const auto ps = param_shapes(spec, in);
  require_shape(weights, ps[0], "local weights");
  if (spec.bias) {
    if (bias == nullptr) throw ShapeError("local: missing bias");
    require_shape(*bias, ps[1], "local bias");
  }
  const auto g = local_geom(spec);
  const std::int64_t C = spec.in_channels, H = spec.in_h, W = spec.in_w;
  const std::int64_t O = spec.out_channels, KH = spec.kernel_h, KW = spec.kernel_w;
  const std::int64_t patch = C * KH * KW;
  Tensor y(batched(x.dim(0), out));
#pragma omp parallel for schedule(static)
  for (Index n = 0; n < as_i64(x.dim(0)); ++n) {
    for (std::int64_t i = 0; i < g.out_h; ++i) {
      for (std::int64_t j = 0; j < g.out_w; ++j) {
        const double* wpos = weights.raw() + (i * g.out_w + j) * O * patch;
        for (std::int64_t o = 0; o < O; ++o) {
          double acc = 0.0;
          for (std::int64_t c = 0; c < C; ++c) {
            for (std::int64_t u = 0; u < KH; ++u) {
              const std::int64_t yy = i * spec.stride - g.pad_top + u;
              if (yy < 0 || yy >= H) continue;
              for (std::int64_t v = 0; v < KW; ++v) {
                const std::int64_t xx = j * spec.stride - g.pad_left + v;
                if (xx < 0 || xx >= W) continue;
                acc += x.raw()[((n * C + c) * H + yy) * W + xx] *
                       wpos[o * patch + (c * KH + u) * KW + v];
              }
            }
          }
          if (spec.bias) acc += bias->raw()[(o * g.out_h + i) * g.out_w + j];
          y.raw()[((n * O + o) * g.out_h + i) * g.out_w + j] = acc;
        }
      }
    }
  }
  return y;
}

LocalGrads local_backward(const Tensor& x, const LocallyConnected& spec, const Tensor& weights,
                          const Tensor& dy) {
  require_rank(x, 4, "local backward");
  const Shape in = sample_shape(x);
  const Shape out = output_shape(spec, in);
  require_shape(dy, batched(x.dim(0), out), "local grad_out");
  const auto ps = param_shapes(spec, in);
  require_shape(weights, ps[0], "local weights");
  const auto g = local_geom(spec);
  const std::int64_t N = as_i64(x.dim(0));
  const std::int64_t C = spec.in_channels, H = spec.in_h, W = spec.in_w;
  const std::int64_t O = spec.out_channels, KH = spec.kernel_h, KW = spec.kernel_w;
  const std::int64_t patch = C * KH * KW;

  LocalGrads grads{Tensor(x.shape()), Tensor(ps[0]), spec.bias ? Tensor(ps[1]) : Tensor()};

#pragma omp parallel for schedule(static)
  for (Index n = 0; n < N; ++n) {
    for (std::int64_t i = 0; i < g.out_h; ++i) {
      for (std::int64_t j = 0; j < g.out_w; ++j) {
        const double* wpos = weights.raw() + (i * g.out_w + j) * O * patch;
        for (std::int64_t o = 0; o < O; ++o) {
          const double grad = dy.raw()[((n * O + o) * g.out_h + i) * g.out_w + j];
          for (std::int64_t c = 0; c < C; ++c) {
            for (std::int64_t u = 0; u < KH; ++u) {
              const std::int64_t yy = i * spec.stride - g.pad_top + u;
              if (yy < 0 || yy >= H) continue;
              for (std::int64_t v = 0; v < KW; ++v) {
                const std::int64_t xx = j * spec.stride - g.pad_left + v;
                if (xx < 0 || xx >= W) continue;
                grads.dx.raw()[((n * C + c) * H + yy) * W + xx] +=
                    grad * wpos[o * patch + (c * KH + u) * KW + v];
              }
            }
          }
        }
      }
    }
  }

  const std::int64_t positions = g.out_h * g.out_w;
#pragma omp parallel for schedule(static)
  for (Index pos = 0; pos < positions; ++pos) {
    const std::int64_t i = pos / g.out_w, j = pos % g.out_w;
    double* dwpos = grads.dw.raw() + pos * O * patch;
    for (std::int64_t n = 0; n < N; ++n) {
      for (std::int64_t o = 0; o < O; ++o) {
        const double grad = dy.raw()[((n * O + o) * g.out_h + i) * g.out_w + j];
        if (spec.bias) grads.db.raw()[(o * g.out_h + i) * g.out_w + j] += grad;
        for (std::int64_t c = 0; c < C; ++c) {
          for (std::int64_t u = 0; u < KH; ++u) {
            const std::int64_t yy = i * spec.stride - g.pad_top + u;
            if (yy < 0 || yy >= H) continue;
            for (std::int64_t v = 0; v < KW; ++v) {
              const std::int64_t xx = j * spec.stride - g.pad_left + v;
              if (xx < 0 || xx >= W) continue;
              dwpos[o * patch + (c * KH + u) * KW + v] +=
                  grad * x.raw()[((n * C + c) * H + yy) * W + xx];
            }
          }
        }
      }
    }
  }
  return grads;
}

// ----------------------------------------------------------------- pool

PoolResult pool_forward(const Tensor& x, const Pool2d& spec) {
  require_rank(x, 4, "pool");
  const Shape out = output_shape(spec, sample_shape(x));
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t H = x.dim(2), W = x.dim(3), OH = out[1], OW = out[2];
  const auto wh = static_cast<std::size_t>(spec.window_h);
  const auto ww = static_cast<std::size_t>(spec.window_w);
  const auto sh = static_cast<std::size_t>(spec.stride_h);
  const auto sw = static_cast<std::size_t>(spec.stride_w);
  const bool is_max = spec.kind == PoolKind::max;
  const double inv_area = 1.0 / static_cast<double>(wh * ww);

  PoolResult r{Tensor(batched(x.dim(0), out)), PoolCache{x.shape(), {}}};
  if (is_max) r.cache.argmax.resize(r.y.numel());

#pragma omp parallel for schedule(static)
  for (Index pl = 0; pl < as_i64(planes); ++pl) {
    const double* src = x.raw() + pl * H * W;
    double* dst = r.y.raw() + pl * OH * OW;
    for (std::size_t i = 0; i < OH; ++i) {
      for (std::size_t j = 0; j < OW; ++j) {
        const std::size_t y0 = i * sh, x0 = j * sw;
        if (is_max) {
          std::size_t best = y0 * W + x0;
          for (std::size_t u = 0; u < wh; ++u) {
            for (std::size_t v = 0; v < ww; ++v) {
              const std::size_t idx = (y0 + u) * W + x0 + v;
              if (src[idx] > src[best]) best = idx;
            }
          }
          dst[i * OW + j] = src[best];
          r.cache.argmax[pl * OH * OW + i * OW + j] = pl * H * W + best;
        } else {
          double acc = 0.0;
          for (std::size_t u = 0; u < wh; ++u) {
            for (std::size_t v = 0; v < ww; ++v) acc += src[(y0 + u) * W + x0 + v];
          }
          dst[i * OW + j] = acc * inv_area;
        }
      }
    }
  }
  return r;
}

Tensor pool_backward(const PoolCache& cache, const Pool2d& spec, const Tensor& dy) {
  const Shape out = output_shape(spec, cache.input_shape.drop(0));
  require_shape(dy, batched(cache.input_shape[0], out), "pool grad_out");
  const std::size_t planes = cache.input_shape[0] * cache.input_shape[1];
  const std::size_t H = cache.input_shape[2], W = cache.input_shape[3];
  const std::size_t OH = out[1], OW = out[2];
  const auto wh = static_cast<std::size_t>(spec.window_h);
  const auto ww = static_cast<std::size_t>(spec.window_w);
  const auto sh = static_cast<std::size_t>(spec.stride_h);
  const auto sw = static_cast<std::size_t>(spec.stride_w);
  const double inv_area = 1.0 / static_cast<double>(wh * ww);
  const bool is_max = spec.kind == PoolKind::max;
  if (is_max && cache.argmax.size() != dy.numel()) {
    throw ShapeError("pool backward: cache holds no argmax indices for max pooling");
  }

  Tensor dx(cache.input_shape);
#pragma omp parallel for schedule(static)
  for (Index pl = 0; pl < as_i64(planes); ++pl) {
    const double* g = dy.raw() + pl * OH * OW;
    double* dst = dx.raw() + pl * H * W;
    for (std::size_t i = 0; i < OH; ++i) {
      for (std::size_t j = 0; j < OW; ++j) {
        const std::size_t o = i * OW + j;
        if (is_max) {
          dx.raw()[cache.argmax[pl * OH * OW + o]] += g[o];
        } else {
          const double share = g[o] * inv_area;
          for (std::size_t u = 0; u < wh; ++u) {
            for (std::size_t v = 0; v < ww; ++v) dst[(i * sh + u) * W + j * sw + v] += share;
          }
        }
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------- activation

Tensor activation_forward(const Tensor& x, ActKind kind) {
  Tensor y(x.shape());
  const double* in = x.raw();
  double* out = y.raw();
  const auto n = as_i64(x.numel());
  switch (kind) {
    case ActKind::sigmoid:
#pragma omp parallel for schedule(static)
      for (Index i = 0; i < n; ++i) out[i] = sigmoid(in[i]);
      break;
    case ActKind::tanh:
#pragma omp parallel for schedule(static)
      for (Index i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
      break;
    case ActKind::relu:
#pragma omp parallel for schedule(static)
      for (Index i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
  }
  return y;
}

Tensor activation_backward(const Tensor& x, const Tensor& y, ActKind kind, const Tensor& dy) {
  require_shape(dy, x.shape(), "activation grad_out");
  Tensor dx(x.shape());
  const auto n = as_i64(x.numel());
  switch (kind) {
    case ActKind::sigmoid:
#pragma omp parallel for schedule(static)
      for (Index i = 0; i < n; ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
      break;
    case ActKind::tanh:
#pragma omp parallel for schedule(static)
      for (Index i = 0; i < n; ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
      break;
    case ActKind::relu:
#pragma omp parallel for schedule(static)
      for (Index i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
      break;
  }
  return dx;
}

// ------------------------------------------------------------------ LRN

LrnResult lrn_forward(const Tensor& x, const Lrn& params) {
  validate(params);
  const auto v = channel_view(x, "lrn");
  const auto half = static_cast<std::size_t>(params.local_size / 2);
  const double coeff = params.alpha / static_cast<double>(params.local_size);
  LrnResult r{Tensor(x.shape()), LrnCache{x, Tensor(x.shape())}};

#pragma omp parallel for schedule(static)
  for (Index n = 0; n < as_i64(v.n); ++n) {
    const double* in = x.raw() + n * v.c * v.s;
    double* scale = r.cache.scale.raw() + n * v.c * v.s;
    double* out = r.y.raw() + n * v.c * v.s;
    for (std::size_t c = 0; c < v.c; ++c) {
      const std::size_t lo = c >= half ? c - half : 0;
      const std::size_t hi = std::min(v.c - 1, c + half);
      for (std::size_t s = 0; s < v.s; ++s) {
        double sq = 0.0;
        for (std::size_t cc = lo; cc <= hi; ++cc) {
          const double t = in[cc * v.s + s];
          sq += t * t;
        }
        const double sc = params.k + coeff * sq;
        scale[c * v.s + s] = sc;
        out[c * v.s + s] = in[c * v.s + s] * std::pow(sc, -params.beta);
      }
    }
  }
  return r;
}

Tensor lrn_backward(const LrnCache& cache, const Lrn& params, const Tensor& dy) {
  require_shape(dy, cache.input.shape(), "lrn grad_out");
  const auto v = channel_view(cache.input, "lrn backward");
  const auto half = static_cast<std::size_t>(params.local_size / 2);
  const double coeff = 2.0 * params.alpha * params.beta / static_cast<double>(params.local_size);
  Tensor dx(cache.input.shape());

#pragma omp parallel for schedule(static)
  for (Index n = 0; n < as_i64(v.n); ++n) {
    const std::size_t base = n * v.c * v.s;
    const double* in = cache.input.raw() + base;
    const double* scale = cache.scale.raw() + base;
    const double* g = dy.raw() + base;
    double* out = dx.raw() + base;
    // ratio[c] = dy * x * scale^(-beta - 1), shared by every window containing c.
    std::vector<double> ratio(v.c * v.s);
    for (std::size_t i = 0; i < v.c * v.s; ++i) {
      ratio[i] = g[i] * in[i] * std::pow(scale[i], -params.beta - 1.0);
    }
    for (std::size_t c = 0; c < v.c; ++c) {
      const std::size_t lo = c >= half ? c - half : 0;
      const std::size_t hi = std::min(v.c - 1, c + half);
      for (std::size_t s = 0; s < v.s; ++s) {
        double acc = 0.0;
        for (std::size_t cc = lo; cc <= hi; ++cc) acc += ratio[cc * v.s + s];
        const std::size_t i = c * v.s + s;
        out[i] = g[i] * std::pow(scale[i], -params.beta) - coeff * in[i] * acc;
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------- batch norm

BnResult batchnorm_forward(const Tensor& x, const BatchNorm& spec, const Tensor& gamma,
                           const Tensor& beta, const Tensor& running_mean,
                           const Tensor& running_var, Mode mode) {
  validate(spec);
  const auto v = channel_view(x, "batchnorm");
  if (as_i64(v.c) != spec.channels) {
    throw ShapeError("batchnorm: expected " + std::to_string(spec.channels) +
                     " channels, got " + x.shape().str());
  }
  const Shape cs{spec.channels};
  require_shape(gamma, cs, "batchnorm gamma");
  require_shape(beta, cs, "batchnorm beta");
  require_shape(running_mean, cs, "batchnorm running_mean");
  require_shape(running_var, cs, "batchnorm running_var");
  const std::size_t m = v.n * v.s;
  if (mode == Mode::train && m < 2) {
    throw ShapeError("batchnorm: train mode needs at least 2 values per channel, got " +
                     std::to_string(m));
  }

  BnResult r{Tensor(x.shape()), BnCache{mode, Tensor(x.shape()), {}, {}, {}}};
  auto& cache = r.cache;
  cache.mean.assign(v.c, 0.0);
  cache.var.assign(v.c, 0.0);
  cache.inv_std.assign(v.c, 0.0);
  const double inv_m = 1.0 / static_cast<double>(m);

#pragma omp parallel for schedule(static)
  for (Index c = 0; c < as_i64(v.c); ++c) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::train) {
      for (std::size_t n = 0; n < v.n; ++n) {
        const double* p = x.raw() + (n * v.c + c) * v.s;
        for (std::size_t s = 0; s < v.s; ++s) mean += p[s];
      }
      mean *= inv_m;
      for (std::size_t n = 0; n < v.n; ++n) {
        const double* p = x.raw() + (n * v.c + c) * v.s;
        for (std::size_t s = 0; s < v.s; ++s) {
          const double d = p[s] - mean;
          var += d * d;
        }
      }
      var *= inv_m;
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + spec.epsilon);
    cache.mean[c] = mean;
    cache.var[c] = var;
    cache.inv_std[c] = inv_std;
    for (std::size_t n = 0; n < v.n; ++n) {
      const std::size_t off = (n * v.c + c) * v.s;
      for (std::size_t s = 0; s < v.s; ++s) {
        const double xh = (x[off + s] - mean) * inv_std;
        cache.xhat[off + s] = xh;
        r.y[off + s] = gamma[c] * xh + beta[c];
      }
    }
  }
  return r;
}

BnGrads batchnorm_backward(const BnCache& cache, const Tensor& gamma, const Tensor& dy) {
  require_shape(dy, cache.xhat.shape(), "batchnorm grad_out");
  const auto v = channel_view(dy, "batchnorm backward");
  if (cache.mean.size() != v.c || gamma.numel() != v.c) {
    throw ShapeError("batchnorm backward: cache does not match grad_out channels");
  }
  const std::size_t m = v.n * v.s;
  const double inv_m = 1.0 / static_cast<double>(m);
  BnGrads g{Tensor(dy.shape()), Tensor(gamma.shape()), Tensor(gamma.shape())};

#pragma omp parallel for schedule(static)
  for (Index c = 0; c < as_i64(v.c); ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < v.n; ++n) {
      const std::size_t off = (n * v.c + c) * v.s;
      for (std::size_t s = 0; s < v.s; ++s) {
        sum_dy += dy[off + s];
        sum_dy_xhat += dy[off + s] * cache.xhat[off + s];
      }
    }
    g.dgamma[c] = sum_dy_xhat;
    g.dbeta[c] = sum_dy;
    const double gi = gamma[c] * cache.inv_std[c];
    for (std::size_t n = 0; n < v.n; ++n) {
      const std::size_t off = (n * v.c + c) * v.s;
      for (std::size_t s = 0; s < v.s; ++s) {
        if (cache.mode == Mode::train) {
          // Full chain through the batch mean and variance.
          g.dx[off + s] =
              gi * (dy[off + s] - inv_m * sum_dy - cache.xhat[off + s] * inv_m * sum_dy_xhat);
        } else {
          g.dx[off + s] = gi * dy[off + s];
        }
      }
    }
  }
  return g;
}

void batchnorm_update_running(const BnCache& cache, const BatchNorm& spec, Tensor& running_mean,
                              Tensor& running_var) {
  if (cache.mode != Mode::train) return;
  if (running_mean.numel() != cache.mean.size() || running_var.numel() != cache.var.size()) {
    throw ShapeError("batchnorm: running statistics do not match cache");
  }
  for (std::size_t c = 0; c < cache.mean.size(); ++c) {
    running_mean[c] = spec.momentum * running_mean[c] + (1.0 - spec.momentum) * cache.mean[c];
    running_var[c] = spec.momentum * running_var[c] + (1.0 - spec.momentum) * cache.var[c];
  }
}

// --------------------------------------------------------------- linear

Tensor linear_forward(const Tensor& x, const Linear& spec, const Tensor& weights,
                      const Tensor* bias) {
  const Shape out = output_shape(spec, sample_shape(x));
  require_shape(weights, Shape{spec.out_features, spec.in_features}, "fc weights");
  const std::size_t n = x.dim(0);
  const auto in_f = static_cast<std::size_t>(spec.in_features);
  const auto out_f = static_cast<std::size_t>(spec.out_features);
  Tensor y(batched(n, out));
  kernels::gemm_nt(n, out_f, in_f, x.raw(), weights.raw(), y.raw(), false);
  if (spec.bias) {
    if (bias == nullptr) throw ShapeError("fc: missing bias");
    require_shape(*bias, Shape{spec.out_features}, "fc bias");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < out_f; ++j) y[i * out_f + j] += (*bias)[j];
    }
  }
  return y;
}

LinearGrads linear_backward(const Tensor& x, const Linear& spec, const Tensor& weights,
                            const Tensor& dy) {
  const Shape out = output_shape(spec, sample_shape(x));
  const std::size_t n = x.dim(0);
  require_shape(dy, batched(n, out), "fc grad_out");
  require_shape(weights, Shape{spec.out_features, spec.in_features}, "fc weights");
  const auto in_f = static_cast<std::size_t>(spec.in_features);
  const auto out_f = static_cast<std::size_t>(spec.out_features);
  LinearGrads g{Tensor(x.shape()), Tensor(weights.shape()),
                spec.bias ? Tensor(Shape{spec.out_features}) : Tensor()};
  kernels::gemm_nn(n, in_f, out_f, dy.raw(), weights.raw(), g.dx.raw(), false);
  kernels::gemm_tn(out_f, in_f, n, dy.raw(), x.raw(), g.dw.raw(), false);
  if (spec.bias) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < out_f; ++j) g.db[j] += dy[i * out_f + j];
    }
  }
  return g;
}

// -------------------------------------------------------------- softmax

SoftmaxResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_ce");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_ce: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(n));
  }
  SoftmaxResult r{0.0, Tensor(logits.shape())};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw std::out_of_range("softmax_ce: label " + std::to_string(label) +
                              " outside [0, " + std::to_string(k) + ")");
    }
    const double* z = logits.raw() + i * k;
    double* p = r.probs.raw() + i * k;
    const double zmax = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp(z[j] - zmax);
      sum += p[j];
    }
    for (std::size_t j = 0; j < k; ++j) p[j] /= sum;
    total += -(z[label] - zmax - std::log(sum));
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

Tensor softmax_cross_entropy_backward(const Tensor& probs, std::span<const int> labels,
                                      double scale) {
  require_rank(probs, 2, "softmax_ce backward");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  if (labels.size() != n) throw ShapeError("softmax_ce backward: label count mismatch");
  Tensor d(probs.shape());
  const double f = scale / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double onehot = static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0;
      d[i * k + j] = (probs[i * k + j] - onehot) * f;
    }
  }
  return d;
}

// ------------------------------------------------------------- dispatch

ForwardOut layer_forward(const LayerConfig& config, const Tensor& x,
                         std::span<const Tensor> params, Mode mode,
                         std::span<const int> labels) {
  auto need = [&](std::size_t count, const char* what) {
    if (params.size() < count) {
      throw ShapeError(std::string(what) + ": expected " + std::to_string(count) +
                       " parameter tensors, got " + std::to_string(params.size()));
    }
  };
  return std::visit(
      Overloaded{
          [&](const Conv2d& c) -> ForwardOut {
            need(2, "conv");
            return {conv2d_forward(x, c, params[0], params[1]), ConvCache{x}};
          },
          [&](const LocallyConnected& l) -> ForwardOut {
            need(l.bias ? 2 : 1, "local");
            return {local_forward(x, l, params[0], l.bias ? &params[1] : nullptr),
                    LocalCache{x}};
          },
          [&](const Pool2d& p) -> ForwardOut {
            auto r = pool_forward(x, p);
            return {std::move(r.y), std::move(r.cache)};
          },
          [&](const Activation& a) -> ForwardOut {
            Tensor y = activation_forward(x, a.kind);
            return {y, ActCache{x, y}};
          },
          [&](const Lrn& l) -> ForwardOut {
            auto r = lrn_forward(x, l);
            return {std::move(r.y), std::move(r.cache)};
          },
          [&](const BatchNorm& b) -> ForwardOut {
            need(4, "batchnorm");
            auto r = batchnorm_forward(x, b, params[0], params[1], params[2], params[3], mode);
            return {std::move(r.y), std::move(r.cache)};
          },
          [&](const Linear& l) -> ForwardOut {
            need(l.bias ? 2 : 1, "fc");
            return {linear_forward(x, l, params[0], l.bias ? &params[1] : nullptr),
                    LinearCache{x}};
          },
          [&](const SoftmaxCrossEntropy&) -> ForwardOut {
            auto r = softmax_cross_entropy(x, labels);
            return {Tensor(Shape{}, r.loss),
                    SoftmaxCache{std::move(r.probs), std::vector<int>(labels.begin(), labels.end())}};
          },
      },
      config);
}

BackwardOut layer_backward(const LayerConfig& config, std::span<const Tensor> params,
                           const LayerCache& cache, const Tensor& grad_out) {
  auto get = [&]<class C>(const char* what) -> const C& {
    const C* c = std::get_if<C>(&cache);
    if (c == nullptr) throw ShapeError(std::string(what) + " backward: cache kind mismatch");
    return *c;
  };
  return std::visit(
      Overloaded{
          [&](const Conv2d& c) -> BackwardOut {
            const auto& cc = get.template operator()<ConvCache>("conv");
            auto g = conv2d_backward(cc.input, c, params[0], grad_out);
            return {std::move(g.dx), {std::move(g.dw), std::move(g.db)}};
          },
          [&](const LocallyConnected& l) -> BackwardOut {
            const auto& lc = get.template operator()<LocalCache>("local");
            auto g = local_backward(lc.input, l, params[0], grad_out);
            BackwardOut out{std::move(g.dx), {std::move(g.dw)}};
            if (l.bias) out.grad_params.push_back(std::move(g.db));
            return out;
          },
          [&](const Pool2d& p) -> BackwardOut {
            const auto& pc = get.template operator()<PoolCache>("pool");
            return {pool_backward(pc, p, grad_out), {}};
          },
          [&](const Activation& a) -> BackwardOut {
            const auto& ac = get.template operator()<ActCache>("activation");
            return {activation_backward(ac.input, ac.output, a.kind, grad_out), {}};
          },
          [&](const Lrn& l) -> BackwardOut {
            const auto& lc = get.template operator()<LrnCache>("lrn");
            return {lrn_backward(lc, l, grad_out), {}};
          },
          [&](const BatchNorm&) -> BackwardOut {
            const auto& bc = get.template operator()<BnCache>("batchnorm");
            auto g = batchnorm_backward(bc, params[0], grad_out);
            return {std::move(g.dx), {std::move(g.dgamma), std::move(g.dbeta)}};
          },
          [&](const Linear& l) -> BackwardOut {
            const auto& lc = get.template operator()<LinearCache>("fc");
            auto g = linear_backward(lc.input, l, params[0], grad_out);
            BackwardOut out{std::move(g.dx), {std::move(g.dw)}};
            if (l.bias) out.grad_params.push_back(std::move(g.db));
            return out;
          },
          [&](const SoftmaxCrossEntropy&) -> BackwardOut {
            const auto& sc = get.template operator()<SoftmaxCache>("softmax_ce");
            if (grad_out.numel() != 1) {
              throw ShapeError("softmax_ce backward: grad_out must be a scalar");
            }
            return {softmax_cross_entropy_backward(sc.probs, sc.labels, grad_out[0]), {}};
          },
      },
      config);
}

}  // namespace mrinet
