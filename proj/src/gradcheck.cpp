#include "mrinet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mrinet {

namespace {

std::int64_t pick(SeededRng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

Tensor gaussian(const Shape& s, SeededRng& rng, double stddev = 1.0) {
  return tensor_random(s, Gaussian{0.0, stddev}, rng);
}

// Distinct values on a shuffled grid; keeps max-pool argmax stable under +-step.
Tensor tie_free(const Shape& s, SeededRng& rng) {
  Tensor t(s);
  std::vector<double> v(t.numel());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = (static_cast<double>(i) - static_cast<double>(v.size()) / 2.0) * 0.05 +
           rng.uniform(0.0, 0.01);
  }
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.below(i)]);
  }
  std::copy(v.begin(), v.end(), t.data().begin());
  return t;
}

// Resample entries within 1e-3 of the ReLU kink.
void avoid_kink(Tensor& t, SeededRng& rng) {
  for (double& v : t.data()) {
    while (std::abs(v) < 1e-3) v = rng.gaussian(0.0, 1.0);
  }
}

double weighted_delta(const Tensor& plus, const Tensor& minus, const Tensor& r, double step) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.numel(); ++i) s += r[i] * (plus[i] - minus[i]);
  return s / (2.0 * step);
}

struct Trial {
  LayerConfig config;
  Tensor input;
  std::vector<Tensor> params;
  std::vector<int> labels;
};

Trial make_trial(const std::string& variant, SeededRng& rng) {
  Trial t;
  if (variant == "conv") {
    Conv2d c;
    c.in_channels = pick(rng, 1, 3);
    c.out_channels = pick(rng, 1, 4);
    c.kernel_h = pick(rng, 1, 3);
    c.kernel_w = pick(rng, 1, 3);
    c.stride_h = pick(rng, 1, 2);
    c.stride_w = pick(rng, 1, 2);
    c.pad_h = pick(rng, 0, 1);
    c.pad_w = pick(rng, 0, 1);
    t.input = gaussian(Shape{pick(rng, 1, 2), c.in_channels, pick(rng, 3, 6), pick(rng, 3, 6)}, rng);
    t.params = {gaussian(Shape{c.out_channels, c.in_channels, c.kernel_h, c.kernel_w}, rng),
                gaussian(Shape{c.out_channels}, rng)};
    t.config = c;
  } else if (variant == "local") {
    LocallyConnected l;
    l.in_channels = pick(rng, 1, 2);
    l.in_h = pick(rng, 2, 5);
    l.in_w = pick(rng, 2, 5);
    l.out_channels = pick(rng, 1, 3);
    l.kernel_h = pick(rng, 1, 3);
    l.kernel_w = pick(rng, 1, 3);
    l.stride = pick(rng, 1, 2);
    l.bias = rng.below(2) == 1;
    t.input = gaussian(Shape{pick(rng, 1, 2), l.in_channels, l.in_h, l.in_w}, rng);
    for (const Shape& s : param_shapes(l, t.input.shape().drop(0))) {
      t.params.push_back(gaussian(s, rng));
    }
    t.config = l;
  } else if (variant == "maxpool" || variant == "meanpool") {
    Pool2d p;
    p.kind = variant == "maxpool" ? PoolKind::max : PoolKind::mean;
    const auto h = pick(rng, 2, 6), w = pick(rng, 2, 6);
    p.window_h = pick(rng, 1, std::min<std::int64_t>(3, h));
    p.window_w = pick(rng, 1, std::min<std::int64_t>(3, w));
    p.stride_h = pick(rng, 1, 2);
    p.stride_w = pick(rng, 1, 2);
    const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), h, w};
    t.input = p.kind == PoolKind::max ? tie_free(s, rng) : gaussian(s, rng);
    t.config = p;
  } else if (variant == "sigmoid" || variant == "tanh" || variant == "relu") {
    Activation a;
    a.kind = variant == "sigmoid" ? ActKind::sigmoid
             : variant == "tanh"  ? ActKind::tanh
                                  : ActKind::relu;
    t.input = gaussian(Shape{pick(rng, 1, 3), pick(rng, 1, 8)}, rng, 2.0);
    if (a.kind == ActKind::relu) avoid_kink(t.input, rng);
    t.config = a;
  } else if (variant == "lrn") {
    Lrn l;
    const std::int64_t sizes[] = {1, 3, 5};
    l.local_size = sizes[rng.below(3)];
    // Alternate between the norm5 defaults and a strong normalization regime.
    if (rng.below(2) == 1) {
      l.alpha = rng.uniform(0.1, 2.0);
      l.beta = rng.uniform(0.5, 1.0);
      l.k = rng.uniform(1.0, 2.0);
    }
    t.input = gaussian(Shape{pick(rng, 1, 2), pick(rng, 1, 7), pick(rng, 1, 3), pick(rng, 1, 3)}, rng);
    t.config = l;
  } else if (variant == "bn") {
    BatchNorm b;
    b.channels = pick(rng, 1, 3);
    t.input = gaussian(Shape{pick(rng, 2, 4), b.channels, pick(rng, 1, 3), pick(rng, 1, 3)}, rng);
    const Shape cs{b.channels};
    t.params = {gaussian(cs, rng), gaussian(cs, rng), Tensor(cs, 0.0), Tensor(cs, 1.0)};
    t.config = b;
  } else if (variant == "fc") {
    Linear l;
    l.in_features = pick(rng, 1, 6);
    l.out_features = pick(rng, 1, 5);
    t.input = gaussian(Shape{pick(rng, 1, 3), l.in_features}, rng);
    t.params = {gaussian(Shape{l.out_features, l.in_features}, rng),
                gaussian(Shape{l.out_features}, rng)};
    t.config = l;
  } else if (variant == "softmax") {
    const auto n = pick(rng, 1, 4), k = pick(rng, 2, 5);
    t.input = gaussian(Shape{n, k}, rng, 2.0);
    for (std::int64_t i = 0; i < n; ++i) t.labels.push_back(static_cast<int>(rng.below(k)));
    t.config = SoftmaxCrossEntropy{};
  } else {
    throw std::invalid_argument("unknown gradcheck layer '" + variant + "'");
  }
  return t;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradReport grad_check(const LayerConfig& config, const Tensor& input,
                      std::span<const Tensor> params, double tolerance, SeededRng& rng,
                      std::span<const int> labels, const GradCheckOptions& options) {
  std::vector<Tensor> p(params.begin(), params.end());
  const ForwardOut base = layer_forward(config, input, p, options.mode, labels);
  const Tensor r = tensor_random(base.y.shape(), Gaussian{0.0, 1.0}, rng);
  BackwardOut analytic = layer_backward(config, p, base.cache, r);

  GradReport report;
  const double h = options.step;
  auto compare = [&](double a, double n) {
    a *= 1.0 + options.corrupt;
    report.max_rel_error = std::max(report.max_rel_error, relative_error(a, n));
    ++report.checked;
  };

  Tensor x = input;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const Tensor plus = layer_forward(config, x, p, options.mode, labels).y;
    x[i] = saved - h;
    const Tensor minus = layer_forward(config, x, p, options.mode, labels).y;
    x[i] = saved;
    compare(analytic.grad_in[i], weighted_delta(plus, minus, r, h));
  }

  for (std::size_t t = 0; t < analytic.grad_params.size(); ++t) {
    Tensor& param = p[t];
    for (std::size_t i = 0; i < param.numel(); ++i) {
      const double saved = param[i];
      param[i] = saved + h;
      const Tensor plus = layer_forward(config, input, p, options.mode, labels).y;
      param[i] = saved - h;
      const Tensor minus = layer_forward(config, input, p, options.mode, labels).y;
      param[i] = saved;
      compare(analytic.grad_params[t][i], weighted_delta(plus, minus, r, h));
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

std::vector<std::string> gradcheck_variants(const std::string& family) {
  if (family == "all") {
    return {"conv", "local",   "maxpool", "meanpool", "sigmoid", "tanh",
            "relu", "lrn",     "bn",      "fc",       "softmax"};
  }
  if (family == "pool") return {"maxpool", "meanpool"};
  if (family == "act") return {"sigmoid", "tanh", "relu"};
  for (const char* single :
       {"conv", "local", "maxpool", "meanpool", "sigmoid", "tanh", "relu", "lrn", "bn", "fc",
        "softmax"}) {
    if (family == single) return {family};
  }
  throw std::invalid_argument("unknown gradcheck layer '" + family + "'");
}

std::vector<GradReport> run_gradcheck_suite(const std::string& family, int trials,
                                            double tolerance, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("gradcheck: trials must be >= 1");
  std::vector<GradReport> reports;
  const auto variants = gradcheck_variants(family);
  for (std::size_t v = 0; v < variants.size(); ++v) {
    // Each variant gets its own stream so `--layer bn` matches the bn row of `--layer all`.
    const std::string& name = variants[v];
    SeededRng rng(mix_seed(seed, fnv1a64(name)));
    GradReport folded{name, 0.0, 0, true};
    for (int trial = 0; trial < trials; ++trial) {
      const Trial t = make_trial(name, rng);
      const GradReport r = grad_check(t.config, t.input, t.params, tolerance, rng, t.labels);
      folded.max_rel_error = std::max(folded.max_rel_error, r.max_rel_error);
      folded.checked += r.checked;
      folded.pass = folded.pass && r.pass;
    }
    reports.push_back(folded);
  }
  return reports;
}

}  // namespace mrinet
