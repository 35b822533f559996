#include "mrinet/model_zoo.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mrinet {

namespace {

struct WidthTable {
  std::int64_t input;
  std::array<std::int64_t, 5> conv;
  std::array<std::int64_t, 2> fc;
  std::int64_t conv1_pad;
};

// At 64x64 an unpadded conv1 leaves pool5 a 2x2 map, smaller than its 3x3
// window; padding conv1 by 2 gives 15 -> 7 -> 3 -> 1.
constexpr WidthTable kFull{227, {96, 256, 384, 384, 256}, {4096, 4096}, 0};
constexpr WidthTable kMini{64, {12, 32, 48, 48, 32}, {256, 128}, 2};

const WidthTable& table(Scale s) { return s == Scale::full ? kFull : kMini; }

std::string_view scale_name(Scale s) { return s == Scale::full ? "full" : "mini"; }

class ChainBuilder {
 public:
  explicit ChainBuilder(NetworkSpec& spec) : spec_(spec) {}

  void add(const std::string& name, LayerConfig config) {
    spec_.nodes.push_back({name, std::move(config), top_, name});
    top_ = name;
  }

 private:
  NetworkSpec& spec_;
  std::string top_ = "data";
};

Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride,
            std::int64_t pad) {
  return Conv2d{in, out, k, k, stride, stride, pad, pad};
}

Pool2d max_pool3s2() { return Pool2d{PoolKind::max, 3, 3, 2, 2}; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

NetworkSpec build_alexnet(int num_classes, Scale scale) {
  if (num_classes < 2) throw std::invalid_argument("build_alexnet: num_classes must be >= 2");
  const WidthTable& t = table(scale);
  NetworkSpec spec;
  spec.name = "alexnet-" + std::string(scale_name(scale));
  spec.num_classes = num_classes;
  spec.input_shape = Shape{1, t.input, t.input};

  ChainBuilder b(spec);
  b.add("conv1", conv(1, t.conv[0], 11, 4, t.conv1_pad));
  b.add("relu1", Activation{ActKind::relu});
  b.add("pool1", max_pool3s2());
  b.add("conv2", conv(t.conv[0], t.conv[1], 5, 1, 2));
  b.add("relu2", Activation{ActKind::relu});
  b.add("pool2", max_pool3s2());
  b.add("conv3", conv(t.conv[1], t.conv[2], 3, 1, 1));
  b.add("relu3", Activation{ActKind::relu});
  b.add("conv4", conv(t.conv[2], t.conv[3], 3, 1, 1));
  b.add("relu4", Activation{ActKind::relu});
  b.add("conv5", conv(t.conv[3], t.conv[4], 3, 1, 1));
  b.add("relu5", Activation{ActKind::relu});
  b.add("pool5", max_pool3s2());

  // fc6 input size follows from the conv stack.
  const Shape pool5 = infer_shapes(spec).back();
  b.add("fc6", Linear{static_cast<std::int64_t>(pool5.numel()), t.fc[0], true});
  b.add("relu6", Activation{ActKind::relu});
  b.add("fc7", Linear{t.fc[0], t.fc[1], true});
  b.add("relu7", Activation{ActKind::relu});
  b.add("fc8", Linear{t.fc[1], num_classes, true});
  b.add("loss", SoftmaxCrossEntropy{});
  validate(spec);
  return spec;
}

NetworkSpec build_alexnet_optimized(int num_classes, Scale scale, NormKind norm) {
  NetworkSpec spec = build_alexnet(num_classes, scale);
  spec.name = std::string(norm == NormKind::lrn ? "alexnet-opt-lrn-" : "alexnet-opt-bn-") +
              std::string(scale_name(scale));
  auto pool5 = std::find_if(spec.nodes.begin(), spec.nodes.end(),
                            [](const LayerNode& n) { return n.name == "pool5"; });
  const std::int64_t channels = infer_shapes(spec)[pool5 - spec.nodes.begin()][0];
  LayerConfig config = norm == NormKind::lrn ? LayerConfig{Lrn{5, 0.0001, 0.75, 1.0}}
                                             : LayerConfig{BatchNorm{channels, 1e-5, 0.9}};
  auto fc6 = spec.nodes.insert(pool5 + 1, LayerNode{"norm5", config, "pool5", "norm5"}) + 1;
  fc6->bottom = "norm5";
  validate(spec);
  return spec;
}

NetworkSpec remove_node(const NetworkSpec& spec, std::string_view name) {
  NetworkSpec out = spec;
  auto it = std::find_if(out.nodes.begin(), out.nodes.end(),
                         [&](const LayerNode& n) { return n.name == name; });
  if (it == out.nodes.end()) {
    throw std::invalid_argument("remove_node: no node named '" + std::string(name) + "'");
  }
  for (LayerNode& n : out.nodes) {
    if (n.bottom == it->top) n.bottom = it->bottom;
  }
  out.nodes.erase(it);
  return out;
}

NetworkSpec receptive_field_dense_spec() {
  NetworkSpec spec;
  spec.name = "dense-1000x1000-to-1M";
  spec.input_shape = Shape{1, 1000, 1000};
  spec.nodes.push_back({"hidden", Linear{1'000'000, 1'000'000, false}, "data", "hidden"});
  return spec;
}

NetworkSpec receptive_field_local_spec() {
  NetworkSpec spec;
  spec.name = "local10x10-1000x1000-to-1M";
  spec.input_shape = Shape{1, 1000, 1000};
  spec.nodes.push_back(
      {"hidden", LocallyConnected{1, 1000, 1000, 1, 10, 10, 1, false}, "data", "hidden"});
  return spec;
}

std::string to_prototxt(const NetworkSpec& spec) {
  std::ostringstream os;
  os << "name: \"" << spec.name << "\"\n";
  os << "input: \"data\"\n";
  os << "input_shape {";
  for (std::size_t d : spec.input_shape.dims()) os << " dim: " << d;
  os << " }\n";
  for (const LayerNode& node : spec.nodes) {
    os << "layer {\n";
    os << "  name: \"" << node.name << "\"\n";
    std::ostringstream body;
    const char* type = "";
    std::visit(
        [&](const auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, Conv2d>) {
            type = "Convolution";
            body << "  convolution_param {\n    num_output: " << c.out_channels
                 << "\n    kernel_h: " << c.kernel_h << "\n    kernel_w: " << c.kernel_w
                 << "\n    stride_h: " << c.stride_h << "\n    stride_w: " << c.stride_w
                 << "\n    pad_h: " << c.pad_h << "\n    pad_w: " << c.pad_w << "\n  }\n";
          } else if constexpr (std::is_same_v<T, LocallyConnected>) {
            type = "LocallyConnected";
            body << "  local_param {\n    num_output: " << c.out_channels
                 << "\n    kernel_h: " << c.kernel_h << "\n    kernel_w: " << c.kernel_w
                 << "\n    stride: " << c.stride << "\n    bias_term: "
                 << (c.bias ? "true" : "false") << "\n  }\n";
          } else if constexpr (std::is_same_v<T, Pool2d>) {
            type = "Pooling";
            body << "  pooling_param {\n    pool: " << (c.kind == PoolKind::max ? "MAX" : "AVE")
                 << "\n    kernel_h: " << c.window_h << "\n    kernel_w: " << c.window_w
                 << "\n    stride_h: " << c.stride_h << "\n    stride_w: " << c.stride_w
                 << "\n  }\n";
          } else if constexpr (std::is_same_v<T, Activation>) {
            type = c.kind == ActKind::relu ? "ReLU" : c.kind == ActKind::tanh ? "TanH" : "Sigmoid";
          } else if constexpr (std::is_same_v<T, Lrn>) {
            type = "LRN";
            body << "  lrn_param{\n    local_size: " << c.local_size << "\n    alpha: "
                 << fmt(c.alpha) << "\n    beta: " << fmt(c.beta) << "\n    k: " << fmt(c.k)
                 << "\n  }\n";
          } else if constexpr (std::is_same_v<T, BatchNorm>) {
            type = "BatchNorm";
            body << "  batch_norm_param {\n    eps: " << fmt(c.epsilon)
                 << "\n    moving_average_fraction: " << fmt(c.momentum) << "\n  }\n";
          } else if constexpr (std::is_same_v<T, Linear>) {
            type = "InnerProduct";
            body << "  inner_product_param {\n    num_output: " << c.out_features
                 << "\n    bias_term: " << (c.bias ? "true" : "false") << "\n  }\n";
          } else {
            type = "SoftmaxWithLoss";
          }
        },
        node.config);
    os << "  type: \"" << type << "\"\n";
    os << "  bottom: \"" << node.bottom << "\"\n";
    if (kind_of(node.config) == LayerKind::softmax_ce) os << "  bottom: \"label\"\n";
    os << "  top: \"" << node.top << "\"\n";
    os << body.str();
    os << "}\n";
  }
  return os.str();
}

}  // namespace mrinet
