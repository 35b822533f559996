#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "mrinet/error.hpp"
#include "mrinet/model_zoo.hpp"
#include "mrinet/network.hpp"
#include "mrinet/weights_io.hpp"
#include "test_util.hpp"

using namespace mrinet;
using mrinet::testing::TempDir;

namespace {

int count_kind(const NetworkSpec& spec, LayerKind kind) {
  int n = 0;
  for (const auto& node : spec.nodes) n += kind_of(node.config) == kind;
  return n;
}

const LayerNode* find(const NetworkSpec& spec, const std::string& name) {
  for (const auto& node : spec.nodes) {
    if (node.name == name) return &node;
  }
  return nullptr;
}

// conv(1->2, 3x3) -> relu -> fc(2*4*4 -> 3) -> loss on 1x4x4 input.
NetworkSpec toy_chain() {
  NetworkSpec s;
  s.name = "toy";
  s.num_classes = 3;
  s.input_shape = Shape{1, 4, 4};
  s.nodes = {{"conv", Conv2d{1, 2, 3, 3, 1, 1, 1, 1}, "data", "conv"},
             {"relu", Activation{ActKind::relu}, "conv", "relu"},
             {"fc", Linear{32, 3, true}, "relu", "fc"},
             {"loss", SoftmaxCrossEntropy{}, "fc", "loss"}};
  return s;
}

WeightStore scaled(const WeightStore& w, double s) {
  WeightStore out = w;
  for (auto& [name, ts] : out.layers) {
    for (Tensor& t : ts) {
      for (double& v : t.data()) v *= s;
    }
  }
  return out;
}

}  // namespace

TEST(ModelZoo, FiveConvThreeFc) {
  for (Scale s : {Scale::full, Scale::mini}) {
    const NetworkSpec spec = build_alexnet(3, s);
    EXPECT_EQ(count_kind(spec, LayerKind::conv), 5);
    EXPECT_EQ(count_kind(spec, LayerKind::fc), 3);
    EXPECT_EQ(count_kind(spec, LayerKind::maxpool), 3);
    EXPECT_EQ(std::get<Linear>(find(spec, "fc8")->config).out_features, 3);
    EXPECT_EQ(infer_shapes(spec).back().rank(), 0u);
  }
}

TEST(ModelZoo, WidthTables) {
  const NetworkSpec full = build_alexnet(2, Scale::full);
  EXPECT_EQ(full.input_shape, (Shape{1, 227, 227}));
  EXPECT_EQ(std::get<Conv2d>(find(full, "conv1")->config).out_channels, 96);
  EXPECT_EQ(std::get<Linear>(find(full, "fc6")->config).in_features, 9216);
  EXPECT_EQ(std::get<Linear>(find(full, "fc7")->config).out_features, 4096);
  const NetworkSpec mini = build_alexnet(2, Scale::mini);
  EXPECT_EQ(mini.input_shape, (Shape{1, 64, 64}));
  EXPECT_EQ(std::get<Conv2d>(find(mini, "conv5")->config).out_channels, 32);
  EXPECT_EQ(std::get<Linear>(find(mini, "fc6")->config).out_features, 256);
}

TEST(ModelZoo, RejectsSingleClass) {
  EXPECT_THROW(build_alexnet(1, Scale::mini), std::invalid_argument);
}

TEST(ModelZoo, OptimizedAddsOnlyNorm5) {
  for (NormKind kind : {NormKind::lrn, NormKind::batchnorm}) {
    const NetworkSpec base = build_alexnet(3, Scale::mini);
    const NetworkSpec opt = build_alexnet_optimized(3, Scale::mini, kind);
    ASSERT_EQ(opt.nodes.size(), base.nodes.size() + 1);
    const LayerNode* norm5 = find(opt, "norm5");
    ASSERT_NE(norm5, nullptr);
    EXPECT_EQ(norm5->bottom, "pool5");
    EXPECT_EQ(find(opt, "fc6")->bottom, "norm5");
    EXPECT_EQ(remove_node(opt, "norm5").nodes, base.nodes);
    EXPECT_EQ(remove_node(opt, "norm5").input_shape, base.input_shape);
  }
  const auto& lrn =
      std::get<Lrn>(find(build_alexnet_optimized(3, Scale::full, NormKind::lrn), "norm5")->config);
  EXPECT_EQ(lrn.local_size, 5);
  EXPECT_EQ(lrn.alpha, 0.0001);
  EXPECT_EQ(lrn.beta, 0.75);
}

TEST(ModelZoo, ParameterCountDeltas) {
  for (Scale s : {Scale::full, Scale::mini}) {
    const NetworkSpec base = build_alexnet(3, s);
    const std::int64_t c = static_cast<std::int64_t>(infer_shapes(base)[12][0]);  // pool5
    EXPECT_EQ(param_count(build_alexnet_optimized(3, s, NormKind::lrn)), param_count(base));
    EXPECT_EQ(param_count(build_alexnet_optimized(3, s, NormKind::batchnorm)),
              param_count(base) + 2 * c);
  }
}

TEST(ModelZoo, FullScaleParameterCountOracle) {
  auto conv = [](std::int64_t in, std::int64_t out, std::int64_t k) { return out * in * k * k + out; };
  auto fc = [](std::int64_t in, std::int64_t out) { return in * out + out; };
  const std::int64_t oracle = conv(1, 96, 11) + conv(96, 256, 5) + conv(256, 384, 3) +
                              conv(384, 384, 3) + conv(384, 256, 3) + fc(9216, 4096) +
                              fc(4096, 4096) + fc(4096, 3);
  EXPECT_EQ(param_count(build_alexnet(3, Scale::full)), oracle);
}

TEST(ModelZoo, ReceptiveFieldCounts) {
  const std::int64_t dense = param_count(receptive_field_dense_spec());
  const std::int64_t local = param_count(receptive_field_local_spec());
  EXPECT_EQ(dense, 1'000'000'000'000LL);
  EXPECT_EQ(local, 100'000'000LL);
  EXPECT_EQ(dense / local, 10'000);
}

TEST(ModelZoo, PrototxtMirrorsSnippet) {
  const std::string text = to_prototxt(build_alexnet_optimized(3, Scale::mini, NormKind::lrn));
  EXPECT_NE(text.find("name: \"norm5\""), std::string::npos);
  EXPECT_NE(text.find("type: \"LRN\""), std::string::npos);
  EXPECT_NE(text.find("bottom: \"pool5\""), std::string::npos);
  EXPECT_NE(text.find("local_size: 5"), std::string::npos);
  EXPECT_NE(text.find("alpha: 0.0001"), std::string::npos);
  EXPECT_NE(text.find("beta: 0.75"), std::string::npos);
}

TEST(Network, ValidateNamesBadNode) {
  NetworkSpec s = toy_chain();
  s.nodes[2].config = Linear{31, 3, true};
  try {
    validate(s);
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("fc"), std::string::npos);
  }
  NetworkSpec dup = toy_chain();
  dup.nodes[1].name = "conv";
  EXPECT_THROW(validate(dup), std::invalid_argument);
}

TEST(Network, ZeroWeightsGiveLogK) {
  const NetworkSpec spec = build_alexnet(3, Scale::mini);
  SeededRng rng(1);
  const WeightStore zero = scaled(init_weights(spec, rng), 0.0);
  const std::vector<int> labels{0, 1};
  const NetworkOutput out =
      network_forward(spec, zero, Tensor(Shape{2, 1, 64, 64}, 0.3), labels, Mode::train);
  ASSERT_TRUE(out.loss.has_value());
  EXPECT_NEAR(*out.loss, std::log(3.0), 1e-12);
}

TEST(Network, BatchIndependenceInInferMode) {
  for (NormKind kind : {NormKind::lrn, NormKind::batchnorm}) {
    const NetworkSpec spec = build_alexnet_optimized(3, Scale::mini, kind);
    SeededRng rng(2);
    const WeightStore w = init_weights(spec, rng);
    const Tensor one = tensor_random(Shape{1, 1, 64, 64}, Uniform{0.0, 1.0}, rng);
    Tensor two(Shape{2, 1, 64, 64});
    std::copy(one.data().begin(), one.data().end(), two.data().begin());
    std::copy(one.data().begin(), one.data().end(), two.data().begin() + 4096);
    const Tensor l1 = network_forward(spec, w, one, {}, Mode::infer).logits;
    const Tensor l2 = network_forward(spec, w, two, {}, Mode::infer).logits;
    ASSERT_EQ(l2.shape(), (Shape{2, 3}));
    for (int j = 0; j < 3; ++j) {
      EXPECT_EQ(l2[j], l1[j]);
      EXPECT_EQ(l2[3 + j], l1[j]);
    }
  }
}

TEST(Network, OptimizedMiniForwardIsFinite) {
  const NetworkSpec spec = build_alexnet_optimized(3, Scale::mini, NormKind::batchnorm);
  SeededRng rng(3);
  const WeightStore w = init_weights(spec, rng);
  const Tensor x = tensor_random(Shape{2, 1, 64, 64}, Uniform{0.0, 1.0}, rng);
  const NetworkOutput out = network_forward(spec, w, x, {}, Mode::train);
  EXPECT_EQ(out.logits.shape(), (Shape{2, 3}));
  EXPECT_TRUE(out.logits.all_finite());
}

TEST(Network, ForwardRejectsWrongInput) {
  const NetworkSpec spec = build_alexnet(3, Scale::mini);
  SeededRng rng(4);
  const WeightStore w = init_weights(spec, rng);
  EXPECT_THROW(network_forward(spec, w, Tensor(Shape{1, 1, 32, 32}), {}, Mode::infer), ShapeError);
}

TEST(Network, ToyChainGradientMatchesFiniteDifferences) {
  const NetworkSpec spec = toy_chain();
  SeededRng rng(5);
  WeightStore w = init_weights(spec, rng);
  const Tensor x = tensor_random(Shape{2, 1, 4, 4}, Gaussian{0.0, 1.0}, rng);
  const std::vector<int> labels{2, 0};
  const NetworkOutput f = network_forward(spec, w, x, labels, Mode::train);
  const GradStore g = network_backward(spec, w, f, labels);
  const double h = 1e-5;
  double worst = 0.0;
  for (auto& [name, tensors] : w.layers) {
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      for (std::size_t i = 0; i < tensors[t].numel(); ++i) {
        const double saved = tensors[t][i];
        tensors[t][i] = saved + h;
        const double lp = *network_forward(spec, w, x, labels, Mode::train).loss;
        tensors[t][i] = saved - h;
        const double lm = *network_forward(spec, w, x, labels, Mode::train).loss;
        tensors[t][i] = saved;
        const double numeric = (lp - lm) / (2 * h);
        const double analytic = g.layers.at(name)[t][i];
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
        worst = std::max(worst, std::abs(numeric - analytic) / denom);
      }
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Network, ZeroLossScaleGivesZeroGradients) {
  const NetworkSpec spec = toy_chain();
  SeededRng rng(6);
  const WeightStore w = init_weights(spec, rng);
  const Tensor x = tensor_random(Shape{1, 1, 4, 4}, Gaussian{0.0, 1.0}, rng);
  const std::vector<int> labels{1};
  const GradStore g =
      network_backward(spec, w, network_forward(spec, w, x, labels, Mode::train), labels, 0.0);
  for (const auto& [name, ts] : g.layers) {
    for (const Tensor& t : ts) {
      for (double v : t.data()) EXPECT_EQ(v, 0.0) << name;
    }
  }
}

TEST(Network, DuplicatedSampleGivesSameGradient) {
  const NetworkSpec spec = toy_chain();
  SeededRng rng(7);
  const WeightStore w = init_weights(spec, rng);
  const Tensor one = tensor_random(Shape{1, 1, 4, 4}, Gaussian{0.0, 1.0}, rng);
  Tensor two(Shape{2, 1, 4, 4});
  std::copy(one.data().begin(), one.data().end(), two.data().begin());
  std::copy(one.data().begin(), one.data().end(), two.data().begin() + 16);
  const std::vector<int> l1{1}, l2{1, 1};
  const GradStore g1 = network_backward(spec, w, network_forward(spec, w, one, l1, Mode::train), l1);
  const GradStore g2 = network_backward(spec, w, network_forward(spec, w, two, l2, Mode::train), l2);
  for (const auto& [name, ts] : g1.layers) {
    for (std::size_t t = 0; t < ts.size(); ++t) {
      for (std::size_t i = 0; i < ts[t].numel(); ++i) {
        EXPECT_NEAR(g2.layers.at(name)[t][i], ts[t][i], 1e-12);
      }
    }
  }
}

TEST(Network, BackwardRejectsStaleCaches) {
  const NetworkSpec spec = toy_chain();
  SeededRng rng(8);
  const WeightStore w = init_weights(spec, rng);
  const Tensor x = tensor_random(Shape{1, 1, 4, 4}, Gaussian{0.0, 1.0}, rng);
  const std::vector<int> labels{1}, other{2};
  const NetworkOutput f = network_forward(spec, w, x, labels, Mode::train);
  EXPECT_THROW(network_backward(spec, w, f, other), std::logic_error);
  const NetworkOutput no_loss = network_forward(spec, w, x, {}, Mode::train);
  EXPECT_THROW(network_backward(spec, w, no_loss, labels), std::logic_error);
}

TEST(Network, ForwardIsDeterministic) {
  const NetworkSpec spec = build_alexnet_optimized(3, Scale::mini, NormKind::lrn);
  SeededRng r1(9), r2(9);
  const WeightStore w1 = init_weights(spec, r1), w2 = init_weights(spec, r2);
  EXPECT_EQ(w1, w2);
  const Tensor x = tensor_random(Shape{3, 1, 64, 64}, Uniform{0.0, 1.0}, r1);
  EXPECT_EQ(network_forward(spec, w1, x, {}, Mode::infer).logits,
            network_forward(spec, w2, x, {}, Mode::infer).logits);
}

TEST(Network, PredictTieBreaksLow) {
  EXPECT_EQ(predict(Tensor(Shape{2, 3}, {1, 1, 1, 0, 2, 2})), (std::vector<int>{0, 1}));
}

TEST(Weights, RoundTripIsBitExact) {
  TempDir dir;
  const NetworkSpec spec = build_alexnet_optimized(3, Scale::mini, NormKind::batchnorm);
  SeededRng rng(10);
  const WeightStore w = init_weights(spec, rng);
  save_weights(w, dir / "w.bin");
  EXPECT_EQ(load_weights(dir / "w.bin", spec), w);
}

TEST(Weights, TruncatedFileIsRejected) {
  TempDir dir;
  const NetworkSpec spec = toy_chain();
  SeededRng rng(11);
  save_weights(init_weights(spec, rng), dir / "w.bin");
  const std::string bytes = mrinet::testing::read_file(dir / "w.bin");
  for (std::size_t cut : {std::size_t{3}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1}) {
    mrinet::testing::write_file(dir / "t.bin", bytes.substr(0, cut));
    EXPECT_THROW(load_weights(dir / "t.bin"), FormatError) << cut;
  }
}

TEST(Weights, VersionMismatchIsRejected) {
  TempDir dir;
  SeededRng rng(12);
  save_weights(init_weights(toy_chain(), rng), dir / "w.bin");
  std::string bytes = mrinet::testing::read_file(dir / "w.bin");
  bytes[4] = 9;
  mrinet::testing::write_file(dir / "v.bin", bytes);
  EXPECT_THROW(load_weights(dir / "v.bin"), FormatError);
}

TEST(Weights, RenamedLayerIsNamedInError) {
  TempDir dir;
  NetworkSpec spec = toy_chain();
  SeededRng rng(13);
  save_weights(init_weights(spec, rng), dir / "w.bin");
  spec.nodes[2].name = "classifier";
  spec.nodes[3].bottom = "classifier";
  try {
    load_weights(dir / "w.bin", spec);
    FAIL() << "expected an error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("classifier"), std::string::npos) << e.what();
  }
}
