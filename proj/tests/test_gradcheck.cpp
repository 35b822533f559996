#include <gtest/gtest.h>

#include "mrinet/gradcheck.hpp"

using namespace mrinet;

class GradcheckVariant : public ::testing::TestWithParam<std::string> {};

TEST_P(GradcheckVariant, PassesAtDefaultTolerance) {
  const auto reports = run_gradcheck_suite(GetParam(), 20, 1e-4, 1);
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_TRUE(reports[0].pass) << reports[0].label << " " << reports[0].max_rel_error;
  EXPECT_GT(reports[0].checked, 0u);
}

INSTANTIATE_TEST_SUITE_P(Layers, GradcheckVariant,
                         ::testing::Values("conv", "local", "maxpool", "meanpool", "sigmoid", "tanh",
                                           "relu", "lrn", "bn", "fc", "softmax"));

TEST(Gradcheck, FamiliesExpand) {
  EXPECT_EQ(gradcheck_variants("pool"), (std::vector<std::string>{"maxpool", "meanpool"}));
  EXPECT_EQ(gradcheck_variants("act").size(), 3u);
  EXPECT_EQ(gradcheck_variants("all").size(), 11u);
  EXPECT_THROW(gradcheck_variants("dropout"), std::invalid_argument);
}

TEST(Gradcheck, DetectsCorruptedGradient) {
  SeededRng rng(3);
  const LayerConfig cfg = Linear{4, 3, true};
  const Tensor x = tensor_random(Shape{2, 4}, Gaussian{0.0, 1.0}, rng);
  const std::vector<Tensor> params{tensor_random(Shape{3, 4}, Gaussian{0.0, 1.0}, rng),
                                   tensor_random(Shape{3}, Gaussian{0.0, 1.0}, rng)};
  GradCheckOptions opts;
  opts.corrupt = 1e-3;
  SeededRng r1(9), r2(9);
  EXPECT_FALSE(grad_check(cfg, x, params, 1e-4, r1, {}, opts).pass);
  EXPECT_TRUE(grad_check(cfg, x, params, 1e-4, r2).pass);
}

TEST(Gradcheck, StrictToleranceFails) {
  const auto reports = run_gradcheck_suite("all", 2, 1e-12, 0);
  bool any_fail = false;
  for (const auto& r : reports) any_fail = any_fail || !r.pass;
  EXPECT_TRUE(any_fail);
}

TEST(Gradcheck, SameSeedSameReport) {
  const auto a = run_gradcheck_suite("bn", 1, 1e-4, 7);
  const auto b = run_gradcheck_suite("bn", 1, 1e-4, 7);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a[0].max_rel_error, b[0].max_rel_error);
  EXPECT_EQ(a[0].checked, b[0].checked);
}

TEST(Gradcheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(1e-10, 0.0), 1e-2);
}
