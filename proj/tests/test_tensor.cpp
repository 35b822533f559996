#include <gtest/gtest.h>

#include <cmath>

#include "mrinet/rng.hpp"
#include "mrinet/tensor.hpp"

using namespace mrinet;

TEST(Shape, CountsElements) {
  const Shape s{2, 3, 4};
  EXPECT_EQ(s.rank(), 3u);
  EXPECT_EQ(s.numel(), 24u);
  EXPECT_EQ(Shape(std::vector<std::int64_t>{5, 7}).numel(), 35u);
  EXPECT_EQ(Shape{}.numel(), 1u);
}

TEST(Shape, RejectsNonPositiveDims) {
  EXPECT_THROW(Shape({2, 0}), ShapeError);
  EXPECT_THROW(Shape({-1}), ShapeError);
}

TEST(Shape, RejectsOverflow) {
  EXPECT_THROW(Shape({1LL << 40, 1LL << 40}), ShapeError);
}

TEST(TensorNew, FillsEveryElement) {
  const Tensor z = tensor_new(Shape{2, 2}, 0.0);
  ASSERT_EQ(z.numel(), 4u);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  const Tensor f = tensor_new(Shape{3}, 1.5);
  for (double v : f.data()) EXPECT_EQ(v, 1.5);
}

TEST(TensorRandom, ZeroVarianceGivesZeros) {
  SeededRng rng(11);
  const Tensor t = tensor_random(Shape{10}, Gaussian{0.0, 0.0}, rng);
  for (double v : t.data()) EXPECT_EQ(v, 0.0);
}

TEST(TensorRandom, SameSeedIsBitIdentical) {
  SeededRng a(42), b(42);
  EXPECT_EQ(tensor_random(Shape{3, 5}, Gaussian{0.0, 1.0}, a),
            tensor_random(Shape{3, 5}, Gaussian{0.0, 1.0}, b));
  EXPECT_EQ(tensor_random(Shape{7}, Uniform{-2.0, 3.0}, a),
            tensor_random(Shape{7}, Uniform{-2.0, 3.0}, b));
}

TEST(TensorRandom, GaussianMomentsWithinStandardError) {
  // Standard error of the mean is 1/sqrt(1e5) ~ 0.0032 and of the std ~0.0022;
  // 0.02 is more than 6 standard errors.
  SeededRng rng(2024);
  const Tensor t = tensor_random(Shape{100000}, Gaussian{0.0, 1.0}, rng);
  double sum = 0.0;
  for (double v : t.data()) sum += v;
  const double mean = sum / 1e5;
  double sq = 0.0;
  for (double v : t.data()) sq += (v - mean) * (v - mean);
  const double stddev = std::sqrt(sq / 1e5);
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(stddev, 1.0, 0.02);
}

TEST(TensorRandom, UniformStaysInRange) {
  SeededRng rng(3);
  const Tensor t = tensor_random(Shape{1000}, Uniform{-1.0, 2.0}, rng);
  for (double v : t.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LT(v, 2.0);
  }
}

TEST(TensorRandom, RejectsBadParameters) {
  SeededRng rng(1);
  EXPECT_THROW(tensor_random(Shape{2}, Gaussian{0.0, -1.0}, rng), std::invalid_argument);
  EXPECT_THROW(tensor_random(Shape{2}, Uniform{1.0, 0.0}, rng), std::invalid_argument);
}

namespace {

// Naive triple loop.
Tensor oracle_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c(Shape{static_cast<std::int64_t>(m), static_cast<std::int64_t>(n)});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
  return c;
}

Tensor identity(std::int64_t n) {
  Tensor t(Shape{n, n});
  for (std::int64_t i = 0; i < n; ++i) t[static_cast<std::size_t>(i * n + i)] = 1.0;
  return t;
}

}  // namespace

TEST(Matmul, SmallExample) {
  const Tensor a(Shape{2, 2}, {1, 2, 3, 4});
  const Tensor b(Shape{2, 1}, {5, 6});
  const Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c[0], 17.0);
  EXPECT_EQ(c[1], 39.0);
  EXPECT_EQ(c, oracle_matmul(a, b));
}

TEST(Matmul, IdentityIsExact) {
  SeededRng rng(5);
  const Tensor a = tensor_random(Shape{4, 6}, Gaussian{0.0, 1.0}, rng);
  EXPECT_EQ(matmul(a, identity(6)), a);
  EXPECT_EQ(matmul(identity(4), a), a);
}

TEST(Matmul, MatchesOracleOnRandomInputs) {
  SeededRng rng(6);
  const Tensor a = tensor_random(Shape{13, 37}, Gaussian{0.0, 1.0}, rng);
  const Tensor b = tensor_random(Shape{37, 600}, Gaussian{0.0, 1.0}, rng);
  EXPECT_EQ(matmul(a, b), oracle_matmul(a, b));
}

TEST(Matmul, RejectsInnerMismatch) {
  EXPECT_THROW(matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), ShapeError);
}

TEST(Reduce, SumMeanMax) {
  const Tensor t(Shape{3}, {1, 2, 3});
  EXPECT_EQ(reduce(t, 0, ReduceKind::sum)[0], 6.0);
  EXPECT_EQ(reduce(t, 0, ReduceKind::mean)[0], 2.0);
  EXPECT_EQ(reduce(Tensor(Shape{3}, {-5, -1, -9}), 0, ReduceKind::max)[0], -1.0);
}

TEST(Reduce, DropsAxis) {
  const Tensor t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor rows = reduce(t, 1, ReduceKind::sum);
  EXPECT_EQ(rows.shape(), (Shape{2}));
  EXPECT_EQ(rows[0], 6.0);
  EXPECT_EQ(rows[1], 15.0);
  const Tensor cols = reduce(t, 0, ReduceKind::max);
  EXPECT_EQ(cols.shape(), (Shape{3}));
  EXPECT_EQ(cols[2], 6.0);
}

TEST(Reduce, MeanEqualsSumOverLength) {
  SeededRng rng(8);
  const Tensor t = tensor_random(Shape{5, 17, 3}, Gaussian{0.0, 10.0}, rng);
  const Tensor s = reduce(t, 1, ReduceKind::sum);
  const Tensor m = reduce(t, 1, ReduceKind::mean);
  for (std::size_t i = 0; i < s.numel(); ++i) {
    EXPECT_NEAR(m[i], s[i] / 17.0, 1e-12 * std::max(1.0, std::abs(m[i])));
  }
}

TEST(Reduce, AxisOutOfRange) {
  EXPECT_THROW(reduce(Tensor(Shape{2, 2}), 2, ReduceKind::sum), ShapeError);
}

TEST(Elementwise, Identities) {
  SeededRng rng(9);
  const Tensor t = tensor_random(Shape{4, 4}, Gaussian{0.0, 1.0}, rng);
  EXPECT_EQ(elementwise(t, tensor_new(t.shape(), 0.0), BinaryOp::add), t);
  EXPECT_EQ(elementwise(t, 1.0, BinaryOp::mul), t);
}

TEST(Elementwise, Arithmetic) {
  const Tensor a(Shape{2}, {6, 8});
  const Tensor b(Shape{2}, {2, 4});
  EXPECT_EQ(elementwise(a, b, BinaryOp::sub), Tensor(Shape{2}, {4, 4}));
  EXPECT_EQ(elementwise(a, b, BinaryOp::div), Tensor(Shape{2}, {3, 2}));
  EXPECT_EQ(elementwise(a, 2.0, BinaryOp::add), Tensor(Shape{2}, {8, 10}));
}

TEST(Elementwise, ShapeMismatch) {
  EXPECT_THROW(elementwise(Tensor(Shape{2}, {1, 2}), Tensor(Shape{3}, {1, 2, 3}), BinaryOp::add),
               ShapeError);
}

TEST(Elementwise, DivisionByZeroIsAnError) {
  EXPECT_THROW(elementwise(Tensor(Shape{2}, {1, 2}), Tensor(Shape{2}, {1, 0}), BinaryOp::div),
               NumericError);
  EXPECT_THROW(elementwise(Tensor(Shape{1}, {1}), 0.0, BinaryOp::div), NumericError);
}

TEST(Elementwise, OverflowIsAnError) {
  EXPECT_THROW(elementwise(Tensor(Shape{1}, {1e308}), 1e308, BinaryOp::mul), NumericError);
}

TEST(SeededRng, StateRoundTrip) {
  SeededRng a(77);
  for (int i = 0; i < 10; ++i) a.next_u64();
  const std::string s = a.state();
  SeededRng b(0);
  b.restore(s);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(SeededRng, KnownFirstOutput) {
  // std::mt19937_64 is fully specified: the 10000th output for the default
  // seed is 9981545732273789042.
  std::mt19937_64 ref;
  ref.discard(9999);
  EXPECT_EQ(ref(), 9981545732273789042ULL);
  SeededRng rng(5489);
  std::mt19937_64 same(5489);
  EXPECT_EQ(rng.next_u64(), same());
}

TEST(SeededRng, BelowIsInRange) {
  SeededRng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(rng.below(7), 7u);
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}
