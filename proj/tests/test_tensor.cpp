#include <gtest/gtest.h>

#include <cmath>

#include "fire/error.hpp"
#include "fire/tensor.hpp"
#include "support/gradcheck.hpp"

namespace fire {
namespace {

using testing::check_gradients;
using testing::random_tensor;

std::vector<real> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const auto a = Tensor::from({2, 2}, {3.5, -1.0, 2.0, 7.25});
  const auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(values(matmul(eye, a)), values(a));
}

TEST(Matmul, HandComputedProduct) {
  const auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const auto b = Tensor::from({2, 1}, {1, 1});
  const auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(values(c), (std::vector<real>{3, 7}));
}

TEST(Matmul, ZeroAnnihilates) {
  Rng rng(3);
  const auto b = random_tensor(rng, {3, 4}, false);
  const auto c = matmul(Tensor::zeros({2, 3}), b);
  for (real v : c.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos);
    EXPECT_NE(msg.find("[4, 5]"), std::string::npos);
  }
}

TEST(Softmax, UniformForEqualLogits) {
  const auto y = softmax_rows(Tensor::from({1, 2}, {0, 0}));
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Softmax, ScalarOracle) {
  const auto y = softmax_rows(Tensor::from({1, 2}, {1, 0}));
  const double expected = std::exp(1.0) / (std::exp(1.0) + 1.0);
  EXPECT_NEAR(y[0], 0.7311, 1e-4);
  EXPECT_NEAR(y[1], 0.2689, 1e-4);
  EXPECT_NEAR(y[0], expected, 1e-15);
}

TEST(Softmax, MaskedCellIsExactlyZero) {
  const std::uint8_t mask[] = {1, 0};
  const auto y = softmax_rows(Tensor::from({1, 2}, {5, 9}), mask);
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], 0.0);
}

TEST(Softmax, AllInvalidRowIsZero) {
  const std::uint8_t mask[] = {0, 0, 1, 1};
  const auto y = softmax_rows(Tensor::from({2, 2}, {1, 2, 3, 4}), mask);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_NEAR(y[2] + y[3], 1.0, 1e-15);
}

TEST(Softmax, RowsSumToOneOverValidCells) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t r = 1 + rng.below(6), c = 1 + rng.below(9);
    const auto x = random_tensor(rng, {r, c}, false, -20, 20);
    std::vector<std::uint8_t> mask(r * c);
    for (auto& m : mask) m = rng.uniform() < 0.7;
    const auto y = softmax_rows(x, mask);
    for (std::size_t i = 0; i < r; ++i) {
      double total = 0.0;
      bool any = false;
      for (std::size_t j = 0; j < c; ++j) {
        EXPECT_GE(y[i * c + j], 0.0);
        EXPECT_LE(y[i * c + j], 1.0);
        total += y[i * c + j];
        any = any || mask[i * c + j];
      }
      EXPECT_NEAR(total, any ? 1.0 : 0.0, 1e-6);
    }
  }
}

TEST(Pool, SingletonReturnsTheStep) {
  const auto seq = Tensor::from({1, 3}, {4, -2, 9});
  for (auto mode : {PoolMode::kMax, PoolMode::kMean, PoolMode::kLast}) {
    EXPECT_EQ(values(pool(seq, mode, 1)), (std::vector<real>{4, -2, 9}));
  }
}

TEST(Pool, MaxAndMeanByHand) {
  const auto seq = Tensor::from({2, 2}, {1, 4, 3, 2});
  EXPECT_EQ(values(pool(seq, PoolMode::kMax, 2)), (std::vector<real>{3, 4}));
  EXPECT_EQ(values(pool(seq, PoolMode::kMean, 2)), (std::vector<real>{2, 3}));
}

TEST(Pool, PaddedStepsIgnored) {
  const auto seq = Tensor::from({2, 2}, {1, 1, 9, 9});
  for (auto mode : {PoolMode::kMax, PoolMode::kMean, PoolMode::kLast}) {
    EXPECT_EQ(values(pool(seq, mode, 1)), (std::vector<real>{1, 1}));
  }
}

TEST(Pool, ZeroLengthGivesZeroVector) {
  const auto seq = Tensor::from({2, 2}, {1, 1, 9, 9});
  EXPECT_EQ(values(pool(seq, PoolMode::kMax, 0)), (std::vector<real>{0, 0}));
}

TEST(Pool, LengthBeyondStepsIsBoundsError) {
  EXPECT_THROW(pool(Tensor::zeros({2, 2}), PoolMode::kMean, 3), ShapeError);
}

TEST(Pool, InvariantToValuesBeyondLength) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t t = 2 + rng.below(6), d = 1 + rng.below(4), len = rng.below(t);
    auto a = random_tensor(rng, {t, d}, false);
    auto b = a.clone();
    for (std::size_t i = len * d; i < t * d; ++i) b.mutable_data()[i] = rng.uniform(-50, 50);
    for (auto mode : {PoolMode::kMax, PoolMode::kMean, PoolMode::kLast}) {
      EXPECT_EQ(values(pool(a, mode, len)), values(pool(b, mode, len)));
    }
    const auto mx = pool(a, PoolMode::kMax, len), mn = pool(a, PoolMode::kMean, len);
    for (std::size_t j = 0; j < d; ++j) EXPECT_GE(mx[j], mn[j]);
  }
}

TEST(Backward, SquaredNormGivesTwiceW) {
  Rng rng(1);
  auto w = random_tensor(rng, {3, 2});
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(mul(w, w)));
  const auto g = w.grad();
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_DOUBLE_EQ(g[i], 2.0 * w[i]);
}

TEST(Backward, UnusedParameterGetsZeroGradient) {
  auto used = Tensor::from({2}, {1, 2}, true);
  auto unused = Tensor::from({2}, {3, 4}, true);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(scale(used, 3.0)));
  EXPECT_EQ(unused.grad(), (std::vector<real>{0, 0}));
  EXPECT_FALSE(unused.has_grad());
}

TEST(Backward, FanOutAccumulates) {
  auto x = Tensor::from({1}, {2.0}, true);
  Tape tape;
  TapeScope scope(tape);
  // x*x + x  -> d/dx = 2x + 1
  tape.backward(sum(add(mul(x, x), x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 5.0);
}

TEST(Backward, NonScalarLossRejected) {
  auto x = Tensor::from({2}, {1, 2}, true);
  Tape tape;
  TapeScope scope(tape);
  EXPECT_THROW(tape.backward(scale(x, 2.0)), ShapeError);
}

TEST(Backward, NoTapeMeansNoRecording) {
  auto x = Tensor::from({2}, {1, 2}, true);
  const auto y = scale(x, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Determinism, SameSeedSameDraws) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.uniform(), b.uniform());
  Rng c(42);
  auto x = random_tensor(c, {4, 4}, false);
  Rng d(42);
  auto y = random_tensor(d, {4, 4}, false);
  EXPECT_EQ(values(softmax_rows(matmul(x, x))), values(softmax_rows(matmul(y, y))));
}

// ---------------------------------------------------------------------------
// Gradient check: every differentiable op on >= 20 random small shapes.

double check_op(Rng& rng, const std::function<Tensor(const std::vector<Tensor>&)>& op, std::vector<Tensor> inputs) {
  // Random projection weights make the loss sensitive to every output cell.
  Tensor probe;
  auto loss_fn = [&]() {
    const auto out = op(inputs);
    if (!probe.defined()) probe = random_tensor(rng, out.shape(), false);
    return sum(mul(out, probe));
  };
  return check_gradients(loss_fn, inputs).max_relative_error;
}

constexpr int kShapes = 20;

TEST(OpGradientCheck, AllOpsOnRandomShapes) {
  Rng rng(2024);
  auto dim = [&] { return 1 + rng.below(5); };
  for (int trial = 0; trial < kShapes; ++trial) {
    const std::size_t m = dim(), k = dim(), n = dim(), b = dim();
    EXPECT_LT(check_op(rng, [](auto& in) { return matmul(in[0], in[1]); },
                       {random_tensor(rng, {m, k}), random_tensor(rng, {k, n})}),
              1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return matmul(in[0], in[1]); },
                       {random_tensor(rng, {b, m, k}), random_tensor(rng, {k, n})}),
              1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return transpose(in[0]); }, {random_tensor(rng, {m, k})}), 1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return bmm(in[0], in[1]); },
                       {random_tensor(rng, {b, m, k}), random_tensor(rng, {b, k, n})}),
              1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return bmm_nt(in[0], in[1]); },
                       {random_tensor(rng, {b, m, k}), random_tensor(rng, {b, n, k})}),
              1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return add(in[0], in[1]); },
                       {random_tensor(rng, {m, n}), random_tensor(rng, {m, n})}),
              1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return sub(in[0], in[1]); },
                       {random_tensor(rng, {m, n}), random_tensor(rng, {m, n})}),
              1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return mul(in[0], in[1]); },
                       {random_tensor(rng, {m, n}), random_tensor(rng, {m, n})}),
              1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return scale(in[0], -1.7); }, {random_tensor(rng, {m, n})}), 1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return add_bias(in[0], in[1]); },
                       {random_tensor(rng, {b, m, n}), random_tensor(rng, {n})}),
              1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return mul_rows(in[0], in[1]); },
                       {random_tensor(rng, {m, n}), random_tensor(rng, {m, 1})}),
              1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return relu(in[0]); }, {random_tensor(rng, {m, n})}), 1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return tanh(in[0]); }, {random_tensor(rng, {m, n})}), 1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return sigmoid(in[0]); }, {random_tensor(rng, {m, n})}), 1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return log_clamped(in[0], 1e-12); },
                       {random_tensor(rng, {m, n}, true, 0.1, 2.0)}),
              1e-4);
    {
      std::vector<std::uint8_t> mask(m * n);
      for (auto& v : mask) v = rng.uniform() < 0.75;
      EXPECT_LT(check_op(rng, [&mask](auto& in) { return softmax_rows(in[0], mask); },
                         {random_tensor(rng, {m, n}, true, -3, 3)}),
                1e-4);
    }
    EXPECT_LT(check_op(rng, [](auto& in) { return concat_last({in[0], in[1]}); },
                       {random_tensor(rng, {m, k}), random_tensor(rng, {m, n})}),
              1e-4);
    EXPECT_LT(check_op(rng, [](auto& in) { return concat_rows({in[0], in[1]}); },
                       {random_tensor(rng, {m, n}), random_tensor(rng, {k, n})}),
              1e-4);
    {
      const std::size_t start = rng.below(n), len = 1 + rng.below(n - start);
      EXPECT_LT(check_op(rng, [=](auto& in) { return slice_last(in[0], start, len); },
                         {random_tensor(rng, {m, n})}),
                1e-4);
    }
    {
      std::vector<std::int64_t> idx(k);
      for (auto& v : idx) v = static_cast<std::int64_t>(rng.below(m + 1)) - 1;
      EXPECT_LT(check_op(rng, [&idx](auto& in) { return gather_rows(in[0], idx); }, {random_tensor(rng, {m, n})}),
                1e-4);
    }
    EXPECT_LT(check_op(rng, [=](auto& in) { return reshape(in[0], {m * n}); }, {random_tensor(rng, {m, n})}), 1e-4);
    {
      std::vector<std::size_t> lengths(b);
      for (auto& l : lengths) l = rng.below(m + 1);
      for (auto mode : {PoolMode::kMax, PoolMode::kMean, PoolMode::kLast}) {
        EXPECT_LT(check_op(rng, [&, mode](auto& in) { return segment_pool(in[0], m, lengths, mode); },
                           {random_tensor(rng, {b * m, n})}),
                  1e-4);
      }
    }
    EXPECT_LT(check_op(rng, [](auto& in) { return sum(in[0]); }, {random_tensor(rng, {m, n})}), 1e-4);
  }
}

TEST(OpGradientCheck, Composite) {
  Rng rng(99);
  auto w = random_tensor(rng, {4, 3});
  auto x = random_tensor(rng, {5, 4});
  auto bias = random_tensor(rng, {3});
  auto loss = [&] {
    auto h = tanh(add_bias(matmul(x, w), bias));
    auto attn = softmax_rows(matmul(h, transpose(h)));
    return sum(mul(matmul(attn, h), h));
  };
  EXPECT_LT(check_gradients(loss, {w, x, bias}).max_relative_error, 1e-4);
}

}  // namespace
}  // namespace fire
