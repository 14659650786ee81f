// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "televit/errors.hpp"
#include "televit/grad_check.hpp"
#include "televit/rng.hpp"
#include "televit/tensor.hpp"

using namespace televit;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad = false) {
  Tensor t(std::move(shape), grad);
  for (double& v : t.mutable_data()) v = rng.normal();
  return t;
}

// Plain triple loop, kept independent of the library kernels.
std::vector<double> reference_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                     std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double acc = 0.0L;
      for (std::size_t p = 0; p < k; ++p) acc += static_cast<long double>(a[i * k + p]) * b[p * n + j];
      c[i * n + j] = static_cast<double>(acc);
    }
  return c;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), DimensionError);
  EXPECT_THROW(Tensor(Shape{2, 0}), DimensionError);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Rng rng(1);
  const Tensor m = random_tensor({3, 5}, rng);
  EXPECT_EQ(values(matmul(Tensor::identity(3), m)), values(m));
}

TEST(Matmul, HandCheckedProduct) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 1}, {1, 1});
  const Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(values(c), (std::vector<double>{3, 7}));
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(2);
  for (auto [m, k, n] : {std::tuple{5, 4, 3}, {13, 7, 17}, {1, 9, 8}, {9, 1, 33}}) {
    const Tensor a = random_tensor({std::size_t(m), std::size_t(k)}, rng);
    const Tensor b = random_tensor({std::size_t(k), std::size_t(n)}, rng);
    const auto ref = reference_matmul(values(a), values(b), m, k, n);
    const Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(c.at(i), ref[i], 1e-12);
  }
}

TEST(Matmul, BatchedLeftOperand) {
  Rng rng(3);
  const Tensor a = random_tensor({3, 4, 5}, rng);
  const Tensor b = random_tensor({5, 2}, rng);
  const Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{3, 4, 2}));
  const auto ref = reference_matmul(values(a), values(b), 12, 5, 2);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(c.at(i), ref[i], 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({4, 2}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, Associativity) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = random_tensor({4, 6}, rng), b = random_tensor({6, 5}, rng), c = random_tensor({5, 3}, rng);
    const Tensor left = matmul(matmul(a, b), c), right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.numel(); ++i)
      EXPECT_LE(std::abs(left.at(i) - right.at(i)), 1e-9 * std::max(1.0, std::abs(left.at(i))));
  }
}

TEST(Bmm, MatchesPerBatchReference) {
  Rng rng(5);
  const Tensor a = random_tensor({3, 4, 6}, rng), b = random_tensor({3, 6, 5}, rng);
  const Tensor c = bmm(a, b);
  const auto av = values(a), bv = values(b);
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<double> as(av.begin() + s * 24, av.begin() + (s + 1) * 24);
    std::vector<double> bs(bv.begin() + s * 30, bv.begin() + (s + 1) * 30);
    const auto ref = reference_matmul(as, bs, 4, 6, 5);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(c.at(s * 20 + i), ref[i], 1e-12);
  }
}

TEST(Softmax, UniformInput) {
  const Tensor s = softmax(Tensor({3}, {0, 0, 0}), 0);
  for (double v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ExactRatios) {
  const Tensor s = softmax(Tensor({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}), 0);
  EXPECT_NEAR(s.at(0), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(s.at(1), 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(s.at(2), 3.0 / 6.0, 1e-15);
}

TEST(Softmax, LargeLogitsStayFinite) {
  const Tensor s = softmax(Tensor({2}, {1000.0, 1000.5}), 0);
  // 1 / (1 + e^{0.5}) and its complement, evaluated in long double.
  const long double lo = 1.0L / (1.0L + std::exp(0.5L));
  EXPECT_NEAR(s.at(0), static_cast<double>(lo), 1e-15);
  EXPECT_NEAR(s.at(1), static_cast<double>(1.0L - lo), 1e-15);
  EXPECT_NEAR(s.at(0), 0.377540, 1e-6);
  EXPECT_NEAR(s.at(1), 0.622459, 1e-6);
}

TEST(Softmax, RowsSumToOneOnEveryAxis) {
  Rng rng(6);
  const Tensor x = random_tensor({3, 4, 5}, rng);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const Tensor s = softmax(x, axis);
    const Shape& sh = x.shape();
    const std::size_t stride = axis == 0 ? 20 : axis == 1 ? 5 : 1;
    for (std::size_t base = 0; base < x.numel(); ++base) {
      if ((base / stride) % sh[axis] != 0) continue;
      double total = 0.0;
      for (std::size_t j = 0; j < sh[axis]; ++j) {
        const double v = s.at(base + j * stride);
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, ShiftInvariance) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_tensor({4, 6}, rng);
    const double c = rng.uniform(-50.0, 50.0);
    Tensor shifted = x.detach();
    for (double& v : shifted.mutable_data()) v += c;
    const Tensor a = softmax(x, 1), b = softmax(shifted, 1);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-12);
  }
}

TEST(Softmax, BadAxisThrows) { EXPECT_THROW(softmax(Tensor({2, 2}), 2), DimensionError); }

TEST(LayerNorm, ConstantRowGivesZeros) {
  const Tensor y = layer_norm(Tensor({1, 4}, {3, 3, 3, 3}), Tensor::full({4}, 1.0), Tensor({4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoElementClosedForm) {
  const Tensor y = layer_norm(Tensor({1, 2}, {1, 3}), Tensor::full({2}, 1.0), Tensor({2}), 1e-14);
  EXPECT_NEAR(y.at(0), -1.0, 1e-12);
  EXPECT_NEAR(y.at(1), 1.0, 1e-12);
}

TEST(LayerNorm, ZeroGammaGivesBeta) {
  Rng rng(8);
  const Tensor y = layer_norm(random_tensor({3, 5}, rng), Tensor({5}), Tensor::full({5}, 5.0));
  for (double v : y.data()) EXPECT_EQ(v, 5.0);
}

TEST(Backward, SumGivesOnes) {
  Rng rng(9);
  Tensor x = random_tensor({3, 4}, rng, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, DotWithSelfGivesTwiceX) {
  Rng rng(10);
  Tensor x = random_tensor({6}, rng, true);
  backward(dot(x, x));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x.at(i));
}

TEST(Backward, NonScalarRootIsContractError) {
  Tensor x({3}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, FanOutSumsContributions) {
  Rng rng(11);
  Tensor x = random_tensor({5}, rng, true);
  const Tensor a = scale(x, 3.0);
  const Tensor b = mul(x, x);
  backward(add(sum(a), sum(b)));
  std::vector<double> fan(x.grad().begin(), x.grad().end());

  // single-path sums computed separately
  Tensor x1 = x.detach();
  x1.set_requires_grad(true);
  backward(sum(scale(x1, 3.0)));
  Tensor x2 = x.detach();
  x2.set_requires_grad(true);
  backward(sum(mul(x2, x2)));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(fan[i], x1.grad()[i] + x2.grad()[i]);
}

TEST(Backward, MlpWithGeluMatchesFiniteDifferences) {
  Rng rng(12);
  const Tensor input = random_tensor({4, 6}, rng);
  Tensor w1 = random_tensor({6, 8}, rng, true), b1 = random_tensor({8}, rng, true);
  Tensor w2 = random_tensor({8, 3}, rng, true), b2 = random_tensor({3}, rng, true);
  auto loss = [&] { return mean(mul(add_bias(matmul(gelu(add_bias(matmul(input, w1), b1)), w2), b2),
                                    add_bias(matmul(gelu(add_bias(matmul(input, w1), b1)), w2), b2))); };
  std::vector<ParamElement> all;
  const std::vector<Tensor> params{w1, b1, w2, b2};
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p].numel(); ++i) all.emplace_back(p, i);
  EXPECT_LT(grad_check_elements(loss, params, all, 1e-5), 1e-5);
}

TEST(Graph, TraceIsTopologicalAndVisitsOnce) {
  Rng rng(13);
  Tensor x = random_tensor({3, 3}, rng, true);
  const Tensor y = matmul(x, x);
  const Tensor root = sum(add(y, x));
  const ComputationGraph g = trace(root);
  std::set<const detail::Node*> seen;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    EXPECT_TRUE(seen.insert(g.nodes[i].node).second);
    for (std::size_t in : g.nodes[i].inputs) EXPECT_LT(in, i);
  }
  EXPECT_EQ(g.nodes.back().node, root.node().get());
  EXPECT_EQ(g.nodes.size(), 4u);  // x, matmul, add, sum
}

TEST(Graph, NoGradGuardStopsRecording) {
  Tensor x({2}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    const Tensor y = scale(x, 2.0);
    EXPECT_TRUE(y.is_leaf());
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_FALSE(scale(x, 2.0).is_leaf());
}

TEST(Numerics, NonFiniteResultThrows) {
  const Tensor x({2}, {1e308, 1e308});
  EXPECT_THROW(scale(x, 10.0), NumericError);
}

TEST(GradCheck, SumIsExact) {
  Rng rng(14);
  EXPECT_LE(grad_check([](const Tensor& x) { return sum(x); }, random_tensor({7}, rng)), 1e-10);
}

TEST(GradCheck, SoftmaxPickFirst) {
  const Tensor x({3}, {0.1, 0.2, 0.3});
  auto f = [](const Tensor& v) { return sum(slice(softmax(v, 0), 0, 1)); };
  EXPECT_LT(grad_check(f, x), 1e-6);
}

TEST(GradCheck, RejectsBadStepAndNonScalar) {
  const Tensor x({3}, {1, 2, 3});
  EXPECT_THROW(grad_check([](const Tensor& v) { return sum(v); }, x, 0.0), ContractError);
  EXPECT_THROW(grad_check([](const Tensor& v) { return sum(v); }, x, 0.1), ContractError);
  EXPECT_THROW(grad_check([](const Tensor& v) { return scale(v, 1.0); }, x), ContractError);
}

// Every differentiable op under random inputs, 10 seeds.
TEST(GradCheck, EveryOpOnRandomInputs) {
  using F = std::function<Tensor(const Tensor&)>;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const Tensor w = random_tensor({4, 3}, rng);
    const Tensor other = random_tensor({3, 4}, rng);
    const Tensor bias = random_tensor({4}, rng);
    const Tensor gamma = random_tensor({4}, rng), beta = random_tensor({4}, rng);
    const Tensor bw = random_tensor({2, 4, 2}, rng);
    const Tensor weights = random_tensor({3, 4}, rng);
    std::vector<std::pair<const char*, F>> cases = {
        {"matmul_left", [&](const Tensor& x) { return sum(mul(matmul(x, w), matmul(x, w))); }},
        {"matmul_right", [&](const Tensor& x) { return sum(mul(matmul(w, x), matmul(w, x))); }},
        {"bmm", [&](const Tensor& x) { return sum(mul(bmm(reshape(x, {2, 3, 2}), reshape(bw, {2, 2, 4})),
                                                      bmm(reshape(x, {2, 3, 2}), reshape(bw, {2, 2, 4})))); }},
        {"add", [&](const Tensor& x) { return dot(reshape(add(x, other), {12}), reshape(weights, {12})); }},
        {"sub", [&](const Tensor& x) { return sum(mul(sub(x, other), sub(x, other))); }},
        {"mul", [&](const Tensor& x) { return sum(mul(mul(x, other), x)); }},
        {"scale", [&](const Tensor& x) { return sum(mul(scale(x, -1.7), x)); }},
        {"add_bias", [&](const Tensor& x) { return sum(mul(add_bias(x, bias), add_bias(x, bias))); }},
        {"gelu", [&](const Tensor& x) { return dot(reshape(gelu(x), {12}), reshape(weights, {12})); }},
        {"softmax0", [&](const Tensor& x) { return dot(reshape(softmax(x, 0), {12}), reshape(weights, {12})); }},
        {"softmax1", [&](const Tensor& x) { return dot(reshape(softmax(x, 1), {12}), reshape(weights, {12})); }},
        {"layer_norm", [&](const Tensor& x) {
           return dot(reshape(layer_norm(x, gamma, beta), {12}), reshape(weights, {12})); }},
        {"mean", [&](const Tensor& x) { return mean(mul(x, x)); }},
        {"permute", [&](const Tensor& x) {
           return dot(reshape(permute(reshape(x, {3, 2, 2}), {2, 0, 1}), {12}), reshape(weights, {12})); }},
        {"transpose", [&](const Tensor& x) { return sum(mul(transpose(x), transpose(x))); }},
        {"concat", [&](const Tensor& x) { return sum(mul(concat({x, x}), concat({other.detach(), x}))); }},
        {"slice", [&](const Tensor& x) { return sum(mul(slice(x, 1, 3), slice(x, 1, 3))); }},
        {"cross_entropy", [&](const Tensor& x) {
           static const std::vector<int> labels{1, 0, 0, 1, 1, 0};
           return cross_entropy(reshape(x, {3, 2, 2}), labels); }},
    };
    for (const auto& [name, f] : cases) {
      const Tensor x = random_tensor({3, 4}, rng);
      EXPECT_LT(grad_check(f, x, 1e-5), 1e-4) << name << " seed " << seed;
    }
  }
}

TEST(Dropout, ZeroRateIsIdentityAndRateScales) {
  Rng rng(15);
  const Tensor x = random_tensor({100}, rng);
  EXPECT_EQ(values(dropout(x, 0.0, rng)), values(x));
  const Tensor y = dropout(x, 0.5, rng);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_TRUE(y.at(i) == 0.0 || y.at(i) == 2.0 * x.at(i));
}

TEST(Rng, DeterministicAndWellFormed) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LE(std::abs(c.truncated_normal(0.02)), 0.04);
    EXPECT_LT(c.below(7), 7u);
  }
  auto p = c.permutation(50);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(p[i], i);
  EXPECT_NE(Rng::mix(1, 2), Rng::mix(2, 1));
}
