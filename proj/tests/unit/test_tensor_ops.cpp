// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/error.hpp"
#include "liftrefine/grad_check.hpp"
#include "liftrefine/ops.hpp"
#include "liftrefine/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

using namespace liftrefine;

namespace {

// Scalarises an op output with fixed random weights so every output entry
// contributes a distinct gradient.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
    Rng rng(seed);
    return sum(mul(y, rng.uniform_tensor(y.shape(), -1.0, 1.0)));
}

void expect_grad_ok(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double tol = 1e-4) {
    GradCheckOptions opt;
    opt.tol = tol;
    const auto report = grad_check(f, x, opt);
    EXPECT_TRUE(report.passed) << report.summary();
}

void expect_near_rel(std::span<const double> a, std::span<const double> b, double rel = 1e-12) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a[i], b[i], rel * std::max(1.0, std::abs(b[i]))) << "at " << i;
    }
}

} // namespace

TEST(TensorOps, AddElementwise) {
    auto y = add(Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4}));
    EXPECT_EQ(y.data()[0], 4.0);
    EXPECT_EQ(y.data()[1], 6.0);
}

TEST(TensorOps, MatmulIdentity) {
    Rng rng(1);
    auto a = rng.normal_tensor({3, 3});
    auto y = matmul(Tensor::eye(3), a);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y.data()[i], a.data()[i]);
}

TEST(TensorOps, SoftmaxUniform) {
    auto y = softmax(Tensor::zeros({3}));
    for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(TensorOps, LeadingBroadcast) {
    auto y = add(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2}, {10, 20}));
    EXPECT_EQ(y.at({1, 0}), 13.0);
    EXPECT_EQ(y.at({1, 1}), 24.0);
    EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError);
}

TEST(TensorOps, ShapeErrorNamesOpAndShapes) {
    try {
        matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("matmul"), std::string::npos);
        EXPECT_NE(msg.find("[2,3]"), std::string::npos);
        EXPECT_NE(msg.find("[4,5]"), std::string::npos);
    }
}

TEST(TensorOps, DivByZeroThrows) {
    EXPECT_THROW(div(Tensor::ones({2}), Tensor::from({2}, {1.0, 0.0})), ValueError);
}

TEST(TensorOps, MatmulMatchesLoopReference) {
    Rng rng(2);
    auto a = rng.normal_tensor({4, 5, 6});
    auto b = rng.normal_tensor({4, 6, 3});
    auto y = matmul(a, b);
    std::vector<double> ref(4 * 5 * 3, 0.0);
    for (int bt = 0; bt < 4; ++bt)
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 6; ++k) s += a.at({bt, i, k}) * b.at({bt, k, j});
                ref[static_cast<std::size_t>((bt * 5 + i) * 3 + j)] = s;
            }
    expect_near_rel(y.data(), ref);
}

TEST(TensorOps, Conv2dMatchesLoopReference) {
    Rng rng(3);
    auto x = rng.normal_tensor({2, 3, 5, 6});
    auto w = rng.normal_tensor({4, 3, 3, 3});
    auto b = rng.normal_tensor({4});
    auto y = conv2d(x, w, b);
    ASSERT_EQ(y.shape(), (Shape{2, 4, 5, 6}));
    for (int n = 0; n < 2; ++n)
        for (int o = 0; o < 4; ++o)
            for (int r = 0; r < 5; ++r)
                for (int c = 0; c < 6; ++c) {
                    double s = b.at({o});
                    for (int i = 0; i < 3; ++i)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sr = r + ky - 1, sc = c + kx - 1;
                                if (sr < 0 || sr >= 5 || sc < 0 || sc >= 6) continue;
                                s += w.at({o, i, ky, kx}) * x.at({n, i, sr, sc});
                            }
                    EXPECT_NEAR(y.at({n, o, r, c}), s, 1e-12 * std::max(1.0, std::abs(s)));
                }
}

TEST(TensorOps, AttentionMatchesLoopReference) {
    Rng rng(4);
    auto q = rng.normal_tensor({2, 3, 4});
    auto k = rng.normal_tensor({2, 5, 4});
    auto v = rng.normal_tensor({2, 5, 2});
    auto y = attention(q, k, v);
    for (int b = 0; b < 2; ++b)
        for (int i = 0; i < 3; ++i) {
            std::vector<double> s(5);
            double mx = -1e300, z = 0.0;
            for (int j = 0; j < 5; ++j) {
                double d = 0.0;
                for (int c = 0; c < 4; ++c) d += q.at({b, i, c}) * k.at({b, j, c});
                s[static_cast<std::size_t>(j)] = d / 2.0;
                mx = std::max(mx, s[static_cast<std::size_t>(j)]);
            }
            for (auto& e : s) z += (e = std::exp(e - mx));
            for (int c = 0; c < 2; ++c) {
                double o = 0.0;
                for (int j = 0; j < 5; ++j) o += s[static_cast<std::size_t>(j)] / z * v.at({b, j, c});
                EXPECT_NEAR(y.at({b, i, c}), o, 1e-12);
            }
        }
}

TEST(TensorOps, AttentionMaskAndEmptyRows) {
    auto q = Tensor::from({1, 2}, {1.0, 0.0});
    auto k = Tensor::from({2, 2, 2}, {1, 0, 5, 5, 1, 0, 5, 5});
    auto v = Tensor::from({2, 2, 1}, {2.0, 100.0, 3.0, 7.0});
    auto mask = Tensor::from({2, 2}, {1, 0, 0, 0});
    auto y = attention(q, k, v, mask);
    EXPECT_DOUBLE_EQ(y.at({0, 0, 0}), 2.0);
    EXPECT_DOUBLE_EQ(y.at({1, 0, 0}), 0.0);
}

TEST(TensorOps, OrderInvariantAttentionIsBitwisePermutationInvariant) {
    Rng rng(5);
    auto q = rng.normal_tensor({1, 4});
    auto k = rng.normal_tensor({3, 6, 4});
    auto v = rng.normal_tensor({3, 6, 4});
    const std::vector<std::int64_t> perm{4, 1, 5, 0, 3, 2};
    std::vector<double> kp, vp;
    for (int b = 0; b < 3; ++b)
        for (auto j : perm)
            for (int c = 0; c < 4; ++c) {
                kp.push_back(k.at({b, j, c}));
                vp.push_back(v.at({b, j, c}));
            }
    AttentionOptions opt{.order_invariant = true};
    auto y1 = attention(q, k, v, Tensor(), opt);
    auto y2 = attention(q, Tensor::from({3, 6, 4}, kp), Tensor::from({3, 6, 4}, vp), Tensor(), opt);
    for (std::size_t i = 0; i < y1.data().size(); ++i) EXPECT_EQ(y1.data()[i], y2.data()[i]);
}

TEST(TensorOps, BilinearIdentityAtNodesAndZeroPadding) {
    Rng rng(6);
    auto img = rng.normal_tensor({2, 3, 4});
    auto y = bilinear_sample_2d(img, Tensor::from({3, 2}, {2.0, 1.0, 0.0, 0.0, -5.0, -5.0}));
    EXPECT_EQ(y.at({0, 0}), img.at({0, 1, 2}));
    EXPECT_EQ(y.at({0, 1}), img.at({1, 1, 2}));
    EXPECT_EQ(y.at({1, 1}), img.at({1, 0, 0}));
    EXPECT_EQ(y.at({2, 0}), 0.0);
}

TEST(TensorOps, TrilinearIdentityAtNodes) {
    Rng rng(7);
    auto vol = rng.normal_tensor({2, 3, 4, 5});
    auto y = trilinear_sample_3d(vol, Tensor::from({1, 3}, {4.0, 2.0, 1.0}));
    EXPECT_EQ(y.at({0, 1}), vol.at({1, 1, 2, 4}));
}

TEST(TensorOps, BicubicPreservesConstants) {
    auto y = bicubic_upsample(Tensor::full({2, 4, 4}, 0.37), 4);
    ASSERT_EQ(y.shape(), (Shape{2, 16, 16}));
    for (double v : y.data()) EXPECT_NEAR(v, 0.37, 1e-15);
}

TEST(Backward, SumOfSquares) {
    auto x = Tensor::from({3}, {1, 2, 3}, true);
    backward(sum(square(x)));
    EXPECT_EQ(x.grad()[0], 2.0);
    EXPECT_EQ(x.grad()[1], 4.0);
    EXPECT_EQ(x.grad()[2], 6.0);
}

TEST(Backward, ConstantLossGivesZeroGrad) {
    auto x = Tensor::from({3}, {1, 2, 3}, true);
    auto c = Tensor::scalar(5.0);
    backward(c);
    EXPECT_FALSE(x.has_grad());
    for (double g : x.mutable_grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarLossThrows) {
    auto x = Tensor::from({3}, {1, 2, 3}, true);
    auto y = square(x);
    EXPECT_THROW(backward(y), ShapeError);
    current_tape().clear();
}

TEST(Backward, FanOutAccumulates) {
    auto x = Tensor::from({2}, {1.5, -2.0}, true);
    backward(sum(x * x + x * 3.0));
    EXPECT_DOUBLE_EQ(x.grad()[0], 2 * 1.5 + 3);
    EXPECT_DOUBLE_EQ(x.grad()[1], 2 * -2.0 + 3);
}

TEST(Backward, Conv2dMatchesFiniteDifferences) {
    Rng rng(11);
    auto x = rng.normal_tensor({1, 1, 5, 5});
    auto w = rng.normal_tensor({2, 1, 3, 3});
    auto b = rng.normal_tensor({2});
    GradCheckOptions opt;
    opt.tol = 1e-6;
    auto report = grad_check([&](const Tensor& in) { return weighted_sum(conv2d(in, w, b), 1); }, x, opt);
    EXPECT_TRUE(report.passed) << report.summary();
    EXPECT_LT(report.max_rel_err, 1e-6);
}

TEST(Backward, LinearityInLoss) {
    Rng rng(12);
    auto x0 = rng.normal_tensor({4, 3});
    auto w = rng.normal_tensor({3, 3});
    auto l1 = [&](const Tensor& x) { return sum(silu(matmul(x, w))); };
    auto l2 = [&](const Tensor& x) { return sum(square(sigmoid(x))); };
    auto grad_of = [&](const std::function<Tensor(const Tensor&)>& f) {
        auto x = x0.clone().set_requires_grad(true);
        backward(f(x));
        return std::vector<double>(x.grad().begin(), x.grad().end());
    };
    const double a = 0.7, bcoef = -1.3;
    auto g1 = grad_of(l1);
    auto g2 = grad_of(l2);
    auto gc = grad_of([&](const Tensor& x) { return l1(x) * a + l2(x) * bcoef; });
    for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(gc[i], a * g1[i] + bcoef * g2[i], 1e-10);
}

TEST(Backward, DeterministicBitwise) {
    auto run = [] {
        Rng rng(99);
        auto x = rng.normal_tensor({2, 4, 6, 6}).set_requires_grad(true);
        auto w = rng.normal_tensor({3, 4, 3, 3});
        auto y = mean(silu(conv2d(x, w, Tensor())));
        backward(y);
        std::vector<double> out{y.item()};
        out.insert(out.end(), x.grad().begin(), x.grad().end());
        return out;
    };
    EXPECT_EQ(run(), run());
}

// Each primitive against central differences on five seeded random inputs.
class PrimitiveGrad : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGrad, AllPrimitivesMatchFiniteDifferences) {
    const auto seed = static_cast<std::uint64_t>(GetParam());
    Rng rng(1000 + seed);
    auto x23 = rng.normal_tensor({2, 3});
    auto other = rng.normal_tensor({2, 3});
    auto row = rng.normal_tensor({3});
    auto positive = rng.uniform_tensor({2, 3}, 0.5, 2.0);

    expect_grad_ok([&](const Tensor& x) { return weighted_sum(add(x, other), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(add(other, x), seed); }, row);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(sub(x, row), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(sub(other, x), seed); }, row);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(mul(x, other), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(div(other, x), seed); }, positive);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(div(x, positive), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(relu(x), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(silu(x), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(sigmoid(x), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(softplus(x), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(exp(x), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(log(x), seed); }, positive);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(abs(x), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(softmax(x), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(sum(x, 0), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(mean(x, 1), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return mean(x) * 3.0; }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(concat({x, other, x}, 1), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(reshape(x, {3, 2}), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(slice(x, 1, 1, 3), seed); }, x23);

    auto x234 = rng.normal_tensor({2, 3, 4});
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(permute(x, {2, 0, 1}), seed); }, x234);

    auto mb = rng.normal_tensor({3, 4});
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(matmul(x, mb), seed); }, x23);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(matmul(x23, x), seed); }, mb);
    auto bb = rng.normal_tensor({2, 4, 2});
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(matmul(x, bb), seed); }, x234);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(matmul(x234, x), seed); }, bb);
    auto shared = rng.normal_tensor({4, 2});
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(matmul(x234, x), seed); }, shared);

    auto img = rng.normal_tensor({2, 4, 6});
    auto wconv = rng.normal_tensor({3, 2, 3, 3});
    auto bconv = rng.normal_tensor({3});
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(conv2d(x, wconv, bconv), seed); }, img);
    expect_grad_ok([&](const Tensor& w) { return weighted_sum(conv2d(img, w, bconv), seed); }, wconv);
    expect_grad_ok([&](const Tensor& b) { return weighted_sum(conv2d(img, wconv, b), seed); }, bconv);
    auto w1 = rng.normal_tensor({3, 2, 1, 1});
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(conv2d(x, w1, Tensor()), seed); }, img);
    expect_grad_ok([&](const Tensor& w) { return weighted_sum(conv2d(img, w, Tensor()), seed); }, w1);

    expect_grad_ok([&](const Tensor& x) { return weighted_sum(upsample_nearest2x(x), seed); }, img);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(avg_pool2x(x), seed); }, img);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(bicubic_upsample(x, 2), seed); }, img);

    // Sample coordinates away from integer grid lines, where the op is smooth.
    std::vector<double> cvals;
    for (int i = 0; i < 7; ++i) {
        cvals.push_back(std::floor(rng.uniform(-1.0, 6.0)) + rng.uniform(0.1, 0.9));
        cvals.push_back(std::floor(rng.uniform(-1.0, 4.0)) + rng.uniform(0.1, 0.9));
    }
    auto coords = Tensor::from({7, 2}, cvals);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(bilinear_sample_2d(x, coords), seed); }, img);
    expect_grad_ok([&](const Tensor& c) { return weighted_sum(bilinear_sample_2d(img, c), seed); }, coords);

    auto vol = rng.normal_tensor({2, 3, 4, 5});
    std::vector<double> c3;
    for (int i = 0; i < 6; ++i) {
        c3.push_back(std::floor(rng.uniform(0.0, 4.0)) + rng.uniform(0.1, 0.9));
        c3.push_back(std::floor(rng.uniform(0.0, 3.0)) + rng.uniform(0.1, 0.9));
        c3.push_back(std::floor(rng.uniform(0.0, 2.0)) + rng.uniform(0.1, 0.9));
    }
    auto coords3 = Tensor::from({6, 3}, c3);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(trilinear_sample_3d(x, coords3), seed); }, vol);
    expect_grad_ok([&](const Tensor& c) { return weighted_sum(trilinear_sample_3d(vol, c), seed); }, coords3);

    auto q = rng.normal_tensor({2, 3, 4});
    auto k = rng.normal_tensor({2, 5, 4});
    auto v = rng.normal_tensor({2, 5, 3});
    auto mask = Tensor::from({2, 5}, {1, 0, 1, 1, 1, 1, 1, 0, 0, 1});
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(attention(x, k, v, mask), seed); }, q);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(attention(q, x, v, mask), seed); }, k);
    expect_grad_ok([&](const Tensor& x) { return weighted_sum(attention(q, k, x, mask), seed); }, v);
    auto qshared = rng.normal_tensor({1, 4});
    expect_grad_ok(
        [&](const Tensor& x) { return weighted_sum(attention(x, k, v, Tensor(), {.order_invariant = true}), seed); },
        qshared);
}

INSTANTIATE_TEST_SUITE_P(Seeds, PrimitiveGrad, ::testing::Range(0, 5));

TEST(GradCheck, SumOfSinPasses) {
    Rng rng(21);
    auto report = grad_check([](const Tensor& x) { return sum(sin(x)); }, rng.normal_tensor({6}));
    EXPECT_TRUE(report.passed) << report.summary();
}

TEST(GradCheck, SumIsAllOnes) {
    Rng rng(22);
    auto x = rng.normal_tensor({5});
    auto report = grad_check([](const Tensor& t) { return sum(t); }, x);
    EXPECT_TRUE(report.passed);
    for (const auto& c : report.coords) {
        EXPECT_EQ(c.autodiff, 1.0);
        EXPECT_NEAR(c.numeric, 1.0, 1e-9);
    }
}

TEST(GradCheck, ReluKinkIsFlaggedAndExcluded) {
    auto x = Tensor::from({3}, {0.5, 0.0, -0.7});
    auto report = grad_check([](const Tensor& t) { return sum(relu(t)); }, x);
    EXPECT_TRUE(report.passed);
    EXPECT_EQ(report.kinks, 1);
    EXPECT_TRUE(report.coords[1].kink);
    EXPECT_FALSE(report.coords[0].kink);
}

TEST(GradCheck, DetectsWrongGradient) {
    // exp() composed with a detached copy breaks the chain rule on purpose.
    auto report = grad_check([](const Tensor& t) { return sum(t * t.detach()); }, Tensor::from({2}, {1.0, 2.0}));
    EXPECT_FALSE(report.passed);
}
