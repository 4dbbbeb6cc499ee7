#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mambaest/tensor.hpp"
#include "oracles.hpp"

using namespace mambaest;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool grad = true, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), grad);
}

// Weighted sum with fixed random weights, so every output element carries a
// distinct upstream gradient.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
    return sum(mul(y, random_tensor(y.shape(), seed, false)));
}

// Direct nested-loop reference for zero-padded stride-1 correlation.
std::vector<double> conv_reference(const Tensor& x, const Tensor& k, const Tensor& b) {
    const std::size_t H = x.dim(0), W = x.dim(1), ci = x.dim(2);
    const std::size_t kh = k.dim(0), kw = k.dim(1), co = k.dim(3);
    const long ph = static_cast<long>((kh - 1) / 2), pw = static_cast<long>((kw - 1) / 2);
    std::vector<double> out(H * W * co);
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
            for (std::size_t o = 0; o < co; ++o) {
                double s = b.data()[o];
                for (std::size_t i = 0; i < kh; ++i)
                    for (std::size_t j = 0; j < kw; ++j) {
                        const long hh = static_cast<long>(h + i) - ph, ww = static_cast<long>(w + j) - pw;
                        if (hh < 0 || ww < 0 || hh >= static_cast<long>(H) || ww >= static_cast<long>(W)) continue;
                        for (std::size_t c = 0; c < ci; ++c)
                            s += x.data()[(hh * W + ww) * ci + c] * k.data()[((i * kw + j) * ci + c) * co + o];
                    }
                out[(h * W + w) * co + o] = s;
            }
    return out;
}

}  // namespace

TEST(Tensor, MatmulHandValues) {
    const Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
    const Tensor c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{2, 2}));
    EXPECT_DOUBLE_EQ(c.data()[0], 58);
    EXPECT_DOUBLE_EQ(c.data()[1], 64);
    EXPECT_DOUBLE_EQ(c.data()[2], 139);
    EXPECT_DOUBLE_EQ(c.data()[3], 154);
}

TEST(Tensor, ShapeMismatchNamesBothShapes) {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({2, 3});
    try {
        matmul(a, b);
        FAIL() << "expected a shape error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("2x3"), std::string::npos) << e.what();
    }
    EXPECT_THROW(add(a, Tensor::zeros({3, 2})), std::invalid_argument);
}

TEST(Tensor, SoftmaxRowsSumToOne) {
    const Tensor x = random_tensor({32, 57}, 1, false, -30.0, 30.0);
    const Tensor s = softmax_rows(x);
    for (std::size_t r = 0; r < 32; ++r) {
        double total = 0;
        for (std::size_t c = 0; c < 57; ++c) {
            EXPECT_GE(s.data()[r * 57 + c], 0.0);
            total += s.data()[r * 57 + c];
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Tensor, SoftmaxRejectsNonFinite) {
    EXPECT_THROW(softmax_rows(Tensor::from({1, 2}, {0.0, std::nan("")})), std::exception);
}

TEST(Tensor, LayerNormGlobalStatistics) {
    const Tensor x = random_tensor({6, 4}, 2, false, -3, 5);
    const Tensor y = layer_norm(x, Tensor::full({6}, 1.0), Tensor::zeros({6}), 1e-14);
    double m = 0, v = 0;
    for (double e : y.data()) m += e;
    m /= 24;
    for (double e : y.data()) v += (e - m) * (e - m);
    EXPECT_NEAR(m, 0.0, 1e-14);
    EXPECT_NEAR(v / 24, 1.0, 1e-12);
}

TEST(Tensor, ConvMatchesNestedLoopReference) {
    struct Case {
        std::size_t H, W, ci, co, kh, kw;
    };
    // Includes the tall-kernel case (kernel taller than the image) and even extents.
    for (const Case c : {Case{5, 4, 2, 3, 3, 3}, Case{12, 4, 3, 2, 5, 5}, Case{8, 6, 2, 2, 16, 5},
                         Case{6, 3, 1, 2, 4, 2}, Case{7, 5, 2, 1, 12, 3}}) {
        const Tensor x = random_tensor({c.H, c.W, c.ci}, 3, false);
        const Tensor k = random_tensor({c.kh, c.kw, c.ci, c.co}, 4, false);
        const Tensor b = random_tensor({c.co}, 5, false);
        const auto ref = conv_reference(x, k, b);
        const Tensor y = conv2d_same(x, k, b);
        ASSERT_EQ(y.shape(), (Shape{c.H, c.W, c.co}));
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-12);
    }
}

TEST(Tensor, BilinearAlignCornersKeepsCornersAndConstants) {
    const Tensor x = random_tensor({3, 2, 2}, 6, false);
    const Tensor y = bilinear_resize(x, 7, 5);
    for (std::size_t c = 0; c < 2; ++c) {
        EXPECT_DOUBLE_EQ(y.data()[c], x.data()[c]);
        EXPECT_DOUBLE_EQ(y.data()[((6 * 5) + 4) * 2 + c], x.data()[((2 * 2) + 1) * 2 + c]);
    }
    const Tensor k = bilinear_resize(Tensor::full({4, 3, 1}, 2.5), 9, 14);
    for (double v : k.data()) EXPECT_NEAR(v, 2.5, 1e-15);
    // Midpoint of a 2-sample axis resized to 3 is the average.
    const Tensor m = bilinear_resize(Tensor::from({2, 1, 1}, {1.0, 3.0}), 3, 1);
    EXPECT_DOUBLE_EQ(m.data()[1], 2.0);
}

TEST(TensorGradients, ElementwiseAndLinearOps) {
    const Tensor a = random_tensor({4, 3}, 10);
    const Tensor b = random_tensor({3, 5}, 11);
    const Tensor c = random_tensor({4, 3}, 12);
    const Tensor rb = random_tensor({3}, 13);
    const Tensor cb = random_tensor({4}, 14);
    const auto rep = oracle::check_gradients(
        [&] {
            Tensor y = add(mul(a, c), scale(sub(c, a), 0.7));
            y = add_row_bias(y, rb);
            y = add_col_bias(y, cb);
            Tensor z = matmul(silu(y), b);
            z = add(sigmoid(z), transpose(matmul(transpose(b), transpose(y))));
            return add(probe(z), mean(mul(y, y)));
        },
        {a, b, c, rb, cb});
    EXPECT_LT(rep.max_rel_error, 1e-4);
}

TEST(TensorGradients, SlicingAndGathering) {
    const Tensor x = random_tensor({6, 4}, 20);
    const std::size_t idx[] = {5, 0, 0, 3};
    const auto rep = oracle::check_gradients(
        [&] {
            const Tensor parts[] = {slice_rows(x, 1, 3).reshape({4, 2}), slice_cols(slice_rows(x, 2, 6), 1, 3).reshape({4, 2}),
                                    slice_cols(gather_rows(x, idx), 0, 2)};
            return probe(concat_rows(parts));
        },
        {x});
    EXPECT_LT(rep.max_rel_error, 1e-4);
}

TEST(TensorGradients, SoftmaxAndLayerNorm) {
    const Tensor x = random_tensor({5, 7}, 30, true, -2, 2);
    const Tensor w = random_tensor({5}, 31);
    const Tensor b = random_tensor({5}, 32);
    const auto rep = oracle::check_gradients(
        [&] { return probe(softmax_rows(layer_norm(x, w, b, 1e-5))); }, {x, w, b});
    EXPECT_LT(rep.max_rel_error, 1e-4);
}

TEST(TensorGradients, ConvolutionBothPaths) {
    // First case takes the windowed path, second the tall-kernel path.
    for (const auto& [shape, kshape] : {std::pair<Shape, Shape>{{5, 4, 2}, {3, 3, 2, 3}},
                                        std::pair<Shape, Shape>{{6, 4, 3}, {12, 3, 3, 2}}}) {
        const Tensor x = random_tensor(shape, 40);
        const Tensor k = random_tensor(kshape, 41);
        const Tensor b = random_tensor({kshape[3]}, 42);
        const auto rep = oracle::check_gradients([&] { return probe(conv2d_same(x, k, b)); }, {x, k, b});
        EXPECT_LT(rep.max_rel_error, 1e-4);
    }
}

TEST(TensorGradients, ReluAndBilinear) {
    // Inputs kept away from the ReLU kink.
    std::vector<double> v(3 * 2 * 2);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i % 2 ? 0.5 : -0.5) + 0.03 * static_cast<double>(i);
    const Tensor x = Tensor::from({3, 2, 2}, v, true);
    const auto rep = oracle::check_gradients([&] { return probe(bilinear_resize(relu(x), 5, 4)); }, {x});
    EXPECT_LT(rep.max_rel_error, 1e-4);
}

TEST(Tensor, BackwardAccumulatesAcrossCalls) {
    const Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    sum(mul(x, x)).backward();
    sum(mul(x, x)).backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], 8.0);
    x.zero_grad();
    EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
}

TEST(Tensor, NoGradGuardRecordsNothing) {
    const Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor y;
    {
        NoGradGuard guard;
        y = sum(mul(x, x));
    }
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(grad_enabled());
}

TEST(ParameterSet, CloneAndAssign) {
    ParameterSet p;
    p.add("a", Tensor::from({2}, {1.0, 2.0}));
    EXPECT_THROW(p.add("a", Tensor::zeros({1})), std::invalid_argument);
    ParameterSet q = p.clone();
    q.get("a").mutable_data()[0] = 5.0;
    EXPECT_DOUBLE_EQ(p.get("a").data()[0], 1.0);
    p.assign(q);
    EXPECT_DOUBLE_EQ(p.get("a").data()[0], 5.0);
    EXPECT_TRUE(p.get("a").requires_grad());
}
