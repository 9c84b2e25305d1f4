#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "mmr/rng.hpp"
#include "mmr/tensor.hpp"

namespace {

using mmr::Tensor;
namespace ops = mmr::ops;

Tensor random_tensor(mmr::Shape shape, std::uint64_t seed, bool grad = true) {
    mmr::Rng rng(seed);
    std::vector<double> v(mmr::numel(shape));
    for (auto& x : v) x = rng.normal();
    return Tensor(std::move(shape), std::move(v), grad);
}

using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Max elementwise relative error between tape gradients and central
// differences, with a small floor on the denominator.
double gradient_error(const LossFn& f, const std::vector<Tensor>& inputs, double h = 1e-5) {
    for (const auto& t : inputs) t.zero_grad();
    {
        mmr::Tape tape;
        mmr::TapeScope scope(tape);
        tape.backward(f(inputs));
    }
    double worst = 0.0;
    for (const auto& t : inputs) {
        const std::vector<double> analytic = t.grad();
        auto& v = const_cast<Tensor&>(t).values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double keep = v[i];
            v[i] = keep + h;
            const double up = f(inputs).item();
            v[i] = keep - h;
            const double down = f(inputs).item();
            v[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-4});
            worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST(TensorOps, IdentityMatmul) {
    std::vector<double> eye(16, 0.0);
    for (std::size_t i = 0; i < 4; ++i) eye[i * 5] = 1.0;
    const auto a = random_tensor({4, 3}, 1, false);
    EXPECT_EQ(ops::matmul(Tensor({4, 4}, eye), a).values(), a.values());
}

TEST(TensorOps, MatmulNtMatchesTranspose) {
    const auto a = random_tensor({3, 5}, 1, false), b = random_tensor({4, 5}, 2, false);
    const auto x = ops::matmul_nt(a, b), y = ops::matmul(a, ops::transpose(b));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x.values()[i], y.values()[i], 1e-12);
}

TEST(TensorOps, MatmulValues) {
    const Tensor a({2, 2}, {1, 2, 3, 4}), b({2, 2}, {5, 6, 7, 8});
    EXPECT_EQ(ops::matmul(a, b).values(), (std::vector<double>{19, 22, 43, 50}));
}

TEST(TensorOps, SoftmaxOfZeros) {
    const auto y = ops::softmax(Tensor({2}, {0.0, 0.0}));
    EXPECT_DOUBLE_EQ(y.values()[0], 0.5);
    EXPECT_DOUBLE_EQ(y.values()[1], 0.5);
}

TEST(TensorOps, SoftmaxStableForLargeLogits) {
    const auto y = ops::softmax(Tensor({1, 3}, {1000.0, 1000.0, -1000.0}));
    EXPECT_NEAR(y.values()[0], 0.5, 1e-15);
    EXPECT_EQ(y.values()[2], 0.0);
}

TEST(TensorOps, LayernormMoments) {
    const auto x = random_tensor({3, 16}, 4, false);
    const auto y = ops::layernorm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}));
    for (std::size_t r = 0; r < 3; ++r) {
        double m = 0, v = 0;
        for (std::size_t c = 0; c < 16; ++c) m += y.values()[r * 16 + c];
        m /= 16;
        for (std::size_t c = 0; c < 16; ++c) v += std::pow(y.values()[r * 16 + c] - m, 2);
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v / 16, 1.0, 1e-4);
    }
}

TEST(TensorOps, GeluReferencePoints) {
    const auto y = ops::gelu(Tensor({3}, {0.0, 1.0, -1.0}));
    EXPECT_EQ(y.values()[0], 0.0);
    const double c = std::sqrt(2.0 / 3.141592653589793);
    EXPECT_NEAR(y.values()[1], 0.5 * (1 + std::tanh(c * (1 + 0.044715))), 1e-15);
    EXPECT_NEAR(y.values()[1] - y.values()[2], 1.0, 1e-15);
}

TEST(TensorOps, SoftplusIsStable) {
    const auto y = ops::softplus(Tensor({3}, {0.0, 800.0, -800.0}));
    EXPECT_NEAR(y.values()[0], std::log(2.0), 1e-15);
    EXPECT_EQ(y.values()[1], 800.0);
    EXPECT_EQ(y.values()[2], 0.0);
}

TEST(TensorOps, ShapeErrors) {
    EXPECT_THROW(ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), mmr::ShapeError);
    EXPECT_THROW(ops::add(Tensor::zeros({2, 3}), Tensor::zeros({2})), mmr::ShapeError);
    EXPECT_THROW(ops::reshape(Tensor::zeros({2, 3}), {4}), mmr::ShapeError);
    EXPECT_THROW(ops::gather_rows(Tensor::zeros({2, 3}), {2}), mmr::ShapeError);
    EXPECT_THROW(Tensor({2}, {1.0}), mmr::ShapeError);
}

TEST(TensorOps, SoftmaxEmptyAxis) {
    EXPECT_THROW(ops::softmax(Tensor::zeros({3, 0})), mmr::ConfigError);
}

TEST(TensorOps, BroadcastAddRow) {
    const Tensor a({2, 2}, {1, 2, 3, 4}), b({2}, {10, 20});
    EXPECT_EQ(ops::add(a, b).values(), (std::vector<double>{11, 22, 13, 24}));
}

TEST(Backward, SumGivesOnes) {
    const auto x = random_tensor({3, 4}, 1);
    mmr::Tape tape;
    mmr::TapeScope scope(tape);
    tape.backward(ops::sum(x));
    for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquaredNormGivesTwoX) {
    const auto x = random_tensor({7}, 2);
    mmr::Tape tape;
    mmr::TapeScope scope(tape);
    tape.backward(ops::sum(ops::square(x)));
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(x.grad()[i], 2.0 * x.values()[i], 1e-12);
}

TEST(Backward, SecondCallIsContractError) {
    const auto x = random_tensor({3}, 3);
    mmr::Tape tape;
    mmr::TapeScope scope(tape);
    const auto loss = ops::sum(x);
    tape.backward(loss);
    EXPECT_THROW(tape.backward(loss), mmr::ContractError);
}

TEST(Backward, NonScalarLossIsContractError) {
    const auto x = random_tensor({3}, 3);
    mmr::Tape tape;
    mmr::TapeScope scope(tape);
    EXPECT_THROW(tape.backward(ops::scale(x, 2.0)), mmr::ContractError);
}

TEST(Backward, GradientsAccumulateAcrossUses) {
    const auto x = random_tensor({4}, 5);
    mmr::Tape tape;
    mmr::TapeScope scope(tape);
    tape.backward(ops::add(ops::sum(x), ops::sum(ops::scale(x, 3.0))));
    for (double g : x.grad()) EXPECT_NEAR(g, 4.0, 1e-15);
}

TEST(Backward, NoTapeMeansNoRecording) {
    const auto x = random_tensor({4}, 5);
    const auto y = ops::sum(x);
    EXPECT_FALSE(y.requires_grad());
}

TEST(Backward, BroadcastGradientSumsOverRows) {
    const auto a = random_tensor({5, 3}, 1), b = random_tensor({3}, 2);
    mmr::Tape tape;
    mmr::TapeScope scope(tape);
    tape.backward(ops::sum(ops::add(a, b)));
    ASSERT_EQ(b.grad().size(), 3u);
    for (double g : b.grad()) EXPECT_NEAR(g, 5.0, 1e-15);
}

TEST(GradCheck, MeanSquaredProjection) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto w = random_tensor({8, 8}, seed), x = random_tensor({8, 8}, seed + 100, false);
        const double err = gradient_error(
            [&](const std::vector<Tensor>& in) { return ops::mean(ops::square(ops::matmul(in[0], x))); }, {w});
        EXPECT_LT(err, 1e-4);
    }
}

TEST(GradCheck, Elementwise) {
    const auto a = random_tensor({4, 6}, 1), b = random_tensor({4, 6}, 2), c = random_tensor({6}, 3);
    const LossFn f = [](const std::vector<Tensor>& in) {
        auto t = ops::mul(ops::sub(in[0], in[1]), ops::tanh(in[0]));
        t = ops::add(t, ops::softplus(in[1]));
        t = ops::mul(ops::gelu(t), in[2]);
        return ops::sum(ops::scale(ops::square(t), 0.5));
    };
    EXPECT_LT(gradient_error(f, {a, b, c}), 1e-4);
}

TEST(GradCheck, SoftmaxAndLayernorm) {
    const auto x = random_tensor({5, 8}, 4), g = random_tensor({8}, 5), b = random_tensor({8}, 6);
    const auto target = random_tensor({5, 8}, 7, false);
    const LossFn f = [&](const std::vector<Tensor>& in) {
        const auto y = ops::softmax(ops::layernorm(in[0], in[1], in[2]));
        return ops::mean(ops::square(ops::sub(y, target)));
    };
    EXPECT_LT(gradient_error(f, {x, g, b}), 1e-3);
}

TEST(GradCheck, StructuralOps) {
    const auto a = random_tensor({6, 4}, 1), v = random_tensor({4}, 2), w = random_tensor({2, 3}, 3);
    const LossFn f = [](const std::vector<Tensor>& in) {
        const auto picked = ops::gather_rows(in[0], {5, 0, 0, 3});
        const auto both = ops::concat_rows({picked, ops::repeat_rows(in[1], 2)});
        const auto halves = ops::concat_cols({ops::slice_cols(both, 2, 2), ops::slice_cols(both, 0, 2)});
        const auto t = ops::transpose(ops::reshape(halves, {4, 6}));
        const auto m = ops::mean_rows(ops::matmul_nt(t, t));
        return ops::sum(ops::mul(m, ops::reshape(in[2], {6})));
    };
    EXPECT_LT(gradient_error(f, {a, v, w}), 1e-4);
}

TEST(GradCheck, Linear) {
    const auto x = random_tensor({3, 5}, 1), w = random_tensor({5, 4}, 2), b = random_tensor({4}, 3);
    const LossFn f = [](const std::vector<Tensor>& in) {
        return ops::mean(ops::gelu(ops::linear(in[0], in[1], in[2])));
    };
    EXPECT_LT(gradient_error(f, {x, w, b}), 1e-4);
}

TEST(Determinism, RepeatedBackwardIsBitwiseIdentical) {
    auto run = [] {
        const auto w = random_tensor({6, 6}, 9), x = random_tensor({4, 6}, 10, false);
        mmr::Tape tape;
        mmr::TapeScope scope(tape);
        tape.backward(ops::mean(ops::softmax(ops::matmul(x, w))));
        return w.grad();
    };
    EXPECT_EQ(run(), run());
}
