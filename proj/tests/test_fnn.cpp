#include "doctest.h"

#include <cmath>
#include <vector>

#include "sse/fnn.hpp"
#include "sse/params.hpp"
#include "sse/rng.hpp"
#include "test_support.hpp"

using sse::FnnParams;
using sse::Matrix;
using sse::ModelParams;

namespace {

FnnParams random_fnn(const std::vector<std::size_t>& dims, std::uint64_t seed,
                     bool random_bias = true) {
    sse::RngStream rng(seed);
    FnnParams p = FnnParams::glorot(dims, rng);
    if (random_bias)
        for (Matrix& b : p.biases)
            for (double& v : b.flat()) v = rng.next_gaussian(0.0, 0.1);
    return p;
}

Matrix random_input(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    sse::RngStream rng(seed);
    Matrix m(rows, cols);
    for (double& v : m.flat()) v = rng.next_gaussian(0.0, 1.0);
    return m;
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
    sse::RngStream rng(seed);
    std::vector<int> labels(n);
    for (int& l : labels) l = int(rng.next_below(classes));
    return labels;
}

}  // namespace

TEST_CASE("forward pass matches a hand-computed 2-2-2 network") {
    FnnParams p = FnnParams::zeros({2, 2, 2});
    p.weights[0] = Matrix::from_rows({{1.0, -1.0}, {0.5, 2.0}});
    p.biases[0] = Matrix::from_rows({{0.1, -0.2}});
    p.weights[1] = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    p.biases[1] = Matrix::from_rows({{0.0, 0.0}});
    const Matrix x = Matrix::from_rows({{1.0, 2.0}});
    // Hidden pre-activation: [1*1+2*0.5+0.1, 1*(-1)+2*2-0.2] = [2.1, 2.8];
    // ReLU keeps both; identity output layer passes them to the softmax.
    const Matrix probs = sse::fnn_forward(p, x);
    const double z0 = 2.1, z1 = 2.8;
    const double denom = std::exp(z0) + std::exp(z1);
    CHECK(probs(0, 0) == doctest::Approx(std::exp(z0) / denom).epsilon(1e-14));
    CHECK(probs(0, 1) == doctest::Approx(std::exp(z1) / denom).epsilon(1e-14));

    // Negative pre-activation is clamped by ReLU.
    const Matrix x2 = Matrix::from_rows({{-3.0, 0.0}});
    sse::FnnCache cache;
    sse::fnn_forward(p, x2, &cache);
    CHECK(cache.activations[1](0, 0) == 0.0);  // pre-act 1*(-3)+0.1 < 0
}

TEST_CASE("fnn_loss equals the mean negative log probability of the labels") {
    const FnnParams p = random_fnn({5, 4, 3}, 31);
    const Matrix x = random_input(6, 5, 32);
    const std::vector<int> labels = random_labels(6, 3, 33);
    const Matrix probs = sse::fnn_forward(p, x);
    double expect = 0.0;
    for (std::size_t r = 0; r < 6; ++r) expect -= std::log(probs(r, std::size_t(labels[r])));
    expect /= 6.0;
    CHECK(sse::fnn_loss(p, x, labels) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("backward pass matches central finite differences") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const FnnParams p = random_fnn({6, 4, 3}, seed);
        const Matrix x = random_input(5, 6, seed + 100);
        const std::vector<int> labels = random_labels(5, 3, seed + 200);

        sse::FnnCache cache;
        sse::fnn_forward(p, x, &cache);
        FnnParams grad = FnnParams::zeros({6, 4, 3});
        sse::fnn_backward(p, cache, labels, 1.0, grad);

        const ModelParams fd = sse::testing::fd_gradient(
            [&](const ModelParams& m) {
                return sse::fnn_loss(std::get<FnnParams>(m), x, labels);
            },
            ModelParams(p));
        CHECK(sse::testing::max_rel_error(ModelParams(grad), fd) < 1e-6);
    }
}

TEST_CASE("backward scale folds linearly into the gradient") {
    const FnnParams p = random_fnn({4, 3, 2}, 7);
    const Matrix x = random_input(3, 4, 8);
    const std::vector<int> labels = random_labels(3, 2, 9);
    sse::FnnCache cache;
    sse::fnn_forward(p, x, &cache);
    FnnParams g1 = FnnParams::zeros({4, 3, 2});
    FnnParams g2 = FnnParams::zeros({4, 3, 2});
    sse::fnn_backward(p, cache, labels, 1.0, g1);
    sse::fnn_backward(p, cache, labels, 2.5, g2);
    ModelParams scaled(g1);
    sse::scale(scaled, 2.5);
    CHECK(sse::max_abs_difference(scaled, ModelParams(g2)) < 1e-12);
}

TEST_CASE("backward accumulates into the given gradient") {
    const FnnParams p = random_fnn({4, 3, 2}, 77);
    const Matrix x = random_input(3, 4, 78);
    const std::vector<int> labels = random_labels(3, 2, 79);
    sse::FnnCache cache;
    sse::fnn_forward(p, x, &cache);
    FnnParams once = FnnParams::zeros({4, 3, 2});
    sse::fnn_backward(p, cache, labels, 1.0, once);
    FnnParams twice = FnnParams::zeros({4, 3, 2});
    sse::fnn_backward(p, cache, labels, 1.0, twice);
    sse::fnn_backward(p, cache, labels, 1.0, twice);
    ModelParams doubled{once};
    sse::scale(doubled, 2.0);
    CHECK(sse::max_abs_difference(doubled, ModelParams(twice)) < 1e-13);
}

TEST_CASE("keep_prob 1 is exactly no dropout; smaller keep_prob zeroes units") {
    const FnnParams p = random_fnn({6, 8, 3}, 41);
    const Matrix x = random_input(4, 6, 42);
    sse::RngStream rng(43);
    const Matrix plain = sse::fnn_forward(p, x);
    const Matrix with_spec = sse::fnn_forward(p, x, nullptr, sse::DropoutSpec{1.0}, &rng);
    for (std::size_t i = 0; i < plain.size(); ++i)
        CHECK(plain.flat()[i] == with_spec.flat()[i]);

    sse::FnnCache cache;
    sse::RngStream rng2(44);
    sse::fnn_forward(p, x, &cache, sse::DropoutSpec{0.5}, &rng2);
    REQUIRE_FALSE(cache.drop_masks.empty());
    std::size_t zeros = 0, scaled = 0;
    for (double v : cache.drop_masks[0].flat()) {
        if (v == 0.0) ++zeros;
        else {
            CHECK(v == doctest::Approx(2.0));  // inverted dropout scaling 1/0.5
            ++scaled;
        }
    }
    CHECK(zeros > 0);
    CHECK(scaled > 0);

    // Deterministic under a fixed stream.
    sse::FnnCache c1, c2;
    sse::RngStream ra(45), rb(45);
    const Matrix o1 = sse::fnn_forward(p, x, &c1, sse::DropoutSpec{0.7}, &ra);
    const Matrix o2 = sse::fnn_forward(p, x, &c2, sse::DropoutSpec{0.7}, &rb);
    for (std::size_t i = 0; i < o1.size(); ++i) CHECK(o1.flat()[i] == o2.flat()[i]);
}

TEST_CASE("argmax ties resolve to the lowest class id") {
    Matrix probs = Matrix::from_rows({{0.4, 0.4, 0.2}, {0.1, 0.45, 0.45}, {0.2, 0.3, 0.5}});
    const std::vector<int> pred = sse::predict_classes(probs);
    CHECK(pred == std::vector<int>({0, 1, 2}));
}

TEST_CASE("classification_error counts mispredictions") {
    Matrix probs = Matrix::from_rows({{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}, {0.3, 0.7}});
    CHECK(sse::classification_error(probs, {0, 1, 0, 0}) == doctest::Approx(0.25));
    CHECK(sse::classification_error(probs, {1, 0, 1, 0}) == doctest::Approx(1.0));
}
