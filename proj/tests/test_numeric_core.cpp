#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dap/errors.hpp"
#include "dap/matrix.hpp"
#include "dap/rng.hpp"

#include "test_util.hpp"

using dap::Matrix;
using dap::SeededRng;

TEST_CASE("matrix construction enforces data length") {
    CHECK_NOTHROW(Matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    CHECK_THROWS_AS(Matrix(2, 3, {1, 2, 3}), dap::ShapeError);
}

TEST_CASE("matmul identity and hand-multiplied example") {
    Matrix identity{{1, 0}, {0, 1}};
    Matrix v{{3}, {4}};
    CHECK(matmul(identity, v) == v);

    Matrix a{{1, 2}, {3, 4}};
    Matrix b{{5}, {6}};
    Matrix product = matmul(a, b);
    CHECK(product(0, 0) == 17.0);
    CHECK(product(1, 0) == 39.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    Matrix a(2, 3);
    Matrix b(2, 2);
    CHECK_THROWS_AS(matmul(a, b), dap::ShapeError);
}

TEST_CASE("matmul associativity on random triples") {
    SeededRng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix a = test_util::random_matrix(4, 3, rng);
        Matrix b = test_util::random_matrix(3, 5, rng);
        Matrix c = test_util::random_matrix(5, 2, rng);
        Matrix left = matmul(matmul(a, b), c);
        Matrix right = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < left.size(); ++i) {
            const double x = left.data()[i], y = right.data()[i];
            const double scale = std::max({std::abs(x), std::abs(y), 1.0});
            CHECK(std::abs(x - y) / scale < 1e-9);
        }
    }
}

TEST_CASE("transposed-a product agrees with explicit transpose") {
    SeededRng rng(12);
    Matrix a = test_util::random_matrix(4, 3, rng);
    Matrix b = test_util::random_matrix(4, 2, rng);
    CHECK(test_util::max_abs_diff(matmul_transposed_a(a, b), matmul(transpose(a), b)) == 0.0);
}

TEST_CASE("sigmoid symmetry point and stability") {
    Matrix zero{{0.0}};
    CHECK(dap::sigmoid(zero)(0, 0) == 0.5);

    const double big = dap::sigmoid_scalar(500.0);
    CHECK(big < 1.0);
    CHECK(std::isfinite(big));
    // High-precision value is 1 - 7.12e-218; the clamped double sits within
    // one ulp of 1.
    CHECK(std::abs(big - 1.0) < 1e-12);

    const double tiny = dap::sigmoid_scalar(-800.0);
    CHECK(tiny > 0.0);
    CHECK(std::isfinite(tiny));
}

TEST_CASE("sigmoid(x) + sigmoid(-x) == 1") {
    SeededRng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const double x = rng.uniform(-40.0, 40.0);
        CHECK(std::abs(dap::sigmoid_scalar(x) + dap::sigmoid_scalar(-x) - 1.0) < 1e-12);
    }
    CHECK(std::abs(dap::sigmoid_scalar(500.0) + dap::sigmoid_scalar(-500.0) - 1.0) < 1e-12);
}

TEST_CASE("tanh odd function and open range") {
    CHECK(dap::tanh_scalar(0.0) == 0.0);
    CHECK(dap::tanh_scalar(100.0) < 1.0);
    CHECK(dap::tanh_scalar(-100.0) > -1.0);
    CHECK(dap::tanh_scalar(0.5) == -dap::tanh_scalar(-0.5));
}

TEST_CASE("softmax symmetry, stability, shift invariance") {
    Matrix two{{0.0}, {0.0}};
    Matrix out = dap::softmax(two);
    CHECK(out(0, 0) == 0.5);
    CHECK(out(1, 0) == 0.5);

    Matrix large{{1000.0}, {1000.0}, {1000.0}};
    Matrix out3 = dap::softmax(large);
    for (double v : out3.data()) {
        CHECK(std::isfinite(v));
        CHECK(std::abs(v - 1.0 / 3.0) < 1e-12);
    }

    SeededRng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix x = test_util::random_matrix(5, 1, rng, -1e3, 1e3);
        Matrix shifted = x;
        const double c = rng.uniform(-100.0, 100.0);
        for (double& v : shifted.data()) v += c;
        Matrix sx = dap::softmax(x);
        Matrix ss = dap::softmax(shifted);
        double sum = 0.0;
        for (double v : sx.data()) sum += v;
        CHECK(std::abs(sum - 1.0) < 1e-12);
        CHECK(test_util::max_abs_diff(sx, ss) < 1e-12);
    }
}

TEST_CASE("softmax requires a column vector") {
    CHECK_THROWS_AS(dap::softmax(Matrix(2, 2)), dap::ShapeError);
}

TEST_CASE("init_weights: zeros, determinism, scaled bound") {
    SeededRng rng(42);
    Matrix z = dap::init_weights(3, 4, dap::InitScheme::Zeros, rng);
    for (double v : z.data()) CHECK(v == 0.0);

    SeededRng r1(99), r2(99);
    Matrix a = dap::init_weights(64, 50, dap::InitScheme::UniformScaled, r1);
    Matrix b = dap::init_weights(64, 50, dap::InitScheme::UniformScaled, r2);
    CHECK(a == b);

    const double bound = std::sqrt(6.0 / (64.0 + 50.0)) * (1.0 + 1e-12);
    for (double v : a.data()) CHECK(std::abs(v) <= bound);

    CHECK_THROWS_AS(dap::init_weights(0, 4, dap::InitScheme::Zeros, rng), dap::ShapeError);
}

TEST_CASE("operations are pure: identical inputs give identical outputs") {
    SeededRng rng(3);
    Matrix a = test_util::random_matrix(5, 5, rng);
    Matrix b = test_util::random_matrix(5, 5, rng);
    CHECK(matmul(a, b) == matmul(a, b));
    CHECK(dap::sigmoid(a) == dap::sigmoid(a));
    CHECK(dap::tanh(b) == dap::tanh(b));
}

TEST_CASE("seeded rng: identical streams, distinct derived streams") {
    SeededRng a(1234), b(1234);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

    SeededRng base(77);
    SeededRng c1 = base.derive(0);
    SeededRng c2 = base.derive(1);
    CHECK(c1.next_u64() != c2.next_u64());

    SeededRng u(9);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.next_double();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("rng shuffle is a deterministic permutation") {
    std::vector<int> v1{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<int> v2 = v1;
    SeededRng r1(5), r2(5);
    r1.shuffle(v1);
    r2.shuffle(v2);
    CHECK(v1 == v2);
    std::vector<int> sorted = v1;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}
