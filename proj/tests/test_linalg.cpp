#include <doctest.h>

#include <cmath>

#include "tprn/linalg.hpp"
#include "tprn/rng.hpp"

using namespace tprn;

TEST_CASE("outer product basics") {
    // basis case: e1 in R^2, e2 in R^3 -> single 1 at (0,1)
    Matrix m = outer({1.0, 0.0}, {0.0, 1.0, 0.0});
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(m(i, j) == (i == 0 && j == 1 ? 1.0 : 0.0));

    Matrix z = outer({0.0, 0.0, 0.0}, {1.0, 2.0});
    for (double x : z.data()) CHECK(x == 0.0);

    // hand multiplication: [1,2] x [3,4] = [[3,4],[6,8]]
    Matrix h = outer({1.0, 2.0}, {3.0, 4.0});
    CHECK(h(0, 0) == 3.0);
    CHECK(h(0, 1) == 4.0);
    CHECK(h(1, 0) == 6.0);
    CHECK(h(1, 1) == 8.0);
}

TEST_CASE("outer product is rank one (Gram determinant oracle)") {
    Rng rng(314);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 2 + rng.index(10);
        const std::size_t n = 2 + rng.index(10);
        Vector u(m), v(n);
        for (auto& x : u) x = rng.uniform(-2.0, 2.0);
        for (auto& x : v) x = rng.uniform(-2.0, 2.0);
        Matrix a = outer(u, v);
        // every pair of columns must be linearly dependent
        for (std::size_t j1 = 0; j1 < n; ++j1)
            for (std::size_t j2 = j1 + 1; j2 < n; ++j2) {
                const Vector c1 = a.column(j1), c2 = a.column(j2);
                const double g11 = dot(c1, c1), g12 = dot(c1, c2), g22 = dot(c2, c2);
                const double det = g11 * g22 - g12 * g12;
                CHECK(std::fabs(det) <= 1e-10 * std::max(1.0, g11 * g22));
            }
    }
}

TEST_CASE("vectorize is column-major and round-trips") {
    Matrix i2 = Matrix::identity(2);
    CHECK(vectorize(i2) == Vector{1.0, 0.0, 0.0, 1.0});

    Matrix z(3, 2);
    CHECK(vectorize(z) == Vector(6, 0.0));

    Matrix m(2, 3);
    m(0, 0) = 1; m(0, 1) = 2; m(0, 2) = 3;
    m(1, 0) = 4; m(1, 1) = 5; m(1, 2) = 6;
    CHECK(vectorize(m) == Vector{1, 4, 2, 5, 3, 6});

    Rng rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t r = 1 + rng.index(64);
        const std::size_t c = 1 + rng.index(64);
        Matrix a(r, c);
        for (auto& x : a.data()) x = rng.uniform(-10.0, 10.0);
        const Matrix b = reshape(vectorize(a), r, c);
        CHECK(maxAbsDiff(a, b) == 0.0);
    }
}

TEST_CASE("sigmoid") {
    const Vector mid = sigmoid({0.0, 0.0});
    CHECK(mid[0] == 0.5);
    CHECK(mid[1] == 0.5);

    // odd symmetry: sigmoid(x) + sigmoid(-x) = 1
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const double x = rng.uniform(-40.0, 40.0);
        CHECK(sigmoidScalar(x) + sigmoidScalar(-x) == doctest::Approx(1.0).epsilon(1e-12));
    }

    // high-precision reference
    CHECK(sigmoidScalar(2.0) == doctest::Approx(0.8807970779778823).epsilon(1e-14));

    // no overflow, strictly inside (0,1) up to |x| = 1e3
    for (double x : {1.0, 36.0, 37.0, 100.0, 1e3}) {
        const double hi = sigmoidScalar(x);
        const double lo = sigmoidScalar(-x);
        CHECK(std::isfinite(hi));
        CHECK(hi < 1.0);
        CHECK(hi > 0.0);
        CHECK(lo > 0.0);
        CHECK(lo < 1.0);
    }

    // monotone
    double prev = 0.0;
    for (double x = -30.0; x <= 30.0; x += 0.37) {
        const double y = sigmoidScalar(x);
        CHECK(y >= prev);
        prev = y;
    }
}

TEST_CASE("cosine") {
    const Vector u{0.3, -1.2, 2.0};
    CHECK(cosine(u, u) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(cosine({1.0, 0.0}, {0.0, 1.0}) == 0.0);
    CHECK(cosine({1.0, 0.0}, {1.0, 1.0}) == doctest::Approx(0.7071067811865476).epsilon(1e-14));
    CHECK_THROWS_AS(cosine({0.0, 0.0}, {1.0, 0.0}), DegenerateInputError);
    CHECK_THROWS_AS(cosine({1.0}, {1.0, 2.0}), ConfigError);

    Rng rng(21);
    for (int i = 0; i < 100; ++i) {
        Vector a(5), b(5);
        for (auto& x : a) x = rng.uniform(-1.0, 1.0);
        for (auto& x : b) x = rng.uniform(-1.0, 1.0);
        const double c0 = cosine(a, b);
        CHECK(c0 >= -1.0);
        CHECK(c0 <= 1.0);
        const double s1 = rng.uniform(0.01, 100.0);
        const double s2 = rng.uniform(0.01, 100.0);
        Vector a2 = a, b2 = b;
        for (auto& x : a2) x *= s1;
        for (auto& x : b2) x *= s2;
        CHECK(cosine(a2, b2) == doctest::Approx(c0).epsilon(1e-10));
    }
}

TEST_CASE("l2Normalize") {
    CHECK(l2Normalize({3.0, 4.0}) == Vector{0.6, 0.8});
    CHECK(l2Normalize({0.0, 1.0, 0.0}) == Vector{0.0, 1.0, 0.0});
    CHECK_THROWS_AS(l2Normalize({0.0, 0.0}), DegenerateInputError);

    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        Vector v(6);
        for (auto& x : v) x = rng.uniform(-3.0, 3.0);
        if (norm2(v) == 0.0) continue;
        const Vector n1 = l2Normalize(v);
        CHECK(norm2(n1) == doctest::Approx(1.0).epsilon(1e-12));
        Vector scaled = v;
        const double c = rng.uniform(0.001, 1000.0);
        for (auto& x : scaled) x *= c;
        const Vector n2 = l2Normalize(scaled);
        for (std::size_t k = 0; k < v.size(); ++k)
            CHECK(n1[k] == doctest::Approx(n2[k]).epsilon(1e-10));
    }
}

TEST_CASE("affine") {
    const Vector x{1.5, -2.0};
    CHECK(affine(Matrix::identity(2), x, {0.0, 0.0}) == x);
    CHECK(affine(Matrix(2, 2), x, {3.0, 4.0}) == Vector{3.0, 4.0});

    Matrix w(2, 2);
    w(0, 0) = 1; w(0, 1) = 2; w(1, 0) = 3; w(1, 1) = 4;
    CHECK(affine(w, {1.0, 1.0}, {1.0, 0.0}) == Vector{4.0, 7.0});

    CHECK_THROWS_AS(affine(w, {1.0, 2.0, 3.0}, {0.0, 0.0}), ConfigError);
    CHECK_THROWS_AS(affine(w, {1.0, 2.0}, {0.0}), ConfigError);
}

TEST_CASE("matvec and transpose agree with affine") {
    Rng rng(42);
    Matrix w(4, 3);
    for (auto& x : w.data()) x = rng.uniform(-1.0, 1.0);
    Vector v(3), y(4);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    for (auto& x : y) x = rng.uniform(-1.0, 1.0);

    const Vector ax = affine(w, v, Vector(4, 0.0));
    CHECK(ax == matvec(w, v));
    CHECK(matTvec(w, y) == matvec(transpose(w), y));
}
