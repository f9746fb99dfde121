#include <doctest.h>

#include <cmath>
#include <numbers>

#include "orthomix/error.hpp"
#include "orthomix/matrix.hpp"
#include "orthomix/rng.hpp"
#include "reference.hpp"

using namespace orthomix;

namespace {

// Straight transcription of the published SplitMix64 reference, kept
// separate from the library class.
std::uint64_t splitmix_reference(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9;
    z = (z ^ (z >> 27)) * 0x94d049bb133111eb;
    return z ^ (z >> 31);
}

std::size_t rank_by_elimination(Matrix m, double tol = 1e-9) {
    std::size_t rank = 0;
    for (std::size_t col = 0; col < m.cols() && rank < m.rows(); ++col) {
        std::size_t pivot = rank;
        for (std::size_t r = rank; r < m.rows(); ++r)
            if (std::abs(m(r, col)) > std::abs(m(pivot, col))) pivot = r;
        if (std::abs(m(pivot, col)) < tol) continue;
        for (std::size_t c = 0; c < m.cols(); ++c) std::swap(m(rank, c), m(pivot, c));
        for (std::size_t r = 0; r < m.rows(); ++r) {
            if (r == rank) continue;
            const double f = m(r, col) / m(rank, col);
            for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) -= f * m(rank, c);
        }
        ++rank;
    }
    return rank;
}

}  // namespace

TEST_CASE("splitmix64 output for seed 0") {
    SplitMix64 rng(0);
    CHECK(rng.next() == 0xE220A8397B1DCDAFULL);
    CHECK(rng.next() == 0x6E789E6AA1B965F4ULL);
}

TEST_CASE("splitmix64 matches an independent transcription for many seeds") {
    for (std::uint64_t seed : {1ULL, 42ULL, 0xDEADBEEFULL, ~0ULL}) {
        SplitMix64 rng(seed);
        std::uint64_t x = seed;
        for (int i = 0; i < 1000; ++i) REQUIRE(rng.next() == splitmix_reference(x));
    }
}

TEST_CASE("uniform mapping endpoints") {
    CHECK(uniform_from_bits(0) == -1.0);
    CHECK(uniform_from_bits(~0ULL) == 1.0 - 0x1.0p-52);
    static_assert(uniform_from_bits(0) == -1.0);
}

TEST_CASE("uniform draws are centred") {
    SplitMix64 rng(2024);
    double sum = 0.0;
    double lo = 1.0, hi = -1.0;
    constexpr int n = 1'000'000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.uniform();
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(lo >= -1.0);
    CHECK(hi < 1.0);
}

TEST_CASE("matmul") {
    SUBCASE("identity") {
        const Matrix m = ref::random_matrix(3, 3, 5);
        CHECK(matmul(Matrix::identity(3), m) == m);
    }
    SUBCASE("hand-checked 2x2") {
        const Matrix a(2, 2, {1, 2, 3, 4});
        const Matrix b(2, 2, {5, 6, 7, 8});
        CHECK(matmul(a, b) == Matrix(2, 2, {19, 22, 43, 50}));
    }
    SUBCASE("agrees with the triple loop") {
        for (std::size_t n : {8u, 16u}) {
            const Matrix a = ref::random_matrix(n, n, 11 + n);
            const Matrix b = ref::random_matrix(n, n, 97 + n);
            const Matrix got = matmul(a, b);
            const Matrix want = ref::naive_matmul(a, b);
            for (std::size_t i = 0; i < got.data().size(); ++i) {
                REQUIRE(std::abs(got.data()[i] - want.data()[i]) <= 1e-12 * std::max(1.0, std::abs(want.data()[i])));
            }
        }
    }
    SUBCASE("rectangular and mismatched") {
        const Matrix a = ref::random_matrix(3, 5, 1);
        const Matrix b = ref::random_matrix(5, 2, 2);
        CHECK(matmul(a, b).rows() == 3);
        CHECK(matmul(a, b).cols() == 2);
        CHECK_THROWS_AS(matmul(b, b), DimensionError);
    }
}

TEST_CASE("matrix construction checks") {
    CHECK_THROWS_AS(Matrix(2, 2, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(Matrix(1, 2, {1, std::nan("")}), Error);
}

TEST_CASE("orthogonality defect") {
    CHECK(orthogonality_defect(Matrix::identity(4)) == 0.0);
    const double c = std::cos(std::numbers::pi / 6), s = std::sin(std::numbers::pi / 6);
    CHECK(orthogonality_defect(Matrix(2, 2, {c, -s, s, c})) <= 1e-15);
    CHECK(orthogonality_defect(Matrix(2, 2, {2, 0, 0, 1})) == 3.0);
    CHECK_THROWS_AS(orthogonality_defect(Matrix(2, 3)), DimensionError);
}

TEST_CASE("modified Gram-Schmidt") {
    SUBCASE("identity is a fixed point") { CHECK(modified_gram_schmidt(Matrix::identity(3)) == Matrix::identity(3)); }
    SUBCASE("repeated row is degenerate") {
        const Matrix r(3, 3, {1, 2, 3, 0, 1, 4, 1, 2, 3});
        CHECK_THROWS_AS(modified_gram_schmidt(r), DegenerateError);
    }
    SUBCASE("zero matrix is degenerate") { CHECK_THROWS_AS(modified_gram_schmidt(Matrix(4, 4)), DegenerateError); }
    SUBCASE("non-square") { CHECK_THROWS_AS(modified_gram_schmidt(Matrix(2, 3)), DimensionError); }
    SUBCASE("48x48 from seed 42") {
        const Matrix q = modified_gram_schmidt(ref::random_matrix(48, 48, 42));
        CHECK(orthogonality_defect(q) <= 1e-10);
    }
    SUBCASE("orthonormal across seeds and sizes") {
        for (std::size_t n : {12u, 48u, 192u}) {
            const int seeds = n == 192 ? 10 : 100;
            for (int seed = 0; seed < seeds; ++seed) {
                const Matrix q = modified_gram_schmidt(ref::random_matrix(n, n, static_cast<std::uint64_t>(seed)));
                REQUIRE(orthogonality_defect(q) <= 1e-10);
            }
        }
    }
}

TEST_CASE("Gram-Schmidt preserves the nested row spaces") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t n = 6;
        const Matrix r = ref::random_matrix(n, n, seed);
        const Matrix q = modified_gram_schmidt(r);
        // Row i of R lies in span(q_0..q_i): R Q^T is lower triangular and
        // reconstructs R.
        const Matrix coeff = ref::naive_matmul(r, q.transposed());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) REQUIRE(std::abs(coeff(i, j)) < 1e-12);
        const Matrix back = ref::naive_matmul(coeff, q);
        for (std::size_t i = 0; i < back.data().size(); ++i) REQUIRE(std::abs(back.data()[i] - r.data()[i]) < 1e-12);

        Matrix stacked(2 * n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                stacked(i, j) = r(i, j);
                stacked(n + i, j) = q(i, j);
            }
        CHECK(rank_by_elimination(stacked) == n);
    }
}
