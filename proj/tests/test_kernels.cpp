#include <doctest.h>

#include <omp.h>

#include <tuple>
#include <vector>

#include "orthomix/kernels.hpp"
#include "orthomix/rng.hpp"

using namespace orthomix;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform();
    return v;
}

}  // namespace

// The parallel kernels must reproduce the serial ones bit for bit at any
// thread count, including sizes above the parallel threshold.
TEST_CASE("parallel kernels match serial references exactly") {
    for (int threads : {1, 2, 4}) {
        omp_set_num_threads(threads);
        CAPTURE(threads);
        SUBCASE("gemm") {
            for (auto [m, k, n] : {std::tuple{3u, 5u, 7u}, std::tuple{256u, 48u, 48u}, std::tuple{64u, 64u, 64u}}) {
                const auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
                std::vector<double> par(m * n), ser(m * n);
                kernels::gemm(a, b, par, m, k, n);
                kernels::serial::gemm(a, b, ser, m, k, n);
                CHECK(par == ser);
            }
        }
        SUBCASE("gemm_bt with and without bias") {
            for (auto [m, k, n] : {std::tuple{4u, 6u, 5u}, std::tuple{256u, 64u, 64u}}) {
                const auto a = random_vec(m * k, 3), b = random_vec(n * k, 4), bias = random_vec(n, 5);
                std::vector<double> par(m * n), ser(m * n);
                kernels::gemm_bt(a, b, bias, par, m, k, n);
                kernels::serial::gemm_bt(a, b, bias, ser, m, k, n);
                CHECK(par == ser);
                kernels::gemm_bt(a, b, {}, par, m, k, n);
                kernels::serial::gemm_bt(a, b, {}, ser, m, k, n);
                CHECK(par == ser);
            }
        }
        SUBCASE("depthwise conv") {
            for (auto [h, w, c, k] : {std::tuple{4u, 4u, 3u, 3u}, std::tuple{32u, 32u, 64u, 7u}, std::tuple{5u, 3u, 2u, 1u}}) {
                const auto in = random_vec(h * w * c, 6), wt = random_vec(c * k * k, 7), bias = random_vec(c, 8);
                std::vector<double> par(h * w * c), ser(h * w * c);
                kernels::depthwise_conv(in, wt, bias, par, h, w, c, k);
                kernels::serial::depthwise_conv(in, wt, bias, ser, h, w, c, k);
                CHECK(par == ser);
            }
        }
        SUBCASE("gelu") {
            const auto in = random_vec(100000, 9);
            std::vector<double> par(in.size()), ser(in.size());
            kernels::gelu(in, par);
            kernels::serial::gelu(in, ser);
            CHECK(par == ser);
        }
    }
    omp_set_num_threads(omp_get_num_procs());
}

TEST_CASE("depthwise conv: 1x1 kernel scales channels") {
    const std::vector<double> in{1, 2, 3, 4};  // 2x1 map, 2 channels
    const std::vector<double> w{10, -1};
    std::vector<double> out(4);
    kernels::serial::depthwise_conv(in, w, {}, out, 2, 1, 2, 1);
    CHECK(out == std::vector<double>{10, -2, 30, -4});
}

TEST_CASE("depthwise conv: zero padding at the border") {
    // 3x3 single-channel map of ones, 3x3 kernel of ones: corner sees 4,
    // edge 6, centre 9.
    const std::vector<double> in(9, 1.0), w(9, 1.0);
    std::vector<double> out(9);
    kernels::depthwise_conv(in, w, {}, out, 3, 3, 1, 3);
    CHECK(out == std::vector<double>{4, 6, 4, 6, 9, 6, 4, 6, 4});
}

TEST_CASE("gelu values") {
    const std::vector<double> in{0.0, 1.0, -1.0};
    std::vector<double> out(3);
    kernels::gelu(in, out);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == doctest::Approx(0.8413447460685429).epsilon(1e-15));
    CHECK(out[2] == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
}
