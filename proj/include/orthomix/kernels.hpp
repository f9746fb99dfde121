#pragma once

// Hot loops shared by the cipher and the ConvMixer engine. The top-level
// functions are OpenMP-parallel over output rows; `serial` holds the
// straightforward single-threaded versions that tests and benchmarks
// compare against. Both accumulate every output element in the same order,
// so results are bit-identical regardless of thread count.

#include <cstddef>
#include <span>

namespace orthomix::kernels {

/// out[m x n] = a[m x k] * b[k x n]
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out,
          std::size_t m, std::size_t k, std::size_t n);

/// out[m x n] = a[m x k] * b^T + bias, with b stored as [n x k].
/// `bias` may be empty.
void gemm_bt(std::span<const double> a, std::span<const double> b, std::span<const double> bias,
             std::span<double> out, std::size_t m, std::size_t k, std::size_t n);

/// Per-channel k x k cross-correlation with zero "same" padding over an
/// [height][width][channels] map; weights are [channel][row][col].
void depthwise_conv(std::span<const double> in, std::span<const double> weights,
                    std::span<const double> bias, std::span<double> out, std::size_t height,
                    std::size_t width, std::size_t channels, std::size_t kernel);

/// Exact GELU, x * Phi(x).
void gelu(std::span<const double> in, std::span<double> out);

namespace serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out,
          std::size_t m, std::size_t k, std::size_t n);
void gemm_bt(std::span<const double> a, std::span<const double> b, std::span<const double> bias,
             std::span<double> out, std::size_t m, std::size_t k, std::size_t n);
void depthwise_conv(std::span<const double> in, std::span<const double> weights,
                    std::span<const double> bias, std::span<double> out, std::size_t height,
                    std::size_t width, std::size_t channels, std::size_t kernel);
void gelu(std::span<const double> in, std::span<double> out);

}  // namespace serial

}  // namespace orthomix::kernels
