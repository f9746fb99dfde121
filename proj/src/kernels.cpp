#include "orthomix/kernels.hpp"

#include <cmath>
#include <numbers>

namespace orthomix::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t parallel_threshold = 1 << 15;

inline double gelu_scalar(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

inline void gemm_row(const double* a_row, const double* b, double* out_row, std::size_t k,
                     std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) out_row[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        const double av = a_row[p];
        const double* b_row = b + p * n;
        for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
}

inline void depthwise_row(const double* in, const double* w, const double* bias, double* out,
                          std::size_t y, std::size_t height, std::size_t width, std::size_t channels,
                          std::size_t kernel) {
    const auto radius = static_cast<std::ptrdiff_t>(kernel / 2);
    const auto h = static_cast<std::ptrdiff_t>(height);
    const auto wd = static_cast<std::ptrdiff_t>(width);
    for (std::ptrdiff_t x = 0; x < wd; ++x) {
        for (std::size_t c = 0; c < channels; ++c) {
            double s = 0.0;
            for (std::size_t dy = 0; dy < kernel; ++dy) {
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - radius;
                if (sy < 0 || sy >= h) continue;
                for (std::size_t dx = 0; dx < kernel; ++dx) {
                    const std::ptrdiff_t sx = x + static_cast<std::ptrdiff_t>(dx) - radius;
                    if (sx < 0 || sx >= wd) continue;
                    s += w[(c * kernel + dy) * kernel + dx] *
                         in[(static_cast<std::size_t>(sy) * width + static_cast<std::size_t>(sx)) * channels + c];
                }
            }
            out[(y * width + static_cast<std::size_t>(x)) * channels + c] =
                bias != nullptr ? s + bias[c] : s;
        }
    }
}

}  // namespace

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out,
          std::size_t m, std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= parallel_threshold)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto r = static_cast<std::size_t>(i);
        gemm_row(a.data() + r * k, b.data(), out.data() + r * n, k, n);
    }
}

void gemm_bt(std::span<const double> a, std::span<const double> b, std::span<const double> bias,
             std::span<double> out, std::size_t m, std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
    const bool has_bias = !bias.empty();
#pragma omp parallel for schedule(static) if (m * k * n >= parallel_threshold)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto r = static_cast<std::size_t>(i);
        const double* a_row = a.data() + r * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* b_row = b.data() + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a_row[p] * b_row[p];
            out[r * n + j] = has_bias ? s + bias[j] : s;
        }
    }
}

void depthwise_conv(std::span<const double> in, std::span<const double> weights,
                    std::span<const double> bias, std::span<double> out, std::size_t height,
                    std::size_t width, std::size_t channels, std::size_t kernel) {
    const auto rows = static_cast<std::ptrdiff_t>(height);
    const double* bias_ptr = bias.empty() ? nullptr : bias.data();
#pragma omp parallel for schedule(static) \
    if (height * width * channels * kernel * kernel >= parallel_threshold)
    for (std::ptrdiff_t y = 0; y < rows; ++y) {
        depthwise_row(in.data(), weights.data(), bias_ptr, out.data(), static_cast<std::size_t>(y),
                      height, width, channels, kernel);
    }
}

void gelu(std::span<const double> in, std::span<double> out) {
    const auto count = static_cast<std::ptrdiff_t>(in.size());
#pragma omp parallel for schedule(static) if (in.size() >= parallel_threshold)
    for (std::ptrdiff_t i = 0; i < count; ++i) out[i] = gelu_scalar(in[i]);
}

namespace serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out,
          std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            out[i * n + j] = s;
        }
    }
}

void gemm_bt(std::span<const double> a, std::span<const double> b, std::span<const double> bias,
             std::span<double> out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
            out[i * n + j] = bias.empty() ? s : s + bias[j];
        }
    }
}

void depthwise_conv(std::span<const double> in, std::span<const double> weights,
                    std::span<const double> bias, std::span<double> out, std::size_t height,
                    std::size_t width, std::size_t channels, std::size_t kernel) {
    const auto radius = static_cast<std::ptrdiff_t>(kernel / 2);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                double s = 0.0;
                for (std::size_t dy = 0; dy < kernel; ++dy) {
                    for (std::size_t dx = 0; dx < kernel; ++dx) {
                        const auto sy = static_cast<std::ptrdiff_t>(y + dy) - radius;
                        const auto sx = static_cast<std::ptrdiff_t>(x + dx) - radius;
                        if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(height) ||
                            sx >= static_cast<std::ptrdiff_t>(width))
                            continue;
                        s += weights[(c * kernel + dy) * kernel + dx] *
                             in[(static_cast<std::size_t>(sy) * width + static_cast<std::size_t>(sx)) *
                                    channels +
                                c];
                    }
                }
                out[(y * width + x) * channels + c] = bias.empty() ? s : s + bias[c];
            }
        }
    }
}

void gelu(std::span<const double> in, std::span<double> out) {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = gelu_scalar(in[i]);
}

}  // namespace serial

}  // namespace orthomix::kernels
