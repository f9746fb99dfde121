#include "orthomix/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "orthomix/engine.hpp"
#include "orthomix/error.hpp"
#include "orthomix/formats.hpp"

namespace orthomix {

namespace {

double accuracy_impl(const ConvMixerModel& m, const Dataset& data, const OrthoMatrix* a) {
    if (data.empty()) throw Error("accuracy: empty dataset");
    if (data.images.size() != data.labels.size()) throw DimensionError("accuracy: label count mismatch");
    if (a && (a->patch() != m.geometry.patch || a->channels() != m.geometry.channels)) {
        throw DimensionError("accuracy: key geometry does not match the model");
    }
    const auto count = static_cast<std::ptrdiff_t>(data.size());
    std::size_t correct = 0;
    // Exceptions must not escape the parallel region, so geometry is
    // checked up front on one image and shape-equality on the rest.
    const ImageTensor& probe = data.images.front();
    (void)forward(m, a ? encrypt_image(probe, *a) : probe);
    for (const auto& x : data.images) {
        if (!x.same_shape(probe) || x.kind() != ImageKind::plain) {
            throw DimensionError("accuracy: dataset images must be plain and share one shape");
        }
    }
#pragma omp parallel for schedule(dynamic) reduction(+ : correct)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        const auto& x = data.images[static_cast<std::size_t>(i)];
        const Logits logits = a ? forward(m, encrypt_image(x, *a)) : forward(m, x);
        if (logits.argmax() == data.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
    if (!a.same_shape(b)) throw DimensionError(std::string(what) + ": images differ in shape");
}

LeakageMetrics mean_of(const std::vector<LeakageMetrics>& xs) {
    LeakageMetrics m;
    if (xs.empty()) return m;
    for (const auto& x : xs) {
        m.mse += x.mse;
        m.ssim += x.ssim;
        m.histogram_correlation += x.histogram_correlation;
    }
    const auto n = static_cast<double>(xs.size());
    m.mse /= n;
    m.ssim /= n;
    m.histogram_correlation /= n;
    return m;
}

}  // namespace

double accuracy(const ConvMixerModel& m, const Dataset& data) { return accuracy_impl(m, data, nullptr); }

double accuracy(const ConvMixerModel& m, const Dataset& data, const OrthoMatrix& a) {
    return accuracy_impl(m, data, &a);
}

AccuracyMatrix accuracy_matrix(const ConvMixerModel& plain_model, const OrthoMatrix& a, const Dataset& test) {
    if (test.empty()) throw Error("accuracy_matrix: empty test set");
    const ConvMixerModel encrypted_model = transform_model(plain_model, a);
    return {accuracy(plain_model, test), accuracy(plain_model, test, a), accuracy(encrypted_model, test),
            accuracy(encrypted_model, test, a)};
}

ImageTensor normalize_for_view(const ImageTensor& xhat) {
    if (xhat.kind() != ImageKind::encrypted) throw KindError("normalize_for_view: expected an encrypted image");
    const auto data = xhat.data();
    if (!std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); })) {
        throw Error("normalize_for_view: non-finite pixel values");
    }
    ImageTensor out(xhat.height(), xhat.width(), xhat.channels(), ImageKind::plain);
    if (data.empty()) return out;
    const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
    const double min = *lo;
    const double range = *hi - *lo;
    auto dst = out.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        dst[i] = range > 0.0 ? std::clamp((data[i] - min) / range, 0.0, 1.0) : 0.5;
    }
    return out;
}

double mean_squared_error(const ImageTensor& a, const ImageTensor& b) {
    require_same_shape(a, b, "mean_squared_error");
    const auto x = a.data();
    const auto y = b.data();
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return s / static_cast<double>(x.size());
}

double ssim(const ImageTensor& a, const ImageTensor& b, std::size_t window) {
    require_same_shape(a, b, "ssim");
    if (a.size() == 0 || window == 0) throw DimensionError("ssim: empty image or window");
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const std::size_t wh = std::min(window, a.height());
    const std::size_t ww = std::min(window, a.width());
    const double count = static_cast<double>(wh * ww);
    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t ch = 0; ch < a.channels(); ++ch) {
        for (std::size_t y0 = 0; y0 + wh <= a.height(); ++y0) {
            for (std::size_t x0 = 0; x0 + ww <= a.width(); ++x0) {
                double sa = 0.0, sb = 0.0;
                for (std::size_t y = y0; y < y0 + wh; ++y)
                    for (std::size_t x = x0; x < x0 + ww; ++x) {
                        sa += a.at(y, x, ch);
                        sb += b.at(y, x, ch);
                    }
                const double ma = sa / count;
                const double mb = sb / count;
                double va = 0.0, vb = 0.0, cov = 0.0;
                for (std::size_t y = y0; y < y0 + wh; ++y)
                    for (std::size_t x = x0; x < x0 + ww; ++x) {
                        const double da = a.at(y, x, ch) - ma;
                        const double db = b.at(y, x, ch) - mb;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                va /= count;
                vb /= count;
                cov /= count;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++windows;
            }
        }
    }
    return total / static_cast<double>(windows);
}

double histogram_correlation(const ImageTensor& a, const ImageTensor& b, std::size_t bins) {
    require_same_shape(a, b, "histogram_correlation");
    if (bins == 0 || a.channels() == 0) throw DimensionError("histogram_correlation: no bins or channels");
    auto histogram = [bins](const ImageTensor& x, std::size_t ch) {
        std::vector<double> h(bins, 0.0);
        for (std::size_t r = 0; r < x.height(); ++r)
            for (std::size_t c = 0; c < x.width(); ++c) {
                const double v = std::clamp(x.at(r, c, ch), 0.0, 1.0);
                h[std::min(bins - 1, static_cast<std::size_t>(v * static_cast<double>(bins)))] += 1.0;
            }
        return h;
    };
    double total = 0.0;
    for (std::size_t ch = 0; ch < a.channels(); ++ch) {
        const auto ha = histogram(a, ch);
        const auto hb = histogram(b, ch);
        const double ma = std::accumulate(ha.begin(), ha.end(), 0.0) / static_cast<double>(bins);
        const double mb = std::accumulate(hb.begin(), hb.end(), 0.0) / static_cast<double>(bins);
        double cov = 0.0, va = 0.0, vb = 0.0;
        for (std::size_t i = 0; i < bins; ++i) {
            cov += (ha[i] - ma) * (hb[i] - mb);
            va += (ha[i] - ma) * (ha[i] - ma);
            vb += (hb[i] - mb) * (hb[i] - mb);
        }
        // Flat histograms have no defined correlation; count them as
        // correlated only when identical.
        if (va == 0.0 || vb == 0.0) {
            total += ha == hb ? 1.0 : 0.0;
        } else {
            total += cov / std::sqrt(va * vb);
        }
    }
    return total / static_cast<double>(a.channels());
}

LeakageMetrics leakage_metrics(const ImageTensor& plain, const ImageTensor& encrypted) {
    require_same_shape(plain, encrypted, "leakage_metrics");
    const ImageTensor view = encrypted.kind() == ImageKind::encrypted ? normalize_for_view(encrypted) : encrypted;
    return {mean_squared_error(plain, view), ssim(plain, view), histogram_correlation(plain, view)};
}

LeakagePair leakage_report(const ImageTensor& plain, const ImageTensor& enc_proposed,
                           const ImageTensor& enc_conventional) {
    return {leakage_metrics(plain, enc_proposed), leakage_metrics(plain, enc_conventional)};
}

LeakageComparison compare_leakage(const Dataset& data, const SecretKey& key) {
    if (data.empty()) throw Error("compare_leakage: empty dataset");
    const OrthoMatrix a = generate_orthogonal(key);
    const ConventionalKey ck = derive_conventional_key(key);
    LeakageComparison out;
    for (const auto& x : data.images) {
        const LeakagePair pair = leakage_report(x, encrypt_image(x, a), conventional_encrypt(x, ck));
        out.proposed.per_image.push_back(pair.proposed);
        out.conventional.per_image.push_back(pair.conventional);
    }
    out.proposed.mean = mean_of(out.proposed.per_image);
    out.conventional.mean = mean_of(out.conventional.per_image);
    return out;
}

void export_ppm(const ImageTensor& x, const std::filesystem::path& path) { save_ppm(path, x); }

std::string format_report(const AccuracyMatrix& acc, const LeakageComparison* leakage) {
    auto pct = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    std::ostringstream out;
    out << "Classification accuracy (%)\n"
        << "model\\test image\tplain\tencrypted\n"
        << "plain model\t" << pct(acc.plain_model_plain_images) << '\t' << pct(acc.plain_model_encrypted_images)
        << '\n'
        << "encrypted model\t" << pct(acc.encrypted_model_plain_images) << '\t'
        << pct(acc.encrypted_model_encrypted_images) << "\n\n";
    if (leakage) {
        out << "Visual leakage (mean over " << leakage->proposed.per_image.size() << " images)\n"
            << "cipher\tmse\tssim\thist_corr\n";
        auto row = [&](const char* name, const LeakageMetrics& m) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "%s\t%.6f\t%.6f\t%.6f\n", name, m.mse, m.ssim, m.histogram_correlation);
            out << buf;
        };
        row("orthogonal", leakage->proposed.mean);
        row("conventional", leakage->conventional.mean);
        out << '\n';
    }
    out << "acc.plain_model.plain=" << pct(acc.plain_model_plain_images) << '\n'
        << "acc.plain_model.encrypted=" << pct(acc.plain_model_encrypted_images) << '\n'
        << "acc.encrypted_model.plain=" << pct(acc.encrypted_model_plain_images) << '\n'
        << "acc.encrypted_model.encrypted=" << pct(acc.encrypted_model_encrypted_images) << '\n';
    if (leakage) {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "leak.orthogonal.ssim=%.6f\nleak.conventional.ssim=%.6f\n"
                      "leak.orthogonal.mse=%.6f\nleak.conventional.mse=%.6f\n"
                      "leak.orthogonal.hist_corr=%.6f\nleak.conventional.hist_corr=%.6f\n",
                      leakage->proposed.mean.ssim, leakage->conventional.mean.ssim, leakage->proposed.mean.mse,
                      leakage->conventional.mean.mse, leakage->proposed.mean.histogram_correlation,
                      leakage->conventional.mean.histogram_correlation);
        out << buf;
    }
    return out.str();
}

}  // namespace orthomix
