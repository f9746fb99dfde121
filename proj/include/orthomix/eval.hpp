#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "orthomix/cipher.hpp"
#include "orthomix/dataset.hpp"
#include "orthomix/model.hpp"

namespace orthomix {

/// Top-1 accuracy in percent. Throws Error on an empty dataset.
double accuracy(const ConvMixerModel& m, const Dataset& data);
/// Same, but every image is encrypted with `a` before inference.
double accuracy(const ConvMixerModel& m, const Dataset& data, const OrthoMatrix& a);

/// Rows are models, columns test images, all in percent.
struct AccuracyMatrix {
    double plain_model_plain_images = 0.0;
    double plain_model_encrypted_images = 0.0;
    double encrypted_model_plain_images = 0.0;
    double encrypted_model_encrypted_images = 0.0;
};

/// Derives the encrypted model from `plain_model` and evaluates all four
/// model/image combinations on `test`.
AccuracyMatrix accuracy_matrix(const ConvMixerModel& plain_model, const OrthoMatrix& a, const Dataset& test);

/// Global min-max map of an encrypted image onto [0, 1]; a constant image
/// maps to 0.5. Throws KindError for plain input, Error for non-finite
/// values.
ImageTensor normalize_for_view(const ImageTensor& xhat);

double mean_squared_error(const ImageTensor& a, const ImageTensor& b);

/// Mean SSIM over all 8x8 windows (stride 1) of every channel, with
/// C1 = (0.01)^2 and C2 = (0.03)^2 for unit dynamic range. Windows shrink
/// to the image size for images smaller than 8 pixels.
double ssim(const ImageTensor& a, const ImageTensor& b, std::size_t window = 8);

/// Pearson correlation of 64-bin histograms over [0, 1], averaged over
/// channels.
double histogram_correlation(const ImageTensor& a, const ImageTensor& b, std::size_t bins = 64);

struct LeakageMetrics {
    double mse = 0.0;
    double ssim = 0.0;
    double histogram_correlation = 0.0;
};

/// Metrics of one encrypted image against its plain original. Encrypted
/// inputs are passed through normalize_for_view first.
LeakageMetrics leakage_metrics(const ImageTensor& plain, const ImageTensor& encrypted);

struct LeakagePair {
    LeakageMetrics proposed;
    LeakageMetrics conventional;
};

LeakagePair leakage_report(const ImageTensor& plain, const ImageTensor& enc_proposed,
                           const ImageTensor& enc_conventional);

struct LeakageReport {
    std::vector<LeakageMetrics> per_image;
    LeakageMetrics mean;
};

struct LeakageComparison {
    LeakageReport proposed;
    LeakageReport conventional;
};

/// Encrypts every image of `data` with both ciphers under `key` and
/// collects the leakage metrics.
LeakageComparison compare_leakage(const Dataset& data, const SecretKey& key);

/// Writes a binary PPM. Throws Error for values outside [0, 1].
void export_ppm(const ImageTensor& x, const std::filesystem::path& path);

/// Human-readable accuracy table followed by a key=value block.
std::string format_report(const AccuracyMatrix& acc, const LeakageComparison* leakage = nullptr);

}  // namespace orthomix
