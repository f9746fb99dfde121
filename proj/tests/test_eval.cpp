#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "orthomix/bytes.hpp"
#include "orthomix/dataset.hpp"
#include "orthomix/engine.hpp"
#include "orthomix/error.hpp"
#include "orthomix/eval.hpp"
#include "orthomix/formats.hpp"
#include "reference.hpp"

using namespace orthomix;

namespace {

const ModelGeometry toy{4, 3, 32, 2, 3, 10};

ImageTensor filled(std::size_t h, std::size_t w, std::size_t c, double v, ImageKind kind = ImageKind::plain) {
    ImageTensor x(h, w, c, kind);
    std::fill(x.data().begin(), x.data().end(), v);
    return x;
}

}  // namespace

TEST_CASE("accuracy") {
    const DatasetSplit data = gen_toy_dataset(2, 10);
    SUBCASE("a model that always answers class 0 scores 10%") {
        ConvMixerModel m(toy);
        m.head_bias[0] = 1.0;
        CHECK(accuracy(m, data.test) == doctest::Approx(10.0));
        CHECK(accuracy(m, data.train) == doctest::Approx(10.0));
    }
    SUBCASE("identity key makes all four entries equal") {
        const ConvMixerModel m = ref::random_model(toy, 3);
        const AccuracyMatrix acc = accuracy_matrix(m, OrthoMatrix::from_matrix(Matrix::identity(48), 4, 3), data.test);
        CHECK(acc.plain_model_plain_images == acc.plain_model_encrypted_images);
        CHECK(acc.plain_model_plain_images == acc.encrypted_model_plain_images);
        CHECK(acc.plain_model_plain_images == acc.encrypted_model_encrypted_images);
    }
    SUBCASE("keyed accuracy encrypts on the fly") {
        const ConvMixerModel m = ref::random_model(toy, 4);
        const OrthoMatrix a = generate_orthogonal({8, 4, 3});
        CHECK(accuracy(transform_model(m, a), data.test, a) == accuracy(m, data.test));
    }
    SUBCASE("errors") {
        const ConvMixerModel m(toy);
        CHECK_THROWS_AS(accuracy(m, Dataset{}), Error);
        CHECK_THROWS_AS(accuracy_matrix(m, generate_orthogonal({1, 4, 3}), Dataset{}), Error);
        CHECK_THROWS_AS(accuracy(ConvMixerModel({2, 3, 8, 1, 3, 10}), data.test, generate_orthogonal({1, 4, 3})),
                        DimensionError);
        Dataset small = data.test;
        small.images[0] = ImageTensor(8, 8, 3);
        CHECK_THROWS(accuracy(m, small));
    }
}

TEST_CASE("normalize_for_view") {
    SUBCASE("maps [-2, 2] onto [0, 1] preserving order") {
        ImageTensor x(1, 5, 1, ImageKind::encrypted);
        const double v[] = {-2.0, 1.0, -0.5, 2.0, 0.0};
        std::copy(std::begin(v), std::end(v), x.data().begin());
        const ImageTensor y = normalize_for_view(x);
        CHECK(y.kind() == ImageKind::plain);
        const double want[] = {0.0, 0.75, 0.375, 1.0, 0.5};
        for (std::size_t i = 0; i < 5; ++i) CHECK(y.data()[i] == doctest::Approx(want[i]).epsilon(1e-15));
    }
    SUBCASE("constant image maps to 0.5") {
        const ImageTensor y = normalize_for_view(filled(3, 3, 2, -7.0, ImageKind::encrypted));
        for (double v : y.data()) CHECK(v == 0.5);
    }
    SUBCASE("values already spanning [0, 1] are unchanged") {
        ImageTensor x = ref::random_image(4, 4, 3, 5);
        x.data()[0] = 0.0;
        x.data()[1] = 1.0;
        x.set_kind(ImageKind::encrypted);
        const ImageTensor y = normalize_for_view(x);
        for (std::size_t i = 0; i < x.data().size(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-15));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(normalize_for_view(ImageTensor(2, 2, 1)), KindError);
        ImageTensor x = filled(2, 2, 1, 0.0, ImageKind::encrypted);
        x.data()[2] = NAN;
        CHECK_THROWS_AS(normalize_for_view(x), Error);
    }
}

TEST_CASE("image similarity metrics") {
    const ImageTensor x = ref::random_image(16, 16, 3, 10);
    const ImageTensor noise = ref::random_image(16, 16, 3, 11);
    SUBCASE("identical images") {
        CHECK(mean_squared_error(x, x) == 0.0);
        CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(histogram_correlation(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("independent noise has SSIM near zero") {
        for (std::uint64_t s = 0; s < 10; ++s) {
            const double v = ssim(ref::random_image(32, 32, 3, 100 + s), ref::random_image(32, 32, 3, 200 + s));
            CHECK(std::abs(v) < 0.1);
        }
    }
    SUBCASE("symmetry and ranges") {
        CHECK(std::abs(ssim(x, noise) - ssim(noise, x)) <= 1e-12);
        CHECK(std::abs(histogram_correlation(x, noise) - histogram_correlation(noise, x)) <= 1e-12);
        const double s = ssim(x, noise), h = histogram_correlation(x, noise);
        CHECK((s >= -1.0 && s <= 1.0));
        CHECK((h >= -1.0 && h <= 1.0));
        CHECK(mean_squared_error(x, noise) > 0.0);
    }
    SUBCASE("MSE by hand") {
        CHECK(mean_squared_error(filled(2, 2, 1, 0.25), filled(2, 2, 1, 0.75)) == 0.25);
    }
    SUBCASE("inverted image is anti-correlated in SSIM") {
        ImageTensor inv = x;
        for (double& v : inv.data()) v = 1.0 - v;
        CHECK(ssim(x, inv) < -0.5);
    }
    SUBCASE("small images use a shrunken window") {
        const ImageTensor a = ref::random_image(4, 4, 1, 1);
        CHECK(ssim(a, a) == doctest::Approx(1.0));
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(ssim(x, ImageTensor(16, 16, 1)), DimensionError);
        CHECK_THROWS_AS(mean_squared_error(x, ImageTensor(8, 16, 3)), DimensionError);
        CHECK_THROWS_AS(histogram_correlation(x, ImageTensor(16, 8, 3)), DimensionError);
    }
}

TEST_CASE("leakage") {
    SUBCASE("plain image against itself") {
        const ImageTensor x = ref::random_image(16, 16, 3, 1);
        const LeakageMetrics m = leakage_metrics(x, x);
        CHECK(m.mse == 0.0);
        CHECK(m.ssim == doctest::Approx(1.0));
    }
    SUBCASE("per-image and mean metrics of both ciphers") {
        const DatasetSplit data = gen_toy_dataset(5, 2);
        const LeakageComparison c = compare_leakage(data.train, {3, 4, 3});
        CHECK(c.proposed.per_image.size() == data.train.size());
        double sum = 0.0;
        for (const auto& m : c.proposed.per_image) sum += m.ssim;
        CHECK(c.proposed.mean.ssim == doctest::Approx(sum / static_cast<double>(data.train.size())));
        CHECK(std::abs(c.proposed.mean.ssim) < 0.1);
        CHECK(std::abs(c.conventional.mean.ssim) < 0.1);
        const LeakagePair pair = leakage_report(data.train.images[0],
                                                encrypt_image(data.train.images[0], generate_orthogonal({3, 4, 3})),
                                                conventional_encrypt(data.train.images[0], SecretKey{3, 4, 3}));
        CHECK(pair.proposed.ssim == doctest::Approx(c.proposed.per_image[0].ssim));
        CHECK(pair.conventional.ssim == doctest::Approx(c.conventional.per_image[0].ssim));
    }
    SUBCASE("geometry mismatch") {
        CHECK_THROWS_AS(leakage_metrics(ImageTensor(4, 4, 3), ImageTensor(4, 4, 1, ImageKind::encrypted)),
                        DimensionError);
    }
}

TEST_CASE("export_ppm and format_report") {
    const auto dir = std::filesystem::temp_directory_path() / "orthomix_eval_test";
    std::filesystem::create_directories(dir);
    SUBCASE("export_ppm writes a loadable image") {
        const ImageTensor x = ref::random_image(5, 7, 3, 2);
        export_ppm(x, dir / "x.ppm");
        const ImageTensor y = load_ppm(dir / "x.ppm");
        CHECK(y.height() == 5);
        CHECK(y.width() == 7);
        for (std::size_t i = 0; i < x.data().size(); ++i) CHECK(std::abs(x.data()[i] - y.data()[i]) <= 0.5 / 255 + 1e-12);
        CHECK_THROWS_AS(export_ppm(filled(2, 2, 3, 1.5, ImageKind::encrypted), dir / "bad.ppm"), Error);
    }
    SUBCASE("report carries every key") {
        const AccuracyMatrix acc{91.25, 12.5, 10.0, 91.25};
        const std::string plain = format_report(acc);
        for (const char* key : {"acc.plain_model.plain=91.25", "acc.plain_model.encrypted=12.50",
                                "acc.encrypted_model.plain=10.00", "acc.encrypted_model.encrypted=91.25"})
            CHECK(plain.find(key) != std::string::npos);
        CHECK(plain.find("leak.") == std::string::npos);
        const LeakageComparison leak = compare_leakage(gen_toy_dataset(1, 2).test, {1, 4, 3});
        const std::string full = format_report(acc, &leak);
        for (const char* key : {"leak.orthogonal.ssim=", "leak.conventional.ssim=", "leak.orthogonal.mse=",
                                "leak.conventional.mse=", "leak.orthogonal.hist_corr=", "leak.conventional.hist_corr="})
            CHECK(full.find(key) != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}
