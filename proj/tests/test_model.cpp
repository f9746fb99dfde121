#include <doctest.h>

#include <cmath>
#include <map>

#include "orthomix/engine.hpp"
#include "orthomix/error.hpp"
#include "orthomix/model.hpp"
#include "reference.hpp"

using namespace orthomix;

namespace {

const ModelGeometry toy{4, 3, 32, 2, 3, 10};

double max_diff(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

std::map<std::string, std::vector<double>> tensors(const ConvMixerModel& m) {
    std::map<std::string, std::vector<double>> out;
    m.for_each_tensor([&](const std::string& name, std::span<const double> t, TensorRole) {
        out[name] = std::vector<double>(t.begin(), t.end());
    });
    return out;
}

FormatError::Reason reason_of(auto&& fn) {
    try {
        fn();
    } catch (const FormatError& e) {
        return e.reason();
    }
    FAIL("expected a FormatError");
    return FormatError::Reason::inconsistent;
}

}  // namespace

TEST_CASE("patch_embed") {
    SUBCASE("identity embedding reproduces the blocks") {
        const Matrix blocks = ref::random_matrix(4, 12, 1);
        const PatchEmbedding pe{Matrix::identity(12), std::vector<double>(12, 0.0)};
        const FeatureMap z = patch_embed(blocks, pe, 2, 2);
        CHECK(z.height == 2);
        CHECK(z.width == 2);
        CHECK(z.channels == 12);
        CHECK(std::equal(z.data.begin(), z.data.end(), blocks.data().begin()));
    }
    SUBCASE("basis vector selects the first row of E") {
        Matrix blocks(1, 12);
        blocks(0, 0) = 1.0;
        const PatchEmbedding pe{ref::random_matrix(12, 5, 2), std::vector<double>(5, 0.0)};
        const FeatureMap z = patch_embed(blocks, pe, 1, 1);
        for (std::size_t j = 0; j < 5; ++j) CHECK(z.data[j] == pe.e(0, j));
    }
    SUBCASE("matches the dense product plus bias") {
        const Matrix blocks = ref::random_matrix(16, 48, 3);
        const Matrix bias = ref::random_matrix(1, 32, 5);
        const PatchEmbedding pe{ref::random_matrix(48, 32, 4), std::vector<double>(bias.data().begin(), bias.data().end())};
        const FeatureMap z = patch_embed(blocks, pe, 4, 4);
        const Matrix want = ref::naive_matmul(blocks, pe.e);
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t j = 0; j < 32; ++j) REQUIRE(std::abs(z.data[i * 32 + j] - (want(i, j) + pe.bias[j])) <= 1e-12);
    }
    SUBCASE("dimension mismatches") {
        const PatchEmbedding pe{Matrix(12, 4), std::vector<double>(4, 0.0)};
        CHECK_THROWS_AS(patch_embed(Matrix(4, 11), pe, 2, 2), DimensionError);
        CHECK_THROWS_AS(patch_embed(Matrix(4, 12), pe, 3, 2), DimensionError);
    }
}

TEST_CASE("blockify + patch_embed equals a strided convolution on the raw image") {
    const ModelGeometry g{4, 3, 8, 0, 3, 8};
    ConvMixerModel m = ref::random_model(g, 3);
    const ImageTensor x = ref::random_image(16, 12, 3, 4);
    const FeatureMap z = patch_embed(blockify(x, 4), m.patch, 4, 3);
    for (std::size_t by = 0; by < 4; ++by)
        for (std::size_t bx = 0; bx < 3; ++bx)
            for (std::size_t j = 0; j < 8; ++j) {
                double conv = m.patch.bias[j];
                for (std::size_t c = 0; c < 3; ++c)
                    for (std::size_t h = 0; h < 4; ++h)
                        for (std::size_t w = 0; w < 4; ++w)
                            conv += x.at(by * 4 + h, bx * 4 + w, c) * m.patch.e((h * 4 + w) * 3 + c, j);
                REQUIRE(std::abs(z.data[(by * 3 + bx) * 8 + j] - conv) <= 1e-12);
            }
}

TEST_CASE("transform_model") {
    const ConvMixerModel m = ref::random_model(toy, 11);
    SUBCASE("identity key only flips the flag") {
        const ConvMixerModel t = transform_model(m, OrthoMatrix::from_matrix(Matrix::identity(48), 4, 3));
        CHECK(t.encrypted);
        ConvMixerModel unflagged = t;
        unflagged.encrypted = false;
        CHECK(unflagged == m);
    }
    SUBCASE("changes exactly the embedding matrix") {
        const ConvMixerModel t = transform_model(m, generate_orthogonal({5, 4, 3}));
        const auto before = tensors(m);
        const auto after = tensors(t);
        for (const auto& [name, values] : before) {
            CAPTURE(name);
            if (name == "patch.e") {
                CHECK(values != after.at(name));
            } else {
                CHECK(values == after.at(name));
            }
        }
    }
    SUBCASE("transforming back with A^T restores E") {
        const OrthoMatrix a = generate_orthogonal({6, 4, 3});
        ConvMixerModel t = transform_model(m, a);
        t.encrypted = false;
        const ConvMixerModel back = transform_model(t, OrthoMatrix::from_matrix(a.inverse(), 4, 3));
        CHECK(max_diff(back.patch.e.data(), m.patch.e.data()) <= 1e-10);
    }
    SUBCASE("encrypted model on encrypted images reproduces plain logits") {
        const OrthoMatrix a = generate_orthogonal({7, 4, 3});
        const ConvMixerModel t = transform_model(m, a);
        for (std::uint64_t s = 0; s < 20; ++s) {
            const ImageTensor x = ref::random_image(16, 16, 3, s);
            const Logits plain = forward(m, x);
            const Logits enc = forward(t, encrypt_image(x, a));
            REQUIRE(max_diff(plain.values, enc.values) <= 1e-6);
        }
    }
    SUBCASE("errors") {
        const ConvMixerModel t = transform_model(m, generate_orthogonal({1, 4, 3}));
        CHECK_THROWS_AS(transform_model(t, generate_orthogonal({1, 4, 3})), StateError);
        CHECK_THROWS_AS(transform_model(m, generate_orthogonal({1, 2, 3})), DimensionError);
        CHECK_THROWS_AS(transform_model(m, generate_orthogonal({1, 4, 1})), DimensionError);
    }
}

TEST_CASE("model validation") {
    CHECK_THROWS_AS(ModelGeometry({4, 3, 32, 2, 4, 10}).validate(), DimensionError);
    CHECK_THROWS_AS(ModelGeometry({0, 3, 32, 2, 3, 10}).validate(), DimensionError);
    ConvMixerModel m(toy);
    CHECK_NOTHROW(m.validate());
    m.layers[1].bn2.var[3] = 0.0;
    CHECK_THROWS_AS(m.validate(), Error);
    m = ConvMixerModel(toy);
    m.head_bias.push_back(1.0);
    CHECK_THROWS_AS(m.validate(), DimensionError);
}

TEST_CASE("init_model is seeded and bounded") {
    const ConvMixerModel a = init_model(toy, 9);
    CHECK(a == init_model(toy, 9));
    CHECK(!(a == init_model(toy, 10)));
    const double bound = std::sqrt(1.0 / 48.0);
    for (double v : a.patch.e.data()) CHECK(std::abs(v) <= bound);
    CHECK((serialize_model(a).size() - 30) / 8 == a.parameter_count());
}

TEST_CASE("model serialization") {
    SUBCASE("round trip is bit-exact") {
        for (std::uint64_t seed : {1ULL, 2ULL}) {
            ConvMixerModel m = ref::random_model(seed == 1 ? toy : ModelGeometry{2, 1, 4, 1, 3, 3}, seed);
            m.encrypted = seed == 2;
            CHECK(deserialize_model(serialize_model(m)) == m);
        }
    }
    const ConvMixerModel m = ref::random_model(toy, 4);
    const Bytes bytes = serialize_model(m);
    SUBCASE("header layout") {
        CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "CMXM");
        CHECK(bytes[4] == 1);
        CHECK(bytes[5] == 4);    // patch
        CHECK(bytes[13] == 32);  // dim
        CHECK(bytes[29] == 0);   // encrypted flag
        CHECK(bytes.size() == 30 + 8 * m.parameter_count());
    }
    SUBCASE("corrupted magic") {
        Bytes bad = bytes;
        bad[3] = 'X';
        CHECK(reason_of([&] { deserialize_model(bad); }) == FormatError::Reason::bad_magic);
    }
    SUBCASE("version mismatch") {
        Bytes bad = bytes;
        bad[4] = 9;
        CHECK(reason_of([&] { deserialize_model(bad); }) == FormatError::Reason::bad_version);
    }
    SUBCASE("truncated stream reports an offset") {
        try {
            deserialize_model(std::span(bytes).first(bytes.size() - 100));
            FAIL("expected truncation");
        } catch (const FormatError& e) {
            CHECK(e.reason() == FormatError::Reason::truncated);
            CHECK(e.offset() == bytes.size() - 100);
        }
        CHECK(reason_of([&] { deserialize_model(std::span(bytes).first(20)); }) == FormatError::Reason::truncated);
    }
    SUBCASE("geometry inconsistency") {
        Bytes bad = bytes;
        bad[21] = 4;  // even kernel size
        CHECK(reason_of([&] { deserialize_model(bad); }) == FormatError::Reason::inconsistent);
        bad = bytes;
        bad.push_back(0);
        CHECK(reason_of([&] { deserialize_model(bad); }) == FormatError::Reason::inconsistent);
    }
}
