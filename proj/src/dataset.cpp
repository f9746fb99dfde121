#include "orthomix/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "orthomix/error.hpp"
#include "orthomix/rng.hpp"

namespace orthomix {

namespace {

constexpr std::uint8_t dataset_version = 1;
constexpr double grating_period = 5.0;

}  // namespace

void Dataset::validate() const {
    if (images.size() != labels.size()) throw DimensionError("dataset: image and label counts differ");
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (labels[i] >= classes) {
            throw Error("dataset: label " + std::to_string(labels[i]) + " out of range for " +
                        std::to_string(classes) + " classes");
        }
        if (!images[i].same_shape(images.front())) throw DimensionError("dataset: images differ in shape");
        if (images[i].kind() != ImageKind::plain || !images[i].valid()) {
            throw Error("dataset: image " + std::to_string(i) + " is not a valid plain image");
        }
    }
}

ImageTensor toy_template(std::uint32_t cls) {
    if (cls >= toy_classes) throw Error("toy_template: class out of range");
    const double theta = cls * 18.0 * std::numbers::pi / 180.0;
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    ImageTensor x(toy_side, toy_side, 3);
    for (std::size_t r = 0; r < toy_side; ++r) {
        for (std::size_t c = 0; c < toy_side; ++c) {
            const double phase = 2.0 * std::numbers::pi * (c * ct + r * st) / grating_period;
            const double base = 0.5 + 0.35 * std::sin(phase);
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double tint = 0.6 + 0.1 * static_cast<double>((cls + 3 * ch) % 5);
                x.at(r, c, ch) = base * tint;
            }
        }
    }
    return x;
}

DatasetSplit gen_toy_dataset(std::uint64_t seed, std::size_t per_class, double noise) {
    if (per_class < 2) throw Error("gen_toy_dataset: need at least 2 images per class");
    const std::size_t test_count = std::max<std::size_t>(1, (per_class + 2) / 5);
    const std::size_t train_count = per_class - test_count;
    SplitMix64 rng(seed);
    DatasetSplit split;
    split.train.classes = split.test.classes = toy_classes;
    for (std::uint32_t cls = 0; cls < toy_classes; ++cls) {
        const ImageTensor tmpl = toy_template(cls);
        for (std::size_t i = 0; i < per_class; ++i) {
            ImageTensor x = tmpl;
            for (double& v : x.data()) v = std::clamp(v + noise * rng.uniform(), 0.0, 1.0);
            Dataset& dst = i < train_count ? split.train : split.test;
            dst.images.push_back(std::move(x));
            dst.labels.push_back(cls);
        }
    }
    return split;
}

Bytes encode_dataset(const DatasetSplit& split) {
    const ImageTensor* first = !split.train.empty() ? &split.train.images.front()
                               : !split.test.empty() ? &split.test.images.front()
                                                      : nullptr;
    ByteWriter out;
    out.magic("CMXD");
    out.u8(dataset_version);
    out.u32(static_cast<std::uint32_t>(split.train.size()));
    out.u32(static_cast<std::uint32_t>(split.test.size()));
    out.u32(std::max(split.train.classes, split.test.classes));
    out.u32(first ? static_cast<std::uint32_t>(first->height()) : 0);
    out.u32(first ? static_cast<std::uint32_t>(first->width()) : 0);
    out.u32(first ? static_cast<std::uint32_t>(first->channels()) : 0);
    for (const Dataset* d : {&split.train, &split.test}) {
        for (const auto& img : d->images) {
            if (!img.same_shape(*first)) throw DimensionError("encode_dataset: images differ in shape");
            out.f64s(img.data());
        }
    }
    for (const Dataset* d : {&split.train, &split.test})
        for (std::uint32_t label : d->labels) out.u32(label);
    return std::move(out).take();
}

DatasetSplit decode_dataset(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic("CMXD", "dataset file");
    in.expect_version(dataset_version, "dataset file");
    const std::size_t header_at = in.offset();
    const std::size_t n_train = in.u32();
    const std::size_t n_test = in.u32();
    const std::uint32_t classes = in.u32();
    const std::size_t h = in.u32();
    const std::size_t w = in.u32();
    const std::size_t c = in.u32();
    const std::size_t per_image = h * w * c;
    const std::size_t total = n_train + n_test;
    if (total > 0 && (per_image == 0 || classes == 0)) {
        throw FormatError(FormatError::Reason::inconsistent, header_at,
                          "dataset file: empty image geometry or zero classes");
    }
    if (in.remaining() < total * (per_image * 8 + 4)) {
        throw FormatError(FormatError::Reason::truncated, bytes.size(),
                          "dataset file: truncated at byte offset " + std::to_string(bytes.size()));
    }
    DatasetSplit split;
    split.train.classes = split.test.classes = classes;
    for (Dataset* d : {&split.train, &split.test}) {
        const std::size_t count = d == &split.train ? n_train : n_test;
        for (std::size_t i = 0; i < count; ++i) {
            ImageTensor img(h, w, c, ImageKind::plain);
            in.f64s(img.data());
            d->images.push_back(std::move(img));
        }
    }
    for (Dataset* d : {&split.train, &split.test}) {
        d->labels.resize(d->images.size());
        for (auto& label : d->labels) label = in.u32();
    }
    if (in.remaining() != 0) {
        throw FormatError(FormatError::Reason::inconsistent, in.offset(), "dataset file: trailing bytes");
    }
    try {
        split.train.validate();
        split.test.validate();
    } catch (const Error& e) {
        throw FormatError(FormatError::Reason::inconsistent, header_at, std::string("dataset file: ") + e.what());
    }
    return split;
}

void save_dataset(const std::filesystem::path& path, const DatasetSplit& split) {
    write_file(path, encode_dataset(split));
}

DatasetSplit load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

}  // namespace orthomix
