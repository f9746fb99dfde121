#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "orthomix/bytes.hpp"
#include "orthomix/image.hpp"

namespace orthomix {

struct Dataset {
    std::vector<ImageTensor> images;
    std::vector<std::uint32_t> labels;
    std::uint32_t classes = 0;

    std::size_t size() const noexcept { return images.size(); }
    bool empty() const noexcept { return images.empty(); }

    /// Equal lengths, labels below `classes`, one shared geometry, plain
    /// images with values in [0, 1]. Throws DimensionError or Error.
    void validate() const;

    bool operator==(const Dataset&) const = default;
};

struct DatasetSplit {
    Dataset train;
    Dataset test;

    bool operator==(const DatasetSplit&) const = default;
};

inline constexpr std::size_t toy_classes = 10;
inline constexpr std::size_t toy_side = 16;

/// Noise-free 16x16x3 template of a toy class: a sinusoidal grating at
/// class * 18 degrees with a class-dependent colour tint.
ImageTensor toy_template(std::uint32_t cls);

/// Ten classes of templates plus uniform noise in [-noise, noise], clipped to
/// [0, 1]. Each class contributes per_class images, 80/20 train/test.
/// Throws Error when per_class < 2.
DatasetSplit gen_toy_dataset(std::uint64_t seed, std::size_t per_class, double noise = 0.15);

/// "CMXD", version 1, train count, test count, classes, H, W, C (u32 each),
/// then train images, test images (f64), train labels, test labels (u32).
Bytes encode_dataset(const DatasetSplit& split);
DatasetSplit decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit load_dataset(const std::filesystem::path& path);

}  // namespace orthomix
