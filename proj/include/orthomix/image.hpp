#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace orthomix {

enum class ImageKind : std::uint8_t { plain = 0, encrypted = 1 };

/// H x W x C raster of doubles indexed (row, column, channel) with the
/// channel varying fastest. Plain images hold values in [0, 1]; encrypted
/// images hold arbitrary finite reals.
class ImageTensor {
public:
    ImageTensor() = default;
    ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
                ImageKind kind = ImageKind::plain)
        : height_(height), width_(width), channels_(channels), kind_(kind),
          data_(height * width * channels, 0.0) {}
    /// Throws DimensionError on a size mismatch.
    ImageTensor(std::size_t height, std::size_t width, std::size_t channels, ImageKind kind,
                std::vector<double> data);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t size() const noexcept { return data_.size(); }
    ImageKind kind() const noexcept { return kind_; }
    void set_kind(ImageKind kind) noexcept { kind_ = kind; }

    double& at(std::size_t row, std::size_t col, std::size_t ch) noexcept {
        return data_[(row * width_ + col) * channels_ + ch];
    }
    double at(std::size_t row, std::size_t col, std::size_t ch) const noexcept {
        return data_[(row * width_ + col) * channels_ + ch];
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const ImageTensor& o) const noexcept {
        return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
    }

    /// True when every value is finite and, for plain images, inside [0, 1].
    bool valid() const noexcept;

    bool operator==(const ImageTensor&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    ImageKind kind_ = ImageKind::plain;
    std::vector<double> data_;
};

}  // namespace orthomix
