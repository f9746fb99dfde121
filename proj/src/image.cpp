#include "orthomix/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "orthomix/error.hpp"

namespace orthomix {

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels, ImageKind kind,
                         std::vector<double> data)
    : height_(height), width_(width), channels_(channels), kind_(kind), data_(std::move(data)) {
    if (data_.size() != height_ * width_ * channels_) {
        throw DimensionError("image data has " + std::to_string(data_.size()) + " values, expected " +
                             std::to_string(height_ * width_ * channels_));
    }
}

bool ImageTensor::valid() const noexcept {
    if (kind_ == ImageKind::plain) {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
    }
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace orthomix
