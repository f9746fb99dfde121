#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "orthomix/bytes.hpp"
#include "orthomix/cipher.hpp"
#include "orthomix/matrix.hpp"

namespace orthomix {

struct ModelGeometry {
    std::uint32_t patch = 4;
    std::uint32_t channels = 3;
    std::uint32_t dim = 32;
    std::uint32_t depth = 2;
    std::uint32_t kernel = 3;
    std::uint32_t classes = 10;

    /// Length of a flattened patch, p^2 C.
    std::size_t block_dim() const noexcept {
        return static_cast<std::size_t>(patch) * patch * channels;
    }
    /// Throws DimensionError for zero sizes or an even kernel.
    void validate() const;

    bool operator==(const ModelGeometry&) const = default;
};

/// Scale, shift and running statistics for one normalized feature axis.
struct BatchNormParams {
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> mean;
    std::vector<double> var;

    BatchNormParams() = default;
    explicit BatchNormParams(std::size_t d) : gamma(d, 1.0), beta(d, 0.0), mean(d, 0.0), var(d, 1.0) {}

    bool operator==(const BatchNormParams&) const = default;
};

inline constexpr double batch_norm_epsilon = 1e-5;

/// z_i = x_i E + bias for every flattened patch x_i. Row r of E corresponds
/// to position r of the block layout produced by blockify.
struct PatchEmbedding {
    Matrix e;
    std::vector<double> bias;

    bool operator==(const PatchEmbedding&) const = default;
};

struct MixerLayer {
    std::vector<double> depthwise;  // [channel][row][col]
    std::vector<double> depthwise_bias;
    BatchNormParams bn1;
    Matrix pointwise;  // [out][in]
    std::vector<double> pointwise_bias;
    BatchNormParams bn2;

    bool operator==(const MixerLayer&) const = default;
};

enum class TensorRole { trainable, running_stat };

class ConvMixerModel {
public:
    ConvMixerModel() = default;
    /// All weights zero, batch norms at identity (gamma 1, var 1).
    explicit ConvMixerModel(const ModelGeometry& geometry);

    ModelGeometry geometry;
    PatchEmbedding patch;
    BatchNormParams embed_bn;
    std::vector<MixerLayer> layers;
    Matrix head;  // [class][feature]
    std::vector<double> head_bias;
    bool encrypted = false;

    /// Visits every parameter tensor in file order:
    /// f(name, span, role). The order is part of the model file format.
    template <typename F>
    void for_each_tensor(F&& f) {
        visit(*this, f);
    }
    template <typename F>
    void for_each_tensor(F&& f) const {
        visit(*this, f);
    }

    std::size_t parameter_count() const;

    /// Checks tensor sizes against the geometry, finiteness and positive
    /// running variances. Throws DimensionError or Error.
    void validate() const;

    bool operator==(const ConvMixerModel&) const = default;

private:
    template <typename Self, typename F>
    static void visit(Self& m, F& f);
};

/// Uniform +-sqrt(1/fan_in) weights and biases from SplitMix64(seed).
ConvMixerModel init_model(const ModelGeometry& geometry, std::uint64_t seed);

/// Spatial map of patch embeddings, [row][col][feature].
struct FeatureMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<double> data;
};

/// Applies the patch embedding to blocks laid out on a grid_h x grid_w grid
/// in raster order. Throws DimensionError when the block length differs
/// from E's row count or the block count from grid_h * grid_w.
FeatureMap patch_embed(const Matrix& blocks, const PatchEmbedding& pe, std::size_t grid_h,
                       std::size_t grid_w);

/// Replaces E by A^T E so that the returned model applied to images
/// encrypted with A yields the same embeddings as `m` on plain images.
/// Only E changes; the embedding bias is left as is.
ConvMixerModel transform_model(const ConvMixerModel& m, const OrthoMatrix& a);

/// "CMXM", version 1, geometry (6 x u32), encrypted byte, then every
/// tensor as f64 in for_each_tensor order.
Bytes serialize_model(const ConvMixerModel& m);
ConvMixerModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const std::filesystem::path& path, const ConvMixerModel& m);
ConvMixerModel load_model(const std::filesystem::path& path);

template <typename Self, typename F>
void ConvMixerModel::visit(Self& m, F& f) {
    using R = TensorRole;
    auto bn = [&f](auto& b, const std::string& prefix) {
        f(prefix + ".gamma", std::span(b.gamma), R::trainable);
        f(prefix + ".beta", std::span(b.beta), R::trainable);
        f(prefix + ".mean", std::span(b.mean), R::running_stat);
        f(prefix + ".var", std::span(b.var), R::running_stat);
    };
    f(std::string("patch.e"), m.patch.e.data(), R::trainable);
    f(std::string("patch.bias"), std::span(m.patch.bias), R::trainable);
    bn(m.embed_bn, "embed_bn");
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        auto& layer = m.layers[i];
        const std::string prefix = "layer" + std::to_string(i);
        f(prefix + ".depthwise", std::span(layer.depthwise), R::trainable);
        f(prefix + ".depthwise_bias", std::span(layer.depthwise_bias), R::trainable);
        bn(layer.bn1, prefix + ".bn1");
        f(prefix + ".pointwise", layer.pointwise.data(), R::trainable);
        f(prefix + ".pointwise_bias", std::span(layer.pointwise_bias), R::trainable);
        bn(layer.bn2, prefix + ".bn2");
    }
    f(std::string("head"), m.head.data(), R::trainable);
    f(std::string("head_bias"), std::span(m.head_bias), R::trainable);
}

}  // namespace orthomix
