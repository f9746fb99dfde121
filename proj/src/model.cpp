#include "orthomix/model.hpp"

#include <algorithm>
#include <cmath>

#include "orthomix/error.hpp"
#include "orthomix/kernels.hpp"
#include "orthomix/rng.hpp"

namespace orthomix {

namespace {

constexpr std::uint8_t model_version = 1;

// Parameter count implied by a geometry, used to reject truncated files
// before allocating.
std::size_t expected_parameters(const ModelGeometry& g) {
    const std::size_t d = g.dim;
    const std::size_t k = g.kernel;
    const std::size_t per_layer = d * k * k + d + 4 * d + d * d + d + 4 * d;
    return g.block_dim() * d + d + 4 * d + g.depth * per_layer + g.classes * d + g.classes;
}

}  // namespace

void ModelGeometry::validate() const {
    if (patch == 0 || channels == 0 || dim == 0 || kernel == 0 || classes == 0) {
        throw DimensionError("model geometry: patch, channels, dim, kernel and classes must be positive");
    }
    if (kernel % 2 == 0) throw DimensionError("model geometry: kernel size must be odd");
}

ConvMixerModel::ConvMixerModel(const ModelGeometry& g) : geometry(g) {
    g.validate();
    const std::size_t d = g.dim;
    patch.e = Matrix(g.block_dim(), d);
    patch.bias.assign(d, 0.0);
    embed_bn = BatchNormParams(d);
    layers.resize(g.depth);
    for (auto& layer : layers) {
        layer.depthwise.assign(d * g.kernel * g.kernel, 0.0);
        layer.depthwise_bias.assign(d, 0.0);
        layer.bn1 = BatchNormParams(d);
        layer.pointwise = Matrix(d, d);
        layer.pointwise_bias.assign(d, 0.0);
        layer.bn2 = BatchNormParams(d);
    }
    head = Matrix(g.classes, d);
    head_bias.assign(g.classes, 0.0);
}

std::size_t ConvMixerModel::parameter_count() const {
    std::size_t total = 0;
    for_each_tensor([&](const std::string&, std::span<const double> t, TensorRole) { total += t.size(); });
    return total;
}

void ConvMixerModel::validate() const {
    geometry.validate();
    const ConvMixerModel shape(geometry);
    if (layers.size() != shape.layers.size()) throw DimensionError("model: layer count differs from depth");
    if (patch.e.rows() != shape.patch.e.rows() || patch.e.cols() != shape.patch.e.cols() ||
        head.rows() != shape.head.rows() || head.cols() != shape.head.cols()) {
        throw DimensionError("model: matrix shape differs from geometry");
    }
    std::vector<std::size_t> sizes;
    shape.for_each_tensor([&](const std::string&, std::span<const double> t, TensorRole) { sizes.push_back(t.size()); });
    std::size_t i = 0;
    for_each_tensor([&](const std::string& name, std::span<const double> t, TensorRole role) {
        if (t.size() != sizes[i++]) throw DimensionError("model: tensor " + name + " has the wrong size");
        if (!std::all_of(t.begin(), t.end(), [](double v) { return std::isfinite(v); })) {
            throw Error("model: tensor " + name + " has non-finite entries");
        }
        if (role == TensorRole::running_stat && name.ends_with(".var") &&
            !std::all_of(t.begin(), t.end(), [](double v) { return v > 0.0; })) {
            throw Error("model: running variance " + name + " must be positive");
        }
    });
}

ConvMixerModel init_model(const ModelGeometry& geometry, std::uint64_t seed) {
    ConvMixerModel m(geometry);
    SplitMix64 rng(seed);
    auto fill = [&rng](std::span<double> t, std::size_t fan_in) {
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        for (double& v : t) v = bound * rng.uniform();
    };
    const std::size_t d = geometry.dim;
    const std::size_t kk = static_cast<std::size_t>(geometry.kernel) * geometry.kernel;
    fill(m.patch.e.data(), geometry.block_dim());
    fill(m.patch.bias, geometry.block_dim());
    for (auto& layer : m.layers) {
        fill(layer.depthwise, kk);
        fill(layer.depthwise_bias, kk);
        fill(layer.pointwise.data(), d);
        fill(layer.pointwise_bias, d);
    }
    fill(m.head.data(), d);
    fill(m.head_bias, d);
    return m;
}

FeatureMap patch_embed(const Matrix& blocks, const PatchEmbedding& pe, std::size_t grid_h,
                       std::size_t grid_w) {
    if (blocks.cols() != pe.e.rows()) {
        throw DimensionError("patch_embed: block length " + std::to_string(blocks.cols()) +
                             " does not match embedding rows " + std::to_string(pe.e.rows()));
    }
    if (blocks.rows() != grid_h * grid_w) {
        throw DimensionError("patch_embed: block count does not match the grid");
    }
    if (pe.bias.size() != pe.e.cols()) throw DimensionError("patch_embed: bias length mismatch");
    const std::size_t d = pe.e.cols();
    FeatureMap z{grid_h, grid_w, d, std::vector<double>(blocks.rows() * d)};
    kernels::gemm(blocks.data(), pe.e.data(), z.data, blocks.rows(), blocks.cols(), d);
    for (std::size_t i = 0; i < blocks.rows(); ++i)
        for (std::size_t j = 0; j < d; ++j) z.data[i * d + j] += pe.bias[j];
    return z;
}

ConvMixerModel transform_model(const ConvMixerModel& m, const OrthoMatrix& a) {
    if (m.encrypted) throw StateError("transform_model: model is already encrypted");
    if (a.n() != m.patch.e.rows() || a.patch() != m.geometry.patch ||
        a.channels() != m.geometry.channels) {
        throw DimensionError("transform_model: key geometry (patch " + std::to_string(a.patch()) +
                             ", channels " + std::to_string(a.channels()) +
                             ") does not match model (patch " + std::to_string(m.geometry.patch) +
                             ", channels " + std::to_string(m.geometry.channels) + ")");
    }
    ConvMixerModel out = m;
    out.patch.e = matmul(a.inverse(), m.patch.e);
    out.encrypted = true;
    return out;
}

Bytes serialize_model(const ConvMixerModel& m) {
    ByteWriter out;
    out.magic("CMXM");
    out.u8(model_version);
    const auto& g = m.geometry;
    for (std::uint32_t v : {g.patch, g.channels, g.dim, g.depth, g.kernel, g.classes}) out.u32(v);
    out.u8(m.encrypted ? 1 : 0);
    m.for_each_tensor([&](const std::string&, std::span<const double> t, TensorRole) { out.f64s(t); });
    return std::move(out).take();
}

ConvMixerModel deserialize_model(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic("CMXM", "model file");
    in.expect_version(model_version, "model file");
    const std::size_t geometry_at = in.offset();
    ModelGeometry g;
    g.patch = in.u32();
    g.channels = in.u32();
    g.dim = in.u32();
    g.depth = in.u32();
    g.kernel = in.u32();
    g.classes = in.u32();
    const std::size_t flag_at = in.offset();
    const std::uint8_t flag = in.u8();
    try {
        g.validate();
    } catch (const DimensionError& e) {
        throw FormatError(FormatError::Reason::inconsistent, geometry_at, std::string("model file: ") + e.what());
    }
    if (flag > 1) {
        throw FormatError(FormatError::Reason::inconsistent, flag_at,
                          "model file: encrypted flag must be 0 or 1");
    }
    if (in.remaining() / 8 < expected_parameters(g)) {
        throw FormatError(FormatError::Reason::truncated, bytes.size(),
                          "model file: truncated at byte offset " + std::to_string(bytes.size()) +
                              ", geometry needs " + std::to_string(expected_parameters(g)) +
                              " parameters");
    }
    ConvMixerModel m(g);
    m.encrypted = flag == 1;
    m.for_each_tensor([&](const std::string&, std::span<double> t, TensorRole) { in.f64s(t); });
    if (in.remaining() != 0) {
        throw FormatError(FormatError::Reason::inconsistent, in.offset(),
                          "model file: " + std::to_string(in.remaining()) + " trailing bytes");
    }
    try {
        m.validate();
    } catch (const Error& e) {
        throw FormatError(FormatError::Reason::inconsistent, flag_at + 1, std::string("model file: ") + e.what());
    }
    return m;
}

void save_model(const std::filesystem::path& path, const ConvMixerModel& m) {
    write_file(path, serialize_model(m));
}

ConvMixerModel load_model(const std::filesystem::path& path) {
    return deserialize_model(read_file(path));
}

}  // namespace orthomix
