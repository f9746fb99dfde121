#include "orthomix/cipher.hpp"

#include <string>
#include <utility>

#include "orthomix/error.hpp"
#include "orthomix/kernels.hpp"
#include "orthomix/rng.hpp"

namespace orthomix {

namespace {

void check_geometry(const ImageTensor& x, std::size_t patch, std::size_t channels,
                    const char* what) {
    if (patch == 0 || x.height() % patch != 0 || x.width() % patch != 0) {
        throw DimensionError(std::string(what) + ": image " + std::to_string(x.height()) + "x" +
                             std::to_string(x.width()) + " is not divisible by patch size " +
                             std::to_string(patch));
    }
    if (x.channels() != channels) {
        throw DimensionError(std::string(what) + ": image has " + std::to_string(x.channels()) +
                             " channels, key expects " + std::to_string(channels));
    }
}

ImageTensor apply_block_matrix(const ImageTensor& x, const OrthoMatrix& a, const Matrix& m,
                               ImageKind out_kind, const char* what) {
    check_geometry(x, a.patch(), a.channels(), what);
    const Matrix blocks = blockify(x, a.patch());
    Matrix out(blocks.rows(), blocks.cols());
    kernels::gemm(blocks.data(), m.data(), out.data(), blocks.rows(), blocks.cols(), m.cols());
    return deblockify(out, x.height(), x.width(), x.channels(), a.patch(), out_kind);
}

}  // namespace

OrthoMatrix OrthoMatrix::from_matrix(Matrix a, std::uint32_t patch, std::uint32_t channels,
                                     double tolerance) {
    const std::size_t n = static_cast<std::size_t>(patch) * patch * channels;
    if (a.rows() != n || a.cols() != n) {
        throw DimensionError("orthogonal matrix must be " + std::to_string(n) + "x" +
                             std::to_string(n) + " for patch " + std::to_string(patch) +
                             " and " + std::to_string(channels) + " channels");
    }
    const double defect = orthogonality_defect(a);
    if (!(defect <= tolerance)) {
        throw Error("matrix is not orthogonal (defect " + std::to_string(defect) + ")");
    }
    return OrthoMatrix(std::move(a), patch, channels);
}

OrthoMatrix generate_orthogonal(const SecretKey& key) {
    const std::size_t n = key.dimension();
    if (n == 0) throw DimensionError("secret key has an empty block geometry");
    SplitMix64 rng(key.seed);
    for (;;) {
        Matrix r(n, n);
        for (double& v : r.data()) v = rng.uniform();
        try {
            return OrthoMatrix(modified_gram_schmidt(r), key.patch, key.channels);
        } catch (const DegenerateError&) {
            // Redraw from the advanced state.
        }
    }
}

Matrix blockify(const ImageTensor& x, std::size_t patch) {
    check_geometry(x, patch, x.channels(), "blockify");
    const std::size_t c = x.channels();
    const std::size_t grid_w = x.width() / patch;
    const std::size_t grid_h = x.height() / patch;
    Matrix blocks(grid_h * grid_w, patch * patch * c);
    for (std::size_t by = 0; by < grid_h; ++by) {
        for (std::size_t bx = 0; bx < grid_w; ++bx) {
            auto row = blocks.row(by * grid_w + bx);
            for (std::size_t h = 0; h < patch; ++h)
                for (std::size_t w = 0; w < patch; ++w)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        row[(h * patch + w) * c + ch] = x.at(by * patch + h, bx * patch + w, ch);
        }
    }
    return blocks;
}

ImageTensor deblockify(const Matrix& blocks, std::size_t height, std::size_t width,
                       std::size_t channels, std::size_t patch, ImageKind kind) {
    if (patch == 0 || height % patch != 0 || width % patch != 0) {
        throw DimensionError("deblockify: image size is not divisible by the patch size");
    }
    const std::size_t grid_w = width / patch;
    const std::size_t grid_h = height / patch;
    if (blocks.rows() != grid_h * grid_w || blocks.cols() != patch * patch * channels) {
        throw DimensionError("deblockify: got " + std::to_string(blocks.rows()) + " blocks of length " +
                             std::to_string(blocks.cols()) + ", expected " +
                             std::to_string(grid_h * grid_w) + " of length " +
                             std::to_string(patch * patch * channels));
    }
    ImageTensor x(height, width, channels, kind);
    for (std::size_t by = 0; by < grid_h; ++by) {
        for (std::size_t bx = 0; bx < grid_w; ++bx) {
            const auto row = blocks.row(by * grid_w + bx);
            for (std::size_t h = 0; h < patch; ++h)
                for (std::size_t w = 0; w < patch; ++w)
                    for (std::size_t ch = 0; ch < channels; ++ch)
                        x.at(by * patch + h, bx * patch + w, ch) = row[(h * patch + w) * channels + ch];
        }
    }
    return x;
}

ImageTensor encrypt_image(const ImageTensor& x, const OrthoMatrix& a) {
    if (x.kind() != ImageKind::plain) throw KindError("encrypt_image: image is already encrypted");
    return apply_block_matrix(x, a, a.matrix(), ImageKind::encrypted, "encrypt_image");
}

ImageTensor decrypt_image(const ImageTensor& xhat, const OrthoMatrix& a) {
    if (xhat.kind() != ImageKind::encrypted) throw KindError("decrypt_image: image is not encrypted");
    return apply_block_matrix(xhat, a, a.inverse(), ImageKind::plain, "decrypt_image");
}

ConventionalKey derive_conventional_key(const SecretKey& key) {
    const std::size_t n = key.dimension();
    if (n == 0) throw DimensionError("secret key has an empty block geometry");
    ConventionalKey ck{key.patch, key.channels, std::vector<std::uint32_t>(n), std::vector<std::uint8_t>(n)};
    for (std::size_t i = 0; i < n; ++i) ck.permutation[i] = static_cast<std::uint32_t>(i);
    SplitMix64 rng(key.seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::swap(ck.permutation[i], ck.permutation[rng.below(i + 1)]);
    }
    for (auto& f : ck.flip) f = rng.uniform() >= 0.0 ? 1 : 0;
    return ck;
}

ImageTensor conventional_encrypt(const ImageTensor& x, const ConventionalKey& key) {
    if (x.kind() != ImageKind::plain) throw KindError("conventional_encrypt: image is already encrypted");
    check_geometry(x, key.patch, key.channels, "conventional_encrypt");
    const std::size_t n = static_cast<std::size_t>(key.patch) * key.patch * key.channels;
    if (key.permutation.size() != n || key.flip.size() != n) {
        throw DimensionError("conventional_encrypt: key pattern does not match its geometry");
    }
    const Matrix blocks = blockify(x, key.patch);
    Matrix out(blocks.rows(), n);
    for (std::size_t b = 0; b < blocks.rows(); ++b) {
        const auto in = blocks.row(b);
        auto o = out.row(b);
        for (std::size_t j = 0; j < n; ++j) {
            const double v = in[key.permutation[j]];
            o[j] = key.flip[j] ? 1.0 - v : v;
        }
    }
    return deblockify(out, x.height(), x.width(), x.channels(), key.patch, ImageKind::encrypted);
}

ImageTensor conventional_encrypt(const ImageTensor& x, const SecretKey& key) {
    return conventional_encrypt(x, derive_conventional_key(key));
}

ImageTensor conventional_decrypt(const ImageTensor& xhat, const ConventionalKey& key) {
    if (xhat.kind() != ImageKind::encrypted) throw KindError("conventional_decrypt: image is not encrypted");
    check_geometry(xhat, key.patch, key.channels, "conventional_decrypt");
    const std::size_t n = static_cast<std::size_t>(key.patch) * key.patch * key.channels;
    const Matrix blocks = blockify(xhat, key.patch);
    Matrix out(blocks.rows(), n);
    for (std::size_t b = 0; b < blocks.rows(); ++b) {
        const auto in = blocks.row(b);
        auto o = out.row(b);
        for (std::size_t j = 0; j < n; ++j) {
            o[key.permutation[j]] = key.flip[j] ? 1.0 - in[j] : in[j];
        }
    }
    return deblockify(out, xhat.height(), xhat.width(), xhat.channels(), key.patch, ImageKind::plain);
}

}  // namespace orthomix
