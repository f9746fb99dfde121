#pragma once

#include <cstdint>
#include <vector>

#include "orthomix/image.hpp"
#include "orthomix/matrix.hpp"

namespace orthomix {

/// The only secret: a seed plus the block geometry it applies to.
struct SecretKey {
    std::uint64_t seed = 0;
    std::uint32_t patch = 1;
    std::uint32_t channels = 1;

    /// Block vector length p^2 * C.
    std::size_t dimension() const noexcept {
        return static_cast<std::size_t>(patch) * patch * channels;
    }

    bool operator==(const SecretKey&) const = default;
};

/// An n x n orthogonal matrix bound to a block geometry. Its inverse is its
/// transpose.
class OrthoMatrix {
public:
    /// Wraps an arbitrary matrix, checking that it is n x n with n = p^2 C
    /// and has orthogonality defect at most `tolerance`.
    static OrthoMatrix from_matrix(Matrix a, std::uint32_t patch, std::uint32_t channels,
                                   double tolerance = 1e-10);

    std::size_t n() const noexcept { return a_.rows(); }
    std::uint32_t patch() const noexcept { return patch_; }
    std::uint32_t channels() const noexcept { return channels_; }
    const Matrix& matrix() const noexcept { return a_; }
    Matrix inverse() const { return a_.transposed(); }

private:
    OrthoMatrix(Matrix a, std::uint32_t patch, std::uint32_t channels)
        : a_(std::move(a)), patch_(patch), channels_(channels) {}

    Matrix a_;
    std::uint32_t patch_ = 1;
    std::uint32_t channels_ = 1;

    friend OrthoMatrix generate_orthogonal(const SecretKey& key);
};

/// Seeds SplitMix64 with key.seed, fills R row-major with uniform [-1, 1)
/// draws and orthonormalizes its rows. A degenerate R is discarded and a
/// fresh one drawn from the advanced generator.
OrthoMatrix generate_orthogonal(const SecretKey& key);

/// Splits x into (H/p)(W/p) blocks in raster order, one block per row of
/// the result. Within a block the element (h, w, c) sits at (h p + w) C + c.
/// Throws DimensionError when H or W is not divisible by p.
Matrix blockify(const ImageTensor& x, std::size_t patch);

/// Inverse of blockify.
ImageTensor deblockify(const Matrix& blocks, std::size_t height, std::size_t width,
                       std::size_t channels, std::size_t patch, ImageKind kind = ImageKind::plain);

/// Right-multiplies every block vector by A.
ImageTensor encrypt_image(const ImageTensor& x, const OrthoMatrix& a);

/// Right-multiplies every block vector by A^T.
ImageTensor decrypt_image(const ImageTensor& xhat, const OrthoMatrix& a);

/// Block-wise pixel shuffling plus negative-positive transform: the
/// conventional learnable-encryption baseline. One pattern, shared by all
/// blocks.
struct ConventionalKey {
    std::uint32_t patch = 1;
    std::uint32_t channels = 1;
    /// out[j] = in[permutation[j]] within a block.
    std::vector<std::uint32_t> permutation;
    /// Positions (after shuffling) mapped v -> 1 - v.
    std::vector<std::uint8_t> flip;
};

/// Fisher-Yates permutation followed by one coin per position, both drawn
/// from SplitMix64 seeded with key.seed.
ConventionalKey derive_conventional_key(const SecretKey& key);

ImageTensor conventional_encrypt(const ImageTensor& x, const ConventionalKey& key);
ImageTensor conventional_encrypt(const ImageTensor& x, const SecretKey& key);
ImageTensor conventional_decrypt(const ImageTensor& xhat, const ConventionalKey& key);

}  // namespace orthomix
