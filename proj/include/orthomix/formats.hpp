#pragma once

// Key (OKEY), image (CMXE) and PPM codecs. All multi-byte integers and
// floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <span>

#include "orthomix/bytes.hpp"
#include "orthomix/cipher.hpp"
#include "orthomix/image.hpp"

namespace orthomix {

/// "OKEY", version 1, seed u64, patch u32, channels u32. Only the seed is
/// stored; the matrix is re-derived on load.
Bytes encode_key(const SecretKey& key);
SecretKey decode_key(std::span<const std::uint8_t> bytes);
void save_key(const std::filesystem::path& path, const SecretKey& key);
SecretKey load_key(const std::filesystem::path& path);

/// An image together with the patch size it was (or will be) encrypted with.
struct CmxeImage {
    ImageTensor image;
    std::uint32_t patch = 1;
};

/// "CMXE", version 1, H W C p (u32 each), kind byte (0 plain, 1 encrypted),
/// then H*W*C f64 in (row, column, channel) order.
Bytes encode_cmxe(const ImageTensor& image, std::uint32_t patch);
CmxeImage decode_cmxe(std::span<const std::uint8_t> bytes);
void save_cmxe(const std::filesystem::path& path, const ImageTensor& image, std::uint32_t patch);
CmxeImage load_cmxe(const std::filesystem::path& path);

/// Binary P6 with maxval 255. Values are scaled by 1/255 on read.
ImageTensor decode_ppm(std::span<const std::uint8_t> bytes);
/// Requires a 3-channel image with values in [0, 1]; quantizes with
/// round-half-up.
Bytes encode_ppm(const ImageTensor& image);
ImageTensor load_ppm(const std::filesystem::path& path);
void save_ppm(const std::filesystem::path& path, const ImageTensor& image);

/// Loads a plain image from either a PPM or a plain-kind CMXE file,
/// dispatching on the leading magic bytes.
ImageTensor load_plain_image(const std::filesystem::path& path);

}  // namespace orthomix
