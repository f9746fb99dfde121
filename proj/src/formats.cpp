#include "orthomix/formats.hpp"

#include <cctype>
#include <cmath>
#include <string>

#include "orthomix/error.hpp"

namespace orthomix {

namespace {

constexpr std::uint8_t format_version = 1;

// Keeps header-declared sizes from driving huge allocations before the
// truncation check can fire.
void check_payload(const ByteReader& in, std::size_t values, const char* what) {
    if (in.remaining() / 8 < values) {
        throw FormatError(FormatError::Reason::truncated, in.offset(),
                          std::string(what) + ": truncated input at byte offset " +
                              std::to_string(in.offset()) + " (header declares " +
                              std::to_string(values) + " values)");
    }
}

}  // namespace

Bytes encode_key(const SecretKey& key) {
    ByteWriter out;
    out.magic("OKEY");
    out.u8(format_version);
    out.u64(key.seed);
    out.u32(key.patch);
    out.u32(key.channels);
    return std::move(out).take();
}

SecretKey decode_key(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic("OKEY", "key file");
    in.expect_version(format_version, "key file");
    SecretKey key;
    key.seed = in.u64();
    const std::size_t geometry_at = in.offset();
    key.patch = in.u32();
    key.channels = in.u32();
    if (key.patch == 0 || key.channels == 0) {
        throw FormatError(FormatError::Reason::inconsistent, geometry_at,
                          "key file: patch size and channel count must be positive");
    }
    return key;
}

void save_key(const std::filesystem::path& path, const SecretKey& key) {
    write_file(path, encode_key(key));
}

SecretKey load_key(const std::filesystem::path& path) { return decode_key(read_file(path)); }

Bytes encode_cmxe(const ImageTensor& image, std::uint32_t patch) {
    ByteWriter out;
    out.magic("CMXE");
    out.u8(format_version);
    out.u32(static_cast<std::uint32_t>(image.height()));
    out.u32(static_cast<std::uint32_t>(image.width()));
    out.u32(static_cast<std::uint32_t>(image.channels()));
    out.u32(patch);
    out.u8(static_cast<std::uint8_t>(image.kind()));
    out.f64s(image.data());
    return std::move(out).take();
}

CmxeImage decode_cmxe(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic("CMXE", "image file");
    in.expect_version(format_version, "image file");
    const std::size_t header_at = in.offset();
    const std::size_t h = in.u32();
    const std::size_t w = in.u32();
    const std::size_t c = in.u32();
    const std::uint32_t p = in.u32();
    const std::size_t kind_at = in.offset();
    const std::uint8_t kind = in.u8();
    if (kind > 1) {
        throw FormatError(FormatError::Reason::inconsistent, kind_at,
                          "image file: unknown kind byte " + std::to_string(kind));
    }
    if (p == 0 || h % p != 0 || w % p != 0 || c == 0) {
        throw FormatError(FormatError::Reason::inconsistent, header_at,
                          "image file: geometry " + std::to_string(h) + "x" + std::to_string(w) +
                              "x" + std::to_string(c) + " is inconsistent with patch " +
                              std::to_string(p));
    }
    check_payload(in, h * w * c, "image file");
    ImageTensor image(h, w, c, static_cast<ImageKind>(kind));
    in.f64s(image.data());
    if (!image.valid()) {
        throw FormatError(FormatError::Reason::inconsistent, kind_at,
                          kind == 0 ? "image file: plain image has values outside [0, 1]"
                                    : "image file: non-finite pixel values");
    }
    return {std::move(image), p};
}

void save_cmxe(const std::filesystem::path& path, const ImageTensor& image, std::uint32_t patch) {
    write_file(path, encode_cmxe(image, patch));
}

CmxeImage load_cmxe(const std::filesystem::path& path) { return decode_cmxe(read_file(path)); }

ImageTensor decode_ppm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto fail = [&](const std::string& why) -> FormatError {
        return FormatError(FormatError::Reason::inconsistent, pos, "ppm: " + why);
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        throw FormatError(FormatError::Reason::bad_magic, 0, "ppm: expected binary P6 header");
    }
    pos = 2;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&]() -> std::size_t {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw fail("malformed header");
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
            if (v > (1u << 24)) throw fail("header value too large");
            ++pos;
        }
        return v;
    };
    const std::size_t width = number();
    const std::size_t height = number();
    const std::size_t maxval = number();
    if (maxval != 255) throw fail("only 8-bit images (maxval 255) are supported");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("malformed header");
    ++pos;
    const std::size_t count = width * height * 3;
    if (bytes.size() - pos < count) {
        throw FormatError(FormatError::Reason::truncated, bytes.size(),
                          "ppm: truncated pixel data at byte offset " + std::to_string(bytes.size()));
    }
    ImageTensor image(height, width, 3, ImageKind::plain);
    auto data = image.data();
    for (std::size_t i = 0; i < count; ++i) data[i] = bytes[pos + i] / 255.0;
    return image;
}

Bytes encode_ppm(const ImageTensor& image) {
    if (image.channels() != 3) throw DimensionError("ppm: image must have 3 channels");
    for (double v : image.data()) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error("ppm: pixel value outside [0, 1]");
    }
    ByteWriter out;
    out.magic("P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n");
    for (double v : image.data()) out.u8(static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5)));
    return std::move(out).take();
}

ImageTensor load_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

void save_ppm(const std::filesystem::path& path, const ImageTensor& image) {
    write_file(path, encode_ppm(image));
}

ImageTensor load_plain_image(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
    CmxeImage cmxe = decode_cmxe(bytes);
    if (cmxe.image.kind() != ImageKind::plain) {
        throw KindError(path.string() + " holds an encrypted image, expected a plain one");
    }
    return std::move(cmxe.image);
}

}  // namespace orthomix
