#pragma once

// Little-endian byte buffers shared by every on-disk and on-wire format.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "orthomix/error.hpp"

namespace orthomix {

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void f64s(std::span<const double> vs) {
        buf_.reserve(buf_.size() + 8 * vs.size());
        for (double v : vs) f64(v);
    }
    void raw(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
    void magic(std::string_view m) { buf_.insert(buf_.end(), m.begin(), m.end()); }

    const Bytes& bytes() const& noexcept { return buf_; }
    Bytes take() && noexcept { return std::move(buf_); }

private:
    Bytes buf_;
};

/// Bounds-checked reader; running past the end throws a truncation
/// FormatError carrying the offset of the failed read.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    std::uint8_t u8() { return take(1)[0]; }
    std::uint32_t u32() {
        auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        auto b = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    void f64s(std::span<double> out) {
        if (remaining() / 8 < out.size()) truncated(out.size() * 8);
        for (double& v : out) v = f64();
    }
    std::span<const std::uint8_t> raw(std::size_t n) { return take(n); }

    /// Consumes `m.size()` bytes and throws bad_magic if they differ.
    void expect_magic(std::string_view m, std::string_view what);
    /// Consumes one version byte and throws bad_version unless it equals `v`.
    void expect_version(std::uint8_t v, std::string_view what);

private:
    std::span<const std::uint8_t> take(std::size_t n) {
        if (remaining() < n) truncated(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    [[noreturn]] void truncated(std::size_t wanted) const;

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace orthomix
