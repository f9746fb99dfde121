#include "orthomix/bytes.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

namespace orthomix {

void ByteReader::expect_magic(std::string_view m, std::string_view what) {
    const std::size_t at = pos_;
    auto got = take(m.size());
    if (!std::equal(m.begin(), m.end(), got.begin())) {
        throw FormatError(FormatError::Reason::bad_magic, at,
                          std::string(what) + ": bad magic, expected \"" + std::string(m) + "\"");
    }
}

void ByteReader::expect_version(std::uint8_t v, std::string_view what) {
    const std::size_t at = pos_;
    const auto got = u8();
    if (got != v) {
        throw FormatError(FormatError::Reason::bad_version, at,
                          std::string(what) + ": unsupported version " + std::to_string(got));
    }
}

void ByteReader::truncated(std::size_t wanted) const {
    throw FormatError(FormatError::Reason::truncated, pos_,
                      "truncated input at byte offset " + std::to_string(pos_) + " (needed " +
                          std::to_string(wanted) + " more bytes, " + std::to_string(remaining()) +
                          " available)");
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("error reading " + path.string());
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("error writing " + path.string());
}

}  // namespace orthomix
