#include "radsel/binary_io.hpp"

#include "radsel/error.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace radsel::io {

namespace {

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = ((v & 0xffU) << 24) | ((v & 0xff00U) << 8) | ((v >> 8) & 0xff00U) | (v >> 24);
    }
    return v;
}

std::vector<char> read_bytes(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

void write_f32(const std::filesystem::path &path, std::span<const double> values) {
    std::vector<std::uint32_t> words(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        words[i] = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char *>(words.data()),
              static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
    if (!out) {
        throw FormatError("short write to " + path.string());
    }
}

std::vector<double> read_f32(const std::filesystem::path &path, std::size_t expected_count) {
    const std::vector<char> bytes = read_bytes(path);
    if (bytes.size() % 4 != 0) {
        throw FormatError("truncated float32 file " + path.string());
    }
    const std::size_t count = bytes.size() / 4;
    if (expected_count != std::numeric_limits<std::size_t>::max() && count != expected_count) {
        throw FormatError("file " + path.string() + " holds " + std::to_string(count) + " values, expected " +
                          std::to_string(expected_count));
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t w;
        std::memcpy(&w, bytes.data() + 4 * i, 4);
        values[i] = static_cast<double>(std::bit_cast<float>(to_le(w)));
    }
    return values;
}

std::string read_text(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out << text;
}

std::uint32_t file_crc32(const std::filesystem::path &path) {
    const std::vector<char> bytes = read_bytes(path);
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef *>(bytes.data()), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

} // namespace radsel::io
