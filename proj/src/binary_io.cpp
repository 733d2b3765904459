#include "bitscreen/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace bitscreen {

namespace {

void put_le(Bytes &buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(ByteView b) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
        v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
}

} // namespace

void LeWriter::magic(std::string_view tag) {
    buf_.insert(buf_.end(), tag.begin(), tag.end());
}

void LeWriter::u64(std::uint64_t v) { put_le(buf_, v); }

void LeWriter::i64(std::int64_t v) { put_le(buf_, static_cast<std::uint64_t>(v)); }

void LeWriter::f64(double v) { put_le(buf_, std::bit_cast<std::uint64_t>(v)); }

void LeWriter::f64s(std::span<const double> values) {
    for (double v : values)
        f64(v);
}

ByteView LeReader::take(std::size_t n) {
    if (remaining() < n)
        throw FormatError("truncated record");
    ByteView out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
}

void LeReader::expect_magic(std::string_view tag) {
    ByteView got = take(tag.size());
    if (std::memcmp(got.data(), tag.data(), tag.size()) != 0)
        throw FormatError("bad magic, expected " + std::string(tag));
}

std::uint64_t LeReader::u64() { return get_le(take(8)); }

std::int64_t LeReader::i64() { return static_cast<std::int64_t>(get_le(take(8))); }

double LeReader::f64() { return std::bit_cast<double>(get_le(take(8))); }

void LeReader::f64s(std::span<double> out) {
    for (double &v : out)
        v = f64();
}

void LeReader::expect_end() const {
    if (remaining() != 0)
        throw FormatError("trailing bytes after record");
}

Bytes read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw std::runtime_error("read error on " + path.string());
    return data;
}

void write_file(const std::filesystem::path &path, ByteView data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot create " + path.string());
    out.write(reinterpret_cast<const char *>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out)
        throw std::runtime_error("write error on " + path.string());
}

} // namespace bitscreen
