#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bitscreen {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Raised when a serialized record (feature vector, checkpoint) is malformed.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Appends little-endian fields to a growing byte buffer.
class LeWriter {
public:
    void magic(std::string_view tag);
    void u64(std::uint64_t v);
    void i64(std::int64_t v);
    void f64(double v);
    void f64s(std::span<const double> values);

    const Bytes &bytes() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

/// Cursor over a little-endian record. Every read is bounds-checked.
class LeReader {
public:
    explicit LeReader(ByteView data) : data_(data) {}

    void expect_magic(std::string_view tag);
    std::uint64_t u64();
    std::int64_t i64();
    double f64();
    void f64s(std::span<double> out);

    std::size_t remaining() const { return data_.size() - pos_; }
    void expect_end() const;

private:
    ByteView take(std::size_t n);

    ByteView data_;
    std::size_t pos_ = 0;
};

Bytes read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, ByteView data);

} // namespace bitscreen
