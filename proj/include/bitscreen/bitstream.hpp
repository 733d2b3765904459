#pragma once

// Raw bitstream container handling: sync-word search, payload isolation and
// the fixed-length analysis segment fed to both feature extraction and the
// sequence model.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "bitscreen/binary_io.hpp"

namespace bitscreen {

inline constexpr std::size_t kSegmentLen = 4096;

using SyncWord = std::array<std::uint8_t, 4>;

/// 7-series configuration sync word.
inline constexpr SyncWord kXilinxSync{0xAA, 0x99, 0x55, 0x66};

struct RawBitstream {
    Bytes bytes;
    std::string source_id;

    std::size_t size() const { return bytes.size(); }
    ByteView view() const { return bytes; }

    static RawBitstream load(const std::filesystem::path &path);
};

/// How a payload longer than kSegmentLen is reduced to one segment.
enum class SegmentStrategy {
    prefix,  ///< first kSegmentLen bytes
    strided, ///< kSegmentLen bytes at evenly spaced offsets
};

inline constexpr SegmentStrategy kDefaultSegmentStrategy = SegmentStrategy::prefix;

/// Fixed-length analysis window. Bytes past payload_len are zero padding.
struct Segment {
    std::array<std::uint8_t, kSegmentLen> bytes{};
    std::size_t payload_len = 0;

    ByteView payload() const { return ByteView(bytes.data(), payload_len); }
    ByteView all() const { return ByteView(bytes.data(), bytes.size()); }
};

/// Offset of the first byte after the first occurrence of `sync`.
std::optional<std::size_t> locate_sync(ByteView raw, const SyncWord &sync = kXilinxSync);

/// Configuration payload following the sync word, or the whole buffer when no
/// sync word is present. The returned view aliases `raw`.
///
/// Throws std::invalid_argument on an empty buffer ("empty bitstream") and
/// when the sync word ends the buffer ("empty payload").
ByteView extract_payload(ByteView raw, const SyncWord &sync = kXilinxSync);

Segment make_segment(ByteView payload, SegmentStrategy strategy = kDefaultSegmentStrategy);

} // namespace bitscreen
