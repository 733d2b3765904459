#include "bitscreen/bitstream.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace bitscreen {

RawBitstream RawBitstream::load(const std::filesystem::path &path) {
    return RawBitstream{read_file(path), path.string()};
}

std::optional<std::size_t> locate_sync(ByteView raw, const SyncWord &sync) {
    auto it = std::search(raw.begin(), raw.end(),
                          std::boyer_moore_horspool_searcher(sync.begin(), sync.end()));
    if (it == raw.end())
        return std::nullopt;
    return static_cast<std::size_t>(it - raw.begin()) + sync.size();
}

ByteView extract_payload(ByteView raw, const SyncWord &sync) {
    if (raw.empty())
        throw std::invalid_argument("empty bitstream");
    auto offset = locate_sync(raw, sync);
    if (!offset)
        return raw;
    if (*offset == raw.size())
        throw std::invalid_argument("empty payload");
    return raw.subspan(*offset);
}

Segment make_segment(ByteView payload, SegmentStrategy strategy) {
    if (payload.empty())
        throw std::invalid_argument("empty payload");
    Segment seg;
    if (payload.size() <= kSegmentLen) {
        std::copy(payload.begin(), payload.end(), seg.bytes.begin());
        seg.payload_len = payload.size();
        return seg;
    }
    seg.payload_len = kSegmentLen;
    switch (strategy) {
    case SegmentStrategy::prefix:
        std::copy_n(payload.begin(), kSegmentLen, seg.bytes.begin());
        break;
    case SegmentStrategy::strided:
        for (std::size_t i = 0; i < kSegmentLen; ++i)
            seg.bytes[i] = payload[i * payload.size() / kSegmentLen];
        break;
    }
    return seg;
}

} // namespace bitscreen
