#pragma once

// Reference feature extraction. Every slot is computed from the payload bytes
// with exact integer accumulation where the slot is a ratio of counts, so the
// streaming engine can be checked against it slot-for-slot.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "bitscreen/binary_io.hpp"
#include "bitscreen/bitstream.hpp"

namespace bitscreen {

inline constexpr std::size_t kHistBins = 256;
inline constexpr std::size_t kStatCount = 22;
inline constexpr std::size_t kFeatureDim = kHistBins + kStatCount;

__extension__ typedef __int128 Int128;

/// Scalar statistic slots, stored at kHistBins + index.
enum class Stat : std::size_t {
    mean,
    variance,
    std_dev,
    skewness,
    excess_kurtosis,
    entropy,
    min_byte,
    max_byte,
    range,
    transition_rate,
    zero_fraction,
    ff_fraction,
    printable_fraction,
    unique_fraction,
    mean_run_length,
    max_run_fraction,
    run_count_fraction,
    dispersion,
    mode_byte,
    mode_frequency,
    high_nibble_entropy,
    low_nibble_entropy,
};

constexpr std::size_t slot(Stat s) { return kHistBins + static_cast<std::size_t>(s); }

/// True for the three slots the hardware path only approximates.
constexpr bool is_entropy_slot(std::size_t i) {
    return i == slot(Stat::entropy) || i == slot(Stat::high_nibble_entropy) ||
           i == slot(Stat::low_nibble_entropy);
}

struct FeatureVector {
    std::array<double, kFeatureDim> values{};
    std::uint64_t payload_len = 0;

    std::span<const double, kHistBins> hist() const {
        return std::span<const double, kHistBins>(values.data(), kHistBins);
    }
    double operator[](Stat s) const { return values[slot(s)]; }
    double &operator[](Stat s) { return values[slot(s)]; }

    bool operator==(const FeatureVector &) const = default;
};

std::string_view feature_name(std::size_t index);

/// "BLFV0001", 278 little-endian doubles, payload_len as little-endian u64.
Bytes serialize(const FeatureVector &fv);
FeatureVector deserialize_feature_vector(ByteView data);

/// One "name,value" line per slot.
std::string to_text(const FeatureVector &fv);

namespace features {

std::array<std::uint64_t, kHistBins> byte_counts(ByteView bytes);

/// Normalized byte-frequency histogram. Throws on empty input.
std::array<double, kHistBins> histogram(ByteView bytes);

/// Shannon entropy in bits of a probability vector (any number of bins).
/// 0·log 0 is taken as 0; a negative bin throws.
double shannon_entropy(std::span<const double> probabilities);

/// Population moments. Skewness and excess kurtosis are 0 for constant input.
struct Moments {
    double mean = 0;
    double variance = 0;
    double skewness = 0;
    double kurtosis = 0;
};

/// Exact centered power sums of a byte stream: with S1 = Σb and
/// d_i = L·b_i − S1, a_k = Σ d_i^k / L (always an integer).
struct CentralSums {
    std::uint64_t length = 0;
    std::uint64_t sum = 0;
    Int128 a2 = 0;
    Int128 a3 = 0;
    Int128 a4 = 0;
};

/// Longest input for which the centered fourth-power sum fits in 128 bits.
inline constexpr std::size_t kMaxExactMomentLen = std::size_t{1} << 18;

/// Two-pass exact accumulation. Throws std::length_error past kMaxExactMomentLen.
CentralSums central_sums(ByteView bytes);

/// Rational-to-real conversion shared by every producer of CentralSums.
Moments moments_from_central_sums(const CentralSums &sums);

Moments moments(ByteView bytes);

/// Fraction of adjacent pairs that differ; 0 for a single byte.
double transition_rate(ByteView bytes);

struct RunStats {
    std::uint64_t run_count = 0;
    double mean_run_length = 0;
    std::uint64_t max_run_length = 0;
};

RunStats run_stats(ByteView bytes);

/// All 278 slots over `payload`. Throws on empty input.
FeatureVector feature_vector(ByteView payload);

/// Features over the non-padding bytes of a segment.
FeatureVector feature_vector(const Segment &seg);

} // namespace features
} // namespace bitscreen
