#include "bitscreen/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace bitscreen {

namespace {

constexpr std::array<std::string_view, kStatCount> kStatNames{
    "mean",
    "variance",
    "std_dev",
    "skewness",
    "excess_kurtosis",
    "entropy",
    "min_byte",
    "max_byte",
    "byte_range",
    "transition_rate",
    "zero_fraction",
    "ff_fraction",
    "printable_fraction",
    "unique_fraction",
    "mean_run_length",
    "max_run_fraction",
    "run_count_fraction",
    "dispersion_index",
    "mode_byte",
    "mode_frequency",
    "high_nibble_entropy",
    "low_nibble_entropy",
};

const std::array<std::string, kHistBins> &hist_names() {
    static const std::array<std::string, kHistBins> names = [] {
        std::array<std::string, kHistBins> out;
        char buf[16];
        for (std::size_t j = 0; j < kHistBins; ++j) {
            std::snprintf(buf, sizeof buf, "hist_%03zu", j);
            out[j] = buf;
        }
        return out;
    }();
    return names;
}

constexpr char kFeatureMagic[] = "BLFV0001";

} // namespace

std::string_view feature_name(std::size_t index) {
    if (index < kHistBins)
        return hist_names()[index];
    if (index < kFeatureDim)
        return kStatNames[index - kHistBins];
    throw std::out_of_range("feature index out of range");
}

Bytes serialize(const FeatureVector &fv) {
    LeWriter w;
    w.magic(kFeatureMagic);
    w.f64s(fv.values);
    w.u64(fv.payload_len);
    return w.take();
}

FeatureVector deserialize_feature_vector(ByteView data) {
    LeReader r(data);
    r.expect_magic(kFeatureMagic);
    FeatureVector fv;
    r.f64s(fv.values);
    fv.payload_len = r.u64();
    r.expect_end();
    return fv;
}

std::string to_text(const FeatureVector &fv) {
    std::string out;
    char buf[64];
    for (std::size_t i = 0; i < kFeatureDim; ++i) {
        std::snprintf(buf, sizeof buf, ",%.17g\n", fv.values[i]);
        out += feature_name(i);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "payload_len,%llu\n",
                  static_cast<unsigned long long>(fv.payload_len));
    out += buf;
    return out;
}

namespace features {

std::array<std::uint64_t, kHistBins> byte_counts(ByteView bytes) {
    std::array<std::uint64_t, kHistBins> counts{};
    for (std::uint8_t b : bytes)
        ++counts[b];
    return counts;
}

std::array<double, kHistBins> histogram(ByteView bytes) {
    if (bytes.empty())
        throw std::invalid_argument("histogram of empty input");
    auto counts = byte_counts(bytes);
    std::array<double, kHistBins> hist{};
    const double len = static_cast<double>(bytes.size());
    for (std::size_t j = 0; j < kHistBins; ++j)
        hist[j] = static_cast<double>(counts[j]) / len;
    return hist;
}

double shannon_entropy(std::span<const double> probabilities) {
    double h = 0.0;
    for (double p : probabilities) {
        if (p < 0.0)
            throw std::invalid_argument("negative histogram bin");
        if (p > 0.0)
            h -= p * std::log2(p);
    }
    return std::max(h, 0.0);
}

CentralSums central_sums(ByteView bytes) {
    if (bytes.size() > kMaxExactMomentLen)
        throw std::length_error("input too long for exact reference moments");
    CentralSums out;
    out.length = bytes.size();
    if (bytes.empty())
        return out;
    for (std::uint8_t b : bytes)
        out.sum += b;
    const auto len = static_cast<std::int64_t>(out.length);
    const auto s1 = static_cast<std::int64_t>(out.sum);
    Int128 p2 = 0, p3 = 0, p4 = 0;
    for (std::uint8_t b : bytes) {
        const Int128 d = len * static_cast<std::int64_t>(b) - s1;
        const Int128 d2 = d * d;
        p2 += d2;
        p3 += d2 * d;
        p4 += d2 * d2;
    }
    out.a2 = p2 / len;
    out.a3 = p3 / len;
    out.a4 = p4 / len;
    return out;
}

Moments moments_from_central_sums(const CentralSums &sums) {
    Moments m;
    if (sums.length == 0)
        return m;
    const double len = static_cast<double>(sums.length);
    m.mean = static_cast<double>(sums.sum) / len;
    if (sums.a2 == 0)
        return m;
    const double a2 = static_cast<double>(sums.a2);
    m.variance = a2 / (len * len);
    m.skewness = static_cast<double>(sums.a3) / (a2 * std::sqrt(a2));
    m.kurtosis = static_cast<double>(sums.a4) / (a2 * a2) - 3.0;
    return m;
}

Moments moments(ByteView bytes) {
    if (bytes.empty())
        throw std::invalid_argument("moments of empty input");
    return moments_from_central_sums(central_sums(bytes));
}

double transition_rate(ByteView bytes) {
    if (bytes.size() < 2)
        return 0.0;
    std::uint64_t changes = 0;
    for (std::size_t i = 1; i < bytes.size(); ++i)
        changes += bytes[i] != bytes[i - 1];
    return static_cast<double>(changes) / static_cast<double>(bytes.size() - 1);
}

RunStats run_stats(ByteView bytes) {
    RunStats rs;
    if (bytes.empty())
        return rs;
    std::uint64_t cur = 0;
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        if (i == 0 || bytes[i] != bytes[i - 1]) {
            ++rs.run_count;
            cur = 1;
        } else {
            ++cur;
        }
        rs.max_run_length = std::max(rs.max_run_length, cur);
    }
    rs.mean_run_length = static_cast<double>(bytes.size()) / static_cast<double>(rs.run_count);
    return rs;
}

FeatureVector feature_vector(ByteView payload) {
    if (payload.empty())
        throw std::invalid_argument("no payload bytes to analyze");

    FeatureVector fv;
    fv.payload_len = payload.size();
    const double len = static_cast<double>(payload.size());

    const auto counts = byte_counts(payload);
    for (std::size_t j = 0; j < kHistBins; ++j)
        fv.values[j] = static_cast<double>(counts[j]) / len;

    const Moments m = moments(payload);
    fv[Stat::mean] = m.mean;
    fv[Stat::variance] = m.variance;
    fv[Stat::std_dev] = std::sqrt(m.variance);
    fv[Stat::skewness] = m.skewness;
    fv[Stat::excess_kurtosis] = m.kurtosis;
    fv[Stat::dispersion] = m.mean > 0.0 ? m.variance / m.mean : 0.0;

    fv[Stat::entropy] = shannon_entropy(fv.hist());
    std::array<double, 16> high{}, low{};
    for (std::size_t j = 0; j < kHistBins; ++j) {
        high[j >> 4] += static_cast<double>(counts[j]);
        low[j & 0xF] += static_cast<double>(counts[j]);
    }
    for (std::size_t k = 0; k < 16; ++k) {
        high[k] /= len;
        low[k] /= len;
    }
    fv[Stat::high_nibble_entropy] = shannon_entropy(high);
    fv[Stat::low_nibble_entropy] = shannon_entropy(low);

    std::size_t lo = 0, hi = kHistBins - 1, mode = 0, unique = 0;
    while (counts[lo] == 0)
        ++lo;
    while (counts[hi] == 0)
        --hi;
    std::uint64_t printable = 0;
    for (std::size_t j = 0; j < kHistBins; ++j) {
        unique += counts[j] != 0;
        if (counts[j] > counts[mode])
            mode = j;
        if (j >= 0x20 && j <= 0x7E)
            printable += counts[j];
    }
    fv[Stat::min_byte] = static_cast<double>(lo);
    fv[Stat::max_byte] = static_cast<double>(hi);
    fv[Stat::range] = static_cast<double>(hi - lo);
    fv[Stat::zero_fraction] = fv.values[0x00];
    fv[Stat::ff_fraction] = fv.values[0xFF];
    fv[Stat::printable_fraction] = static_cast<double>(printable) / len;
    fv[Stat::unique_fraction] = static_cast<double>(unique) / 256.0;
    fv[Stat::mode_byte] = static_cast<double>(mode) / 255.0;
    fv[Stat::mode_frequency] = fv.values[mode];

    fv[Stat::transition_rate] = transition_rate(payload);
    const RunStats rs = run_stats(payload);
    fv[Stat::mean_run_length] = rs.mean_run_length;
    fv[Stat::max_run_fraction] = static_cast<double>(rs.max_run_length) / len;
    fv[Stat::run_count_fraction] = static_cast<double>(rs.run_count) / len;
    return fv;
}

FeatureVector feature_vector(const Segment &seg) {
    if (seg.payload_len == 0)
        throw std::invalid_argument("segment has no payload bytes");
    return feature_vector(seg.payload());
}

} // namespace features
} // namespace bitscreen
