#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "bitscreen/features.hpp"
#include "test_support.hpp"

using namespace bitscreen;
using doctest::Approx;

namespace {

// Independent per-slot recomputation in long double, one naive pass per slot.
std::array<long double, kFeatureDim> brute_force_features(ByteView b) {
    std::array<long double, kFeatureDim> out{};
    const long double n = b.size();
    for (int j = 0; j < 256; ++j) {
        long double c = 0;
        for (auto v : b)
            c += v == j;
        out[j] = c / n;
    }
    long double mean = 0;
    for (auto v : b)
        mean += v;
    mean /= n;
    long double m2 = 0, m3 = 0, m4 = 0;
    for (auto v : b) {
        long double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    auto at = [&](Stat s) -> long double & { return out[slot(s)]; };
    at(Stat::mean) = mean;
    at(Stat::variance) = m2;
    at(Stat::std_dev) = std::sqrt(m2);
    at(Stat::skewness) = m2 > 0 ? m3 / std::pow(m2, 1.5L) : 0;
    at(Stat::excess_kurtosis) = m2 > 0 ? m4 / (m2 * m2) - 3 : 0;
    long double h = 0;
    for (int j = 0; j < 256; ++j)
        if (out[j] > 0)
            h -= out[j] * std::log2(out[j]);
    at(Stat::entropy) = h;
    at(Stat::min_byte) = *std::min_element(b.begin(), b.end());
    at(Stat::max_byte) = *std::max_element(b.begin(), b.end());
    at(Stat::range) = at(Stat::max_byte) - at(Stat::min_byte);
    long double changes = 0;
    for (std::size_t i = 1; i < b.size(); ++i)
        changes += b[i] != b[i - 1];
    at(Stat::transition_rate) = b.size() > 1 ? changes / (n - 1) : 0;
    at(Stat::zero_fraction) = out[0];
    at(Stat::ff_fraction) = out[255];
    long double printable = 0;
    for (auto v : b)
        printable += v >= 0x20 && v <= 0x7E;
    at(Stat::printable_fraction) = printable / n;
    long double unique = 0;
    for (int j = 0; j < 256; ++j)
        unique += out[j] > 0;
    at(Stat::unique_fraction) = unique / 256;
    // runs via explicit start/end scanning
    std::size_t i = 0, runs = 0, longest = 0;
    while (i < b.size()) {
        std::size_t k = i;
        while (k < b.size() && b[k] == b[i])
            ++k;
        ++runs;
        longest = std::max(longest, k - i);
        i = k;
    }
    at(Stat::mean_run_length) = n / runs;
    at(Stat::max_run_fraction) = longest / n;
    at(Stat::run_count_fraction) = runs / n;
    at(Stat::dispersion) = mean > 0 ? m2 / mean : 0;
    int mode = 0;
    for (int j = 1; j < 256; ++j)
        if (out[j] > out[mode])
            mode = j;
    at(Stat::mode_byte) = mode / 255.0L;
    at(Stat::mode_frequency) = out[mode];
    long double hi[16] = {}, lo[16] = {};
    for (auto v : b) {
        hi[v >> 4] += 1 / n;
        lo[v & 15] += 1 / n;
    }
    long double hh = 0, hl = 0;
    for (int k = 0; k < 16; ++k) {
        if (hi[k] > 0)
            hh -= hi[k] * std::log2(hi[k]);
        if (lo[k] > 0)
            hl -= lo[k] * std::log2(lo[k]);
    }
    at(Stat::high_nibble_entropy) = hh;
    at(Stat::low_nibble_entropy) = hl;
    return out;
}

void check_close(double got, long double want, double rel) {
    const long double tol = rel * std::max<long double>(1.0L, std::fabs(want));
    CHECK(std::fabs(got - want) <= tol);
}

} // namespace

TEST_CASE("histogram examples") {
    Bytes zeros(500, 0);
    auto h = features::histogram(zeros);
    CHECK(h[0] == 1.0);
    CHECK(std::all_of(h.begin() + 1, h.end(), [](double v) { return v == 0.0; }));

    Bytes four{0, 1, 2, 3};
    h = features::histogram(four);
    for (int j = 0; j < 4; ++j)
        CHECK(h[j] == 0.25);

    CHECK_THROWS_AS(features::histogram(ByteView{}), std::invalid_argument);
}

TEST_CASE("histogram of 10,000 random bytes matches a per-byte count") {
    std::mt19937_64 rng(11);
    Bytes b = testing_support::random_bytes(rng, 10000);
    auto h = features::histogram(b);
    double total = 0;
    for (int j = 0; j < 256; ++j) {
        int c = 0;
        for (auto v : b)
            c += v == j;
        CHECK(h[j] == static_cast<double>(c) / 10000.0);
        CHECK(h[j] == Approx(1.0 / 256).epsilon(0.6));
        total += h[j];
    }
    CHECK(total == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("shannon_entropy examples") {
    std::vector<double> uniform(256, 1.0 / 256);
    CHECK(features::shannon_entropy(uniform) == 8.0);
    std::vector<double> single(256, 0.0);
    single[17] = 1.0;
    CHECK(features::shannon_entropy(single) == 0.0);
    std::vector<double> two(256, 0.0);
    two[0] = two[1] = 0.5;
    CHECK(features::shannon_entropy(two) == 1.0);
    two[2] = -0.1;
    CHECK_THROWS_AS(features::shannon_entropy(two), std::invalid_argument);
}

TEST_CASE("moments examples") {
    Bytes c(33, 200);
    auto m = features::moments(c);
    CHECK(m.mean == 200.0);
    CHECK(m.variance == 0.0);
    CHECK(m.skewness == 0.0);
    CHECK(m.kurtosis == 0.0);

    Bytes ends{0, 255};
    m = features::moments(ends);
    CHECK(m.mean == 127.5);
    CHECK(m.variance == 16256.25);
}

TEST_CASE("moments of 4,096 random bytes match a two-pass computation") {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 20; ++rep) {
        auto shape = static_cast<testing_support::Shape>(rep % static_cast<int>(testing_support::Shape::count));
        Bytes b = testing_support::shaped_bytes(rng, 4096, shape);
        long double mean = 0;
        for (auto v : b)
            mean += v;
        mean /= b.size();
        long double m2 = 0, m3 = 0, m4 = 0;
        for (auto v : b) {
            long double d = v - mean;
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        m2 /= b.size();
        m3 /= b.size();
        m4 /= b.size();
        auto m = features::moments(b);
        check_close(m.mean, mean, 1e-9);
        check_close(m.variance, m2, 1e-9);
        if (m2 > 0) {
            check_close(m.skewness, m3 / std::pow(m2, 1.5L), 1e-9);
            check_close(m.kurtosis, m4 / (m2 * m2) - 3, 1e-9);
        }
    }
}

TEST_CASE("central sums refuse inputs past the exact range") {
    Bytes big(features::kMaxExactMomentLen + 1, 1);
    CHECK_THROWS_AS(features::central_sums(big), std::length_error);
}

TEST_CASE("transition_rate examples") {
    CHECK(features::transition_rate(Bytes(10, 4)) == 0.0);
    CHECK(features::transition_rate(Bytes{9, 3, 9, 3, 9, 3}) == 1.0);
    CHECK(features::transition_rate(Bytes{1, 1, 2, 2}) == 1.0 / 3.0);
    CHECK(features::transition_rate(Bytes{5}) == 0.0);
}

TEST_CASE("run_stats examples and random buffers") {
    auto r = features::run_stats(Bytes{7, 7, 7});
    CHECK(r.run_count == 1);
    CHECK(r.mean_run_length == 3.0);
    CHECK(r.max_run_length == 3);
    r = features::run_stats(Bytes{1, 2, 3});
    CHECK(r.run_count == 3);
    CHECK(r.mean_run_length == 1.0);
    CHECK(r.max_run_length == 1);

    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        Bytes b = testing_support::shaped_bytes(rng, 4096, rep % 2 ? testing_support::Shape::long_runs
                                                                     : testing_support::Shape::sparse_alphabet);
        // run boundaries from a difference mask
        std::size_t runs = 1, longest = 1, cur = 1;
        for (std::size_t i = 1; i < b.size(); ++i) {
            cur = b[i] == b[i - 1] ? cur + 1 : 1;
            runs += b[i] != b[i - 1];
            longest = std::max(longest, cur);
        }
        r = features::run_stats(b);
        CHECK(r.run_count == runs);
        CHECK(r.max_run_length == longest);
        CHECK(r.mean_run_length * r.run_count == Approx(4096.0));
    }
}

TEST_CASE("feature_vector examples") {
    Segment zeros;
    zeros.payload_len = kSegmentLen;
    auto fv = features::feature_vector(zeros);
    CHECK(fv.values[0] == 1.0);
    CHECK(fv[Stat::entropy] == 0.0);
    CHECK(fv[Stat::variance] == 0.0);
    CHECK(fv[Stat::transition_rate] == 0.0);
    CHECK(fv[Stat::zero_fraction] == 1.0);
    CHECK(fv.payload_len == kSegmentLen);

    Segment alt;
    alt.payload_len = kSegmentLen;
    for (std::size_t i = 0; i < kSegmentLen; ++i)
        alt.bytes[i] = i % 2 ? 0xFF : 0x00;
    fv = features::feature_vector(alt);
    CHECK(fv[Stat::entropy] == 1.0);
    CHECK(fv[Stat::transition_rate] == 1.0);
    CHECK(fv[Stat::mean] == 127.5);

    Segment empty;
    CHECK_THROWS_AS(features::feature_vector(empty), std::invalid_argument);
}

TEST_CASE("padding is excluded from features") {
    Bytes payload(1000, 0x41);
    Segment seg = make_segment(payload);
    auto fv = features::feature_vector(seg);
    CHECK(fv[Stat::zero_fraction] == 0.0);
    CHECK(fv.values[0x41] == 1.0);
    CHECK(fv.payload_len == 1000);
}

TEST_CASE("every slot matches an independent brute-force recomputation") {
    std::mt19937_64 rng(14);
    std::uniform_int_distribution<std::size_t> len(1, 4096);
    for (int rep = 0; rep < 60; ++rep) {
        auto shape = static_cast<testing_support::Shape>(rep % static_cast<int>(testing_support::Shape::count));
        Bytes b = testing_support::shaped_bytes(rng, len(rng), shape);
        auto fv = features::feature_vector(make_segment(b));
        auto want = brute_force_features(b);
        for (std::size_t i = 0; i < kFeatureDim; ++i) {
            INFO("slot " << feature_name(i) << " len " << b.size());
            check_close(fv.values[i], want[i], 1e-9);
        }
    }
}

TEST_CASE("property: histogram slots are permutation invariant, sequence slots are not") {
    std::mt19937_64 rng(15);
    bool sequence_changed = false;
    for (int rep = 0; rep < 50; ++rep) {
        Bytes b = testing_support::shaped_bytes(rng, 2000, testing_support::Shape::long_runs);
        Bytes p = b;
        std::shuffle(p.begin(), p.end(), rng);
        auto a = features::feature_vector(b);
        auto c = features::feature_vector(p);
        for (std::size_t j = 0; j < kHistBins; ++j)
            CHECK(a.values[j] == c.values[j]);
        for (Stat s : {Stat::mean, Stat::variance, Stat::std_dev, Stat::min_byte, Stat::max_byte, Stat::range,
                       Stat::zero_fraction, Stat::ff_fraction, Stat::printable_fraction, Stat::unique_fraction,
                       Stat::dispersion, Stat::mode_byte, Stat::mode_frequency})
            CHECK(a[s] == c[s]);
        for (Stat s : {Stat::entropy, Stat::skewness, Stat::excess_kurtosis, Stat::high_nibble_entropy,
                       Stat::low_nibble_entropy})
            CHECK(a[s] == Approx(c[s]).epsilon(1e-12));
        sequence_changed |= a[Stat::transition_rate] != c[Stat::transition_rate] ||
                            a[Stat::max_run_fraction] != c[Stat::max_run_fraction];
    }
    CHECK(sequence_changed);
}

TEST_CASE("property: entropy bounds, mode consistency and determinism") {
    std::mt19937_64 rng(16);
    std::uniform_int_distribution<std::size_t> len(1, 5000);
    for (int rep = 0; rep < 200; ++rep) {
        auto shape = static_cast<testing_support::Shape>(rep % static_cast<int>(testing_support::Shape::count));
        Bytes b = testing_support::shaped_bytes(rng, len(rng), shape);
        auto fv = features::feature_vector(b);
        double sum = 0;
        for (double v : fv.hist())
            sum += v;
        CHECK(sum == Approx(1.0).epsilon(1e-9));
        CHECK(fv[Stat::entropy] >= 0.0);
        CHECK(fv[Stat::entropy] <= 8.0);
        CHECK(fv[Stat::high_nibble_entropy] <= 4.0 + 1e-12);
        CHECK(fv[Stat::low_nibble_entropy] <= 4.0 + 1e-12);
        CHECK(fv[Stat::entropy] <= fv[Stat::high_nibble_entropy] + fv[Stat::low_nibble_entropy] + 1e-12);
        CHECK(fv[Stat::variance] >= 0.0);
        CHECK(fv[Stat::transition_rate] >= 0.0);
        CHECK(fv[Stat::transition_rate] <= 1.0);
        CHECK(fv[Stat::mode_frequency] >= 0.0);
        CHECK(fv[Stat::mode_frequency] <= 1.0);
        const auto mode = static_cast<std::size_t>(std::lround(fv[Stat::mode_byte] * 255.0));
        CHECK(fv.values[mode] == fv[Stat::mode_frequency]);
        auto again = features::feature_vector(b);
        CHECK(std::memcmp(again.values.data(), fv.values.data(), sizeof(double) * kFeatureDim) == 0);
    }
}

TEST_CASE("feature vector binary record") {
    std::mt19937_64 rng(17);
    Bytes b = testing_support::random_bytes(rng, 3000);
    auto fv = features::feature_vector(b);
    Bytes rec = serialize(fv);
    CHECK(rec.size() == 8 + 278 * 8 + 8);
    CHECK(std::string(rec.begin(), rec.begin() + 8) == "BLFV0001");
    // payload_len trailer, little-endian
    CHECK(rec[rec.size() - 8] == (3000 & 0xFF));
    CHECK(rec[rec.size() - 7] == (3000 >> 8));
    CHECK(deserialize_feature_vector(rec) == fv);

    Bytes truncated(rec.begin(), rec.end() - 1);
    CHECK_THROWS_AS(deserialize_feature_vector(truncated), FormatError);
    Bytes bad = rec;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_feature_vector(bad), FormatError);
}

TEST_CASE("feature vector text export") {
    Bytes b{1, 2, 3};
    auto text = to_text(features::feature_vector(b));
    CHECK(text.rfind("hist_000,0\n", 0) == 0);
    CHECK(text.find("\nmean,2\n") != std::string::npos);
    CHECK(text.find("\npayload_len,3\n") != std::string::npos);
    CHECK(std::count(text.begin(), text.end(), '\n') == 279);
    CHECK(feature_name(slot(Stat::low_nibble_entropy)) == "low_nibble_entropy");
}
