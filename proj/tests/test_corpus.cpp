#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "bitscreen/corpus.hpp"
#include "bitscreen/features.hpp"

using namespace bitscreen;
using namespace bitscreen::corpus;

namespace {

std::vector<Family> all_families() {
    std::vector<Family> out;
    for (std::size_t i = 0; i < kFamilyCount; ++i)
        out.push_back(static_cast<Family>(i));
    return out;
}

double segment_entropy(const RawBitstream &raw) {
    const Segment seg = make_segment(extract_payload(raw.bytes));
    return features::feature_vector(seg)[Stat::entropy];
}

} // namespace

TEST_CASE("family profiles are well formed") {
    const auto &reserved = reserved_bytes();
    for (Family f : all_families()) {
        const FamilyProfile &p = profile(f);
        CHECK(std::accumulate(p.base_histogram.begin(), p.base_histogram.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::accumulate(p.symbol_hist.begin(), p.symbol_hist.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(p.min_payload >= 4096);
        CHECK(p.min_payload <= p.max_payload);
        CHECK(p.motifs.size() >= 4);
        for (auto b : reserved)
            CHECK(p.base_histogram[b] == 0.0);
        CHECK(parse_family(family_name(f)) == f);
    }
    CHECK_THROWS_AS(parse_family("AES"), std::invalid_argument);
}

TEST_CASE("gen_benign is deterministic and writes the sync word where expected") {
    const FamilyProfile &p = profile(Family::comms);
    const RawBitstream a = gen_benign(p, 17, 8000);
    const RawBitstream b = gen_benign(p, 17, 8000);
    CHECK(a.bytes == b.bytes);
    CHECK(gen_benign(p, 18, 8000).bytes != a.bytes);

    const auto sync_end = locate_sync(a.bytes);
    REQUIRE(sync_end.has_value());
    CHECK(a.bytes.size() - *sync_end == 8000);
    CHECK(std::equal(kXilinxSync.begin(), kXilinxSync.end(), a.bytes.begin() + static_cast<std::ptrdiff_t>(*sync_end - 4)));
    CHECK(a.bytes[0] == 0x00);
    CHECK(a.bytes[1] == 0x09);

    CHECK_THROWS_AS(gen_benign(p, 1, p.min_payload - 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_benign(p, 1, p.max_payload + 1), std::invalid_argument);
}

TEST_CASE("1 MB payload stays within total variation 0.02 of the base histogram") {
    for (Family f : all_families()) {
        FamilyProfile wide = profile(f);
        wide.max_payload = 1 << 20;
        const RawBitstream raw = gen_benign(wide, 1000 + static_cast<std::uint64_t>(f), 1 << 20);
        const ByteView payload = extract_payload(raw.bytes);
        REQUIRE(payload.size() == (1u << 20));
        std::array<double, 256> counts{};
        for (auto b : payload)
            counts[b] += 1;
        double tv = 0;
        for (std::size_t j = 0; j < 256; ++j)
            tv += std::abs(counts[j] / static_cast<double>(payload.size()) - wide.base_histogram[j]);
        tv /= 2;
        CAPTURE(family_name(f));
        CHECK(tv <= 0.02);
    }
}

TEST_CASE("inject_trojan overwrites one window inside the screened prefix") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const Family f = static_cast<Family>(seed % kFamilyCount);
        const RawBitstream benign = gen_benign(profile(f), seed, 6144 + seed * 200);
        const auto kind = static_cast<TrojanKind>(seed % 3);
        const Injection inj = inject_trojan(benign, kind, seed * 31 + 7);
        CHECK(inj.bitstream.size() == benign.size());
        const std::size_t start = *locate_sync(benign.bytes);
        const std::size_t payload_len = benign.size() - start;
        CHECK(inj.offset >= start);
        CHECK(inj.offset + inj.length <= start + 4096);
        CHECK(static_cast<double>(inj.length) >= 0.005 * static_cast<double>(payload_len) - 1);
        CHECK(static_cast<double>(inj.length) <= 0.02 * static_cast<double>(payload_len));
        for (std::size_t i = 0; i < benign.size(); ++i)
            if (i < inj.offset || i >= inj.offset + inj.length)
                REQUIRE(inj.bitstream.bytes[i] == benign.bytes[i]);

        const auto region = ByteView(inj.bitstream.bytes).subspan(inj.offset, inj.length);
        if (kind == TrojanKind::density) {
            CHECK(std::all_of(region.begin(), region.end(), [&](auto b) { return b == region[0]; }));
            CHECK((region[0] == 0x00 || region[0] == 0xFF));
        } else if (kind == TrojanKind::trigger) {
            const auto &reserved = reserved_bytes();
            for (std::size_t i = 0; i < region.size(); ++i) {
                CHECK(std::binary_search(reserved.begin(), reserved.end(), region[i]));
                if (i >= 4)
                    CHECK(region[i] == region[i - 4]);
            }
        }
    }
}

TEST_CASE("inject_trojan rejects payloads shorter than 4 KiB") {
    RawBitstream tiny;
    tiny.bytes.assign(kXilinxSync.begin(), kXilinxSync.end());
    tiny.bytes.insert(tiny.bytes.end(), 4095, 0x12);
    CHECK_THROWS_AS(inject_trojan(tiny, TrojanKind::density, 1), std::invalid_argument);
}

TEST_CASE("HIGH_ENTROPY injection raises segment entropy on at least 95% of pairs") {
    int raised = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const Family f = static_cast<Family>(seed % kFamilyCount);
        const FamilyProfile &p = profile(f);
        const RawBitstream benign = gen_benign(p, 5000 + seed, p.min_payload + (seed * 97) % (p.max_payload - p.min_payload));
        const Injection inj = inject_trojan(benign, TrojanKind::high_entropy, seed);
        if (segment_entropy(inj.bitstream) > segment_entropy(benign))
            ++raised;
    }
    CHECK(raised >= 190);
}

TEST_CASE("standard corpus has 1,383 entries over seven families and both labels") {
    const CorpusConfig cfg = CorpusConfig::standard();
    CHECK(cfg.total() == 1383);
    CorpusConfig small = CorpusConfig::balanced(3);
    small.workers = 3;
    const GeneratedCorpus corpus = generate_corpus(small, 42);
    CHECK(corpus.manifest.entries.size() == 42);

    std::set<std::string> paths;
    std::set<std::pair<Family, Label>> cells;
    for (std::size_t i = 0; i < corpus.files.size(); ++i) {
        const ManifestEntry &e = corpus.manifest.entries[i];
        paths.insert(e.path);
        cells.insert({e.family, e.label});
        CHECK(e.length == corpus.files[i].size());
        CHECK(generate_entry(e).bytes == corpus.files[i].bytes);
    }
    CHECK(paths.size() == 42);
    CHECK(cells.size() == 2 * kFamilyCount);
}

TEST_CASE("corpus generation is independent of worker count") {
    CorpusConfig one = CorpusConfig::balanced(2);
    CorpusConfig many = one;
    many.workers = 4;
    const GeneratedCorpus a = generate_corpus(one, 9);
    const GeneratedCorpus b = generate_corpus(many, 9);
    CHECK(a.manifest == b.manifest);
    for (std::size_t i = 0; i < a.files.size(); ++i)
        CHECK(a.files[i].bytes == b.files[i].bytes);
}

TEST_CASE("changing the master seed changes bytes but not manifest shape") {
    const CorpusConfig cfg = CorpusConfig::balanced(2);
    const GeneratedCorpus a = generate_corpus(cfg, 1);
    const GeneratedCorpus b = generate_corpus(cfg, 2);
    REQUIRE(a.files.size() == b.files.size());
    std::size_t differing = 0;
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        CHECK(a.manifest.entries[i].path == b.manifest.entries[i].path);
        CHECK(a.manifest.entries[i].family == b.manifest.entries[i].family);
        CHECK(a.manifest.entries[i].label == b.manifest.entries[i].label);
        if (a.files[i].bytes != b.files[i].bytes)
            ++differing;
    }
    CHECK(differing == a.files.size());
}

TEST_CASE("manifest labels match how each file was produced") {
    const GeneratedCorpus corpus = generate_corpus(CorpusConfig::balanced(3), 77);
    for (std::size_t i = 0; i < corpus.files.size(); ++i) {
        ManifestEntry clean = corpus.manifest.entries[i];
        clean.label = Label::benign;
        const bool differs = generate_entry(clean).bytes != corpus.files[i].bytes;
        CHECK(differs == (corpus.manifest.entries[i].label == Label::trojan));
    }
}

TEST_CASE("duplicate output paths are rejected") {
    CorpusConfig cfg;
    cfg.quotas = {{Family::crypto, 1, 1}, {Family::crypto, 1, 0}};
    CHECK_THROWS_AS(generate_corpus(cfg, 1), std::invalid_argument);
}

TEST_CASE("build_corpus writes files and a manifest that round-trips") {
    const auto dir = std::filesystem::temp_directory_path() / "bitscreen_test_corpus";
    std::filesystem::remove_all(dir);
    const CorpusManifest m = build_corpus(CorpusConfig::balanced(1), 5, dir);
    CHECK(read_manifest(dir / "manifest.csv") == m);
    for (const auto &e : m.entries) {
        CHECK(std::filesystem::file_size(dir / e.path) == e.length);
        CHECK(RawBitstream::load(dir / e.path).bytes == generate_entry(e).bytes);
    }
    CHECK(manifest_from_csv(manifest_to_csv(m)) == m);
    CHECK_THROWS_AS(manifest_from_csv("path,family,label,seed,length\na.bit,CRYPTO,benign,1\n"), std::invalid_argument);
    CHECK_THROWS_AS(manifest_from_csv("a.bit,CRYPTO,evil,1,2\n"), std::invalid_argument);
    std::filesystem::remove_all(dir);
}
