#include "bitscreen/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace bitscreen::corpus {

namespace {

constexpr std::array<std::string_view, kFamilyCount> kFamilyNames{
    "CRYPTO", "COMMS", "MCU_CPU", "BUS_DISPLAY", "ITC99", "ISCAS89", "ISCAS85"};

constexpr std::size_t kReservedCount = 40;
constexpr double kJitterConcentration = 1e5;
constexpr std::size_t kMinPayload = 6 * 1024;
constexpr std::size_t kMaxPayload = 24 * 1024;
constexpr double kMinTrojanFraction = 0.005;
constexpr double kMaxTrojanFraction = 0.02;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::vector<std::uint8_t> make_reserved() {
    std::vector<std::uint8_t> pool;
    for (int b = 1; b < 255; ++b)
        pool.push_back(static_cast<std::uint8_t>(b));
    std::mt19937_64 rng(0x7E5E7ULL);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(kReservedCount);
    std::sort(pool.begin(), pool.end());
    return pool;
}

FamilyProfile make_profile(Family f) {
    FamilyProfile p;
    p.family = f;
    p.min_payload = kMinPayload;
    p.max_payload = kMaxPayload;
    std::mt19937_64 rng(0xB17F00DULL + static_cast<std::uint64_t>(f) * 7919);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const auto &reserved = reserved_bytes();
    std::vector<std::uint8_t> available;
    for (int b = 1; b < 255; ++b)
        if (!std::binary_search(reserved.begin(), reserved.end(), static_cast<std::uint8_t>(b)))
            available.push_back(static_cast<std::uint8_t>(b));
    std::shuffle(available.begin(), available.end(), rng);
    const std::size_t support = 40 + static_cast<std::size_t>(unit(rng) * 70);
    available.resize(support);

    const double zero_mass = 0.18 + 0.2 * unit(rng);
    const double ff_mass = 0.01 + 0.05 * unit(rng);
    const double floor = 0.0025;
    const double rest = 1.0 - zero_mass - ff_mass - floor * static_cast<double>(support);
    std::gamma_distribution<double> shape(0.7, 1.0);
    std::vector<double> g(support);
    for (auto &v : g)
        v = shape(rng);
    const double gsum = std::accumulate(g.begin(), g.end(), 0.0);
    p.symbol_hist[0x00] = zero_mass;
    p.symbol_hist[0xFF] = ff_mass;
    for (std::size_t i = 0; i < support; ++i)
        p.symbol_hist[available[i]] = floor + rest * g[i] / gsum;

    std::vector<std::uint8_t> alphabet = available;
    alphabet.push_back(0x00);
    alphabet.push_back(0xFF);
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::uniform_int_distribution<std::size_t> motif_count(4, 6), motif_len(4, 8);
    const std::size_t motifs = motif_count(rng);
    for (std::size_t m = 0; m < motifs; ++m) {
        Bytes motif(motif_len(rng));
        for (auto &b : motif)
            b = alphabet[pick(rng)];
        p.motifs.push_back(std::move(motif));
    }
    p.motif_rate = 0.01 + 0.03 * unit(rng);

    // Expected composition per token, normalized by expected bytes per token.
    double motif_bytes = 0;
    std::array<double, 256> motif_counts{};
    for (const auto &m : p.motifs) {
        motif_bytes += static_cast<double>(m.size());
        for (auto b : m)
            motif_counts[b] += 1.0;
    }
    const double nm = static_cast<double>(p.motifs.size());
    const double per_token = (1 - p.motif_rate) + p.motif_rate * motif_bytes / nm;
    for (std::size_t j = 0; j < 256; ++j)
        p.base_histogram[j] = ((1 - p.motif_rate) * p.symbol_hist[j] + p.motif_rate * motif_counts[j] / nm) / per_token;
    return p;
}

void put_be(Bytes &out, std::uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_field(Bytes &out, char key, const std::string &text) {
    out.push_back(static_cast<std::uint8_t>(key));
    put_be(out, text.size() + 1, 2);
    out.insert(out.end(), text.begin(), text.end());
    out.push_back(0);
}

/// .bit-style container header ending just before the sync word.
Bytes make_header(const FamilyProfile &p, std::uint64_t seed, std::size_t payload_len) {
    Bytes h{0x00, 0x09, 0x0F, 0xF0, 0x0F, 0xF0, 0x0F, 0xF0, 0x0F, 0xF0, 0x00, 0x00, 0x01};
    char design[96];
    std::snprintf(design, sizeof design, "%s_%016llx;UserID=0XFFFFFFFF;Version=2023.2",
                  std::string(family_name(p.family)).c_str(), static_cast<unsigned long long>(seed));
    put_field(h, 'a', design);
    put_field(h, 'b', "7z020clg400");
    put_field(h, 'c', "2023/11/02");
    put_field(h, 'd', "12:00:00");
    constexpr std::size_t kPreamble = 32 + 8 + 8 + 4;
    h.push_back('e');
    put_be(h, kPreamble + payload_len, 4);
    h.insert(h.end(), 32, 0xFF);                                          // dummy words
    h.insert(h.end(), {0x00, 0x00, 0x00, 0xBB, 0x11, 0x22, 0x00, 0x44}); // bus width detect
    h.insert(h.end(), 8, 0xFF);
    return h;
}

} // namespace

std::string_view family_name(Family f) { return kFamilyNames[static_cast<std::size_t>(f)]; }

Family parse_family(std::string_view name) {
    for (std::size_t i = 0; i < kFamilyCount; ++i)
        if (kFamilyNames[i] == name)
            return static_cast<Family>(i);
    throw std::invalid_argument("unknown family: " + std::string(name));
}

std::string_view label_name(Label l) { return l == Label::benign ? "benign" : "trojan"; }

Label parse_label(std::string_view name) {
    if (name == "benign")
        return Label::benign;
    if (name == "trojan")
        return Label::trojan;
    throw std::invalid_argument("unknown label: " + std::string(name));
}

std::string_view trojan_kind_name(TrojanKind k) {
    switch (k) {
    case TrojanKind::high_entropy:
        return "HIGH_ENTROPY";
    case TrojanKind::trigger:
        return "TRIGGER";
    case TrojanKind::density:
        return "DENSITY";
    }
    return "?";
}

const std::vector<std::uint8_t> &reserved_bytes() {
    static const std::vector<std::uint8_t> reserved = make_reserved();
    return reserved;
}

const FamilyProfile &profile(Family f) {
    static const std::array<FamilyProfile, kFamilyCount> profiles = [] {
        std::array<FamilyProfile, kFamilyCount> out;
        for (std::size_t i = 0; i < kFamilyCount; ++i)
            out[i] = make_profile(static_cast<Family>(i));
        return out;
    }();
    return profiles[static_cast<std::size_t>(f)];
}

RawBitstream gen_benign(const FamilyProfile &p, std::uint64_t seed, std::size_t payload_len) {
    if (payload_len < p.min_payload || payload_len > p.max_payload)
        throw std::invalid_argument("payload length outside the family's size range");
    std::mt19937_64 rng(seed);

    // Per-variant perturbation of the token distribution.
    std::array<double, 256> jittered{};
    for (std::size_t j = 0; j < 256; ++j)
        if (p.symbol_hist[j] > 0) {
            std::gamma_distribution<double> g(kJitterConcentration * p.symbol_hist[j], 1.0);
            jittered[j] = g(rng);
        }
    std::discrete_distribution<int> symbol(jittered.begin(), jittered.end());
    std::bernoulli_distribution is_motif(p.motif_rate);
    std::uniform_int_distribution<std::size_t> which(0, p.motifs.size() - 1);

    RawBitstream out;
    out.bytes = make_header(p, seed, payload_len);
    out.bytes.insert(out.bytes.end(), kXilinxSync.begin(), kXilinxSync.end());
    const std::size_t start = out.bytes.size();
    out.bytes.reserve(start + payload_len);
    while (out.bytes.size() - start < payload_len) {
        if (is_motif(rng)) {
            const Bytes &m = p.motifs[which(rng)];
            const std::size_t room = payload_len - (out.bytes.size() - start);
            out.bytes.insert(out.bytes.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(std::min(room, m.size())));
        } else {
            out.bytes.push_back(static_cast<std::uint8_t>(symbol(rng)));
        }
    }
    char id[64];
    std::snprintf(id, sizeof id, "%s:%016llx", std::string(family_name(p.family)).c_str(),
                  static_cast<unsigned long long>(seed));
    out.source_id = id;
    return out;
}

Injection inject_trojan(const RawBitstream &benign, TrojanKind kind, std::uint64_t seed) {
    const auto sync_end = locate_sync(benign.bytes);
    const std::size_t start = sync_end.value_or(0);
    const std::size_t payload_len = benign.bytes.size() - start;
    if (payload_len < 4096)
        throw std::invalid_argument("payload too short for Trojan injection");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> frac(kMinTrojanFraction, kMaxTrojanFraction);
    const std::size_t len = std::max<std::size_t>(1, static_cast<std::size_t>(frac(rng) * static_cast<double>(payload_len)));
    const std::size_t window = std::min(payload_len, kSegmentLen);
    const std::size_t last = window > len ? window - len : 0;
    std::uniform_int_distribution<std::size_t> where(0, last);

    Injection inj;
    inj.bitstream = benign;
    inj.kind = kind;
    inj.length = len;
    inj.offset = start + where(rng);
    inj.bitstream.source_id = benign.source_id + "+" + std::string(trojan_kind_name(kind));
    auto region = std::span(inj.bitstream.bytes).subspan(inj.offset, len);

    std::uniform_int_distribution<int> byte(0, 255);
    switch (kind) {
    case TrojanKind::high_entropy:
        for (auto &b : region)
            b = static_cast<std::uint8_t>(byte(rng));
        break;
    case TrojanKind::trigger: {
        const auto &reserved = reserved_bytes();
        std::uniform_int_distribution<std::size_t> pick(0, reserved.size() - 1);
        std::array<std::uint8_t, 4> pattern;
        for (auto &b : pattern)
            b = reserved[pick(rng)];
        for (std::size_t i = 0; i < region.size(); ++i)
            region[i] = pattern[i % 4];
        break;
    }
    case TrojanKind::density: {
        const std::uint8_t fill = std::bernoulli_distribution(0.5)(rng) ? 0xFF : 0x00;
        std::fill(region.begin(), region.end(), fill);
        break;
    }
    }
    return inj;
}

CorpusConfig CorpusConfig::standard() {
    CorpusConfig c;
    for (std::size_t i = 0; i < kFamilyCount; ++i) {
        const auto f = static_cast<Family>(i);
        if (i + 1 < kFamilyCount)
            c.quotas.push_back({f, 99, 99});
        else
            c.quotas.push_back({f, 98, 97});
    }
    return c;
}

CorpusConfig CorpusConfig::balanced(std::size_t per_class) {
    CorpusConfig c;
    for (std::size_t i = 0; i < kFamilyCount; ++i)
        c.quotas.push_back({static_cast<Family>(i), per_class, per_class});
    return c;
}

std::size_t CorpusConfig::total() const {
    std::size_t n = 0;
    for (const auto &q : quotas)
        n += q.benign + q.trojan;
    return n;
}

TrojanKind trojan_kind_for(const ManifestEntry &entry) {
    return static_cast<TrojanKind>(splitmix64(entry.seed ^ 0x7A0ULL) % 3);
}

RawBitstream generate_entry(const ManifestEntry &entry) {
    const FamilyProfile &p = profile(entry.family);
    std::mt19937_64 rng(entry.seed);
    std::uniform_int_distribution<std::size_t> size(p.min_payload, p.max_payload);
    const std::size_t payload_len = size(rng);
    RawBitstream raw = gen_benign(p, splitmix64(entry.seed ^ 0xBE9ULL), payload_len);
    if (entry.label == Label::trojan)
        raw = inject_trojan(raw, trojan_kind_for(entry), splitmix64(entry.seed ^ 0x1D7ULL)).bitstream;
    raw.source_id = entry.path;
    return raw;
}

GeneratedCorpus generate_corpus(const CorpusConfig &config, std::uint64_t master_seed) {
    GeneratedCorpus out;
    std::set<std::string> paths;
    std::size_t index = 0;
    for (const auto &q : config.quotas) {
        for (Label label : {Label::benign, Label::trojan}) {
            const std::size_t count = label == Label::benign ? q.benign : q.trojan;
            for (std::size_t k = 0; k < count; ++k, ++index) {
                std::string fam(family_name(q.family));
                std::transform(fam.begin(), fam.end(), fam.begin(), [](unsigned char c) { return std::tolower(c); });
                char name[96];
                std::snprintf(name, sizeof name, "%s_%s_%04zu.bit", fam.c_str(), std::string(label_name(label)).c_str(), k);
                if (!paths.insert(name).second)
                    throw std::invalid_argument(std::string("duplicate output path: ") + name);
                ManifestEntry e;
                e.path = name;
                e.family = q.family;
                e.label = label;
                e.seed = splitmix64(master_seed + 0x9E3779B97F4A7C15ULL * (index + 1));
                out.manifest.entries.push_back(std::move(e));
            }
        }
    }

    out.files.resize(out.manifest.entries.size());
    const std::size_t workers = std::max<std::size_t>(1, config.workers);
    auto work = [&](std::size_t w) {
        for (std::size_t i = w; i < out.files.size(); i += workers)
            out.files[i] = generate_entry(out.manifest.entries[i]);
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(work, w);
    }
    for (std::size_t i = 0; i < out.files.size(); ++i)
        out.manifest.entries[i].length = out.files[i].size();
    return out;
}

CorpusManifest build_corpus(const CorpusConfig &config, std::uint64_t master_seed,
                            const std::filesystem::path &out_dir) {
    GeneratedCorpus corpus = generate_corpus(config, master_seed);
    std::filesystem::create_directories(out_dir);
    for (std::size_t i = 0; i < corpus.files.size(); ++i)
        write_file(out_dir / corpus.manifest.entries[i].path, corpus.files[i].bytes);
    write_manifest(out_dir / "manifest.csv", corpus.manifest);
    return corpus.manifest;
}

std::string manifest_to_csv(const CorpusManifest &manifest) {
    std::ostringstream os;
    os << "path,family,label,seed,length\n";
    for (const auto &e : manifest.entries)
        os << e.path << ',' << family_name(e.family) << ',' << label_name(e.label) << ',' << e.seed << ','
           << e.length << '\n';
    return os.str();
}

namespace {

std::uint64_t parse_u64(std::string_view s) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw std::invalid_argument("bad integer field: " + std::string(s));
    return v;
}

} // namespace

CorpusManifest manifest_from_csv(std::string_view text) {
    CorpusManifest m;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const std::size_t nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        if (line_no++ == 0 && line.starts_with("path,"))
            continue;
        if (line.empty())
            continue;
        std::array<std::string_view, 5> f;
        for (std::size_t i = 0; i < 5; ++i) {
            const std::size_t comma = line.find(',');
            if ((comma == std::string_view::npos) != (i == 4))
                throw std::invalid_argument("manifest row must have 5 fields");
            f[i] = line.substr(0, comma);
            line = comma == std::string_view::npos ? std::string_view{} : line.substr(comma + 1);
        }
        ManifestEntry e;
        e.path = std::string(f[0]);
        e.family = parse_family(f[1]);
        e.label = parse_label(f[2]);
        e.seed = parse_u64(f[3]);
        e.length = parse_u64(f[4]);
        m.entries.push_back(std::move(e));
    }
    return m;
}

void write_manifest(const std::filesystem::path &path, const CorpusManifest &manifest) {
    const std::string csv = manifest_to_csv(manifest);
    write_file(path, ByteView(reinterpret_cast<const std::uint8_t *>(csv.data()), csv.size()));
}

CorpusManifest read_manifest(const std::filesystem::path &path) {
    const Bytes data = read_file(path);
    return manifest_from_csv(std::string_view(reinterpret_cast<const char *>(data.data()), data.size()));
}

} // namespace bitscreen::corpus
