#pragma once

// Deterministic synthetic bitstream corpus: seven design families with
// distinct byte-composition profiles and motifs, benign variants with
// per-seed perturbation, and Trojan variants carrying one of three injected
// signatures.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bitscreen/binary_io.hpp"
#include "bitscreen/bitstream.hpp"

namespace bitscreen::corpus {

enum class Family { crypto, comms, mcu_cpu, bus_display, itc99, iscas89, iscas85 };
inline constexpr std::size_t kFamilyCount = 7;

enum class Label { benign, trojan };
enum class TrojanKind { high_entropy, trigger, density };

std::string_view family_name(Family f);
Family parse_family(std::string_view name);
std::string_view label_name(Label l);
Label parse_label(std::string_view name);
std::string_view trojan_kind_name(TrojanKind k);

struct FamilyProfile {
    Family family = Family::crypto;
    std::array<double, 256> symbol_hist{}; ///< single-byte token distribution
    std::vector<Bytes> motifs;
    double motif_rate = 0; ///< probability that a token is a motif
    /// Expected byte composition of a generated payload (tokens and motifs).
    std::array<double, 256> base_histogram{};
    std::size_t min_payload = 0;
    std::size_t max_payload = 0;
};

const FamilyProfile &profile(Family f);

/// Byte values no family emits; Trojan trigger patterns are drawn from them.
const std::vector<std::uint8_t> &reserved_bytes();

/// Container header, sync word and a payload of `payload_len` bytes.
/// Throws std::invalid_argument when payload_len is outside the profile range.
RawBitstream gen_benign(const FamilyProfile &profile, std::uint64_t seed, std::size_t payload_len);

struct Injection {
    RawBitstream bitstream;
    std::size_t offset = 0; ///< absolute byte offset of the overwritten window
    std::size_t length = 0;
    TrojanKind kind = TrojanKind::high_entropy;
};

/// Overwrites 0.5-2% of the payload, inside the screened prefix, with a
/// kind-specific signature. Throws when the payload is shorter than 4 KiB.
Injection inject_trojan(const RawBitstream &benign, TrojanKind kind, std::uint64_t seed);

struct ManifestEntry {
    std::string path; ///< relative to the manifest's directory
    Family family = Family::crypto;
    Label label = Label::benign;
    std::uint64_t seed = 0;
    std::uint64_t length = 0; ///< file size in bytes

    bool operator==(const ManifestEntry &) const = default;
};

struct CorpusManifest {
    std::vector<ManifestEntry> entries;
    bool operator==(const CorpusManifest &) const = default;
};

struct FamilyQuota {
    Family family;
    std::size_t benign = 0;
    std::size_t trojan = 0;
};

struct CorpusConfig {
    std::vector<FamilyQuota> quotas;
    std::size_t workers = 1;

    /// 1,383 files over seven families, benign/Trojan balanced per family.
    static CorpusConfig standard();
    /// `per_class` benign and `per_class` Trojan files for each family.
    static CorpusConfig balanced(std::size_t per_class);
    std::size_t total() const;
};

struct GeneratedCorpus {
    CorpusManifest manifest;
    std::vector<RawBitstream> files; ///< parallel to manifest.entries
};

/// Whole corpus in memory; a pure function of (config, master_seed).
GeneratedCorpus generate_corpus(const CorpusConfig &config, std::uint64_t master_seed);

/// Rebuilds one file from the family, label and seed of its manifest row.
RawBitstream generate_entry(const ManifestEntry &entry);
TrojanKind trojan_kind_for(const ManifestEntry &entry);

/// Generates every file into `out_dir` and writes `out_dir/manifest.csv`.
/// Throws std::invalid_argument on duplicate output paths.
CorpusManifest build_corpus(const CorpusConfig &config, std::uint64_t master_seed,
                            const std::filesystem::path &out_dir);

/// "path,family,label,seed,length" header followed by one row per entry.
std::string manifest_to_csv(const CorpusManifest &manifest);
CorpusManifest manifest_from_csv(std::string_view text);
void write_manifest(const std::filesystem::path &path, const CorpusManifest &manifest);
CorpusManifest read_manifest(const std::filesystem::path &path);

} // namespace bitscreen::corpus
