#pragma once

// End-to-end screening: corpus loading, stratified splits, training of the
// CNN and forest heads, evaluation, per-file screening with phase timing, and
// the software-versus-engine benchmark.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bitscreen/corpus.hpp"
#include "bitscreen/engine.hpp"
#include "bitscreen/features.hpp"
#include "bitscreen/forest.hpp"
#include "bitscreen/metrics.hpp"
#include "bitscreen/seqmodel.hpp"

namespace bitscreen::pipeline {

enum class ErrorCode {
    unreadable_input = 10,
    empty_input = 11,
    missing_checkpoint = 20,
    corrupt_checkpoint = 21,
    degenerate_split = 30,
};

std::string_view error_code_name(ErrorCode code);

class ScreenError : public std::runtime_error {
public:
    ScreenError(ErrorCode code, const std::string &what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

struct Sample {
    std::string source_id;
    corpus::Family family = corpus::Family::crypto;
    corpus::Label label = corpus::Label::benign;
    Segment segment;
    FeatureVector features;
};

/// Payload segment and feature vector of one container.
Sample analyze(const RawBitstream &raw);

/// Analyzes every manifest row; reads files from `dir`.
std::vector<Sample> load_samples(const std::filesystem::path &dir, const corpus::CorpusManifest &manifest,
                                 std::size_t workers = 1);
/// Same, from an in-memory corpus.
std::vector<Sample> load_samples(const corpus::GeneratedCorpus &corpus, std::size_t workers = 1);

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// 80/20 split drawn separately inside every (family, label) cell. Throws
/// ScreenError(degenerate_split) unless both sides hold both labels.
SplitIndices stratified_split(const corpus::CorpusManifest &manifest, std::uint64_t seed,
                              double test_fraction = 0.2);

enum class ForestHead { binary, family };

forest::Dataset to_dataset(const std::vector<Sample> &samples, const std::vector<std::size_t> &rows, ForestHead head);
std::vector<seqmodel::Example> to_examples(const std::vector<Sample> &samples, const std::vector<std::size_t> &rows);

struct ModelSet {
    seqmodel::HybridModel cnn;
    forest::Forest family;
    std::optional<forest::Forest> binary;

    static inline const char *kCnnFile = "cnn.blnn";
    static inline const char *kFamilyFile = "forest_family.blrf";
    static inline const char *kBinaryFile = "forest_binary.blrf";

    /// Throws ScreenError(missing_checkpoint | corrupt_checkpoint).
    static ModelSet load(const std::filesystem::path &dir);
};

struct TrainingConfig {
    std::uint64_t split_seed = 7;
    forest::ForestConfig forest{};
    seqmodel::ConvSpec spec{};
    seqmodel::TrainConfig cnn{};
};

struct ForestHeads {
    forest::Forest binary;
    forest::Forest family;
};

ForestHeads train_forests(const std::vector<Sample> &samples, const std::vector<std::size_t> &rows,
                          const forest::ForestConfig &config);
seqmodel::TrainResult train_cnn(const std::vector<Sample> &samples, const std::vector<std::size_t> &rows,
                                const seqmodel::ConvSpec &spec, const seqmodel::TrainConfig &config);

struct HeadReport {
    std::string head;
    std::vector<std::string> class_names;
    metrics::ConfusionMatrix confusion{0};
    metrics::Summary summary;
};

struct Evaluation {
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::vector<HeadReport> heads; ///< rf_binary, rf_family, cnn (when available)
    const HeadReport *find(std::string_view head) const;
};

/// Scores the test rows with already-trained models.
Evaluation evaluate(const std::vector<Sample> &samples, const SplitIndices &split, const ModelSet &models);

struct ScreeningReport {
    std::string source_id;
    bool malicious = false;
    std::string family;
    double probability = 0;
    std::vector<double> family_probabilities;
    double load_ms = 0;
    double extract_s = 0;
    double predict_s = 0;
    double total_s = 0;
    double extract_fraction = 0;

    std::string verdict() const { return malicious ? "malicious" : "benign"; }
};

/// Throws ScreenError(unreadable_input | empty_input).
ScreeningReport screen(const std::filesystem::path &path, const ModelSet &models);

struct BatchItem {
    std::optional<ScreeningReport> report;
    std::optional<ErrorCode> error;
    std::string message;
};

/// Reports in input order regardless of worker count.
std::vector<BatchItem> screen_batch(const std::vector<std::filesystem::path> &paths, const ModelSet &models,
                                    std::size_t workers);

/// One "key=value" line per field.
std::string to_text(const ScreeningReport &report);
std::string to_json(const ScreeningReport &report);
std::string to_json(const Evaluation &eval);

/// Reference software extractor: one scalar pass over the input per output
/// feature, dispatched per byte through a callback, in double precision.
FeatureVector naive_feature_vector(ByteView payload);

struct BenchConfig {
    std::uint64_t input_bytes = 3'860'000;
    engine::DmaModel dma{};
    std::optional<double> sw_throughput_mbps; ///< skips measurement when set
    std::uint64_t seed = 1;
    std::filesystem::path scratch_dir; ///< defaults to the system temp directory
};

struct BenchResult {
    double input_mb = 0;
    double sw_throughput_mbps = 0;
    double hw_throughput_mbps = 0;
    double speedup = 0;
    double sw_latency_s = 0;
    double hw_latency_s = 0;
    std::uint64_t hw_cycles = 0;
    bool sw_measured = false;
    // Software pipeline decomposition; zero when sw throughput was given.
    double load_s = 0;
    double extract_s = 0;
    double predict_s = 0;
    double total_s = 0;
    double extract_fraction = 0;
};

/// Writes a synthetic container of the requested size, then times load,
/// naive extraction and prediction (when models are given), and runs the
/// engine model over the payload. Throws std::invalid_argument on size 0 or
/// a non-positive throughput.
BenchResult bench(const BenchConfig &config, const ModelSet *models = nullptr);

std::string to_text(const BenchResult &result);
std::string to_json(const BenchResult &result);

} // namespace bitscreen::pipeline
