// bitscreen: corpus generation, training, screening and benchmarking.
//
// Exit status of `screen`: 0 benign, 2 malicious, 1 error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "bitscreen/corpus.hpp"
#include "bitscreen/engine.hpp"
#include "bitscreen/pipeline.hpp"

namespace fs = std::filesystem;
using namespace bitscreen;

namespace {

constexpr int kExitBenign = 0;
constexpr int kExitError = 1;
constexpr int kExitMalicious = 2;

struct DmaFlags {
    double clock_hz = 100e6;
    std::uint64_t burst_bytes = 4096;
    std::uint64_t setup_cycles = 780;
    std::uint64_t fixed_cycles = engine::kFixedOverheadCycles;
    bool ideal = false;

    void attach(CLI::App *cmd) {
        cmd->add_option("--clock-hz", clock_hz, "Engine clock in Hz");
        cmd->add_option("--burst-bytes", burst_bytes, "DMA burst size in bytes");
        cmd->add_option("--setup-cycles", setup_cycles, "Setup cycles per DMA burst");
        cmd->add_option("--fixed-cycles", fixed_cycles, "Init, reduction and emission cycles");
        cmd->add_flag("--ideal", ideal, "1 byte/cycle with no overhead");
    }

    engine::DmaModel model() const {
        engine::DmaModel m = ideal ? engine::DmaModel::ideal() : engine::DmaModel{};
        m.clock_hz = clock_hz;
        m.burst_bytes = burst_bytes;
        if (!ideal) {
            m.burst_setup_cycles = setup_cycles;
            m.fixed_overhead_cycles = fixed_cycles;
        }
        return m;
    }
};

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << text;
}

struct CorpusData {
    corpus::CorpusManifest manifest;
    std::vector<pipeline::Sample> samples;
    pipeline::SplitIndices split;
};

CorpusData load_corpus(const fs::path &dir, std::uint64_t split_seed, std::size_t workers) {
    CorpusData d;
    d.manifest = corpus::read_manifest(dir / "manifest.csv");
    d.samples = pipeline::load_samples(dir, d.manifest, workers);
    d.split = pipeline::stratified_split(d.manifest, split_seed);
    return d;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"FPGA bitstream screening toolkit"};
    app.require_subcommand(1);

    // gen-corpus
    fs::path corpus_out;
    std::uint64_t corpus_seed = 2024;
    std::size_t per_class = 0, gen_workers = 1;
    auto *gen = app.add_subcommand("gen-corpus", "Generate the synthetic labeled corpus");
    gen->add_option("--out", corpus_out, "Output directory")->required();
    gen->add_option("--seed", corpus_seed, "Master seed");
    gen->add_option("--per-class", per_class, "Files per family and label (default: standard 1,383 layout)");
    gen->add_option("--workers", gen_workers, "Generator threads");

    // train cnn | forest
    fs::path corpus_dir, models_dir;
    std::uint64_t split_seed = 7, train_seed = 1;
    std::size_t workers = 1;
    auto *train = app.add_subcommand("train", "Train a model head on the training split");
    train->require_subcommand(1);
    auto add_common = [&](CLI::App *cmd) {
        cmd->add_option("--corpus", corpus_dir, "Corpus directory with manifest.csv")->required();
        cmd->add_option("--models", models_dir, "Checkpoint directory")->required();
        cmd->add_option("--split-seed", split_seed, "Stratified split seed");
        cmd->add_option("--seed", train_seed, "Training seed");
        cmd->add_option("--workers", workers, "Threads");
    };
    seqmodel::TrainConfig cnn_cfg;
    bool wide = false;
    auto *train_cnn = train->add_subcommand("cnn", "Hybrid CNN detection head");
    add_common(train_cnn);
    train_cnn->add_option("--epochs", cnn_cfg.epochs);
    train_cnn->add_option("--batch", cnn_cfg.batch_size);
    train_cnn->add_option("--lr", cnn_cfg.learning_rate);
    train_cnn->add_option("--weight-decay", cnn_cfg.weight_decay);
    train_cnn->add_flag("--wide", wide, "512-wide embedding preset");
    forest::ForestConfig forest_cfg;
    auto *train_forest = train->add_subcommand("forest", "Random-forest family and binary heads");
    add_common(train_forest);
    train_forest->add_option("--trees", forest_cfg.n_trees);
    train_forest->add_option("--m", forest_cfg.m, "Features drawn per node");
    train_forest->add_option("--max-depth", forest_cfg.max_depth);
    bool export_text = false;
    train_forest->add_flag("--export-text", export_text, "Also write per-tree text dumps");

    // screen
    std::vector<fs::path> inputs;
    bool json = false;
    auto *screen = app.add_subcommand("screen", "Screen bitstream files");
    screen->add_option("files", inputs, "Bitstream files")->required();
    screen->add_option("--models", models_dir, "Checkpoint directory")->required();
    screen->add_option("--workers", workers, "Threads");
    screen->add_flag("--json", json, "Structured output");

    // evaluate
    fs::path report_dir;
    auto *eval = app.add_subcommand("evaluate", "Score trained heads on the held-out split");
    eval->add_option("--corpus", corpus_dir, "Corpus directory")->required();
    eval->add_option("--models", models_dir, "Checkpoint directory")->required();
    eval->add_option("--split-seed", split_seed, "Stratified split seed");
    eval->add_option("--workers", workers, "Threads");
    eval->add_option("--report-dir", report_dir, "Write metrics.json and confusion CSVs here");

    // bench
    pipeline::BenchConfig bench_cfg;
    DmaFlags bench_dma;
    double sw_mbps = 0;
    auto *bench = app.add_subcommand("bench", "Naive software extraction versus the engine model");
    bench->add_option("--size", bench_cfg.input_bytes, "Input size in bytes");
    bench->add_option("--sw-mbps", sw_mbps, "Use this software throughput instead of measuring");
    bench->add_option("--seed", bench_cfg.seed);
    bench->add_option("--models", models_dir, "Include prediction time with these checkpoints");
    bench->add_flag("--json", json);
    bench_dma.attach(bench);

    // simulate-engine
    fs::path sim_input, trace_path;
    std::size_t random_bytes = 0;
    DmaFlags sim_dma;
    bool no_forwarding = false, show_features = false;
    auto *sim = app.add_subcommand("simulate-engine", "Run the cycle model over a payload");
    auto *sim_file = sim->add_option("file", sim_input, "Bitstream (payload after the sync word is streamed)");
    sim->add_option("--random", random_bytes, "Stream this many seeded random bytes instead")->excludes(sim_file);
    sim->add_option("--seed", corpus_seed);
    sim->add_option("--trace", trace_path, "Per-cycle trace output file");
    sim->add_flag("--no-forwarding", no_forwarding, "Disable the read-after-write bypass");
    sim->add_flag("--features", show_features, "Print the emitted feature vector");
    sim_dma.attach(sim);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            corpus::CorpusConfig cfg =
                per_class ? corpus::CorpusConfig::balanced(per_class) : corpus::CorpusConfig::standard();
            cfg.workers = gen_workers;
            const auto m = corpus::build_corpus(cfg, corpus_seed, corpus_out);
            std::printf("wrote %zu files and manifest.csv to %s\n", m.entries.size(), corpus_out.string().c_str());
            return 0;
        }

        if (train_cnn->parsed()) {
            const CorpusData d = load_corpus(corpus_dir, split_seed, workers);
            cnn_cfg.seed = train_seed;
            const auto spec = wide ? seqmodel::ConvSpec::wide() : seqmodel::ConvSpec{};
            const auto r = pipeline::train_cnn(d.samples, d.split.train, spec, cnn_cfg);
            fs::create_directories(models_dir);
            write_file(models_dir / pipeline::ModelSet::kCnnFile, seqmodel::serialize(r.model));
            for (std::size_t e = 0; e < r.log.epoch_loss.size(); ++e)
                std::printf("epoch=%zu loss=%.6f\n", e + 1, r.log.epoch_loss[e]);
            return 0;
        }

        if (train_forest->parsed()) {
            const CorpusData d = load_corpus(corpus_dir, split_seed, workers);
            forest_cfg.seed = train_seed;
            forest_cfg.workers = workers;
            const auto heads = pipeline::train_forests(d.samples, d.split.train, forest_cfg);
            fs::create_directories(models_dir);
            write_file(models_dir / pipeline::ModelSet::kFamilyFile, forest::serialize(heads.family));
            write_file(models_dir / pipeline::ModelSet::kBinaryFile, forest::serialize(heads.binary));
            if (export_text) {
                write_text(models_dir / "forest_family.txt", forest::to_text(heads.family));
                write_text(models_dir / "forest_binary.txt", forest::to_text(heads.binary));
            }
            std::printf("trained %zu-tree family and binary forests on %zu rows\n", forest_cfg.n_trees,
                        d.split.train.size());
            return 0;
        }

        if (screen->parsed()) {
            const auto models = pipeline::ModelSet::load(models_dir);
            const auto items = pipeline::screen_batch(inputs, models, workers);
            int status = kExitBenign;
            for (const auto &item : items) {
                if (item.error) {
                    std::fprintf(stderr, "error=%s message=%s\n",
                                 std::string(pipeline::error_code_name(*item.error)).c_str(), item.message.c_str());
                    status = kExitError;
                    continue;
                }
                std::cout << (json ? pipeline::to_json(*item.report) + "\n" : pipeline::to_text(*item.report));
                if (item.report->malicious && status != kExitError)
                    status = kExitMalicious;
            }
            return status;
        }

        if (eval->parsed()) {
            const CorpusData d = load_corpus(corpus_dir, split_seed, workers);
            const auto models = pipeline::ModelSet::load(models_dir);
            const auto ev = pipeline::evaluate(d.samples, d.split, models);
            std::printf("train=%zu test=%zu\n", ev.train_size, ev.test_size);
            for (const auto &h : ev.heads)
                std::printf("head=%s accuracy=%.4f precision=%.4f recall=%.4f macro_f1=%.4f\n", h.head.c_str(),
                            h.summary.accuracy, h.summary.precision, h.summary.recall, h.summary.macro_f1);
            if (!report_dir.empty()) {
                fs::create_directories(report_dir);
                write_text(report_dir / "metrics.json", pipeline::to_json(ev));
                for (const auto &h : ev.heads)
                    write_text(report_dir / ("confusion_" + h.head + ".csv"), h.confusion.to_csv(h.class_names));
            }
            return 0;
        }

        if (bench->parsed()) {
            bench_cfg.dma = bench_dma.model();
            if (sw_mbps > 0)
                bench_cfg.sw_throughput_mbps = sw_mbps;
            std::optional<pipeline::ModelSet> models;
            if (!models_dir.empty())
                models = pipeline::ModelSet::load(models_dir);
            const auto r = pipeline::bench(bench_cfg, models ? &*models : nullptr);
            std::cout << (json ? pipeline::to_json(r) + "\n" : pipeline::to_text(r));
            return 0;
        }

        if (sim->parsed()) {
            Bytes payload;
            if (random_bytes) {
                std::mt19937_64 rng(corpus_seed);
                std::uniform_int_distribution<int> byte(0, 255);
                payload.resize(random_bytes);
                for (auto &b : payload)
                    b = static_cast<std::uint8_t>(byte(rng));
            } else if (!sim_input.empty()) {
                const Bytes raw = read_file(sim_input);
                const ByteView body = extract_payload(raw);
                payload.assign(body.begin(), body.end());
            } else {
                throw std::invalid_argument("give a file or --random N");
            }
            std::ofstream trace;
            engine::EngineConfig ec;
            ec.forwarding = !no_forwarding;
            if (!trace_path.empty()) {
                trace.open(trace_path);
                if (!trace)
                    throw std::runtime_error("cannot write " + trace_path.string());
                ec.trace = &trace;
            }
            const auto s = engine::simulate(payload, sim_dma.model(), engine::default_lut(), ec);
            std::printf("bytes=%zu\nengine_cycles=%llu\ncycles_total=%llu\nlatency_s=%.9f\nthroughput_mbps=%.6f\n",
                        payload.size(), static_cast<unsigned long long>(s.output.cycles_total),
                        static_cast<unsigned long long>(s.cycles_total), s.latency_s, s.throughput_mbps);
            if (show_features)
                std::cout << to_text(s.output.features);
            return 0;
        }
    } catch (const pipeline::ScreenError &e) {
        std::fprintf(stderr, "error=%s message=%s\n", std::string(pipeline::error_code_name(e.code())).c_str(),
                     e.what());
        return kExitError;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitError;
    }
    return kExitError;
}
