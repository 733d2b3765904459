#include "bitscreen/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <thread>

#include <json.hpp>

namespace bitscreen::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double seconds(Clock::duration d) { return std::chrono::duration<double>(d).count(); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

template <typename Fn> void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers)
                fn(i);
        });
}

std::vector<std::string> family_names() {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < corpus::kFamilyCount; ++i)
        out.emplace_back(corpus::family_name(static_cast<corpus::Family>(i)));
    return out;
}

Bytes read_checkpoint(const std::filesystem::path &path) {
    if (!std::filesystem::exists(path))
        throw ScreenError(ErrorCode::missing_checkpoint, "missing checkpoint: " + path.string());
    try {
        return read_file(path);
    } catch (const std::exception &e) {
        throw ScreenError(ErrorCode::missing_checkpoint, e.what());
    }
}

template <typename Fn> auto parse_checkpoint(const std::filesystem::path &path, Fn fn) {
    const Bytes data = read_checkpoint(path);
    try {
        return fn(ByteView(data));
    } catch (const FormatError &e) {
        throw ScreenError(ErrorCode::corrupt_checkpoint, path.string() + ": " + e.what());
    }
}

HeadReport make_head(std::string name, std::vector<std::string> classes, const std::vector<std::size_t> &pred,
                     const std::vector<std::size_t> &truth, std::optional<std::size_t> positive) {
    HeadReport h;
    h.head = std::move(name);
    h.class_names = std::move(classes);
    h.confusion = metrics::confusion(pred, truth, h.class_names.size());
    h.summary = metrics::summarize(h.confusion, positive);
    return h;
}

} // namespace

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::unreadable_input:
        return "unreadable_input";
    case ErrorCode::empty_input:
        return "empty_input";
    case ErrorCode::missing_checkpoint:
        return "missing_checkpoint";
    case ErrorCode::corrupt_checkpoint:
        return "corrupt_checkpoint";
    case ErrorCode::degenerate_split:
        return "degenerate_split";
    }
    return "unknown";
}

Sample analyze(const RawBitstream &raw) {
    if (raw.bytes.empty())
        throw ScreenError(ErrorCode::empty_input, "empty bitstream: " + raw.source_id);
    const ByteView payload = extract_payload(raw.bytes);
    Sample s;
    s.source_id = raw.source_id;
    s.segment = make_segment(payload);
    s.features = features::feature_vector(s.segment);
    return s;
}

std::vector<Sample> load_samples(const std::filesystem::path &dir, const corpus::CorpusManifest &manifest,
                                 std::size_t workers) {
    std::vector<Sample> out(manifest.entries.size());
    parallel_for(out.size(), workers, [&](std::size_t i) {
        const auto &e = manifest.entries[i];
        RawBitstream raw = RawBitstream::load(dir / e.path);
        if (raw.size() != e.length)
            throw std::runtime_error("file size disagrees with manifest: " + e.path);
        raw.source_id = e.path;
        out[i] = analyze(raw);
        out[i].family = e.family;
        out[i].label = e.label;
    });
    return out;
}

std::vector<Sample> load_samples(const corpus::GeneratedCorpus &corpus, std::size_t workers) {
    std::vector<Sample> out(corpus.files.size());
    parallel_for(out.size(), workers, [&](std::size_t i) {
        out[i] = analyze(corpus.files[i]);
        out[i].source_id = corpus.manifest.entries[i].path;
        out[i].family = corpus.manifest.entries[i].family;
        out[i].label = corpus.manifest.entries[i].label;
    });
    return out;
}

SplitIndices stratified_split(const corpus::CorpusManifest &manifest, std::uint64_t seed, double test_fraction) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("test fraction must lie in (0,1)");
    std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto &e = manifest.entries[i];
        cells[{static_cast<int>(e.family), static_cast<int>(e.label)}].push_back(i);
    }
    SplitIndices split;
    for (auto &[key, rows] : cells) {
        std::mt19937_64 rng(splitmix64(seed ^ (static_cast<std::uint64_t>(key.first) << 8) ^
                                       static_cast<std::uint64_t>(key.second)));
        std::shuffle(rows.begin(), rows.end(), rng);
        const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(rows.size())));
        split.test.insert(split.test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
        split.train.insert(split.train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());

    auto both_labels = [&](const std::vector<std::size_t> &rows) {
        bool benign = false, trojan = false;
        for (auto i : rows)
            (manifest.entries[i].label == corpus::Label::trojan ? trojan : benign) = true;
        return benign && trojan;
    };
    if (!both_labels(split.train) || !both_labels(split.test))
        throw ScreenError(ErrorCode::degenerate_split, "split leaves a side without both labels");
    return split;
}

forest::Dataset to_dataset(const std::vector<Sample> &samples, const std::vector<std::size_t> &rows,
                           ForestHead head) {
    forest::Dataset d;
    d.dim = kFeatureDim;
    d.n_classes = head == ForestHead::binary ? 2 : corpus::kFamilyCount;
    d.x.reserve(rows.size() * kFeatureDim);
    for (auto i : rows) {
        const Sample &s = samples.at(i);
        d.add(s.features.values, head == ForestHead::binary ? static_cast<std::size_t>(s.label)
                                                            : static_cast<std::size_t>(s.family));
    }
    return d;
}

std::vector<seqmodel::Example> to_examples(const std::vector<Sample> &samples, const std::vector<std::size_t> &rows) {
    std::vector<seqmodel::Example> out;
    out.reserve(rows.size());
    for (auto i : rows) {
        const Sample &s = samples.at(i);
        out.push_back({s.segment, s.features, s.label == corpus::Label::trojan ? 1 : 0});
    }
    return out;
}

ModelSet ModelSet::load(const std::filesystem::path &dir) {
    ModelSet m;
    m.cnn = parse_checkpoint(dir / kCnnFile, [](ByteView b) { return seqmodel::deserialize_model(b); });
    if (!m.cnn.scaler)
        throw ScreenError(ErrorCode::corrupt_checkpoint, "CNN checkpoint has no feature scaler");
    m.family = parse_checkpoint(dir / kFamilyFile, [](ByteView b) { return forest::deserialize_forest(b); });
    if (m.family.dim != kFeatureDim || m.family.n_classes != corpus::kFamilyCount)
        throw ScreenError(ErrorCode::corrupt_checkpoint, "family forest has the wrong shape");
    if (std::filesystem::exists(dir / kBinaryFile)) {
        m.binary = parse_checkpoint(dir / kBinaryFile, [](ByteView b) { return forest::deserialize_forest(b); });
        if (m.binary->dim != kFeatureDim || m.binary->n_classes != 2)
            throw ScreenError(ErrorCode::corrupt_checkpoint, "binary forest has the wrong shape");
    }
    return m;
}

ForestHeads train_forests(const std::vector<Sample> &samples, const std::vector<std::size_t> &rows,
                          const forest::ForestConfig &config) {
    ForestHeads heads;
    heads.binary = forest::fit(to_dataset(samples, rows, ForestHead::binary), config);
    forest::ForestConfig family_cfg = config;
    family_cfg.seed = splitmix64(config.seed ^ 0xFA111ULL);
    heads.family = forest::fit(to_dataset(samples, rows, ForestHead::family), family_cfg);
    return heads;
}

seqmodel::TrainResult train_cnn(const std::vector<Sample> &samples, const std::vector<std::size_t> &rows,
                                const seqmodel::ConvSpec &spec, const seqmodel::TrainConfig &config) {
    const auto examples = to_examples(samples, rows);
    return seqmodel::train(examples, spec, config);
}

const HeadReport *Evaluation::find(std::string_view head) const {
    for (const auto &h : heads)
        if (h.head == head)
            return &h;
    return nullptr;
}

Evaluation evaluate(const std::vector<Sample> &samples, const SplitIndices &split, const ModelSet &models) {
    Evaluation ev;
    ev.train_size = split.train.size();
    ev.test_size = split.test.size();
    std::vector<std::size_t> truth_bin, truth_fam, pred_cnn, pred_bin, pred_fam;
    for (auto i : split.test) {
        const Sample &s = samples.at(i);
        truth_bin.push_back(s.label == corpus::Label::trojan);
        truth_fam.push_back(static_cast<std::size_t>(s.family));
        pred_fam.push_back(models.family.predict(s.features.values).label);
        if (models.binary)
            pred_bin.push_back(models.binary->predict(s.features.values).label);
        pred_cnn.push_back(models.cnn.predict(s.segment, s.features) >= 0.5);
    }
    const std::vector<std::string> binary_names{"benign", "trojan"};
    if (models.binary)
        ev.heads.push_back(make_head("rf_binary", binary_names, pred_bin, truth_bin, 1));
    ev.heads.push_back(make_head("rf_family", family_names(), pred_fam, truth_fam, std::nullopt));
    ev.heads.push_back(make_head("cnn", binary_names, pred_cnn, truth_bin, 1));
    return ev;
}

ScreeningReport screen(const std::filesystem::path &path, const ModelSet &models) {
    ScreeningReport r;
    r.source_id = path.string();
    const auto t0 = Clock::now();
    RawBitstream raw;
    try {
        raw = RawBitstream::load(path);
    } catch (const std::exception &e) {
        throw ScreenError(ErrorCode::unreadable_input, e.what());
    }
    if (raw.bytes.empty())
        throw ScreenError(ErrorCode::empty_input, "empty bitstream: " + path.string());
    const auto t1 = Clock::now();
    Sample s;
    try {
        s = analyze(raw);
    } catch (const std::invalid_argument &e) {
        throw ScreenError(ErrorCode::empty_input, e.what());
    }
    const auto t2 = Clock::now();
    r.probability = models.cnn.predict(s.segment, s.features);
    const auto fam = models.family.predict(s.features.values);
    const auto t3 = Clock::now();

    r.malicious = r.probability >= 0.5;
    r.family = std::string(corpus::family_name(static_cast<corpus::Family>(fam.label)));
    r.family_probabilities = fam.probabilities;
    r.load_ms = seconds(t1 - t0) * 1e3;
    r.extract_s = seconds(t2 - t1);
    r.predict_s = seconds(t3 - t2);
    r.total_s = seconds(t3 - t0);
    r.extract_fraction = r.total_s > 0 ? r.extract_s / r.total_s : 0.0;
    return r;
}

std::vector<BatchItem> screen_batch(const std::vector<std::filesystem::path> &paths, const ModelSet &models,
                                    std::size_t workers) {
    std::vector<BatchItem> out(paths.size());
    parallel_for(paths.size(), workers, [&](std::size_t i) {
        try {
            out[i].report = screen(paths[i], models);
        } catch (const ScreenError &e) {
            out[i].error = e.code();
            out[i].message = e.what();
        }
    });
    return out;
}

std::string to_text(const ScreeningReport &r) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "source=%s\nverdict=%s\nprobability=%.6f\nfamily=%s\nload_ms=%.3f\nextract_s=%.6f\n"
                  "predict_s=%.6f\ntotal_s=%.6f\nextract_fraction=%.4f\n",
                  r.source_id.c_str(), r.verdict().c_str(), r.probability, r.family.c_str(), r.load_ms,
                  r.extract_s, r.predict_s, r.total_s, r.extract_fraction);
    return buf;
}

std::string to_json(const ScreeningReport &r) {
    nlohmann::ordered_json j;
    j["source_id"] = r.source_id;
    j["verdict"] = r.verdict();
    j["probability"] = r.probability;
    j["family"] = r.family;
    j["family_probabilities"] = r.family_probabilities;
    j["load_ms"] = r.load_ms;
    j["extract_s"] = r.extract_s;
    j["predict_s"] = r.predict_s;
    j["total_s"] = r.total_s;
    j["extract_fraction"] = r.extract_fraction;
    return j.dump(2);
}

std::string to_json(const Evaluation &ev) {
    nlohmann::ordered_json j;
    j["train_size"] = ev.train_size;
    j["test_size"] = ev.test_size;
    for (const auto &h : ev.heads) {
        nlohmann::ordered_json head;
        head["accuracy"] = h.summary.accuracy;
        head["precision"] = h.summary.precision;
        head["recall"] = h.summary.recall;
        head["macro_f1"] = h.summary.macro_f1;
        head["classes"] = h.class_names;
        std::vector<std::vector<std::size_t>> rows(h.confusion.k);
        for (std::size_t t = 0; t < h.confusion.k; ++t)
            for (std::size_t p = 0; p < h.confusion.k; ++p)
                rows[t].push_back(h.confusion.at(t, p));
        head["confusion"] = rows;
        j["heads"][h.head] = head;
    }
    return j.dump(2);
}

namespace {

struct Pass {
    std::function<void(std::uint8_t)> on_byte;
    std::function<double()> finish;
};

double run_pass(ByteView bytes, const Pass &pass) {
    for (std::uint8_t b : bytes)
        pass.on_byte(b);
    return pass.finish();
}

double entropy_of(const std::vector<double> &counts, double len) {
    double h = 0;
    for (double c : counts)
        if (c > 0)
            h -= (c / len) * std::log2(c / len);
    return std::max(h, 0.0);
}

/// Pass that tallies `key(b)` into `bins` buckets and reduces them with `fn`.
Pass tally_pass(std::size_t bins, std::function<std::size_t(std::uint8_t)> key,
                std::function<double(const std::vector<double> &)> fn) {
    auto counts = std::make_shared<std::vector<double>>(bins, 0.0);
    return {[counts, key](std::uint8_t b) { (*counts)[key(b)] += 1.0; }, [counts, fn] { return fn(*counts); }};
}

} // namespace

FeatureVector naive_feature_vector(ByteView payload) {
    if (payload.empty())
        throw std::invalid_argument("no payload bytes to analyze");
    const double len = static_cast<double>(payload.size());
    FeatureVector fv;
    fv.payload_len = payload.size();

    for (std::size_t j = 0; j < kHistBins; ++j) {
        double count = 0;
        fv.values[j] = run_pass(payload, {[&](std::uint8_t b) { count += b == j ? 1.0 : 0.0; },
                                          [&] { return count / len; }});
    }

    double sum = 0;
    const double mean = run_pass(payload, {[&](std::uint8_t b) { sum += b; }, [&] { return sum / len; }});
    double ss = 0;
    const double var = run_pass(payload, {[&](std::uint8_t b) { ss += (b - mean) * (b - mean); },
                                          [&] { return ss / len; }});
    const double sd = std::sqrt(var);
    double s3 = 0, s4 = 0;
    const double skew = run_pass(payload, {[&](std::uint8_t b) { s3 += std::pow(b - mean, 3.0); },
                                           [&] { return var > 0 ? s3 / len / (var * sd) : 0.0; }});
    const double kurt = run_pass(payload, {[&](std::uint8_t b) { s4 += std::pow(b - mean, 4.0); },
                                           [&] { return var > 0 ? s4 / len / (var * var) - 3.0 : 0.0; }});
    fv[Stat::mean] = mean;
    fv[Stat::variance] = var;
    fv[Stat::std_dev] = sd;
    fv[Stat::skewness] = skew;
    fv[Stat::excess_kurtosis] = kurt;
    fv[Stat::dispersion] = mean > 0 ? var / mean : 0.0;

    const auto ident = [](std::uint8_t b) { return std::size_t{b}; };
    fv[Stat::entropy] = run_pass(payload, tally_pass(256, ident, [&](const auto &c) { return entropy_of(c, len); }));
    fv[Stat::high_nibble_entropy] = run_pass(
        payload, tally_pass(16, [](std::uint8_t b) { return std::size_t(b >> 4); },
                            [&](const auto &c) { return entropy_of(c, len); }));
    fv[Stat::low_nibble_entropy] = run_pass(
        payload, tally_pass(16, [](std::uint8_t b) { return std::size_t(b & 0xF); },
                            [&](const auto &c) { return entropy_of(c, len); }));

    double lo = 255, hi = 0;
    fv[Stat::min_byte] = run_pass(payload, {[&](std::uint8_t b) { lo = std::min<double>(lo, b); }, [&] { return lo; }});
    fv[Stat::max_byte] = run_pass(payload, {[&](std::uint8_t b) { hi = std::max<double>(hi, b); }, [&] { return hi; }});
    fv[Stat::range] = hi - lo;

    auto fraction = [&](std::function<bool(std::uint8_t)> pred) {
        double count = 0;
        return run_pass(payload, {[&](std::uint8_t b) { count += pred(b) ? 1.0 : 0.0; }, [&] { return count / len; }});
    };
    fv[Stat::zero_fraction] = fraction([](std::uint8_t b) { return b == 0x00; });
    fv[Stat::ff_fraction] = fraction([](std::uint8_t b) { return b == 0xFF; });
    fv[Stat::printable_fraction] = fraction([](std::uint8_t b) { return b >= 0x20 && b <= 0x7E; });

    fv[Stat::unique_fraction] = run_pass(payload, tally_pass(256, ident, [](const auto &c) {
        return static_cast<double>(std::count_if(c.begin(), c.end(), [](double v) { return v > 0; })) / 256.0;
    }));
    fv[Stat::mode_byte] = run_pass(payload, tally_pass(256, ident, [](const auto &c) {
        return static_cast<double>(std::max_element(c.begin(), c.end()) - c.begin()) / 255.0;
    }));
    fv[Stat::mode_frequency] = run_pass(payload, tally_pass(256, ident, [&](const auto &c) {
        return *std::max_element(c.begin(), c.end()) / len;
    }));

    int prev = -1;
    double changes = 0;
    fv[Stat::transition_rate] = run_pass(payload, {[&](std::uint8_t b) {
                                                       if (prev >= 0 && b != prev)
                                                           changes += 1;
                                                       prev = b;
                                                   },
                                                   [&] { return len > 1 ? changes / (len - 1) : 0.0; }});
    auto runs_pass = [&](std::function<double(double runs, double longest)> fn) {
        int last = -1;
        double runs = 0, cur = 0, longest = 0;
        return run_pass(payload, {[&](std::uint8_t b) {
                                      if (b != last) {
                                          runs += 1;
                                          cur = 0;
                                      }
                                      cur += 1;
                                      longest = std::max(longest, cur);
                                      last = b;
                                  },
                                  [&] { return fn(runs, longest); }});
    };
    fv[Stat::mean_run_length] = runs_pass([&](double runs, double) { return len / runs; });
    fv[Stat::max_run_fraction] = runs_pass([&](double, double longest) { return longest / len; });
    fv[Stat::run_count_fraction] = runs_pass([&](double runs, double) { return runs / len; });
    return fv;
}

BenchResult bench(const BenchConfig &config, const ModelSet *models) {
    if (config.input_bytes == 0)
        throw std::invalid_argument("bench input size must be at least one byte");
    config.dma.validate();
    BenchResult r;
    r.input_mb = static_cast<double>(config.input_bytes) / 1e6;

    // Synthetic container whose payload is exactly input_bytes long.
    corpus::FamilyProfile profile = corpus::profile(corpus::Family::crypto);
    profile.min_payload = 1;
    profile.max_payload = std::max<std::size_t>(profile.max_payload, config.input_bytes);
    const RawBitstream raw = corpus::gen_benign(profile, config.seed, config.input_bytes);
    const ByteView payload = extract_payload(raw.bytes);

    const engine::Simulation sim = engine::simulate(payload, config.dma);
    r.hw_cycles = sim.cycles_total;
    r.hw_latency_s = sim.latency_s;
    r.hw_throughput_mbps = sim.throughput_mbps;

    if (config.sw_throughput_mbps) {
        if (!(*config.sw_throughput_mbps > 0))
            throw std::invalid_argument("software throughput must be positive");
        r.sw_throughput_mbps = *config.sw_throughput_mbps;
        r.sw_latency_s = r.input_mb / r.sw_throughput_mbps;
    } else {
        const auto dir = config.scratch_dir.empty() ? std::filesystem::temp_directory_path() : config.scratch_dir;
        std::filesystem::create_directories(dir);
        const auto path = dir / ("bitscreen_bench_" + std::to_string(config.seed) + ".bit");
        write_file(path, raw.bytes);

        const auto t0 = Clock::now();
        const Bytes loaded = read_file(path);
        const auto t1 = Clock::now();
        const ByteView body = extract_payload(loaded);
        const FeatureVector fv = naive_feature_vector(body);
        const Segment seg = make_segment(body);
        const auto t2 = Clock::now();
        if (models) {
            const FeatureVector seg_fv = features::feature_vector(seg);
            (void)models->cnn.predict(seg, seg_fv);
            (void)models->family.predict(fv.values);
        }
        const auto t3 = Clock::now();
        std::filesystem::remove(path);

        r.sw_measured = true;
        r.load_s = seconds(t1 - t0);
        r.extract_s = seconds(t2 - t1);
        r.predict_s = seconds(t3 - t2);
        r.total_s = seconds(t3 - t0);
        r.extract_fraction = r.total_s > 0 ? r.extract_s / r.total_s : 0.0;
        if (!(r.extract_s > 0))
            throw std::runtime_error("measured extraction time is zero");
        r.sw_latency_s = r.extract_s;
        r.sw_throughput_mbps = r.input_mb / r.extract_s;
    }
    r.speedup = engine::speedup(r.sw_throughput_mbps, r.hw_throughput_mbps);
    return r;
}

std::string to_text(const BenchResult &r) {
    char buf[768];
    std::snprintf(buf, sizeof buf,
                  "input_mb=%.6f\nsw_throughput_mbps=%.6f\nsw_latency_s=%.6f\nhw_throughput_mbps=%.6f\n"
                  "hw_latency_s=%.6f\nhw_cycles=%llu\nspeedup=%.3f\nsw_measured=%d\nload_s=%.6f\nextract_s=%.6f\n"
                  "predict_s=%.6f\ntotal_s=%.6f\nextract_fraction=%.4f\n",
                  r.input_mb, r.sw_throughput_mbps, r.sw_latency_s, r.hw_throughput_mbps, r.hw_latency_s,
                  static_cast<unsigned long long>(r.hw_cycles), r.speedup, r.sw_measured ? 1 : 0, r.load_s,
                  r.extract_s, r.predict_s, r.total_s, r.extract_fraction);
    return buf;
}

std::string to_json(const BenchResult &r) {
    nlohmann::ordered_json j;
    j["input_mb"] = r.input_mb;
    j["sw_throughput_mbps"] = r.sw_throughput_mbps;
    j["sw_latency_s"] = r.sw_latency_s;
    j["hw_throughput_mbps"] = r.hw_throughput_mbps;
    j["hw_latency_s"] = r.hw_latency_s;
    j["hw_cycles"] = r.hw_cycles;
    j["speedup"] = r.speedup;
    j["sw_measured"] = r.sw_measured;
    j["load_s"] = r.load_s;
    j["extract_s"] = r.extract_s;
    j["predict_s"] = r.predict_s;
    j["total_s"] = r.total_s;
    j["extract_fraction"] = r.extract_fraction;
    return j.dump(2);
}

} // namespace bitscreen::pipeline
