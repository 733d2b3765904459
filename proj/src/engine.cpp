#include "bitscreen/engine.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace bitscreen::engine {

namespace {

constexpr std::uint64_t kLog2eQ = 24204406; // round(log2(e) * 2^24)

std::uint64_t lut_entry(const EntropyLut &lut, std::uint64_t n, bool wide) {
    return wide ? lut.wide(n) : lut[n];
}

/// Entropy word from the LUT sum: (lut(L) - Σ lut(c)) / L, rounded.
std::uint64_t entropy_word(std::uint64_t lut_len, std::uint64_t lut_sum, std::uint64_t len) {
    if (lut_sum >= lut_len)
        return 0;
    const std::uint64_t num = lut_len - lut_sum;
    return (num + len / 2) / len;
}

} // namespace

EntropyLut::EntropyLut() : table_(kMaxCount + 1) {
    for (std::uint64_t n = 2; n <= kMaxCount; ++n) {
        const long double x = static_cast<long double>(n);
        table_[n] = static_cast<std::uint64_t>(std::llround(x * std::log2(x) * kLutScale));
    }
}

std::uint64_t EntropyLut::operator[](std::uint64_t n) const {
    if (n > kMaxCount)
        throw std::out_of_range("count exceeds entropy LUT range");
    return table_[n];
}

std::uint64_t EntropyLut::wide(std::uint64_t n) const {
    if (n <= kMaxCount)
        return table_[n];
    unsigned shift = 0;
    while ((n >> shift) > kMaxCount)
        ++shift;
    const std::uint64_t m = n >> shift;
    const std::uint64_t rem = n - (m << shift);
    const std::uint64_t one = std::uint64_t{1} << kLutFracBits;
    // n log n = 2^e (m log m + e m) + rem * (log m + e + log2 e) + O(rem^2 / n)
    const std::uint64_t base = (table_[m] + shift * m * one) << shift;
    const std::uint64_t slope = table_[m] / m + shift * one + kLog2eQ;
    return base + rem * slope;
}

const EntropyLut &default_lut() {
    static const EntropyLut lut;
    return lut;
}

std::uint32_t EngineState::count(std::uint8_t j) const {
    if (bypass.valid && bypass.address == j)
        return bypass.pending_count;
    return hist_counts[j];
}

bool EngineState::invariants_hold() const {
    std::uint64_t total = 0;
    for (std::size_t j = 0; j < kHistBins; ++j)
        total += count(static_cast<std::uint8_t>(j));
    if (total != bytes_seen)
        return false;
    if (s1 > 255 * bytes_seen)
        return false;
    if (trans_count > (bytes_seen > 0 ? bytes_seen - 1 : 0))
        return false;
    return cur_run <= max_run && max_run <= bytes_seen;
}

FeatureVector to_feature_vector(const EngineRecord &rec) {
    if (rec.length == 0)
        throw std::invalid_argument("empty engine record");
    FeatureVector fv;
    fv.payload_len = rec.length;
    const double len = static_cast<double>(rec.length);

    for (std::size_t j = 0; j < kHistBins; ++j)
        fv.values[j] = static_cast<double>(rec.counts[j]) / len;

    const features::Moments m = features::moments_from_central_sums(rec.central);
    fv[Stat::mean] = m.mean;
    fv[Stat::variance] = m.variance;
    fv[Stat::std_dev] = std::sqrt(m.variance);
    fv[Stat::skewness] = m.skewness;
    fv[Stat::excess_kurtosis] = m.kurtosis;
    fv[Stat::dispersion] = m.mean > 0.0 ? m.variance / m.mean : 0.0;

    fv[Stat::entropy] = static_cast<double>(rec.entropy_q) / kLutScale;
    fv[Stat::high_nibble_entropy] = static_cast<double>(rec.high_nibble_entropy_q) / kLutScale;
    fv[Stat::low_nibble_entropy] = static_cast<double>(rec.low_nibble_entropy_q) / kLutScale;

    fv[Stat::min_byte] = rec.min_byte;
    fv[Stat::max_byte] = rec.max_byte;
    fv[Stat::range] = rec.max_byte - rec.min_byte;
    fv[Stat::zero_fraction] = static_cast<double>(rec.counts[0x00]) / len;
    fv[Stat::ff_fraction] = static_cast<double>(rec.counts[0xFF]) / len;
    fv[Stat::printable_fraction] = static_cast<double>(rec.printable_count) / len;
    fv[Stat::unique_fraction] = static_cast<double>(rec.unique_count) / 256.0;
    fv[Stat::mode_byte] = static_cast<double>(rec.mode_byte) / 255.0;
    fv[Stat::mode_frequency] = static_cast<double>(rec.counts[rec.mode_byte]) / len;

    fv[Stat::transition_rate] =
        rec.length > 1 ? static_cast<double>(rec.transitions) / static_cast<double>(rec.length - 1) : 0.0;
    fv[Stat::mean_run_length] = len / static_cast<double>(rec.run_count);
    fv[Stat::max_run_fraction] = static_cast<double>(rec.max_run) / len;
    fv[Stat::run_count_fraction] = static_cast<double>(rec.run_count) / len;
    return fv;
}

StreamEngine::StreamEngine(EngineConfig config) : config_(config) {}

StreamEngine::StreamEngine(EngineState state, EngineConfig config)
    : state_(std::move(state)), config_(config) {}

void StreamEngine::reset() { state_ = EngineState{}; }

void StreamEngine::step(std::uint8_t byte) {
    EngineState &s = state_;

    // Histogram port: the read sees BRAM contents, which lag the previous
    // cycle's write by one cycle.
    std::uint32_t current = s.hist_counts[byte];
    const bool hazard = s.bypass.valid && s.bypass.address == byte;
    if (hazard && config_.forwarding) {
        current = s.bypass.pending_count;
        ++s.forwarded_reads;
    }
    if (current == std::numeric_limits<std::uint32_t>::max())
        throw std::overflow_error("counter overflow");
    if (s.bypass.valid)
        s.hist_counts[s.bypass.address] = s.bypass.pending_count;
    s.bypass = BypassRegister{true, byte, current + 1};

    const std::uint64_t b = byte;
    const std::uint64_t b2 = b * b;
    s.s1 += b;
    s.s2 += b2;
    s.s3 += b2 * b;
    s.s4 += b2 * b2;

    if (!s.prev_byte) {
        s.run_count = 1;
        s.cur_run = 1;
    } else if (*s.prev_byte != byte) {
        ++s.trans_count;
        ++s.run_count;
        s.cur_run = 1;
    } else {
        ++s.cur_run;
    }
    if (s.cur_run > s.max_run)
        s.max_run = s.cur_run;
    s.prev_byte = byte;
    ++s.bytes_seen;
    ++s.cycle;

    if (config_.trace) {
        char line[160];
        std::snprintf(line, sizeof line,
                      "cycle=%llu byte=0x%02x bypass=%d count=%u s1=%llu trans=%u run=%u\n",
                      static_cast<unsigned long long>(s.cycle), byte, hazard ? 1 : 0, current + 1,
                      static_cast<unsigned long long>(s.s1), s.trans_count, s.cur_run);
        *config_.trace << line;
    }
}

void StreamEngine::stream(ByteView bytes) {
    for (std::uint8_t b : bytes)
        step(b);
}

EngineOutput StreamEngine::finalize(const EntropyLut &lut, FinalizeOptions opts) const {
    const EngineState &s = state_;
    if (s.bytes_seen == 0)
        throw std::logic_error("no bytes streamed");
    if (s.bytes_seen > kMaxStreamBytes)
        throw std::length_error("stream too long for moment reduction");

    EngineOutput out;
    EngineRecord &rec = out.record;
    rec.length = s.bytes_seen;

    // Drain the bypass register before the reduction scan.
    rec.counts = s.hist_counts;
    if (s.bypass.valid)
        rec.counts[s.bypass.address] = s.bypass.pending_count;

    // Reduction scan: one histogram address per cycle.
    std::uint64_t lut_sum = 0;
    std::array<std::uint64_t, 16> high{}, low{};
    bool seen = false;
    for (std::size_t j = 0; j < kHistBins; ++j) {
        const std::uint32_t c = rec.counts[j];
        lut_sum += lut_entry(lut, c, opts.wide_counts);
        high[j >> 4] += c;
        low[j & 0xF] += c;
        if (c == 0)
            continue;
        if (!seen) {
            rec.min_byte = static_cast<std::uint8_t>(j);
            seen = true;
        }
        rec.max_byte = static_cast<std::uint8_t>(j);
        ++rec.unique_count;
        if (c > rec.counts[rec.mode_byte])
            rec.mode_byte = static_cast<std::uint8_t>(j);
        if (j >= 0x20 && j <= 0x7E)
            rec.printable_count += c;
    }

    const std::uint64_t lut_len = lut_entry(lut, rec.length, opts.wide_counts);
    rec.entropy_q = entropy_word(lut_len, lut_sum, rec.length);
    std::uint64_t high_sum = 0, low_sum = 0;
    for (std::size_t k = 0; k < 16; ++k) {
        high_sum += lut_entry(lut, high[k], opts.wide_counts);
        low_sum += lut_entry(lut, low[k], opts.wide_counts);
    }
    rec.high_nibble_entropy_q = entropy_word(lut_len, high_sum, rec.length);
    rec.low_nibble_entropy_q = entropy_word(lut_len, low_sum, rec.length);

    // Moment reduction from the raw power sums.
    const Int128 n = static_cast<Int128>(s.bytes_seen);
    const Int128 p1 = s.s1, p2 = s.s2, p3 = s.s3, p4 = s.s4;
    rec.central.length = s.bytes_seen;
    rec.central.sum = s.s1;
    rec.central.a2 = n * p2 - p1 * p1;
    rec.central.a3 = n * n * p3 - 3 * n * p1 * p2 + 2 * p1 * p1 * p1;
    rec.central.a4 = n * n * n * p4 - 4 * n * n * p1 * p3 + 6 * n * p1 * p1 * p2 - 3 * p1 * p1 * p1 * p1;

    rec.transitions = s.trans_count;
    rec.run_count = s.run_count;
    rec.max_run = s.max_run;

    out.features = to_feature_vector(rec);
    out.cycles_total = kInitCycles + s.cycle + kReductionCycles + kEmissionCycles;
    return out;
}

DmaModel DmaModel::ideal() {
    DmaModel m;
    m.burst_setup_cycles = 0;
    m.fixed_overhead_cycles = 0;
    return m;
}

void DmaModel::validate() const {
    if (!(clock_hz > 0.0) || bytes_per_cycle == 0 || burst_bytes == 0)
        throw std::invalid_argument("DMA model parameters must be positive");
}

std::uint64_t DmaModel::cycles_for(std::uint64_t length) const {
    validate();
    const std::uint64_t stream = (length + bytes_per_cycle - 1) / bytes_per_cycle;
    const std::uint64_t bursts = (length + burst_bytes - 1) / burst_bytes;
    return stream + bursts * burst_setup_cycles + fixed_overhead_cycles;
}

double DmaModel::latency_s(std::uint64_t length) const {
    return static_cast<double>(cycles_for(length)) / clock_hz;
}

double DmaModel::throughput_mbps(std::uint64_t length) const {
    return static_cast<double>(length) * clock_hz / static_cast<double>(cycles_for(length)) / 1e6;
}

Simulation simulate(ByteView bytes, const DmaModel &dma, const EntropyLut &lut, EngineConfig config) {
    if (bytes.empty())
        throw std::invalid_argument("cannot simulate an empty stream");
    dma.validate();
    StreamEngine eng(config);
    eng.reset();
    eng.stream(bytes);
    Simulation sim;
    sim.output = eng.finalize(lut, FinalizeOptions{true});
    sim.cycles_total = dma.cycles_for(bytes.size());
    sim.latency_s = dma.latency_s(bytes.size());
    sim.throughput_mbps = dma.throughput_mbps(bytes.size());
    return sim;
}

double speedup(double sw_throughput, double hw_throughput) {
    if (!(sw_throughput > 0.0) || !(hw_throughput > 0.0))
        throw std::invalid_argument("throughputs must be positive");
    return hw_throughput / sw_throughput;
}

} // namespace bitscreen::engine
