#pragma once

// Cycle-level model of the streaming byte-statistics datapath: a histogram
// BRAM with one cycle of read latency and write forwarding, power-sum
// accumulators, a transition/run monitor and an n·log2(n) lookup table used to
// assemble entropy after the stream ends.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "bitscreen/binary_io.hpp"
#include "bitscreen/features.hpp"

namespace bitscreen::engine {

inline constexpr std::uint64_t kInitCycles = 256;
inline constexpr std::uint64_t kReductionCycles = 256;
inline constexpr std::uint64_t kEmissionCycles = kFeatureDim;
inline constexpr std::uint64_t kFixedOverheadCycles = kInitCycles + kReductionCycles + kEmissionCycles;

/// Upper bound on bytes per stream for the 128-bit moment reduction.
inline constexpr std::uint64_t kMaxStreamBytes = std::uint64_t{1} << 22;

inline constexpr int kLutFracBits = 24;
inline constexpr double kLutScale = double(std::uint64_t{1} << kLutFracBits);

/// n·log2(n) for counts 0..kMaxCount, with kLutFracBits fractional bits.
/// Entries need up to 45 bits, so they are held in 64-bit words.
class EntropyLut {
public:
    static constexpr std::uint64_t kMaxCount = 65536;

    EntropyLut();

    /// Table entry; throws std::out_of_range past kMaxCount.
    std::uint64_t operator[](std::uint64_t n) const;

    /// Entry for any count. Counts past kMaxCount are normalized by a right
    /// shift and corrected to first order.
    std::uint64_t wide(std::uint64_t n) const;

    std::size_t size() const { return table_.size(); }

private:
    std::vector<std::uint64_t> table_;
};

/// Shared immutable table.
const EntropyLut &default_lut();

/// Pending histogram write, visible to the next cycle's read only through
/// forwarding.
struct BypassRegister {
    bool valid = false;
    std::uint8_t address = 0;
    std::uint32_t pending_count = 0;

    bool operator==(const BypassRegister &) const = default;
};

struct EngineState {
    std::array<std::uint32_t, kHistBins> hist_counts{}; // BRAM contents
    std::uint64_t s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    std::uint32_t trans_count = 0;
    std::optional<std::uint8_t> prev_byte;
    std::uint32_t cur_run = 0;
    std::uint32_t max_run = 0;
    std::uint32_t run_count = 0;
    std::uint64_t bytes_seen = 0;
    std::uint64_t cycle = 0;
    BypassRegister bypass;
    std::uint64_t forwarded_reads = 0;

    /// Count of byte j including a write still held in the bypass register.
    std::uint32_t count(std::uint8_t j) const;
    bool invariants_hold() const;

    bool operator==(const EngineState &) const = default;
};

/// Raw words latched at the end of a stream. Count-derived slots stay as
/// integers; the entropy slots are fixed point with kLutFracBits fraction bits.
struct EngineRecord {
    std::array<std::uint32_t, kHistBins> counts{};
    std::uint64_t length = 0;
    features::CentralSums central;
    std::uint32_t transitions = 0;
    std::uint32_t run_count = 0;
    std::uint32_t max_run = 0;
    std::uint8_t min_byte = 0;
    std::uint8_t max_byte = 0;
    std::uint8_t mode_byte = 0;
    std::uint32_t unique_count = 0;
    std::uint64_t printable_count = 0;
    std::uint64_t entropy_q = 0;
    std::uint64_t high_nibble_entropy_q = 0;
    std::uint64_t low_nibble_entropy_q = 0;
};

/// Converts latched words into the real-valued feature layout.
FeatureVector to_feature_vector(const EngineRecord &rec);

struct EngineOutput {
    EngineRecord record;
    FeatureVector features;
    std::uint64_t cycles_total = 0;
};

struct EngineConfig {
    bool forwarding = true;        ///< disable to observe the raw RAW hazard
    std::ostream *trace = nullptr; ///< per-cycle event log
};

struct FinalizeOptions {
    bool wide_counts = false; ///< allow counts past the LUT range
};

class StreamEngine {
public:
    explicit StreamEngine(EngineConfig config = {});
    StreamEngine(EngineState state, EngineConfig config);

    /// Clears all accumulators. Costs kInitCycles, charged in finalize().
    void reset();

    /// One cycle: read-increment-write on the histogram plus every
    /// accumulator update. Throws std::overflow_error on counter saturation.
    void step(std::uint8_t byte);

    void stream(ByteView bytes);

    EngineOutput finalize(const EntropyLut &lut = default_lut(), FinalizeOptions opts = {}) const;

    const EngineState &state() const { return state_; }

private:
    EngineState state_;
    EngineConfig config_;
};

/// Transfer path timing around the engine.
struct DmaModel {
    double clock_hz = 100e6;
    std::uint64_t bytes_per_cycle = 1;
    std::uint64_t burst_bytes = 4096;
    std::uint64_t burst_setup_cycles = 780;
    std::uint64_t fixed_overhead_cycles = kFixedOverheadCycles;

    /// 1 byte/cycle with no setup or fixed cost.
    static DmaModel ideal();

    void validate() const;
    std::uint64_t cycles_for(std::uint64_t length) const;
    double latency_s(std::uint64_t length) const;
    double throughput_mbps(std::uint64_t length) const;
};

struct Simulation {
    EngineOutput output;
    std::uint64_t cycles_total = 0;
    double throughput_mbps = 0;
    double latency_s = 0;
};

Simulation simulate(ByteView bytes, const DmaModel &dma, const EntropyLut &lut = default_lut(),
                    EngineConfig config = {});

/// hw / sw. Both must be positive.
double speedup(double sw_throughput, double hw_throughput);

} // namespace bitscreen::engine
