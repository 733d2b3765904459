#pragma once

// Multi-scale 1D convolutional branch over the analysis segment, fused with
// the standardized statistical features in a logistic detection head.
//
//   x = bytes / 255
//   per scale s, channel c:  pooled = max_t relu(b + sum_u w[u] x[t + u - k/2])
//   embedding = W_p * pooled + b_p
//   logit = w_h . [embedding, standardize(fv)] + b_h

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bitscreen/binary_io.hpp"
#include "bitscreen/bitstream.hpp"
#include "bitscreen/features.hpp"

namespace bitscreen::seqmodel {

struct ConvSpec {
    std::vector<std::size_t> kernel_sizes{3, 7, 15};
    std::size_t channels_per_scale = 8;
    std::size_t embedding_dim = 64;

    /// Full-capacity preset with a 512-wide embedding.
    static ConvSpec wide();

    void validate() const;
    std::size_t pooled_dim() const { return kernel_sizes.size() * channels_per_scale; }
    bool operator==(const ConvSpec &) const = default;
};

/// Z-score parameters from a training split. Zero-variance features keep scale 1.
struct Scaler {
    std::array<double, kFeatureDim> mean{};
    std::array<double, kFeatureDim> scale{};

    static Scaler fit(std::span<const FeatureVector> rows);
    static Scaler identity();
    std::array<double, kFeatureDim> apply(const FeatureVector &fv) const;
    bool operator==(const Scaler &) const = default;
};

struct Example {
    Segment segment;
    FeatureVector features;
    int label = 0; ///< 1 = Trojan
};

/// Offsets of each parameter block inside the flat parameter vector.
struct ParamLayout {
    std::vector<std::size_t> conv_weight; // per scale, [channels][k]
    std::vector<std::size_t> conv_bias;   // per scale, [channels]
    std::size_t proj_weight = 0;          // [embedding][pooled]
    std::size_t proj_bias = 0;
    std::size_t head_weight = 0; // [embedding + kFeatureDim]
    std::size_t head_bias = 0;
    std::size_t total = 0;

    explicit ParamLayout(const ConvSpec &spec);
    bool operator==(const ParamLayout &) const = default;
};

/// Intermediate values kept for backpropagation.
struct Activations {
    std::vector<double> pooled;
    std::vector<std::size_t> argmax;
    std::vector<double> embedding;
    std::array<double, kFeatureDim> standardized{};
    double logit = 0;
    double probability = 0.5;
};

class HybridModel {
public:
    /// All parameters zero, no scaler.
    explicit HybridModel(ConvSpec spec = {});

    /// Uniform fan-in scaled weights, conv biases 0.01, other biases zero.
    static HybridModel initialized(ConvSpec spec, std::uint64_t seed);

    const ConvSpec &spec() const { return spec_; }
    const ParamLayout &layout() const { return layout_; }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    std::optional<Scaler> scaler;

    std::vector<double> pooled(const Segment &seg) const;
    std::vector<double> embed(const Segment &seg) const;

    /// Requires a scaler; throws std::logic_error otherwise.
    Activations forward(const Segment &seg, const FeatureVector &fv) const;
    double predict(const Segment &seg, const FeatureVector &fv) const;

    /// Binary cross-entropy of one example; accumulates d(loss)/d(params)
    /// into `grad` when it is non-empty.
    double loss_and_gradient(const Example &ex, std::span<double> grad) const;

    bool operator==(const HybridModel &) const = default;

private:
    void check_shape() const;

    ConvSpec spec_;
    ParamLayout layout_;
    std::vector<double> params_;
};

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double learning_rate = 2e-3;
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
    bool shuffle = true;
};

struct TrainLog {
    std::vector<double> epoch_loss; ///< mean loss over each epoch's minibatches
};

struct TrainResult {
    HybridModel model;
    TrainLog log;
};

/// Adam on mean binary cross-entropy per minibatch. The scaler is fitted on
/// `data`. Throws std::invalid_argument when only one class is present.
TrainResult train(std::span<const Example> data, const ConvSpec &spec, const TrainConfig &cfg);

/// Mean loss over a dataset.
double mean_loss(const HybridModel &model, std::span<const Example> data);

enum class GradCheckScope { all, head_only };

struct GradCheckConfig {
    double step = 1e-5;
    std::size_t samples = 100;
    std::uint64_t seed = 1;
    GradCheckScope scope = GradCheckScope::all;
};

/// Max over sampled parameters of |analytic - central difference| /
/// max(|analytic|, |numeric|, 1e-12).
double grad_check(const HybridModel &model, const Example &ex, const GradCheckConfig &cfg = {});

/// "BLNN0001", ConvSpec, scaler flag, then shaped little-endian tensors.
Bytes serialize(const HybridModel &model);
HybridModel deserialize_model(ByteView data);

} // namespace bitscreen::seqmodel
