#include "bitscreen/seqmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace bitscreen::seqmodel {

namespace {

constexpr double kConvBiasInit = 0.01;

constexpr char kModelMagic[] = "BLNN0001";

std::size_t max_half(const ConvSpec &spec) {
    return *std::max_element(spec.kernel_sizes.begin(), spec.kernel_sizes.end()) / 2;
}

/// Normalized segment with max_half zeros on each side.
std::vector<double> padded_input(const Segment &seg, std::size_t half) {
    std::vector<double> x(kSegmentLen + 2 * half, 0.0);
    for (std::size_t t = 0; t < kSegmentLen; ++t)
        x[half + t] = seg.bytes[t] / 255.0;
    return x;
}

/// softplus(-z) for y = 1, softplus(z) for y = 0.
double bce_with_logit(double z, int y) {
    const double s = y ? -z : z;
    return std::max(s, 0.0) + std::log1p(std::exp(-std::fabs(s)));
}

double sigmoid(double z) {
    if (z >= 0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace

ConvSpec ConvSpec::wide() {
    ConvSpec s;
    s.channels_per_scale = 32;
    s.embedding_dim = 512;
    return s;
}

void ConvSpec::validate() const {
    if (kernel_sizes.empty())
        throw std::invalid_argument("at least one kernel size required");
    for (std::size_t k : kernel_sizes)
        if (k == 0 || k % 2 == 0)
            throw std::invalid_argument("kernel sizes must be odd and positive");
    if (channels_per_scale == 0 || embedding_dim == 0)
        throw std::invalid_argument("dimensions must be positive");
}

Scaler Scaler::fit(std::span<const FeatureVector> rows) {
    if (rows.empty())
        throw std::invalid_argument("cannot fit scaler on no rows");
    Scaler s;
    const double n = static_cast<double>(rows.size());
    for (const auto &r : rows)
        for (std::size_t i = 0; i < kFeatureDim; ++i)
            s.mean[i] += r.values[i];
    for (auto &m : s.mean)
        m /= n;
    std::array<double, kFeatureDim> var{};
    for (const auto &r : rows)
        for (std::size_t i = 0; i < kFeatureDim; ++i) {
            const double d = r.values[i] - s.mean[i];
            var[i] += d * d;
        }
    for (std::size_t i = 0; i < kFeatureDim; ++i) {
        const double sd = std::sqrt(var[i] / n);
        s.scale[i] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

Scaler Scaler::identity() {
    Scaler s;
    s.scale.fill(1.0);
    return s;
}

std::array<double, kFeatureDim> Scaler::apply(const FeatureVector &fv) const {
    std::array<double, kFeatureDim> out;
    for (std::size_t i = 0; i < kFeatureDim; ++i)
        out[i] = (fv.values[i] - mean[i]) / scale[i];
    return out;
}

ParamLayout::ParamLayout(const ConvSpec &spec) {
    spec.validate();
    std::size_t off = 0;
    for (std::size_t k : spec.kernel_sizes) {
        conv_weight.push_back(off);
        off += spec.channels_per_scale * k;
        conv_bias.push_back(off);
        off += spec.channels_per_scale;
    }
    proj_weight = off;
    off += spec.embedding_dim * spec.pooled_dim();
    proj_bias = off;
    off += spec.embedding_dim;
    head_weight = off;
    off += spec.embedding_dim + kFeatureDim;
    head_bias = off;
    off += 1;
    total = off;
}

HybridModel::HybridModel(ConvSpec spec)
    : spec_(std::move(spec)), layout_(spec_), params_(layout_.total, 0.0) {}

HybridModel HybridModel::initialized(ConvSpec spec, std::uint64_t seed) {
    HybridModel m(std::move(spec));
    std::mt19937_64 rng(seed);
    auto fill = [&](std::size_t off, std::size_t n, double limit) {
        std::uniform_real_distribution<double> d(-limit, limit);
        for (std::size_t i = 0; i < n; ++i)
            m.params_[off + i] = d(rng);
    };
    const ConvSpec &s = m.spec_;
    for (std::size_t si = 0; si < s.kernel_sizes.size(); ++si) {
        const std::size_t k = s.kernel_sizes[si];
        fill(m.layout_.conv_weight[si], s.channels_per_scale * k, std::sqrt(6.0 / static_cast<double>(k)));
        // Positive bias keeps channels off the rectifier kink on all-zero windows.
        std::fill_n(m.params_.begin() + static_cast<std::ptrdiff_t>(m.layout_.conv_bias[si]), s.channels_per_scale,
                    kConvBiasInit);
    }
    fill(m.layout_.proj_weight, s.embedding_dim * s.pooled_dim(),
         std::sqrt(6.0 / static_cast<double>(s.pooled_dim() + s.embedding_dim)));
    fill(m.layout_.head_weight, s.embedding_dim + kFeatureDim,
         0.1 / std::sqrt(static_cast<double>(s.embedding_dim + kFeatureDim)));
    return m;
}

void HybridModel::check_shape() const {
    if (params_.size() != layout_.total)
        throw std::invalid_argument("dimension mismatch between parameters and spec");
}

namespace {

void pool_scales(const HybridModel &m, const std::vector<double> &x, std::vector<double> &pooled,
                 std::vector<std::size_t> &argmax) {
    const ConvSpec &s = m.spec();
    const ParamLayout &L = m.layout();
    const auto p = m.params();
    const std::size_t half = max_half(s);
    pooled.assign(s.pooled_dim(), 0.0);
    argmax.assign(s.pooled_dim(), 0);
    std::vector<double> z(kSegmentLen);
    for (std::size_t si = 0; si < s.kernel_sizes.size(); ++si) {
        const std::size_t k = s.kernel_sizes[si];
        const std::size_t shift = half - k / 2;
        for (std::size_t c = 0; c < s.channels_per_scale; ++c) {
            const double *w = &p[L.conv_weight[si] + c * k];
            std::fill(z.begin(), z.end(), p[L.conv_bias[si] + c]);
            for (std::size_t u = 0; u < k; ++u) {
                const double wu = w[u];
                const double *xs = &x[shift + u];
                for (std::size_t t = 0; t < kSegmentLen; ++t)
                    z[t] += wu * xs[t];
            }
            auto best = std::max_element(z.begin(), z.end());
            const std::size_t idx = si * s.channels_per_scale + c;
            pooled[idx] = std::max(*best, 0.0);
            argmax[idx] = static_cast<std::size_t>(best - z.begin());
        }
    }
}

std::vector<double> project(const HybridModel &m, const std::vector<double> &pooled) {
    const ConvSpec &s = m.spec();
    const ParamLayout &L = m.layout();
    const auto p = m.params();
    std::vector<double> e(s.embedding_dim);
    for (std::size_t i = 0; i < s.embedding_dim; ++i) {
        double acc = p[L.proj_bias + i];
        const double *row = &p[L.proj_weight + i * pooled.size()];
        for (std::size_t j = 0; j < pooled.size(); ++j)
            acc += row[j] * pooled[j];
        e[i] = acc;
    }
    return e;
}

} // namespace

std::vector<double> HybridModel::pooled(const Segment &seg) const {
    check_shape();
    std::vector<double> pooled;
    std::vector<std::size_t> argmax;
    pool_scales(*this, padded_input(seg, max_half(spec_)), pooled, argmax);
    return pooled;
}

std::vector<double> HybridModel::embed(const Segment &seg) const { return project(*this, pooled(seg)); }

Activations HybridModel::forward(const Segment &seg, const FeatureVector &fv) const {
    check_shape();
    if (!scaler)
        throw std::logic_error("model has no feature scaler; features cannot be standardized");
    Activations a;
    pool_scales(*this, padded_input(seg, max_half(spec_)), a.pooled, a.argmax);
    a.embedding = project(*this, a.pooled);
    a.standardized = scaler->apply(fv);
    double z = params_[layout_.head_bias];
    const double *w = &params_[layout_.head_weight];
    for (std::size_t i = 0; i < spec_.embedding_dim; ++i)
        z += w[i] * a.embedding[i];
    for (std::size_t i = 0; i < kFeatureDim; ++i)
        z += w[spec_.embedding_dim + i] * a.standardized[i];
    a.logit = z;
    // Saturated logits would otherwise round to exactly 0 or 1.
    a.probability = std::clamp(sigmoid(a.logit), std::numeric_limits<double>::min(), 1.0 - 0x1p-53);
    return a;
}

double HybridModel::predict(const Segment &seg, const FeatureVector &fv) const {
    return forward(seg, fv).probability;
}

double HybridModel::loss_and_gradient(const Example &ex, std::span<double> grad) const {
    const Activations a = forward(ex.segment, ex.features);
    const double loss = bce_with_logit(a.logit, ex.label);
    if (grad.empty())
        return loss;
    if (grad.size() != params_.size())
        throw std::invalid_argument("gradient buffer has wrong size");

    const std::size_t E = spec_.embedding_dim;
    const std::size_t P = spec_.pooled_dim();
    const double g = sigmoid(a.logit) - ex.label;

    const double *wh = &params_[layout_.head_weight];
    double *gh = &grad[layout_.head_weight];
    for (std::size_t i = 0; i < E; ++i)
        gh[i] += g * a.embedding[i];
    for (std::size_t i = 0; i < kFeatureDim; ++i)
        gh[E + i] += g * a.standardized[i];
    grad[layout_.head_bias] += g;

    std::vector<double> dpooled(P, 0.0);
    for (std::size_t i = 0; i < E; ++i) {
        const double de = g * wh[i];
        if (de == 0.0)
            continue;
        grad[layout_.proj_bias + i] += de;
        const double *row = &params_[layout_.proj_weight + i * P];
        double *grow = &grad[layout_.proj_weight + i * P];
        for (std::size_t j = 0; j < P; ++j) {
            grow[j] += de * a.pooled[j];
            dpooled[j] += de * row[j];
        }
    }

    // Max pooling routes the gradient to a single position per channel; the
    // rectifier blocks it when the pooled value is not positive.
    const std::size_t half = max_half(spec_);
    for (std::size_t si = 0; si < spec_.kernel_sizes.size(); ++si) {
        const std::size_t k = spec_.kernel_sizes[si];
        for (std::size_t c = 0; c < spec_.channels_per_scale; ++c) {
            const std::size_t idx = si * spec_.channels_per_scale + c;
            if (a.pooled[idx] <= 0.0 || dpooled[idx] == 0.0)
                continue;
            const std::size_t t = a.argmax[idx];
            double *gw = &grad[layout_.conv_weight[si] + c * k];
            for (std::size_t u = 0; u < k; ++u) {
                // input index t + u - k/2 in the unpadded segment
                const std::size_t pos = t + u + half - k / 2;
                if (pos < half || pos >= half + kSegmentLen)
                    continue;
                gw[u] += dpooled[idx] * (ex.segment.bytes[pos - half] / 255.0);
            }
            grad[layout_.conv_bias[si] + c] += dpooled[idx];
        }
    }
    return loss;
}

double mean_loss(const HybridModel &model, std::span<const Example> data) {
    if (data.empty())
        throw std::invalid_argument("empty dataset");
    double total = 0;
    for (const auto &ex : data)
        total += model.loss_and_gradient(ex, {});
    return total / static_cast<double>(data.size());
}

TrainResult train(std::span<const Example> data, const ConvSpec &spec, const TrainConfig &cfg) {
    if (data.empty())
        throw std::invalid_argument("empty training set");
    const bool has_pos = std::any_of(data.begin(), data.end(), [](const Example &e) { return e.label == 1; });
    const bool has_neg = std::any_of(data.begin(), data.end(), [](const Example &e) { return e.label == 0; });
    if (!has_pos || !has_neg)
        throw std::invalid_argument("training set must contain both classes");
    if (cfg.batch_size == 0)
        throw std::invalid_argument("batch size must be positive");

    TrainResult result{HybridModel::initialized(spec, cfg.seed), {}};
    HybridModel &model = result.model;
    std::vector<FeatureVector> rows;
    rows.reserve(data.size());
    for (const auto &ex : data)
        rows.push_back(ex.features);
    model.scaler = Scaler::fit(rows);

    const std::size_t n = model.params().size();
    std::vector<double> grad(n), m1(n, 0.0), m2(n, 0.0);
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t t = 0;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle)
            std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t i = start; i < end; ++i)
                epoch_loss += model.loss_and_gradient(data[order[i]], grad);
            const double inv = 1.0 / static_cast<double>(end - start);
            ++t;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
            auto p = model.params();
            for (std::size_t j = 0; j < n; ++j) {
                const double gj = grad[j] * inv + cfg.weight_decay * p[j];
                m1[j] = beta1 * m1[j] + (1 - beta1) * gj;
                m2[j] = beta2 * m2[j] + (1 - beta2) * gj * gj;
                p[j] -= cfg.learning_rate * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + eps);
            }
        }
        result.log.epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));
    }
    return result;
}

double grad_check(const HybridModel &model, const Example &ex, const GradCheckConfig &cfg) {
    if (cfg.step < 1e-6 || cfg.step > 1e-4)
        throw std::invalid_argument("finite-difference step must lie in [1e-6, 1e-4]");
    std::vector<double> grad(model.params().size(), 0.0);
    model.loss_and_gradient(ex, grad);

    const ParamLayout &L = model.layout();
    const std::size_t lo = cfg.scope == GradCheckScope::head_only ? L.head_weight : 0;
    const std::size_t hi = L.total;
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(lo, hi - 1);

    HybridModel probe = model;
    double worst = 0;
    for (std::size_t s = 0; s < cfg.samples; ++s) {
        const std::size_t j = pick(rng);
        const double orig = probe.params()[j];
        probe.params()[j] = orig + cfg.step;
        const double up = probe.loss_and_gradient(ex, {});
        probe.params()[j] = orig - cfg.step;
        const double down = probe.loss_and_gradient(ex, {});
        probe.params()[j] = orig;
        const double numeric = (up - down) / (2 * cfg.step);
        const double denom = std::max({std::fabs(grad[j]), std::fabs(numeric), 1e-12});
        worst = std::max(worst, std::fabs(grad[j] - numeric) / denom);
    }
    return worst;
}

namespace {

void put_tensor(LeWriter &w, std::initializer_list<std::size_t> shape, std::span<const double> values) {
    w.u64(shape.size());
    for (std::size_t d : shape)
        w.u64(d);
    w.f64s(values);
}

void get_tensor(LeReader &r, std::initializer_list<std::size_t> shape, std::span<double> out) {
    if (r.u64() != shape.size())
        throw FormatError("tensor rank mismatch");
    for (std::size_t d : shape)
        if (r.u64() != d)
            throw FormatError("tensor shape mismatch");
    r.f64s(out);
}

} // namespace

Bytes serialize(const HybridModel &model) {
    const ConvSpec &s = model.spec();
    const ParamLayout &L = model.layout();
    const auto p = model.params();
    LeWriter w;
    w.magic(kModelMagic);
    w.u64(s.kernel_sizes.size());
    for (std::size_t k : s.kernel_sizes)
        w.u64(k);
    w.u64(s.channels_per_scale);
    w.u64(s.embedding_dim);

    const std::size_t C = s.channels_per_scale, E = s.embedding_dim, P = s.pooled_dim();
    for (std::size_t si = 0; si < s.kernel_sizes.size(); ++si) {
        const std::size_t k = s.kernel_sizes[si];
        put_tensor(w, {C, k}, p.subspan(L.conv_weight[si], C * k));
        put_tensor(w, {C}, p.subspan(L.conv_bias[si], C));
    }
    put_tensor(w, {E, P}, p.subspan(L.proj_weight, E * P));
    put_tensor(w, {E}, p.subspan(L.proj_bias, E));
    put_tensor(w, {E + kFeatureDim}, p.subspan(L.head_weight, E + kFeatureDim));
    put_tensor(w, {1}, p.subspan(L.head_bias, 1));

    w.u64(model.scaler ? 1 : 0);
    if (model.scaler) {
        put_tensor(w, {kFeatureDim}, model.scaler->mean);
        put_tensor(w, {kFeatureDim}, model.scaler->scale);
    }
    return w.take();
}

HybridModel deserialize_model(ByteView data) {
    LeReader r(data);
    r.expect_magic(kModelMagic);
    ConvSpec s;
    const std::uint64_t scales = r.u64();
    if (scales == 0 || scales > 64)
        throw FormatError("implausible scale count");
    s.kernel_sizes.clear();
    for (std::uint64_t i = 0; i < scales; ++i)
        s.kernel_sizes.push_back(r.u64());
    s.channels_per_scale = r.u64();
    s.embedding_dim = r.u64();
    if (s.channels_per_scale > 4096 || s.embedding_dim > 65536)
        throw FormatError("implausible layer width");
    for (std::size_t k : s.kernel_sizes)
        if (k == 0 || k % 2 == 0 || k > 4095)
            throw FormatError("bad kernel size");

    HybridModel model(s);
    const ParamLayout &L = model.layout();
    auto p = model.params();
    const std::size_t C = s.channels_per_scale, E = s.embedding_dim, P = s.pooled_dim();
    for (std::size_t si = 0; si < s.kernel_sizes.size(); ++si) {
        const std::size_t k = s.kernel_sizes[si];
        get_tensor(r, {C, k}, p.subspan(L.conv_weight[si], C * k));
        get_tensor(r, {C}, p.subspan(L.conv_bias[si], C));
    }
    get_tensor(r, {E, P}, p.subspan(L.proj_weight, E * P));
    get_tensor(r, {E}, p.subspan(L.proj_bias, E));
    get_tensor(r, {E + kFeatureDim}, p.subspan(L.head_weight, E + kFeatureDim));
    get_tensor(r, {1}, p.subspan(L.head_bias, 1));

    const std::uint64_t has_scaler = r.u64();
    if (has_scaler > 1)
        throw FormatError("bad scaler flag");
    if (has_scaler) {
        Scaler sc;
        get_tensor(r, {kFeatureDim}, sc.mean);
        get_tensor(r, {kFeatureDim}, sc.scale);
        model.scaler = sc;
    }
    r.expect_end();
    return model;
}

} // namespace bitscreen::seqmodel
