#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bitscreen/corpus.hpp"
#include "bitscreen/seqmodel.hpp"
#include "test_support.hpp"

using namespace bitscreen;
using namespace bitscreen::seqmodel;

namespace {

Example example_from(ByteView payload, int label) {
    Example ex;
    ex.segment = make_segment(payload);
    ex.features = features::feature_vector(ex.segment);
    ex.label = label;
    return ex;
}

std::vector<Example> corpus_examples(const corpus::CorpusConfig &cfg, std::uint64_t seed) {
    const corpus::GeneratedCorpus c = corpus::generate_corpus(cfg, seed);
    std::vector<Example> out;
    for (std::size_t i = 0; i < c.files.size(); ++i)
        out.push_back(example_from(extract_payload(c.files[i].bytes),
                                   c.manifest.entries[i].label == corpus::Label::trojan));
    return out;
}

/// Two blobs: dark noisy segments are class 0, bright ones class 1.
std::vector<Example> blobs(std::size_t per_class, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Example> out;
    for (int label = 0; label < 2; ++label) {
        std::uniform_int_distribution<int> d(label ? 150 : 10, label ? 240 : 100);
        for (std::size_t i = 0; i < per_class; ++i) {
            Bytes b(4096);
            for (auto &x : b)
                x = static_cast<std::uint8_t>(d(rng));
            out.push_back(example_from(b, label));
        }
    }
    return out;
}

ConvSpec small_spec() {
    ConvSpec s;
    s.kernel_sizes = {3, 5};
    s.channels_per_scale = 2;
    s.embedding_dim = 4;
    return s;
}

HybridModel zero_bias_model(std::uint64_t seed) {
    HybridModel m = HybridModel::initialized(ConvSpec{}, seed);
    const ParamLayout &L = m.layout();
    for (std::size_t b : L.conv_bias)
        std::fill_n(m.params().begin() + static_cast<std::ptrdiff_t>(b), ConvSpec{}.channels_per_scale, 0.0);
    return m;
}

} // namespace

TEST_CASE("ConvSpec validation") {
    ConvSpec s;
    CHECK_NOTHROW(s.validate());
    s.kernel_sizes = {4};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.kernel_sizes = {};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = ConvSpec{};
    s.embedding_dim = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    CHECK(ConvSpec::wide().embedding_dim == 512);
}

TEST_CASE("embedding length equals embedding_dim for every spec") {
    std::mt19937_64 rng(3);
    const Example ex = example_from(testing_support::random_bytes(rng, 5000), 0);
    for (ConvSpec s : {ConvSpec{}, small_spec(), ConvSpec::wide()}) {
        const HybridModel m = HybridModel::initialized(s, 1);
        CHECK(m.embed(ex.segment).size() == s.embedding_dim);
        CHECK(m.pooled(ex.segment).size() == s.pooled_dim());
        CHECK(m.layout().total == m.params().size());
    }
}

TEST_CASE("all-zero segment with zero biases embeds to zero") {
    const HybridModel m = zero_bias_model(11);
    Segment zero;
    zero.payload_len = 4096;
    for (double v : m.embed(zero))
        CHECK(v == 0.0);
}

TEST_CASE("conv biases start positive") {
    const HybridModel m = HybridModel::initialized(ConvSpec{}, 11);
    for (std::size_t b : m.layout().conv_bias)
        for (std::size_t c = 0; c < ConvSpec{}.channels_per_scale; ++c)
            CHECK(m.params()[b + c] > 0.0);
}

TEST_CASE("identity kernel pools to the largest normalized byte") {
    ConvSpec s;
    s.kernel_sizes = {3};
    s.channels_per_scale = 1;
    s.embedding_dim = 1;
    HybridModel m(s);
    const ParamLayout &L = m.layout();
    m.params()[L.conv_weight[0] + 1] = 1.0;
    m.params()[L.proj_weight] = 1.0;
    Bytes ramp(4096);
    for (std::size_t i = 0; i < ramp.size(); ++i)
        ramp[i] = static_cast<std::uint8_t>(i * 200 / 4095);
    const Segment seg = make_segment(ramp);
    CHECK(m.pooled(seg)[0] == 200.0 / 255.0);
    CHECK(m.embed(seg)[0] == 200.0 / 255.0);
}

TEST_CASE("initialization and embedding are reproducible") {
    std::mt19937_64 rng(5);
    const Example ex = example_from(testing_support::random_bytes(rng, 4096), 1);
    const HybridModel a = HybridModel::initialized(ConvSpec{}, 99);
    const HybridModel b = HybridModel::initialized(ConvSpec{}, 99);
    CHECK(a == b);
    CHECK(a.embed(ex.segment) == b.embed(ex.segment));
    CHECK_FALSE(HybridModel::initialized(ConvSpec{}, 100) == a);
}

TEST_CASE("zero parameters predict exactly one half") {
    HybridModel m;
    m.scaler = Scaler::identity();
    std::mt19937_64 rng(1);
    const Example ex = example_from(testing_support::random_bytes(rng, 4096), 0);
    CHECK(m.predict(ex.segment, ex.features) == 0.5);
}

TEST_CASE("prediction without a scaler is an error") {
    const HybridModel m = HybridModel::initialized(ConvSpec{}, 1);
    std::mt19937_64 rng(1);
    const Example ex = example_from(testing_support::random_bytes(rng, 100), 0);
    CHECK_THROWS_AS(m.predict(ex.segment, ex.features), std::logic_error);
}

TEST_CASE("probability stays strictly inside (0,1)") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> big(0.0, 50.0);
    for (int trial = 0; trial < 30; ++trial) {
        HybridModel m = HybridModel::initialized(small_spec(), static_cast<std::uint64_t>(trial));
        m.scaler = Scaler::identity();
        for (auto &p : m.params())
            p = big(rng);
        const auto shape = static_cast<testing_support::Shape>(trial % 6);
        const Example ex = example_from(testing_support::shaped_bytes(rng, 4096, shape), 0);
        const double p = m.predict(ex.segment, ex.features);
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }
}

TEST_CASE("zeroed head gives ln 2 loss per sample") {
    HybridModel m = HybridModel::initialized(ConvSpec{}, 4);
    const ParamLayout &L = m.layout();
    std::fill(m.params().begin() + static_cast<std::ptrdiff_t>(L.head_weight), m.params().end(), 0.0);
    const auto data = blobs(5, 2);
    std::vector<FeatureVector> rows;
    for (const auto &e : data)
        rows.push_back(e.features);
    m.scaler = Scaler::fit(rows);
    CHECK(mean_loss(m, data) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("max pooling is invariant to shifting an isolated motif") {
    const HybridModel m = HybridModel::initialized(ConvSpec{}, 21);
    const Bytes motif{0x12, 0xF0, 0x3C, 0x99, 0x01, 0xEE, 0x7A};
    auto place = [&](std::size_t at) {
        Bytes b(4096, 0);
        std::copy(motif.begin(), motif.end(), b.begin() + static_cast<std::ptrdiff_t>(at));
        return make_segment(b);
    };
    const auto ref = m.embed(place(1000));
    for (std::size_t at : {100u, 1700u, 2500u, 4000u})
        CHECK(m.embed(place(at)) == ref);
}

TEST_CASE("training separates two blobs") {
    const auto data = blobs(20, 7);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-2;
    const TrainResult r = train(data, small_spec(), cfg);
    for (const auto &ex : data) {
        const double p = r.model.predict(ex.segment, ex.features);
        CHECK((p >= 0.5 ? 1 : 0) == ex.label);
    }
}

TEST_CASE("training is deterministic for a fixed seed") {
    const auto data = blobs(6, 9);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    const TrainResult a = train(data, small_spec(), cfg);
    const TrainResult b = train(data, small_spec(), cfg);
    CHECK(a.model == b.model);
    CHECK(a.log.epoch_loss == b.log.epoch_loss);
}

TEST_CASE("training loss strictly decreases over the first five epochs on 200 corpus samples") {
    corpus::CorpusConfig cc;
    for (std::size_t i = 0; i < corpus::kFamilyCount; ++i)
        cc.quotas.push_back({static_cast<corpus::Family>(i), i + 1 < corpus::kFamilyCount ? 14u : 16u,
                             i + 1 < corpus::kFamilyCount ? 14u : 16u});
    const auto data = corpus_examples(cc, 2024);
    REQUIRE(data.size() == 200);
    TrainConfig cfg;
    cfg.epochs = 20;
    const TrainResult r = train(data, ConvSpec{}, cfg);
    REQUIRE(r.log.epoch_loss.size() == 20);
    for (std::size_t e = 1; e < 5; ++e)
        CHECK(r.log.epoch_loss[e] < r.log.epoch_loss[e - 1]);
    CHECK(r.log.epoch_loss.back() < r.log.epoch_loss.front());
}

TEST_CASE("learning rate zero leaves parameters unchanged") {
    const auto data = blobs(4, 1);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 3;
    cfg.learning_rate = 0;
    const TrainResult r = train(data, small_spec(), cfg);
    const HybridModel init = HybridModel::initialized(small_spec(), cfg.seed);
    CHECK(std::equal(r.model.params().begin(), r.model.params().end(), init.params().begin()));
}

TEST_CASE("duplicated dataset follows the same trajectory") {
    const auto data = blobs(6, 13);
    std::vector<Example> doubled;
    for (const auto &ex : data) {
        doubled.push_back(ex);
        doubled.push_back(ex);
    }
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 4;
    cfg.shuffle = false;
    const TrainResult a = train(data, small_spec(), cfg);
    TrainConfig cfg2 = cfg;
    cfg2.batch_size = 8;
    const TrainResult b = train(doubled, small_spec(), cfg2);
    for (std::size_t j = 0; j < a.model.params().size(); ++j)
        CHECK(b.model.params()[j] == doctest::Approx(a.model.params()[j]).epsilon(1e-9).scale(1e-12));
    for (std::size_t e = 0; e < cfg.epochs; ++e)
        CHECK(b.log.epoch_loss[e] == doctest::Approx(a.log.epoch_loss[e]).epsilon(1e-12));
}

TEST_CASE("training rejects single-class data and empty batches") {
    auto data = blobs(3, 1);
    std::vector<Example> one_class(data.begin(), data.begin() + 3);
    CHECK_THROWS_AS(train(one_class, small_spec(), {}), std::invalid_argument);
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(data, small_spec(), cfg), std::invalid_argument);
}

TEST_CASE("analytic gradients match central differences") {
    const auto data = blobs(10, 31);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 5;
    const TrainResult r = train(data, ConvSpec{}, cfg);
    const auto probes = blobs(3, 32);
    for (std::size_t i = 0; i < 5; ++i) {
        GradCheckConfig gc;
        gc.seed = i + 1;
        gc.samples = 100;
        CHECK(grad_check(r.model, probes[i], gc) <= 1e-4);
        gc.scope = GradCheckScope::head_only;
        CHECK(grad_check(r.model, probes[i], gc) <= 1e-7);
    }
    GradCheckConfig bad;
    bad.step = 1e-3;
    CHECK_THROWS_AS(grad_check(r.model, data[0], bad), std::invalid_argument);
}

TEST_CASE("zero input with zero biases gives an exactly zero conv gradient") {
    HybridModel m = zero_bias_model(6);
    m.scaler = Scaler::identity();
    Example ex;
    ex.segment.payload_len = 4096;
    ex.label = 1;
    std::vector<double> grad(m.params().size(), 0.0);
    m.loss_and_gradient(ex, grad);
    const ParamLayout &L = m.layout();
    for (std::size_t j = 0; j < L.proj_weight; ++j)
        CHECK(grad[j] == 0.0);
}

TEST_CASE("model checkpoint round-trips and rejects corruption") {
    const auto data = blobs(5, 3);
    TrainConfig cfg;
    cfg.epochs = 2;
    const TrainResult r = train(data, small_spec(), cfg);
    const Bytes blob = serialize(r.model);
    const HybridModel back = deserialize_model(blob);
    CHECK(back == r.model);
    for (const auto &ex : data)
        CHECK(back.predict(ex.segment, ex.features) == r.model.predict(ex.segment, ex.features));

    Bytes truncated(blob.begin(), blob.end() - 9);
    CHECK_THROWS_AS(deserialize_model(truncated), FormatError);
    Bytes bad_magic = blob;
    bad_magic[0] ^= 0xFF;
    CHECK_THROWS_AS(deserialize_model(bad_magic), FormatError);
    Bytes trailing = blob;
    trailing.push_back(0);
    CHECK_THROWS_AS(deserialize_model(trailing), FormatError);

    HybridModel no_scaler = HybridModel::initialized(small_spec(), 2);
    CHECK(deserialize_model(serialize(no_scaler)) == no_scaler);
}
