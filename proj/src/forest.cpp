#include "bitscreen/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace bitscreen::forest {

namespace {

constexpr std::string_view kForestMagic = "BLRF0001";
constexpr std::size_t kMaxSamples = std::size_t{1} << 20;

__extension__ using Int128 = __int128;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::size_t argmax_lowest(std::span<const std::uint64_t> counts) {
    return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

/// Sum_L c^2 / n_L + Sum_R c^2 / n_R as num / den.
struct Score {
    std::uint64_t num = 0;
    std::uint64_t den = 1;
    bool beats(const Score &o) const { return Int128(num) * o.den > Int128(o.num) * den; }
};

double midpoint(double a, double b) {
    const double mid = a / 2 + b / 2;
    return mid >= a && mid < b ? mid : a;
}

class TreeBuilder {
public:
    TreeBuilder(const Dataset &data, const ForestConfig &cfg, std::uint64_t seed)
        : data_(data), cfg_(cfg), rng_(seed), perm_(data.dim) {
        std::iota(perm_.begin(), perm_.end(), 0);
    }

    DecisionTree build() {
        std::vector<std::size_t> samples(data_.rows());
        if (cfg_.bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, data_.rows() - 1);
            for (auto &s : samples)
                s = pick(rng_);
        } else {
            std::iota(samples.begin(), samples.end(), 0);
        }
        grow(samples, 0);
        return std::move(tree_);
    }

private:
    std::size_t grow(std::vector<std::size_t> &samples, std::size_t depth) {
        const std::size_t index = tree_.nodes.size();
        tree_.nodes.emplace_back();
        std::vector<std::uint64_t> counts(data_.n_classes, 0);
        for (auto s : samples)
            ++counts[data_.y[s]];
        const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
        tree_.nodes[index].counts = std::move(counts);
        if (pure || depth >= cfg_.max_depth || samples.size() < cfg_.min_samples_split)
            return index;

        const std::size_t m = std::min(cfg_.m, data_.dim);
        for (std::size_t i = 0; i < m; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, data_.dim - 1);
            std::swap(perm_[i], perm_[pick(rng_)]);
        }
        std::vector<std::size_t> features(perm_.begin(), perm_.begin() + static_cast<std::ptrdiff_t>(m));
        std::sort(features.begin(), features.end());

        const auto split = best_split(data_, samples, features);
        if (!split)
            return index;
        std::vector<std::size_t> left, right;
        for (auto s : samples)
            (data_.row(s)[split->feature] <= split->threshold ? left : right).push_back(s);
        samples.clear();
        samples.shrink_to_fit();

        const std::size_t l = grow(left, depth + 1);
        const std::size_t r = grow(right, depth + 1);
        Node &node = tree_.nodes[index];
        node.feature = static_cast<std::int64_t>(split->feature);
        node.threshold = split->threshold;
        node.left = l;
        node.right = r;
        return index;
    }

    const Dataset &data_;
    const ForestConfig &cfg_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> perm_;
    DecisionTree tree_;
};

} // namespace

void Dataset::add(std::span<const double> features, std::size_t label) {
    if (features.size() != dim)
        throw std::invalid_argument("feature row has wrong dimension");
    if (label >= n_classes)
        throw std::invalid_argument("label out of range");
    x.insert(x.end(), features.begin(), features.end());
    y.push_back(label);
}

double gini(std::span<const std::uint64_t> counts) {
    const std::uint64_t n = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    if (n == 0)
        throw std::invalid_argument("gini of an empty node");
    double sum = 0;
    for (auto c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(n);
        sum += p * p;
    }
    return 1.0 - sum;
}

std::optional<Split> best_split(const Dataset &data, std::span<const std::size_t> samples,
                                std::span<const std::size_t> features) {
    const std::size_t n = samples.size();
    if (n < 2)
        return std::nullopt;
    if (n > kMaxSamples)
        throw std::length_error("too many samples for exact split scoring");

    std::vector<std::uint64_t> total(data.n_classes, 0);
    for (auto s : samples)
        ++total[data.y[s]];
    Score best;
    for (auto c : total)
        best.num += c * c;
    best.den = n;

    std::vector<std::size_t> order(features.begin(), features.end());
    std::sort(order.begin(), order.end());

    std::optional<Split> result;
    std::vector<std::pair<double, std::size_t>> column(n);
    std::vector<std::uint64_t> left(data.n_classes);
    for (std::size_t f : order) {
        if (f >= data.dim)
            throw std::out_of_range("feature index out of range");
        for (std::size_t i = 0; i < n; ++i)
            column[i] = {data.row(samples[i])[f], data.y[samples[i]]};
        std::sort(column.begin(), column.end(),
                  [](const auto &a, const auto &b) { return a.first < b.first; });
        std::fill(left.begin(), left.end(), 0);
        std::uint64_t sl = 0, sr = 0;
        for (auto c : total)
            sr += c * c;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const std::size_t c = column[i].second;
            const std::uint64_t cl = left[c]++;
            const std::uint64_t cr = total[c] - cl;
            sl += 2 * cl + 1;
            sr -= 2 * cr - 1;
            if (column[i].first == column[i + 1].first)
                continue;
            const std::uint64_t nl = i + 1, nr = n - nl;
            const Score s{sl * nr + sr * nl, nl * nr};
            if (s.beats(best)) {
                best = s;
                result = Split{f, midpoint(column[i].first, column[i + 1].first)};
            }
        }
    }
    return result;
}

const Node &DecisionTree::leaf_for(std::span<const double> x) const {
    const Node *node = &nodes.at(0);
    while (!node->is_leaf())
        node = &nodes[x[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left : node->right];
    return *node;
}

std::size_t DecisionTree::predict(std::span<const double> x) const { return argmax_lowest(leaf_for(x).counts); }

std::size_t DecisionTree::depth() const {
    std::vector<std::size_t> d(nodes.size(), 0);
    std::size_t deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        deepest = std::max(deepest, d[i]);
        if (!nodes[i].is_leaf())
            d[nodes[i].left] = d[nodes[i].right] = d[i] + 1;
    }
    return deepest;
}

Prediction Forest::predict(std::span<const double> x) const {
    if (x.size() != dim)
        throw std::invalid_argument("feature vector has wrong dimension");
    std::vector<std::uint64_t> votes(n_classes, 0);
    for (const auto &t : trees)
        ++votes[t.predict(x)];
    Prediction p;
    p.label = argmax_lowest(votes);
    p.probabilities.resize(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c)
        p.probabilities[c] = static_cast<double>(votes[c]) / static_cast<double>(trees.size());
    return p;
}

std::vector<std::size_t> Forest::predict_all(const Dataset &data) const {
    std::vector<std::size_t> out(data.rows());
    for (std::size_t i = 0; i < data.rows(); ++i)
        out[i] = predict(data.row(i)).label;
    return out;
}

Forest fit(const Dataset &data, const ForestConfig &config) {
    if (data.rows() == 0 || data.dim == 0)
        throw std::invalid_argument("empty training set");
    if (config.n_trees == 0 || config.m == 0)
        throw std::invalid_argument("n_trees and m must be positive");
    if (data.x.size() != data.rows() * data.dim)
        throw std::invalid_argument("dataset shape mismatch");
    if (std::any_of(data.x.begin(), data.x.end(), [](double v) { return std::isnan(v); }))
        throw std::invalid_argument("NaN feature value");
    std::vector<bool> seen(data.n_classes, false);
    for (auto label : data.y) {
        if (label >= data.n_classes)
            throw std::invalid_argument("label out of range");
        seen[label] = true;
    }
    if (std::count(seen.begin(), seen.end(), true) < 2)
        throw std::invalid_argument("training set must contain at least two classes");

    Forest forest;
    forest.dim = data.dim;
    forest.n_classes = data.n_classes;
    forest.m = config.m;
    forest.seed = config.seed;
    forest.trees.resize(config.n_trees);
    auto tree_seed = [&](std::size_t t) { return splitmix64(config.seed + 0x9E3779B97F4A7C15ULL * (t + 1)); };

    const std::size_t workers = std::clamp<std::size_t>(config.workers, 1, config.n_trees);
    auto work = [&](std::size_t w) {
        for (std::size_t t = w; t < config.n_trees; t += workers)
            forest.trees[t] = TreeBuilder(data, config, tree_seed(t)).build();
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(work, w);
    }
    return forest;
}

Bytes serialize(const Forest &forest) {
    LeWriter w;
    w.magic(kForestMagic);
    w.u64(forest.dim);
    w.u64(forest.n_classes);
    w.u64(forest.m);
    w.u64(forest.seed);
    w.u64(forest.trees.size());
    for (const auto &t : forest.trees) {
        w.u64(t.nodes.size());
        for (const auto &n : t.nodes) {
            w.i64(n.feature);
            w.f64(n.threshold);
            w.u64(n.left);
            w.u64(n.right);
            for (auto c : n.counts)
                w.u64(c);
        }
    }
    return w.take();
}

Forest deserialize_forest(ByteView data) {
    LeReader r(data);
    r.expect_magic(kForestMagic);
    Forest f;
    f.dim = r.u64();
    f.n_classes = r.u64();
    f.m = r.u64();
    f.seed = r.u64();
    const std::uint64_t n_trees = r.u64();
    if (f.dim == 0 || f.n_classes < 2 || f.n_classes > 1024 || n_trees == 0)
        throw FormatError("implausible forest header");
    // Each node needs at least 32 bytes, so counts are bounded by the record size.
    if (n_trees > r.remaining() / 40)
        throw FormatError("truncated record");
    f.trees.resize(n_trees);
    for (auto &t : f.trees) {
        const std::uint64_t n_nodes = r.u64();
        if (n_nodes == 0 || n_nodes > r.remaining() / (32 + 8 * f.n_classes))
            throw FormatError("implausible node count");
        t.nodes.resize(n_nodes);
        std::vector<std::uint8_t> referenced(n_nodes, 0);
        for (std::size_t i = 0; i < n_nodes; ++i) {
            Node &n = t.nodes[i];
            n.feature = r.i64();
            n.threshold = r.f64();
            n.left = r.u64();
            n.right = r.u64();
            n.counts.resize(f.n_classes);
            for (auto &c : n.counts)
                c = r.u64();
            if (n.is_leaf())
                continue;
            if (n.feature < 0 || static_cast<std::uint64_t>(n.feature) >= f.dim || std::isnan(n.threshold))
                throw FormatError("bad split node");
            if (n.left <= i || n.right <= i || n.left >= n_nodes || n.right >= n_nodes || n.left == n.right)
                throw FormatError("bad child index");
            if (++referenced[n.left] > 1 || ++referenced[n.right] > 1)
                throw FormatError("node has two parents");
        }
        for (std::size_t i = 1; i < n_nodes; ++i)
            if (!referenced[i])
                throw FormatError("unreachable node");
    }
    r.expect_end();
    return f;
}

std::string to_text(const Forest &forest) {
    std::ostringstream os;
    os << "forest dim=" << forest.dim << " classes=" << forest.n_classes << " m=" << forest.m
       << " seed=" << forest.seed << " trees=" << forest.trees.size() << '\n';
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        const auto &nodes = forest.trees[t].nodes;
        os << "tree " << t << '\n';
        // Depth-first, left before right.
        std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 1}};
        while (!stack.empty()) {
            const auto [i, depth] = stack.back();
            stack.pop_back();
            const Node &n = nodes[i];
            os << std::string(2 * depth, ' ') << '#' << i << ' ';
            if (n.is_leaf()) {
                os << "leaf [";
                for (std::size_t c = 0; c < n.counts.size(); ++c)
                    os << (c ? " " : "") << n.counts[c];
                os << "]\n";
            } else {
                char thr[32];
                std::snprintf(thr, sizeof thr, "%.17g", n.threshold);
                os << 'f' << n.feature << " <= " << thr << '\n';
                stack.push_back({n.right, depth + 1});
                stack.push_back({n.left, depth + 1});
            }
        }
    }
    return os.str();
}

} // namespace bitscreen::forest
