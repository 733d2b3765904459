#pragma once

// Random forest over fixed-width real feature rows: Gini splits at midpoints,
// bootstrap resampling and per-node feature subsets, majority vote.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bitscreen/binary_io.hpp"

namespace bitscreen::forest {

struct Dataset {
    std::size_t dim = 0;
    std::size_t n_classes = 0;
    std::vector<double> x; ///< row-major, rows() * dim values
    std::vector<std::size_t> y;

    std::size_t rows() const { return y.size(); }
    std::span<const double> row(std::size_t i) const { return {x.data() + i * dim, dim}; }
    void add(std::span<const double> features, std::size_t label);
};

/// 1 - sum (c_i / n)^2. Throws std::invalid_argument when every count is zero.
double gini(std::span<const std::uint64_t> counts);

struct Split {
    std::size_t feature = 0;
    double threshold = 0; ///< rows with x[feature] <= threshold go left
    bool operator==(const Split &) const = default;
};

/// Split of `samples` (row indices, repeats allowed) with the largest Gini
/// decrease over `features`. Ties go to the lowest feature, then the lowest
/// threshold. Returns nothing when no split strictly lowers impurity.
std::optional<Split> best_split(const Dataset &data, std::span<const std::size_t> samples,
                                std::span<const std::size_t> features);

struct Node {
    static constexpr std::int64_t kLeaf = -1;
    std::int64_t feature = kLeaf;
    double threshold = 0;
    std::uint64_t left = 0;
    std::uint64_t right = 0;
    std::vector<std::uint64_t> counts; ///< training class counts reaching the node

    bool is_leaf() const { return feature == kLeaf; }
    bool operator==(const Node &) const = default;
};

struct DecisionTree {
    std::vector<Node> nodes; ///< nodes[0] is the root; children follow parents

    const Node &leaf_for(std::span<const double> x) const;
    std::size_t predict(std::span<const double> x) const;
    std::size_t depth() const;
    bool operator==(const DecisionTree &) const = default;
};

struct ForestConfig {
    std::size_t n_trees = 100;
    std::size_t m = 17; ///< features drawn per node
    std::size_t max_depth = 64;
    std::size_t min_samples_split = 2;
    bool bootstrap = true;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
};

struct Prediction {
    std::size_t label = 0;
    std::vector<double> probabilities; ///< vote fractions
};

struct Forest {
    std::size_t dim = 0;
    std::size_t n_classes = 0;
    std::size_t m = 0;
    std::uint64_t seed = 0;
    std::vector<DecisionTree> trees;

    /// Throws std::invalid_argument when x.size() != dim.
    Prediction predict(std::span<const double> x) const;
    std::vector<std::size_t> predict_all(const Dataset &data) const;
    bool operator==(const Forest &) const = default;
};

/// Throws std::invalid_argument on fewer than two classes present, on an
/// empty dataset, or when m or n_trees is zero. The result does not depend
/// on config.workers.
Forest fit(const Dataset &data, const ForestConfig &config);

/// "BLRF0001" then little-endian node arrays.
Bytes serialize(const Forest &forest);
Forest deserialize_forest(ByteView data);

/// One line per node, indented by depth.
std::string to_text(const Forest &forest);

} // namespace bitscreen::forest
