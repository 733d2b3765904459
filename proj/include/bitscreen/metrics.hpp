#pragma once

// Confusion matrices and classification scores.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bitscreen::metrics {

struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::size_t> cells; ///< row = true class, column = predicted

    explicit ConfusionMatrix(std::size_t classes) : k(classes), cells(classes * classes, 0) {}
    std::size_t at(std::size_t truth, std::size_t predicted) const { return cells[truth * k + predicted]; }
    std::size_t total() const;
    std::size_t true_positives(std::size_t c) const { return at(c, c); }
    std::size_t false_positives(std::size_t c) const;
    std::size_t false_negatives(std::size_t c) const;

    /// Header row of predicted labels, then one row per true class.
    std::string to_csv(std::span<const std::string> names) const;
};

/// Throws std::invalid_argument on empty or unequal-length input and on
/// labels outside [0, k).
ConfusionMatrix confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                          std::size_t k);

/// 2TP / (2TP + FP + FN); nothing when the class never occurs.
std::optional<double> f1(const ConfusionMatrix &cm, std::size_t c);

/// Unweighted mean of per-class F1 over classes present in predictions or labels.
double macro_f1(const ConfusionMatrix &cm);
double macro_f1(std::span<const std::size_t> predictions, std::span<const std::size_t> labels, std::size_t k);

struct Summary {
    double accuracy = 0;
    double precision = 0;
    double recall = 0;
    double macro_f1 = 0;
};

/// Precision and recall of `positive` when given, macro-averaged otherwise.
Summary summarize(const ConfusionMatrix &cm, std::optional<std::size_t> positive = std::nullopt);

} // namespace bitscreen::metrics
