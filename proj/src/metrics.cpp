#include "bitscreen/metrics.hpp"

#include <sstream>
#include <stdexcept>

namespace bitscreen::metrics {

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (auto c : cells)
        n += c;
    return n;
}

std::size_t ConfusionMatrix::false_positives(std::size_t c) const {
    std::size_t n = 0;
    for (std::size_t t = 0; t < k; ++t)
        if (t != c)
            n += at(t, c);
    return n;
}

std::size_t ConfusionMatrix::false_negatives(std::size_t c) const {
    std::size_t n = 0;
    for (std::size_t p = 0; p < k; ++p)
        if (p != c)
            n += at(c, p);
    return n;
}

std::string ConfusionMatrix::to_csv(std::span<const std::string> names) const {
    if (names.size() != k)
        throw std::invalid_argument("need one name per class");
    std::ostringstream os;
    os << "true\\predicted";
    for (const auto &n : names)
        os << ',' << n;
    os << '\n';
    for (std::size_t t = 0; t < k; ++t) {
        os << names[t];
        for (std::size_t p = 0; p < k; ++p)
            os << ',' << at(t, p);
        os << '\n';
    }
    return os.str();
}

ConfusionMatrix confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                          std::size_t k) {
    if (predictions.empty())
        throw std::invalid_argument("no predictions");
    if (predictions.size() != labels.size())
        throw std::invalid_argument("predictions and labels differ in length");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= k || predictions[i] >= k)
            throw std::invalid_argument("class index out of range");
        ++cm.cells[labels[i] * k + predictions[i]];
    }
    return cm;
}

std::optional<double> f1(const ConfusionMatrix &cm, std::size_t c) {
    const double tp = static_cast<double>(cm.true_positives(c));
    const double denom = 2 * tp + static_cast<double>(cm.false_positives(c) + cm.false_negatives(c));
    if (denom == 0)
        return std::nullopt;
    return 2 * tp / denom;
}

double macro_f1(const ConfusionMatrix &cm) {
    double sum = 0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < cm.k; ++c)
        if (const auto v = f1(cm, c)) {
            sum += *v;
            ++present;
        }
    return present ? sum / static_cast<double>(present) : 0.0;
}

double macro_f1(std::span<const std::size_t> predictions, std::span<const std::size_t> labels, std::size_t k) {
    return macro_f1(confusion(predictions, labels, k));
}

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

} // namespace

Summary summarize(const ConfusionMatrix &cm, std::optional<std::size_t> positive) {
    Summary s;
    std::size_t correct = 0;
    for (std::size_t c = 0; c < cm.k; ++c)
        correct += cm.true_positives(c);
    s.accuracy = ratio(correct, cm.total());
    s.macro_f1 = macro_f1(cm);
    if (positive) {
        const std::size_t c = *positive;
        s.precision = ratio(cm.true_positives(c), cm.true_positives(c) + cm.false_positives(c));
        s.recall = ratio(cm.true_positives(c), cm.true_positives(c) + cm.false_negatives(c));
        return s;
    }
    std::size_t present = 0;
    for (std::size_t c = 0; c < cm.k; ++c) {
        if (!f1(cm, c))
            continue;
        ++present;
        s.precision += ratio(cm.true_positives(c), cm.true_positives(c) + cm.false_positives(c));
        s.recall += ratio(cm.true_positives(c), cm.true_positives(c) + cm.false_negatives(c));
    }
    if (present) {
        s.precision /= static_cast<double>(present);
        s.recall /= static_cast<double>(present);
    }
    return s;
}

} // namespace bitscreen::metrics
