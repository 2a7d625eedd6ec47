#include "kdfe/ml/metrics.hpp"

#include "kdfe/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace kdfe::ml {

nlohmann::json MetricsRecord::to_json() const {
    return {{"accuracy", accuracy}, {"precision", precision}, {"recall", recall}, {"f1", f1},
            {"auroc", auroc},       {"log_loss", log_loss},   {"brier", brier}};
}

namespace {
void check(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw ValueError("scores and labels must be non-empty and of equal length");
    }
}
} // namespace

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check(scores, labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    double rank_sum = 0, n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]]) {
                rank_sum += midrank;
                n_pos += 1;
            }
        }
        i = j;
    }
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw ValueError("AUROC is undefined for single-class labels");
    }
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

double log_loss(std::span<const double> scores, std::span<const std::uint8_t> labels, double eps) {
    check(scores, labels);
    double s = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double p = std::clamp(scores[i], eps, 1.0 - eps);
        s -= labels[i] ? std::log(p) : std::log1p(-p);
    }
    return s / static_cast<double>(scores.size());
}

double brier_score(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check(scores, labels);
    double s = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double d = scores[i] - labels[i];
        s += d * d;
    }
    return s / static_cast<double>(scores.size());
}

MetricsRecord compute_metrics(std::span<const double> scores, std::span<const std::uint8_t> labels,
                              double threshold) {
    check(scores, labels);
    double tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] > threshold;
        if (labels[i]) {
            (pred ? tp : fn) += 1;
        } else {
            (pred ? fp : tn) += 1;
        }
    }
    const double n = static_cast<double>(scores.size());
    MetricsRecord m;
    m.accuracy = (tp + tn) / n;
    auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
    // Per-class (positive, negative) statistics.
    const double prec[2] = {ratio(tp, tp + fp), ratio(tn, tn + fn)};
    const double rec[2] = {ratio(tp, tp + fn), ratio(tn, tn + fp)};
    const double support[2] = {tp + fn, tn + fp};
    for (int c = 0; c < 2; ++c) {
        const double f = prec[c] + rec[c] > 0 ? 2 * prec[c] * rec[c] / (prec[c] + rec[c]) : 0.0;
        m.precision += support[c] / n * prec[c];
        m.recall += support[c] / n * rec[c];
        m.f1 += support[c] / n * f;
    }
    m.auroc = auroc(scores, labels);
    m.log_loss = log_loss(scores, labels);
    m.brier = brier_score(scores, labels);
    return m;
}

} // namespace kdfe::ml
