#pragma once

#include <json.hpp>

#include <cstdint>
#include <span>

namespace kdfe::ml {

struct MetricsRecord {
    double accuracy{0};
    double precision{0};
    double recall{0};
    double f1{0};
    double auroc{0.5};
    double log_loss{0};
    double brier{0};

    nlohmann::json to_json() const;
};

/// Midrank (Mann-Whitney) AUROC; ties between a positive and a negative
/// score count one half. Throws ValueError for single-class labels.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

double log_loss(std::span<const double> scores, std::span<const std::uint8_t> labels, double eps = 1e-15);
double brier_score(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Predicted class is score > threshold. Precision, recall and F1 are
/// averaged over both classes weighted by support; a class never predicted
/// gets precision 0.
MetricsRecord compute_metrics(std::span<const double> scores, std::span<const std::uint8_t> labels,
                              double threshold = 0.5);

} // namespace kdfe::ml
