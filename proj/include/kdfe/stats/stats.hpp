#pragma once

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kdfe::stats {

/// Sample Pearson correlation. Throws ValueError on length mismatch, fewer
/// than two values or zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

struct AnovaResult {
    double f{0};
    int df_between{0};
    int df_within{0};
    double p{1};
};

/// One-way ANOVA F-test. Zero within-group variance with non-zero between
/// variance yields F = +inf and p = 0.
AnovaResult anova_f(std::span<const std::vector<double>> groups);

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

/// P(F > f) for an F(d1, d2) variate.
double f_survival(double f, double d1, double d2);

/// Equal-variance two-sample t statistic.
double two_sample_t(std::span<const double> a, std::span<const double> b);

struct CorrelationMatrix {
    std::vector<std::string> labels;
    /// Row-major; NaN marks an undefined correlation (constant column).
    std::vector<double> values;

    double at(std::size_t i, std::size_t j) const { return values[i * labels.size() + j]; }
    nlohmann::json to_json() const;
    std::string to_csv() const;
};

/// Pairwise Pearson with pairwise deletion of absent cells.
CorrelationMatrix correlation_matrix(const std::vector<std::string> &labels,
                                     const std::vector<std::vector<std::optional<double>>> &columns);

struct TargetCorrelation {
    std::string label;
    double r;
};
/// Columns ranked by |r| against the last column (the target).
std::vector<TargetCorrelation> top_target_correlations(const CorrelationMatrix &m, std::size_t k);

} // namespace kdfe::stats
