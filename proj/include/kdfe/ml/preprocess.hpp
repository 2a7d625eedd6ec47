#pragma once

#include "kdfe/ml/matrix.hpp"

#include <json.hpp>

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace kdfe::ml {

using WarnFn = std::function<void(const std::string &)>;

enum class Imputation { Mean, Median };
enum class Balancing { Smote, Adasyn, None };
enum class Scorer { AnovaF, Chi2, MutualInfo };

std::string_view to_string(Imputation v) noexcept;
std::string_view to_string(Balancing v) noexcept;
std::string_view to_string(Scorer v) noexcept;
Imputation parse_imputation(std::string_view s);
Balancing parse_balancing(std::string_view s);
Scorer parse_scorer(std::string_view s);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Stratified split over groups: each class's groups are ordered by a seeded
/// hash of their key and the first round(ratio * count) go to train. A
/// group's class is the label of its first row. Without group keys every row
/// is its own group.
/// Throws ValidationError when a class has fewer than two groups.
Split stratified_split(std::span<const std::uint8_t> y, std::span<const std::string> groups,
                       double train_ratio, std::uint64_t seed);

/// Stratified k-fold over groups; returns the validation rows of each fold.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::uint8_t> y,
                                                       std::span<const std::string> groups, int k,
                                                       std::uint64_t seed);

/// One-hot for categoricals with at most `threshold` distinct training
/// values (MISSING first when seen, then lexicographic; output names get
/// suffix letters a, b, ...); target-mean encoding above the threshold.
class Encoder {
  public:
    enum class Kind { Numeric, OneHot, TargetMean };
    struct Output {
        Kind kind;
        std::size_t source;
        std::string name;
        std::string category;
    };

    void fit(const RawMatrix &train, std::size_t threshold = 10);
    Matrix transform(const RawMatrix &m) const;
    const std::vector<Output> &outputs() const noexcept { return outputs_; }
    std::vector<std::string> names() const;
    nlohmann::json to_json() const;

  private:
    std::vector<Output> outputs_;
    std::map<std::size_t, std::map<std::string, double>> target_means_;
    double global_mean_{0};
    std::size_t source_columns_{0};
};

inline constexpr std::string_view kMissingCategory = "MISSING";

class Imputer {
  public:
    void fit(const Matrix &train, Imputation strategy);
    void transform(Matrix &m) const;
    const std::vector<double> &fill() const noexcept { return fill_; }
    nlohmann::json to_json() const;

  private:
    std::vector<double> fill_;
};

/// Train-fitted min-max scaling; constant columns map to 0 and test values
/// are clamped into [0, 1].
class MinMaxScaler {
  public:
    void fit(const Matrix &train);
    void transform(Matrix &m) const;
    nlohmann::json to_json() const;

  private:
    std::vector<double> min_, max_;
};

struct Balanced {
    Matrix x;
    std::vector<std::uint8_t> y;
    std::size_t synthetic{0};
};

/// SMOTE / ADASYN oversampling of the minority class, or identity.
Balanced oversample(const Matrix &x, std::span<const std::uint8_t> y, Balancing method,
                    std::uint64_t seed, const WarnFn &warn = {});

std::vector<double> anova_scores(const Matrix &x, std::span<const std::uint8_t> y);
std::vector<double> chi2_scores(const Matrix &x, std::span<const std::uint8_t> y);
/// Nearest-neighbour mutual information between each column and y. Columns
/// are scaled to unit variance and jittered by 1e-10 (seeded) so that tied
/// values do not collapse the neighbour radius.
std::vector<double> mutual_info_scores(const Matrix &x, std::span<const std::uint8_t> y,
                                       int n_neighbors = 3, std::uint64_t seed = 0);
std::vector<double> feature_scores(const Matrix &x, std::span<const std::uint8_t> y, Scorer scorer);

/// Column indices by descending score, ties by lower index. NaN scores
/// rank as 0.
std::vector<std::size_t> rank_features(std::span<const double> scores);
std::vector<std::size_t> select_k_best(std::span<const double> scores, std::size_t k,
                                       const WarnFn &warn = {});

} // namespace kdfe::ml
