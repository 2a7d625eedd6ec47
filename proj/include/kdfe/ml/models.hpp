#pragma once

#include "kdfe/ml/matrix.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kdfe::ml {

enum class ModelKind { Knn, LogReg, LinearSvm, RbfSvm, RandomForest };
std::string_view to_string(ModelKind k) noexcept;
ModelKind parse_model(std::string_view s);

/// One point of a model's hyperparameter grid. Only the fields relevant to
/// the model kind are meaningful.
struct HyperParams {
    int n_neighbors{5};
    double c{1.0};
    bool squared_hinge{true};
    int n_estimators{100};
    /// 0 = unbounded.
    int max_depth{0};

    bool operator==(const HyperParams &) const = default;
};

/// Grid in evaluation order.
std::vector<HyperParams> hyper_grid(ModelKind kind);
std::string describe(ModelKind kind, const HyperParams &hp);
nlohmann::json to_json(ModelKind kind, const HyperParams &hp);

double sigmoid(double z) noexcept;

/// Mean log loss + lambda/2 |w|^2 with the bias (last entry of w)
/// unregularized. Labels are 0/1.
double logistic_objective(const Matrix &x, std::span<const std::uint8_t> y, std::span<const double> w,
                          double lambda);
std::vector<double> logistic_gradient(const Matrix &x, std::span<const std::uint8_t> y,
                                      std::span<const double> w, double lambda);

/// 1/2 |w|^2 + C sum loss(1 - t w.x) with x augmented by a constant 1 (the
/// bias is the last weight and is regularized). Labels are 0/1, t = +-1.
double svm_objective(const Matrix &x, std::span<const std::uint8_t> y, std::span<const double> w, double c,
                     bool squared_hinge);
std::vector<double> svm_subgradient(const Matrix &x, std::span<const std::uint8_t> y,
                                    std::span<const double> w, double c, bool squared_hinge);

class KnnModel {
  public:
    void fit(const Matrix &x, std::span<const std::uint8_t> y);
    /// Sorted neighbour lists (length min(k, n)); distance ties go to the
    /// lower training index.
    std::vector<std::vector<std::uint32_t>> neighbours(const Matrix &q, std::size_t k) const;
    /// Fraction of positive labels among the first `k` neighbours.
    std::vector<double> scores(const std::vector<std::vector<std::uint32_t>> &nbrs, std::size_t k) const;
    std::vector<double> predict_scores(const Matrix &q, std::size_t k) const;
    std::size_t cols() const noexcept { return x_.cols; }
    nlohmann::json to_json() const;

  private:
    Matrix x_;
    std::vector<std::uint8_t> y_;
};

class LogisticModel {
  public:
    void fit(const Matrix &x, std::span<const std::uint8_t> y, double c, int max_iter = 100);
    std::vector<double> predict_scores(const Matrix &q) const;
    bool converged() const noexcept { return converged_; }
    const std::vector<double> &weights() const noexcept { return w_; }
    nlohmann::json to_json() const;

  private:
    std::vector<double> w_;
    bool converged_{false};
};

class LinearSvmModel {
  public:
    void fit(const Matrix &x, std::span<const std::uint8_t> y, double c, bool squared_hinge,
             std::uint64_t seed, int max_iter = 1000, double tol = 0.1);
    std::vector<double> decision(const Matrix &q) const;
    std::vector<double> predict_scores(const Matrix &q) const;
    bool converged() const noexcept { return converged_; }
    const std::vector<double> &weights() const noexcept { return w_; }
    nlohmann::json to_json() const;

  private:
    std::vector<double> w_;
    bool converged_{false};
};

/// exp(-gamma |a-b|^2) Gram matrix, reusable across C values.
struct KernelCache {
    double gamma{1};
    std::size_t n{0};
    std::vector<double> k;
};
double default_gamma(const Matrix &x);
KernelCache rbf_kernel(const Matrix &x, double gamma);

class RbfSvmModel {
  public:
    void fit(const Matrix &x, std::span<const std::uint8_t> y, double c, const KernelCache &kernel,
             double tol = 1e-3, long max_iter = 100000);
    std::vector<double> decision(const Matrix &q) const;
    std::vector<double> predict_scores(const Matrix &q) const;
    bool converged() const noexcept { return converged_; }
    nlohmann::json to_json() const;

  private:
    Matrix sv_;
    std::vector<double> coef_;
    double b_{0};
    double gamma_{1};
    bool converged_{false};
};

/// Gini trees on histogram split candidates. Every node draws from its own
/// seed, so a forest grown unbounded contains the depth-limited and smaller
/// forests as truncations and prefixes.
class RandomForest {
  public:
    struct Node {
        std::int32_t feature{-1};
        double threshold{0};
        std::int32_t left{-1};
        std::int32_t right{-1};
        double value{0};
    };

    void fit(const Matrix &x, std::span<const std::uint8_t> y, int n_trees, std::uint64_t seed,
             int max_depth = 0);
    /// Mean leaf fraction over the first n_trees, descending at most
    /// max_depth levels (0 = unbounded).
    std::vector<double> predict_scores(const Matrix &q, int n_trees, int max_depth) const;
    std::size_t trees() const noexcept { return trees_.size(); }
    const std::vector<std::vector<Node>> &tree_nodes() const noexcept { return trees_; }
    void set_trees(std::vector<std::vector<Node>> trees, std::size_t cols);
    /// A copy holding the first n trees cut at max_depth.
    RandomForest truncated(int n_trees, int max_depth) const;
    nlohmann::json to_json() const;

  private:
    std::vector<std::vector<Node>> trees_;
    std::size_t cols_{0};
};

/// A fitted model of any kind with its chosen hyperparameters.
struct FittedModel {
    ModelKind kind{ModelKind::Knn};
    HyperParams hp;
    bool converged{true};
    std::shared_ptr<const KnnModel> knn;
    std::shared_ptr<const LogisticModel> logreg;
    std::shared_ptr<const LinearSvmModel> linear_svm;
    std::shared_ptr<const RbfSvmModel> rbf_svm;
    std::shared_ptr<const RandomForest> forest;

    std::vector<double> predict_scores(const Matrix &q) const;
    nlohmann::json to_json() const;
};

/// Fits one model. `seed` drives any randomness (coordinate order, trees).
FittedModel fit_model(const Matrix &x, std::span<const std::uint8_t> y, ModelKind kind, const HyperParams &hp,
                      std::uint64_t seed);

} // namespace kdfe::ml
