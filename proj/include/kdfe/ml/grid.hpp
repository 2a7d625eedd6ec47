#pragma once

#include "kdfe/ml/matrix.hpp"
#include "kdfe/ml/metrics.hpp"
#include "kdfe/ml/models.hpp"
#include "kdfe/ml/preprocess.hpp"

#include <json.hpp>

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kdfe::ml {

enum class Group { Event, Pcd };
std::string_view to_string(Group g) noexcept;
Group parse_group(std::string_view s);

struct PipelineConfig {
    Imputation imputation{Imputation::Mean};
    Balancing balancing{Balancing::Smote};
    Scorer scorer{Scorer::AnovaF};
    ModelKind model{ModelKind::Knn};
    std::uint64_t master_seed{42};

    /// "MEAN/SMOTE/ANOVA_F/KNN"
    std::string key() const;
    nlohmann::json to_json() const;
    bool operator==(const PipelineConfig &) const = default;
};

/// Grid cells in canonical order: imputation, balancing, scorer, model.
std::vector<PipelineConfig> grid_configs(Group g, std::uint64_t master_seed);

struct GridOptions {
    int folds{5};
    double train_ratio{0.8};
    std::size_t cardinality_threshold{10};
    std::vector<std::size_t> k_grid{5, 10, 15};
    int jobs{1};
    /// Called before each cell is evaluated; an exception thrown here fails
    /// that cell only.
    std::function<void(const PipelineConfig &)> before_cell;
    WarnFn warn;
};

struct ResultRecord {
    PipelineConfig config;
    bool failed{false};
    std::string error;
    MetricsRecord metrics;
    std::size_t k{0};
    HyperParams hp;
    std::vector<std::string> selected;
    double cv_accuracy{0};
    bool converged{true};

    nlohmann::json to_json() const;
    static ResultRecord from_json(const nlohmann::json &j);
};

/// Everything fitted on the training split for one cell, enough to score
/// new raw rows.
struct FittedPipeline {
    PipelineConfig config;
    Encoder encoder;
    Imputer imputer;
    MinMaxScaler scaler;
    std::vector<double> feature_scores;
    std::vector<std::size_t> selected;
    FittedModel model;

    std::vector<double> predict_scores(const RawMatrix &m) const;
    nlohmann::json to_json() const;
};

struct CellOutcome {
    ResultRecord record;
    std::optional<FittedPipeline> pipeline;
};

/// Patient-grouped stratified train/test split used by every cell.
Split grid_split(const RawMatrix &m, std::uint64_t master_seed, double train_ratio = 0.8);

CellOutcome run_cell(const RawMatrix &m, const Split &split, const PipelineConfig &cfg,
                     const GridOptions &opts = {});

/// Runs a list of cells. Cells sharing (imputation, balancing) share their
/// fold preprocessing; results are in the order of `configs`.
std::vector<ResultRecord> run_cells(const RawMatrix &m, const Split &split,
                                    const std::vector<PipelineConfig> &configs, const GridOptions &opts = {});

std::vector<ResultRecord> run_grid(const RawMatrix &m, Group g, std::uint64_t master_seed,
                                   const GridOptions &opts = {});

void write_results_csv(std::ostream &out, const std::vector<ResultRecord> &records);
nlohmann::json results_to_json(const std::vector<ResultRecord> &records);
std::vector<ResultRecord> results_from_json(const nlohmann::json &j);

} // namespace kdfe::ml
