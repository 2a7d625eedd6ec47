#pragma once

#include "kdfe/akdfe/step1.hpp"
#include "kdfe/akdfe/step2.hpp"
#include "kdfe/core/events.hpp"
#include "kdfe/core/outcomes.hpp"
#include "kdfe/ml/grid.hpp"
#include "kdfe/risk/risk.hpp"
#include "kdfe/stats/stats.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace kdfe::harness {

struct InputData {
    EventTable without;
    EventTable with;
    std::vector<OutcomeLabel> outcomes;
    risk::RiskTable risk;
};

/// Reads the two track CSVs, outcomes.csv and risk_table.csv from a
/// directory laid out by `kdfe synth`.
InputData load_input(const std::string &dir);

struct BuildOptions {
    int window_days{120};
    int ngram{1};
    std::size_t step1_limit{200};
    std::size_t pairwise_top{40};
    ml::WarnFn warn;
};

struct FeatureSets {
    EventTable event1;
    EventTable event2;
    akdfe::EventAkdfeFeatureSet akdfe1;
    akdfe::EventAkdfeFeatureSet akdfe2;
    akdfe::PcdMatrix pcd1;
    akdfe::PcdMatrix pcd2;
    std::vector<OutcomeLabel> outcomes;
    nlohmann::json summary;
};

/// Step-one input of the with-Janusmed track: the events plus route (2007)
/// and daily risk-level (2006) events, restricted to dates on or before each
/// patient's index date. Sorted.
EventTable janusmed_step1_input(const EventTable &with, const std::vector<OutcomeLabel> &outcomes,
                                const risk::RiskTable &risk, const risk::ExposureWindow &window);

FeatureSets build_feature_sets(const InputData &in, const BuildOptions &opts = {});
void save_feature_sets(const FeatureSets &fs, const std::string &dir);
FeatureSets load_feature_sets(const std::string &dir);

/// Event-format feature names by id (1..13).
const std::vector<std::string> &event_feature_names();
std::string event_feature_name(int id);

ml::RawMatrix event_matrix(const EventTable &t, const std::vector<OutcomeLabel> &outcomes);
ml::RawMatrix akdfe_matrix(const akdfe::EventAkdfeFeatureSet &fs, const std::vector<OutcomeLabel> &outcomes);
ml::RawMatrix pcd_matrix(const akdfe::PcdMatrix &m);
/// Keeps rows whose seeded key hash falls below a threshold; the threshold
/// admits exactly `cap` rows of the larger of `keys` and `basis`. Keys
/// describe row content, so feature sets that share events keep the same
/// shared rows. Row order is kept; empty keys fall back to the row index.
ml::RawMatrix cap_rows(const ml::RawMatrix &m, std::size_t cap, std::uint64_t seed,
                       const std::vector<std::string> &keys = {}, const std::vector<std::string> &basis = {});
/// Content keys: patient, date and the track-independent columns, plus an
/// occurrence counter for exact duplicates.
std::vector<std::string> event_row_keys(const EventTable &t);
std::vector<std::string> akdfe_row_keys(const akdfe::EventAkdfeFeatureSet &fs);

enum class FeatureSetId { Event1, Event2, Akdfe1, Akdfe2, Pcd1, Pcd2 };
std::string_view to_string(FeatureSetId id) noexcept;

struct ExperimentSpec {
    std::string name;
    FeatureSetId feature_set;
    ml::Group group;
};
const std::vector<ExperimentSpec> &experiments();
const ExperimentSpec &find_experiment(std::string_view name);

struct RunOptions {
    std::uint64_t seed{42};
    int jobs{1};
    /// Row cap for event-format matrices; 0 disables.
    std::size_t event_row_cap{4000};
    std::vector<std::string> experiments;
    ml::GridOptions grid;
};

struct ExperimentResult {
    std::string name;
    ml::Group group{ml::Group::Event};
    std::size_t rows{0};
    std::size_t columns{0};
    std::vector<ml::ResultRecord> records;
    double seconds{0};
};

ml::RawMatrix experiment_matrix(const FeatureSets &fs, const ExperimentSpec &spec, const RunOptions &opts);
std::vector<ExperimentResult> run_experiments(const FeatureSets &fs, const RunOptions &opts);
void save_results(const std::vector<ExperimentResult> &results, const std::string &dir);
std::vector<ExperimentResult> load_results(const std::string &dir);

struct HypothesisResult {
    std::string id;
    std::string group_a;
    std::string group_b;
    std::vector<double> a;
    std::vector<double> b;
    std::size_t excluded_a{0};
    std::size_t excluded_b{0};
    stats::AnovaResult anova;
    bool reject{false};
};

/// Per-configuration maximum AUROC over the event-format experiments; a
/// position is dropped when every experiment failed there.
std::vector<double> max_event_auroc(const std::vector<ExperimentResult> &results, std::size_t *excluded = nullptr);
std::vector<HypothesisResult> test_hypotheses(const std::vector<ExperimentResult> &results, double alpha = 0.05);
nlohmann::json hypotheses_to_json(const std::vector<HypothesisResult> &h);
void write_hypotheses_csv(std::ostream &out, const std::vector<HypothesisResult> &h);

/// Plain-language description of a selected column ("FC12", "S7", "8",
/// "3a", ...).
std::string decode_column(const std::string &column, const FeatureSets &fs, const std::string &experiment);

struct ReportFormats {
    bool markdown{true};
    bool csv{true};
};
void write_report(const std::vector<ExperimentResult> &results, const std::vector<HypothesisResult> &hyp,
                  const FeatureSets &fs, const std::string &dir, const ReportFormats &formats = {});

} // namespace kdfe::harness
