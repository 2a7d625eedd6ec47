#pragma once

#include "kdfe/core/events.hpp"
#include "kdfe/date.hpp"
#include "kdfe/dsl/feature_code.hpp"
#include "kdfe/dsl/registry.hpp"

#include <json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kdfe::akdfe {

struct FeatureDefinition {
    int feature_id{0};
    dsl::FeatureExpr expr;
    int generation{1};
    std::vector<int> parent_ids;
    int elementary_count{1};
};

enum class DataType { Decimal, Character, Date };
std::string_view to_string(DataType t) noexcept;

struct FeatureMetadata {
    int feature_id{0};
    std::optional<double> value_mean;
    std::optional<double> value_std;
    double coverage{0};
    DataType data_type{DataType::Decimal};
};

/// One row of an event-based aKDFE feature set (FEATURE ID, GENDER, PATIENT
/// AGE AT OBSERVATION, CENSOR_DATE, OBSERVATION START DATE, VALUE_CHAR,
/// VALUE_DECIMAL) keyed by patient.
struct FeatureRow {
    int feature_id{0};
    std::string patient_id;
    Gender gender{Gender::F};
    int patient_age_at_observation{0};
    std::optional<Date> censor_date;
    Date observation_start_date;
    std::string value_char;
    std::optional<double> value_decimal;

    bool operator==(const FeatureRow &) const = default;
};

/// Patient key order used by step two: patient, date, feature id.
bool feature_row_less(const FeatureRow &a, const FeatureRow &b) noexcept;

struct EventAkdfeFeatureSet {
    Track track{Track::WithoutJanusmed};
    std::vector<FeatureRow> rows;
    std::vector<FeatureDefinition> catalog;
    std::map<int, FeatureMetadata> metadata;

    const FeatureDefinition *find(int feature_id) const noexcept;
};

/// A cohort member and the reference (index) date its features are
/// measured against. Patients with no events still count for coverage.
struct PatientRef {
    std::string patient_id;
    Date index_date;
};

enum class Subprocess { Selectors, Counts, Presence, DaysToReference, PairwiseGaps };
std::string_view to_string(Subprocess s) noexcept;
Subprocess parse_subprocess(std::string_view text);

struct Step1Config {
    std::vector<Subprocess> stages{Subprocess::Selectors, Subprocess::Counts, Subprocess::Presence,
                                   Subprocess::DaysToReference, Subprocess::PairwiseGaps};
    std::size_t limit{200};
    /// Number of leading input features whose selector bases are paired.
    std::size_t pairwise_top{40};
    std::function<void(const std::string &)> warn;
};

/// Sorted events grouped per cohort patient, shared by all sub-processes.
class Step1Context {
  public:
    Step1Context(const EventTable &sorted, std::span<const PatientRef> cohort,
                 const dsl::Registry &registry = dsl::Registry::builtin());

    struct Patient {
        PatientRef ref;
        std::span<const EventRecord> events;
    };
    const std::vector<Patient> &patients() const noexcept { return patients_; }
    std::size_t cohort_size() const noexcept { return patients_.size(); }
    const dsl::Registry &registry() const noexcept { return registry_; }

  private:
    std::vector<Patient> patients_;
    const dsl::Registry &registry_;
};

struct Candidates {
    std::vector<FeatureDefinition> defs;
    /// Materialized value rows, parallel to defs.
    std::vector<std::vector<FeatureRow>> rows;
};

/// Generates one sub-process's candidates. `input` is ignored by
/// Subprocess::Selectors; the other kinds extend the selector bases of the
/// input features. Codes listed in `existing` are not generated again.
/// Feature ids are drawn from `next_id`.
Candidates run_subprocess(const Step1Context &ctx, std::span<const FeatureDefinition> input,
                          Subprocess kind, int generation, int &next_id,
                          const std::map<std::string, int> &existing = {},
                          std::size_t pairwise_top = 40);

/// Mean / sample std of present decimals, coverage over the cohort.
FeatureMetadata extract_metadata(int feature_id, std::span<const FeatureRow> rows,
                                 std::size_t cohort_size, DataType data_type = DataType::Decimal);

/// Top `limit` by coverage, plus every candidate tied with the coverage at
/// rank `limit`. Returns indices into `candidates` in rank order.
std::vector<std::size_t> coverage_rank_select(std::span<const FeatureDefinition> candidates,
                                              const std::map<int, FeatureMetadata> &metadata,
                                              std::size_t limit = 200);

struct StageReport {
    Subprocess kind;
    std::size_t candidates{0};
    std::size_t survivors{0};
};

struct Step1Result {
    EventAkdfeFeatureSet features;
    std::vector<StageReport> stages;
};

Step1Result run_step1(const EventTable &sorted, std::span<const PatientRef> cohort,
                      const Step1Config &config = {},
                      const dsl::Registry &registry = dsl::Registry::builtin());

nlohmann::json catalog_to_json(const EventAkdfeFeatureSet &fs);
void catalog_from_json(const nlohmann::json &j, EventAkdfeFeatureSet &fs);
void write_feature_rows_csv(const std::string &path, const EventAkdfeFeatureSet &fs);
std::vector<FeatureRow> read_feature_rows_csv(const std::string &path);

/// Writes `<stem>.csv` and `<stem>.catalog.json`.
void save_feature_set(const std::string &stem, const EventAkdfeFeatureSet &fs);
EventAkdfeFeatureSet load_feature_set(const std::string &stem);

} // namespace kdfe::akdfe
