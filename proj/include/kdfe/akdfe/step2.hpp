#pragma once

#include "kdfe/akdfe/step1.hpp"
#include "kdfe/core/outcomes.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kdfe::akdfe {

struct NGramConfig {
    int n{1};
};

enum class ColumnKind { Count, CountTotal, Sum };

struct PcdColumn {
    std::string name;
    ColumnKind kind{ColumnKind::Count};
    /// Feature ids of the n-gram token, or the summed feature.
    std::vector<int> feature_ids;
    std::vector<std::optional<double>> values;
};

/// Column family computed for an ordered patient list.
struct ColumnBlock {
    std::vector<std::string> patients;
    std::vector<PcdColumn> columns;
};

struct NGramResult {
    ColumnBlock block;
    /// Largest number of events any patient has on one date.
    int patient_same_event_max{0};
};

/// FC<id> (n = 1) or FC<id1>_<id2>... columns plus FC_TOTAL. Patients with
/// fewer than n rows contribute no n-grams.
NGramResult generate_ngrams(const EventAkdfeFeatureSet &fs, std::span<const std::string> patients,
                            const NGramConfig &cfg = {});

/// S<id> = sum of VALUE_DECIMAL per patient; absent when the patient has no
/// row for the feature.
ColumnBlock sum_feature_values(const EventAkdfeFeatureSet &fs, std::span<const std::string> patients);

int patient_same_event_max(const EventAkdfeFeatureSet &fs);

struct PcdMatrix {
    std::vector<std::string> patients;
    std::vector<PcdColumn> columns;
    std::vector<std::uint8_t> y;
    std::vector<FeatureDefinition> catalog;

    std::size_t rows() const noexcept { return patients.size(); }
    const FeatureDefinition *definition(int feature_id) const noexcept;
    const PcdColumn *column(std::string_view name) const noexcept;
};

PcdMatrix assemble_pcd(ColumnBlock fc, ColumnBlock s, std::span<const OutcomeLabel> outcomes,
                       std::vector<FeatureDefinition> catalog = {});

/// Step two end to end; the patient list is taken from `outcomes`.
PcdMatrix build_pcd(const EventAkdfeFeatureSet &fs, std::span<const OutcomeLabel> outcomes,
                    const NGramConfig &cfg = {});

std::string_view to_string(ColumnKind k) noexcept;
nlohmann::json pcd_catalog_to_json(const PcdMatrix &m);
/// Writes `<stem>.csv` and `<stem>.catalog.json`.
void save_pcd(const std::string &stem, const PcdMatrix &m);
PcdMatrix load_pcd(const std::string &stem);

} // namespace kdfe::akdfe
