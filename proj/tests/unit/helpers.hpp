#pragma once

#include "kdfe/core/concepts.hpp"
#include "kdfe/core/events.hpp"
#include "kdfe/core/outcomes.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace testing {

inline kdfe::Date day(int offset) { return kdfe::Date::from_ymd(2015, 1, 1) + offset; }

inline kdfe::EventRecord diagnosis(std::string patient, int offset, std::string code,
                                   int concept_id = kdfe::concepts::kDiagnosis) {
    kdfe::EventRecord e;
    e.patient_id = std::move(patient);
    e.concept_type_id = concept_id;
    e.observation_start_date = day(offset);
    e.value_char = std::move(code);
    e.patient_age_at_observation = 60;
    e.patient_study_age_decade = 6;
    e.drug_use_index_group = 1;
    return e;
}

inline kdfe::EventRecord dispensation(std::string patient, int offset, std::string substance,
                                      std::string form = "TAB") {
    auto e = diagnosis(std::move(patient), offset, "C01BD01", kdfe::concepts::kDrugDispensation);
    e.drug_substance_id = std::move(substance);
    e.drug_dosage_form_code = std::move(form);
    e.value_decimal = 1.0;
    return e;
}

inline kdfe::OutcomeLabel label(std::string patient, int y, int index_offset = 1000) {
    kdfe::OutcomeLabel l;
    l.patient_id = std::move(patient);
    l.y = y;
    l.index_date = day(index_offset);
    if (y) {
        l.days_to_first_occurrence = 10;
        l.total_outcomes = 1;
    }
    return l;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string &name) {
    auto p = std::filesystem::temp_directory_path() / ("kdfe_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace testing
