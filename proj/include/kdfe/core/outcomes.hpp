#pragma once

#include "kdfe/core/events.hpp"
#include "kdfe/date.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kdfe {

/// Outcome window: day 1 is the day after the index date; day 365 is inside.
inline constexpr int kOutcomeWindowDays = 365;

struct OutcomeLabel {
    std::string patient_id;
    int y{0};
    std::optional<int> days_to_first_occurrence;
    int total_outcomes{0};
    Date index_date;

    bool operator==(const OutcomeLabel &) const = default;
};

/// Builds a label from the dates of all recorded outcome events. Only
/// outcomes on days 1..365 after the index date count.
OutcomeLabel label_from_outcomes(std::string patient_id, Date index_date,
                                 std::span<const Date> outcome_dates);

/// Throws ValueError if y and days_to_first_occurrence disagree.
void validate_outcome(const OutcomeLabel &label);

std::vector<OutcomeLabel> read_outcomes_csv(const std::string &path);
void write_outcomes_csv(const std::string &path, std::span<const OutcomeLabel> labels);

struct LabeledEventTable {
    EventTable table;
    /// y of the owning patient, parallel to table.rows().
    std::vector<std::uint8_t> y;
};

/// Attaches each row's patient label. Missing or duplicated labels throw
/// ValidationError naming the patient.
LabeledEventTable attach_outcomes(const EventTable &t, std::span<const OutcomeLabel> outcomes);

} // namespace kdfe
