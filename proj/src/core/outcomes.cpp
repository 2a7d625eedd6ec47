#include "kdfe/core/outcomes.hpp"

#include "kdfe/csv.hpp"
#include "kdfe/error.hpp"

#include <fstream>
#include <map>
#include <unordered_map>

namespace kdfe {

OutcomeLabel label_from_outcomes(std::string patient_id, Date index_date,
                                 std::span<const Date> outcome_dates) {
    OutcomeLabel label;
    label.patient_id = std::move(patient_id);
    label.index_date = index_date;
    for (Date d : outcome_dates) {
        const int day = d - index_date;
        if (day < 1 || day > kOutcomeWindowDays) {
            continue;
        }
        ++label.total_outcomes;
        if (!label.days_to_first_occurrence || day < *label.days_to_first_occurrence) {
            label.days_to_first_occurrence = day;
        }
    }
    label.y = label.days_to_first_occurrence ? 1 : 0;
    return label;
}

void validate_outcome(const OutcomeLabel &label) {
    if (label.y != 0 && label.y != 1) {
        throw ValueError("patient " + label.patient_id + ": Y must be 0 or 1");
    }
    const bool in_window = label.days_to_first_occurrence &&
                           *label.days_to_first_occurrence >= 1 &&
                           *label.days_to_first_occurrence <= kOutcomeWindowDays;
    if ((label.y == 1) != in_window) {
        throw ValueError("patient " + label.patient_id +
                         ": Y disagrees with DAYS_TO_FIRST_OCCURRENCE");
    }
    if (label.total_outcomes < 0 || (label.y == 1 && label.total_outcomes < 1)) {
        throw ValueError("patient " + label.patient_id + ": invalid TOTAL_OUTCOMES");
    }
}

std::vector<OutcomeLabel> read_outcomes_csv(const std::string &path) {
    auto table = csv::read_file(path);
    const std::vector<std::string> expected{"PATIENT_ID", "INDEX_DATE", "Y",
                                            "DAYS_TO_FIRST_OCCURRENCE", "TOTAL_OUTCOMES"};
    if (table.header != expected) {
        throw SchemaError(path + ": outcomes header must be PATIENT_ID,INDEX_DATE,Y,"
                                 "DAYS_TO_FIRST_OCCURRENCE,TOTAL_OUTCOMES");
    }
    std::vector<OutcomeLabel> out;
    out.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto &r = table.rows[i];
        if (r.size() != expected.size()) {
            throw RowError(table.lines[i], "wrong field count");
        }
        OutcomeLabel l;
        try {
            l.patient_id = r[0];
            l.index_date = Date::parse(r[1]);
            l.y = static_cast<int>(csv::parse_int(r[2]));
            if (!r[3].empty()) {
                l.days_to_first_occurrence = static_cast<int>(csv::parse_int(r[3]));
            }
            l.total_outcomes = static_cast<int>(csv::parse_int(r[4]));
            validate_outcome(l);
        } catch (const ValueError &e) {
            throw RowError(table.lines[i], e.what());
        }
        out.push_back(std::move(l));
    }
    return out;
}

void write_outcomes_csv(const std::string &path, std::span<const OutcomeLabel> labels) {
    std::ofstream out{path, std::ios::binary};
    if (!out) {
        throw Error("cannot write '" + path + "'");
    }
    csv::write_row(out, {"PATIENT_ID", "INDEX_DATE", "Y", "DAYS_TO_FIRST_OCCURRENCE",
                         "TOTAL_OUTCOMES"});
    for (const auto &l : labels) {
        csv::write_row(out, {l.patient_id, l.index_date.iso(), std::to_string(l.y),
                             l.days_to_first_occurrence
                                 ? std::to_string(*l.days_to_first_occurrence)
                                 : std::string{},
                             std::to_string(l.total_outcomes)});
    }
}

LabeledEventTable attach_outcomes(const EventTable &t, std::span<const OutcomeLabel> outcomes) {
    std::unordered_map<std::string, int> by_patient;
    for (const auto &o : outcomes) {
        if (!by_patient.emplace(o.patient_id, o.y).second) {
            throw ValidationError("duplicate outcome label for patient " + o.patient_id);
        }
    }
    LabeledEventTable out{t, {}};
    out.y.reserve(t.size());
    for (const auto &e : t.rows()) {
        auto it = by_patient.find(e.patient_id);
        if (it == by_patient.end()) {
            throw ValidationError("no outcome label for patient " + e.patient_id);
        }
        out.y.push_back(static_cast<std::uint8_t>(it->second));
    }
    return out;
}

} // namespace kdfe
