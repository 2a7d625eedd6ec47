#pragma once

#include "kdfe/date.hpp"

#include <json.hpp>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kdfe {

enum class Gender { F, M };
enum class Route { OLS, OSD, PAR, REC, TOPICAL, MISSING };
enum class Track { WithoutJanusmed, WithJanusmed };

std::string_view to_string(Gender g) noexcept;
std::string_view to_string(Route r) noexcept;
std::string_view to_string(Track t) noexcept;
Gender parse_gender(std::string_view text);
/// Empty text maps to Route::MISSING; unknown codes throw ValueError.
Route parse_route(std::string_view text);
Track parse_track(std::string_view text);

struct EventRecord {
    std::string patient_id;
    int concept_type_id{0};
    Date observation_start_date;
    std::string value_char;
    std::optional<double> value_decimal;
    Gender gender{Gender::F};
    int patient_age_at_observation{0};
    int patient_study_age_decade{0};
    std::optional<Date> censor_date;
    int drug_use_index_group{0};
    std::optional<std::string> drug_dosage_form_code;
    std::optional<std::string> drug_substance_id;
    // Only populated on the with-Janusmed track.
    std::optional<Route> route_of_administration;
    std::optional<int> drug_registration_risk_value;

    bool operator==(const EventRecord &) const = default;
};

/// Total order used by sort_events: patient, date, concept, value_char.
bool event_key_less(const EventRecord &a, const EventRecord &b) noexcept;

class EventTable {
  public:
    EventTable() = default;
    EventTable(std::vector<EventRecord> rows, Track track, bool sorted = false);

    const std::vector<EventRecord> &rows() const noexcept { return rows_; }
    Track track() const noexcept { return track_; }
    bool sorted() const noexcept { return sorted_; }
    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }

    /// Contiguous runs of rows per patient; requires sorted().
    struct PatientSpan {
        std::string_view patient_id;
        std::span<const EventRecord> events;
    };
    std::vector<PatientSpan> by_patient() const;

  private:
    std::vector<EventRecord> rows_;
    Track track_{Track::WithoutJanusmed};
    bool sorted_{false};
};

/// Column header of the event CSV for a track, in canonical order. The
/// first column is the patient key; the rest are the track's features.
std::vector<std::string> event_columns(Track track);
/// Number of feature columns (patient key excluded): 11 or 13.
std::size_t feature_column_count(Track track) noexcept;

/// Checks the record against the EventRecord invariants for the track;
/// throws ValueError describing the first violation.
void validate_event(const EventRecord &e, Track track);

EventTable ingest_event_table(const std::string &path, Track track);
EventTable parse_event_csv(std::istream &in, Track track, const std::string &source = "<stream>");
void write_event_csv(std::ostream &out, const EventTable &table);
void export_event_csv(const std::string &path, const EventTable &table);
nlohmann::json event_table_to_json(const EventTable &table);
EventTable event_table_from_json(const nlohmann::json &j);

/// Stable sort on event_key_less; returns a table flagged sorted.
EventTable sort_events(EventTable t);

/// Drops the with-Janusmed-only columns.
EventTable project_to_track(const EventTable &t, Track track);

} // namespace kdfe
