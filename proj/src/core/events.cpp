#include "kdfe/core/events.hpp"

#include "kdfe/core/concepts.hpp"
#include "kdfe/csv.hpp"
#include "kdfe/error.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace kdfe {

namespace {

constexpr std::array<std::string_view, 12> kBaseColumns = {
    "PATIENT_ID",
    "PATIENT_STUDY_AGE_DECADE",
    "EVENT_CONCEPT_TYPE_ID",
    "GENDER",
    "PATIENT_AGE_AT_OBSERVATION",
    "CENSOR_DATE",
    "DRUG_USE_INDEX_GROUP",
    "OBSERVATION_START_DATE",
    "VALUE_CHAR",
    "VALUE_DECIMAL",
    "DRUG_DOSAGE_FORM_CODE",
    "DRUG_SUBSTANS_ID",
};
constexpr std::array<std::string_view, 2> kJanusmedColumns = {
    "ROUTE_OF_ADMINISTRATION_TYPE",
    "DRUG_REGISTRATION_RISK_VALUE",
};

std::optional<std::string> opt_text(const std::string &s) {
    if (s.empty()) {
        return std::nullopt;
    }
    return s;
}

} // namespace

std::string_view to_string(Gender g) noexcept { return g == Gender::F ? "F" : "M"; }

std::string_view to_string(Route r) noexcept {
    switch (r) {
    case Route::OLS: return "OLS";
    case Route::OSD: return "OSD";
    case Route::PAR: return "PAR";
    case Route::REC: return "REC";
    case Route::TOPICAL: return "TOPICAL";
    case Route::MISSING: return "MISSING";
    }
    return "MISSING";
}

std::string_view to_string(Track t) noexcept {
    return t == Track::WithJanusmed ? "WITH_JANUSMED" : "WITHOUT_JANUSMED";
}

Gender parse_gender(std::string_view text) {
    if (text == "F") {
        return Gender::F;
    }
    if (text == "M") {
        return Gender::M;
    }
    throw ValueError("unknown gender '" + std::string{text} + "'");
}

Route parse_route(std::string_view text) {
    if (text.empty() || text == "MISSING") {
        return Route::MISSING;
    }
    for (Route r : {Route::OLS, Route::OSD, Route::PAR, Route::REC, Route::TOPICAL}) {
        if (text == to_string(r)) {
            return r;
        }
    }
    throw ValueError("unknown route of administration '" + std::string{text} + "'");
}

Track parse_track(std::string_view text) {
    if (text == "WITH_JANUSMED" || text == "with") {
        return Track::WithJanusmed;
    }
    if (text == "WITHOUT_JANUSMED" || text == "without") {
        return Track::WithoutJanusmed;
    }
    throw ValueError("unknown track '" + std::string{text} + "'");
}

bool event_key_less(const EventRecord &a, const EventRecord &b) noexcept {
    if (a.patient_id != b.patient_id) {
        return a.patient_id < b.patient_id;
    }
    if (a.observation_start_date != b.observation_start_date) {
        return a.observation_start_date < b.observation_start_date;
    }
    if (a.concept_type_id != b.concept_type_id) {
        return a.concept_type_id < b.concept_type_id;
    }
    return a.value_char < b.value_char;
}

EventTable::EventTable(std::vector<EventRecord> rows, Track track, bool sorted)
    : rows_{std::move(rows)}, track_{track}, sorted_{sorted} {}

std::vector<EventTable::PatientSpan> EventTable::by_patient() const {
    if (!sorted_) {
        throw ContractViolation("by_patient() requires a sorted event table");
    }
    std::vector<PatientSpan> out;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= rows_.size(); ++i) {
        if (i == rows_.size() || rows_[i].patient_id != rows_[start].patient_id) {
            out.push_back({rows_[start].patient_id,
                           std::span<const EventRecord>{rows_.data() + start, i - start}});
            start = i;
        }
    }
    return out;
}

std::vector<std::string> event_columns(Track track) {
    std::vector<std::string> cols(kBaseColumns.begin(), kBaseColumns.end());
    if (track == Track::WithJanusmed) {
        cols.insert(cols.end(), kJanusmedColumns.begin(), kJanusmedColumns.end());
    }
    return cols;
}

std::size_t feature_column_count(Track track) noexcept {
    return track == Track::WithJanusmed ? 13 : 11;
}

void validate_event(const EventRecord &e, Track track) {
    if (e.patient_id.empty()) {
        throw ValueError("empty PATIENT_ID");
    }
    if (e.censor_date && e.observation_start_date > *e.censor_date) {
        throw ValueError("OBSERVATION_START_DATE " + e.observation_start_date.iso() +
                         " is after CENSOR_DATE " + e.censor_date->iso());
    }
    if (e.patient_age_at_observation < 0) {
        throw ValueError("negative PATIENT_AGE_AT_OBSERVATION");
    }
    if ((concepts::is_diagnosis(e.concept_type_id) ||
         concepts::is_medication_handling(e.concept_type_id)) &&
        e.value_char.empty()) {
        throw ValueError("empty VALUE_CHAR on diagnosis/medication concept " +
                         std::to_string(e.concept_type_id));
    }
    if (track == Track::WithoutJanusmed &&
        (e.route_of_administration || e.drug_registration_risk_value)) {
        throw ValueError("Janusmed columns populated on a WITHOUT_JANUSMED row");
    }
    if (e.drug_registration_risk_value && *e.drug_registration_risk_value < 0) {
        throw ValueError("negative DRUG_REGISTRATION_RISK_VALUE");
    }
}

EventTable parse_event_csv(std::istream &in, Track track, const std::string &source) {
    csv::Reader reader{in};
    csv::Row header;
    if (!reader.next(header)) {
        throw SchemaError(source + ": missing header row");
    }
    const auto expected = event_columns(track);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) {
        index[header[i]] = i;
    }
    std::vector<std::string> missing;
    std::vector<std::string> unexpected;
    for (const auto &c : expected) {
        if (!index.contains(c)) {
            missing.push_back(c);
        }
    }
    for (const auto &h : header) {
        if (std::find(expected.begin(), expected.end(), h) == expected.end()) {
            unexpected.push_back(h);
        }
    }
    if (!missing.empty() || !unexpected.empty()) {
        std::ostringstream msg;
        msg << source << ": header does not match the " << to_string(track) << " schema";
        if (!missing.empty()) {
            msg << "; missing column(s):";
            for (const auto &m : missing) {
                msg << ' ' << m;
            }
        }
        if (!unexpected.empty()) {
            msg << "; " << unexpected.size() << " unexpected column(s):";
            for (const auto &u : unexpected) {
                msg << ' ' << u;
            }
        }
        throw SchemaError(msg.str());
    }

    std::vector<EventRecord> rows;
    csv::Row row;
    while (reader.next(row)) {
        const auto line = reader.line();
        if (row.size() == 1 && row[0].empty()) {
            continue;
        }
        if (row.size() != header.size()) {
            throw RowError(line, "expected " + std::to_string(header.size()) + " fields, got " +
                                     std::to_string(row.size()));
        }
        auto field = [&](std::string_view name) -> const std::string & {
            return row[index.at(std::string{name})];
        };
        EventRecord e;
        try {
            e.patient_id = field("PATIENT_ID");
            e.patient_study_age_decade = static_cast<int>(csv::parse_int(field("PATIENT_STUDY_AGE_DECADE")));
            e.concept_type_id = static_cast<int>(csv::parse_int(field("EVENT_CONCEPT_TYPE_ID")));
            e.gender = parse_gender(field("GENDER"));
            e.patient_age_at_observation = static_cast<int>(csv::parse_int(field("PATIENT_AGE_AT_OBSERVATION")));
            if (!field("CENSOR_DATE").empty()) {
                e.censor_date = Date::parse(field("CENSOR_DATE"));
            }
            e.drug_use_index_group = static_cast<int>(csv::parse_int(field("DRUG_USE_INDEX_GROUP")));
            e.observation_start_date = Date::parse(field("OBSERVATION_START_DATE"));
            e.value_char = field("VALUE_CHAR");
            if (!field("VALUE_DECIMAL").empty()) {
                e.value_decimal = csv::parse_double(field("VALUE_DECIMAL"));
            }
            e.drug_dosage_form_code = opt_text(field("DRUG_DOSAGE_FORM_CODE"));
            e.drug_substance_id = opt_text(field("DRUG_SUBSTANS_ID"));
        } catch (const ValueError &err) {
            throw RowError(line, err.what());
        }
        try {
            if (track == Track::WithJanusmed) {
                e.route_of_administration = parse_route(field("ROUTE_OF_ADMINISTRATION_TYPE"));
                const auto &risk = field("DRUG_REGISTRATION_RISK_VALUE");
                if (!risk.empty()) {
                    e.drug_registration_risk_value = static_cast<int>(csv::parse_int(risk));
                }
            }
            validate_event(e, track);
        } catch (const ValueError &err) {
            throw ValueError(source + " line " + std::to_string(line) + ": " + err.what());
        }
        rows.push_back(std::move(e));
    }
    return EventTable{std::move(rows), track, false};
}

EventTable ingest_event_table(const std::string &path, Track track) {
    std::ifstream in{path, std::ios::binary};
    if (!in) {
        throw ValidationError("cannot open event file '" + path + "'");
    }
    return parse_event_csv(in, track, path);
}

void write_event_csv(std::ostream &out, const EventTable &table) {
    const auto track = table.track();
    csv::write_row(out, event_columns(track));
    for (const auto &e : table.rows()) {
        csv::Row row{
            e.patient_id,
            std::to_string(e.patient_study_age_decade),
            std::to_string(e.concept_type_id),
            std::string{to_string(e.gender)},
            std::to_string(e.patient_age_at_observation),
            e.censor_date ? e.censor_date->iso() : std::string{},
            std::to_string(e.drug_use_index_group),
            e.observation_start_date.iso(),
            e.value_char,
            csv::format_optional(e.value_decimal),
            e.drug_dosage_form_code.value_or(""),
            e.drug_substance_id.value_or(""),
        };
        if (track == Track::WithJanusmed) {
            row.emplace_back(to_string(e.route_of_administration.value_or(Route::MISSING)));
            row.push_back(e.drug_registration_risk_value
                              ? std::to_string(*e.drug_registration_risk_value)
                              : std::string{});
        }
        csv::write_row(out, row);
    }
}

void export_event_csv(const std::string &path, const EventTable &table) {
    std::ofstream out{path, std::ios::binary};
    if (!out) {
        throw Error("cannot write '" + path + "'");
    }
    write_event_csv(out, table);
}

nlohmann::json event_table_to_json(const EventTable &table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto &e : table.rows()) {
        nlohmann::json r;
        r["PATIENT_ID"] = e.patient_id;
        r["PATIENT_STUDY_AGE_DECADE"] = e.patient_study_age_decade;
        r["EVENT_CONCEPT_TYPE_ID"] = e.concept_type_id;
        r["GENDER"] = to_string(e.gender);
        r["PATIENT_AGE_AT_OBSERVATION"] = e.patient_age_at_observation;
        r["CENSOR_DATE"] = e.censor_date ? nlohmann::json(e.censor_date->iso()) : nlohmann::json();
        r["DRUG_USE_INDEX_GROUP"] = e.drug_use_index_group;
        r["OBSERVATION_START_DATE"] = e.observation_start_date.iso();
        r["VALUE_CHAR"] = e.value_char;
        r["VALUE_DECIMAL"] = e.value_decimal ? nlohmann::json(*e.value_decimal) : nlohmann::json();
        r["DRUG_DOSAGE_FORM_CODE"] =
            e.drug_dosage_form_code ? nlohmann::json(*e.drug_dosage_form_code) : nlohmann::json();
        r["DRUG_SUBSTANS_ID"] =
            e.drug_substance_id ? nlohmann::json(*e.drug_substance_id) : nlohmann::json();
        if (table.track() == Track::WithJanusmed) {
            r["ROUTE_OF_ADMINISTRATION_TYPE"] =
                to_string(e.route_of_administration.value_or(Route::MISSING));
            r["DRUG_REGISTRATION_RISK_VALUE"] = e.drug_registration_risk_value
                                                    ? nlohmann::json(*e.drug_registration_risk_value)
                                                    : nlohmann::json();
        }
        rows.push_back(std::move(r));
    }
    return {{"track", to_string(table.track())}, {"rows", std::move(rows)}};
}

EventTable event_table_from_json(const nlohmann::json &j) {
    const auto track = parse_track(j.at("track").get<std::string>());
    std::vector<EventRecord> rows;
    for (const auto &r : j.at("rows")) {
        EventRecord e;
        e.patient_id = r.at("PATIENT_ID").get<std::string>();
        e.patient_study_age_decade = r.at("PATIENT_STUDY_AGE_DECADE").get<int>();
        e.concept_type_id = r.at("EVENT_CONCEPT_TYPE_ID").get<int>();
        e.gender = parse_gender(r.at("GENDER").get<std::string>());
        e.patient_age_at_observation = r.at("PATIENT_AGE_AT_OBSERVATION").get<int>();
        if (!r.at("CENSOR_DATE").is_null()) {
            e.censor_date = Date::parse(r.at("CENSOR_DATE").get<std::string>());
        }
        e.drug_use_index_group = r.at("DRUG_USE_INDEX_GROUP").get<int>();
        e.observation_start_date = Date::parse(r.at("OBSERVATION_START_DATE").get<std::string>());
        e.value_char = r.at("VALUE_CHAR").get<std::string>();
        if (!r.at("VALUE_DECIMAL").is_null()) {
            e.value_decimal = r.at("VALUE_DECIMAL").get<double>();
        }
        if (!r.at("DRUG_DOSAGE_FORM_CODE").is_null()) {
            e.drug_dosage_form_code = r.at("DRUG_DOSAGE_FORM_CODE").get<std::string>();
        }
        if (!r.at("DRUG_SUBSTANS_ID").is_null()) {
            e.drug_substance_id = r.at("DRUG_SUBSTANS_ID").get<std::string>();
        }
        if (track == Track::WithJanusmed) {
            e.route_of_administration = parse_route(r.at("ROUTE_OF_ADMINISTRATION_TYPE").get<std::string>());
            if (!r.at("DRUG_REGISTRATION_RISK_VALUE").is_null()) {
                e.drug_registration_risk_value = r.at("DRUG_REGISTRATION_RISK_VALUE").get<int>();
            }
        }
        validate_event(e, track);
        rows.push_back(std::move(e));
    }
    return EventTable{std::move(rows), track, false};
}

EventTable sort_events(EventTable t) {
    auto rows = t.rows();
    std::stable_sort(rows.begin(), rows.end(), event_key_less);
    return EventTable{std::move(rows), t.track(), true};
}

EventTable project_to_track(const EventTable &t, Track track) {
    if (track == Track::WithJanusmed && t.track() == Track::WithoutJanusmed) {
        throw ValueError("cannot project a WITHOUT_JANUSMED table onto the WITH_JANUSMED track");
    }
    auto rows = t.rows();
    if (track == Track::WithoutJanusmed) {
        for (auto &e : rows) {
            e.route_of_administration.reset();
            e.drug_registration_risk_value.reset();
        }
    }
    return EventTable{std::move(rows), track, t.sorted()};
}

} // namespace kdfe
